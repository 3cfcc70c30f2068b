use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::Time;

pub const RAW_SAMPLES_FILE: &str = "raw_samples.csv";
pub const SINK_STATUS_FILE: &str = "sink_status.json";
pub const RAW_SAMPLES_HEADER: &str = "seq,capture_ns,done_ns,deep_copy_count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub seq: u64,
    pub capture_ns: i64,
    pub done_ns: i64,
    pub deep_copy_count: u64,
}

impl RawSample {
    pub fn latency_ns(&self) -> i64 {
        self.done_ns - self.capture_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkState {
    Running,
    Complete,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkStatus {
    pub state: SinkState,
    pub collected: u64,
    pub valid_after_warmup: u64,
    pub foreign_frames: u64,
    pub sample_target: u64,
    pub warmup_discard: u64,
}

struct Inner {
    samples: Vec<RawSample>,
    valid_after_warmup: u64,
    state: SinkState,
    last_frame: Option<Instant>,
}

/// Collects one latency sample per processed image until the target number
/// of usable post-warmup samples is reached.
pub struct SinkRecorder {
    sample_target: u64,
    warmup_discard: u64,
    started: Instant,
    foreign: AtomicU64,
    inner: Mutex<Inner>,
}

impl SinkRecorder {
    pub fn new(sample_target: u64, warmup_discard: u64) -> Self {
        Self {
            sample_target,
            warmup_discard,
            started: Instant::now(),
            foreign: AtomicU64::new(0),
            inner: Mutex::new(Inner {
                samples: Vec::with_capacity((sample_target + warmup_discard).min(1 << 20) as usize),
                valid_after_warmup: 0,
                state: SinkState::Running,
                last_frame: None,
            }),
        }
    }

    /// Records a processed frame. Returns true once the target is met.
    pub fn record(&self, capture: Time, done: Time, deep_copy_count: u64) -> bool {
        let mut inner = self.inner.lock().unwrap();
        if inner.state != SinkState::Running {
            return inner.state == SinkState::Complete;
        }
        let seq = inner.samples.len() as u64;
        let sample = RawSample {
            seq,
            capture_ns: capture.nanos,
            done_ns: done.nanos,
            deep_copy_count,
        };
        if seq >= self.warmup_discard && sample.latency_ns() >= 0 {
            inner.valid_after_warmup += 1;
        }
        inner.samples.push(sample);
        inner.last_frame = Some(Instant::now());
        if inner.valid_after_warmup >= self.sample_target {
            inner.state = SinkState::Complete;
        }
        inner.state == SinkState::Complete
    }

    pub fn record_foreign(&self) {
        self.foreign.fetch_add(1, Ordering::Relaxed);
    }

    /// Marks the run as timed out if frames stopped arriving. Returns true if
    /// it did so now.
    pub fn check_timeout(&self, startup: Duration, idle: Duration) -> bool {
        let mut inner = self.inner.lock().unwrap();
        if inner.state != SinkState::Running {
            return false;
        }
        let stalled = match inner.last_frame {
            Some(t) => t.elapsed() > idle,
            None => self.started.elapsed() > startup,
        };
        if stalled {
            inner.state = SinkState::TimedOut;
        }
        stalled
    }

    pub fn status(&self) -> SinkStatus {
        let inner = self.inner.lock().unwrap();
        SinkStatus {
            state: inner.state,
            collected: inner.samples.len() as u64,
            valid_after_warmup: inner.valid_after_warmup,
            foreign_frames: self.foreign.load(Ordering::Relaxed),
            sample_target: self.sample_target,
            warmup_discard: self.warmup_discard,
        }
    }

    pub fn samples(&self) -> Vec<RawSample> {
        self.inner.lock().unwrap().samples.clone()
    }

    /// Writes `raw_samples.csv` and `sink_status.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_raw_samples(&dir.join(RAW_SAMPLES_FILE), &self.samples())?;
        let status = serde_json::to_string_pretty(&self.status()).map_err(io::Error::other)?;
        std::fs::write(dir.join(SINK_STATUS_FILE), status)
    }
}

pub fn write_raw_samples(path: &Path, samples: &[RawSample]) -> io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{RAW_SAMPLES_HEADER}")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.seq, s.capture_ns, s.done_ns, s.deep_copy_count)?;
    }
    w.flush()
}

pub fn read_raw_samples(path: &Path) -> io::Result<Vec<RawSample>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{line}: bad row", path.display()));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 1));
        }
        out.push(RawSample {
            seq: f[0].parse().map_err(|_| bad(i + 1))?,
            capture_ns: f[1].parse().map_err(|_| bad(i + 1))?,
            done_ns: f[2].parse().map_err(|_| bad(i + 1))?,
            deep_copy_count: f[3].parse().map_err(|_| bad(i + 1))?,
        });
    }
    Ok(out)
}

pub fn read_sink_status(dir: &Path) -> io::Result<SinkStatus> {
    let text = std::fs::read_to_string(dir.join(SINK_STATUS_FILE))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}
