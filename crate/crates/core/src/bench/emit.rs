//! Report outputs: per-sample CSV, JSON report and plot-ready histogram.

use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::bench::report::{BenchReport, LatencySample};
use crate::bench::stats::{compute_stats, percentile, Stats, StatsError};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOTDATA_FILE: &str = "plotdata.txt";
pub const SAMPLES_HEADER: &str = "seq,latency_ns,deep_copy_count";
pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("writing {path}: {source}")]
    IoFailed {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EmitError + '_ {
    move |source| EmitError::IoFailed {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_samples_csv(path: &Path, samples: &[LatencySample]) -> Result<(), EmitError> {
    let write = || -> io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{SAMPLES_HEADER}")?;
        for s in samples {
            writeln!(w, "{},{},{}", s.seq, s.latency_ns(), s.deep_copy_count)?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Reads latencies from either `samples.csv` or a sink's `raw_samples.csv`.
pub fn read_latencies_csv(path: &Path) -> io::Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    let invalid = |msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    enum Source {
        Latency(usize),
        Stamps(usize, usize),
    }
    let source = match (col("latency_ns"), col("capture_ns"), col("done_ns")) {
        (Some(i), _, _) => Source::Latency(i),
        (None, Some(c), Some(d)) => Source::Stamps(c, d),
        _ => return Err(invalid("no latency_ns or capture_ns/done_ns columns".into())),
    };
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| -> io::Result<i64> {
            fields
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| invalid(format!("line {}: bad value", n + 2)))
        };
        out.push(match source {
            Source::Latency(i) => get(i)?,
            Source::Stamps(c, d) => get(d)? - get(c)?,
        });
    }
    Ok(out)
}

pub fn write_report_json(path: &Path, report: &BenchReport) -> Result<(), EmitError> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_report_json(path: &Path) -> Result<BenchReport, EmitError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: i64,
    pub hi: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) as f64 / self.counts.len() as f64;
        (self.lo as f64 + w * i as f64, self.lo as f64 + w * (i + 1) as f64)
    }
}

/// `bins` equal-width bins over `[p1, p99]`; samples outside are not counted.
/// The last bin is closed on the right.
pub fn histogram(latencies: &[i64], bins: usize) -> Result<Histogram, StatsError> {
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let lo = percentile(&sorted, 1)?;
    let hi = percentile(&sorted, 99)?;
    let mut counts = vec![0u64; bins];
    let span = (hi - lo) as f64;
    for &v in sorted.iter().filter(|&&v| v >= lo && v <= hi) {
        let i = if span == 0.0 {
            0
        } else {
            (((v - lo) as f64 / span) * bins as f64) as usize
        };
        counts[i.min(bins - 1)] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

pub fn render_plotdata(latencies: &[i64]) -> Result<String, StatsError> {
    let stats: Stats = compute_stats(latencies)?;
    let hist = histogram(latencies, HISTOGRAM_BINS)?;
    let mut out = String::new();
    let _ = writeln!(out, "# latency density: {HISTOGRAM_BINS} bins between p1 and p99, nanoseconds");
    let _ = writeln!(out, "# bin_lo_ns bin_hi_ns count");
    for (i, c) in hist.counts.iter().enumerate() {
        let (a, b) = hist.bin_edges(i);
        let _ = writeln!(out, "{a:.1} {b:.1} {c}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "# boxplot five-number summary, nanoseconds");
    for (k, v) in [
        ("min", stats.min),
        ("q1", stats.p25),
        ("median", stats.median),
        ("q3", stats.p75),
        ("max", stats.max),
    ] {
        let _ = writeln!(out, "{k} {v}");
    }
    Ok(out)
}

pub fn write_plotdata(path: &Path, latencies: &[i64]) -> Result<(), EmitError> {
    let text = render_plotdata(latencies)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Loads `report.json` from `dir` and from each of its immediate subdirectories.
pub fn read_reports_dir(dir: &Path) -> Result<Vec<BenchReport>, EmitError> {
    let mut paths = vec![dir.join(REPORT_FILE)];
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut subdirs: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    paths.extend(subdirs.into_iter().map(|d| d.join(REPORT_FILE)));
    paths
        .iter()
        .filter(|p| p.is_file())
        .map(|p| read_report_json(p))
        .collect()
}

/// Parses the histogram section of a plotdata file back into bin counts.
pub fn parse_plotdata_counts(text: &str) -> Vec<u64> {
    text.lines()
        .take_while(|l| !l.trim().is_empty())
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().nth(2)?.parse().ok())
        .collect()
}
