//! Builds the benchmark topologies, runs them and turns sink samples into reports.

use std::collections::BTreeMap;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::bench::emit::{
    write_plotdata, write_report_json, write_samples_csv, EmitError, PLOTDATA_FILE, REPORT_FILE, SAMPLES_FILE,
};
use crate::bench::report::{BenchReport, ConfigEcho, CopyStats, Environment, LatencySample, REPORT_SCHEMA};
use crate::bench::stats::{compute_stats, StatsError};
use crate::gamecontroller::{encode_gc_packet, DEFAULT_GC_PORT};
use crate::inter::{port_for, EndpointKind, Sender, TransportError};
use crate::model::{DomainId, GameState, PlayState, Reliability, TopicName};
use crate::nodes::image::generate_frame_with_id;
use crate::nodes::sink::{read_raw_samples, read_sink_status, SinkState, RAW_SAMPLES_FILE};
use crate::nodes::{self, DEFAULT_FPS, DEFAULT_HEIGHT, DEFAULT_SEED, DEFAULT_WIDTH};
use crate::runtime::executor::default_thread_count;
use crate::runtime::launch::{await_sink, LaunchError, Launcher};
use crate::runtime::topology::{MsgType, NodeDecl, TopicDecl, SCHEMA};
use crate::runtime::{
    build_container, run_process, ExecutorKind, Mode, NodeSelection, RuntimeError, Topology, EXIT_OK,
    EXIT_SINK_TIMEOUT,
};

pub const DEFAULT_WARMUP: u64 = 100;
pub const TOPOLOGY_FILE: &str = "topology.toml";
pub const SINK_NODE: &str = "sobel";

pub const IMAGE_RAW: &str = "/image_raw";
pub const IMAGE_GRADIENT: &str = "/image_gradient";
pub const JOINT_STATES: &str = "/joint_states";
pub const IMU_RAW: &str = "/imu/raw";
pub const IMU_DATA: &str = "/imu/data";
pub const CMD_HEAD: &str = "/cmd_head";
pub const GAME_STATE: &str = "/game_state";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("sink timed out with {collected} of {target} samples (partial samples kept in {dir})")]
    Timeout { collected: u64, target: u64, dir: PathBuf },
    #[error(transparent)]
    Launch(#[from] LaunchError),
    #[error("node process failed: {0}")]
    NodeFailed(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let context = context.into();
    move |source| HarnessError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub case: u8,
    pub mode: Mode,
    pub samples: u64,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub image_qos: Reliability,
    /// Executor threads; defaults to the logical CPU count capped at 4.
    pub threads: Option<usize>,
    pub seed: u64,
    pub domain: u32,
    pub gc_port: u16,
    pub warmup: u64,
    pub idle_timeout_s: f64,
    pub startup_timeout_s: f64,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            case: 1,
            mode: Mode::ComposedIpc,
            samples: 10_000,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            fps: DEFAULT_FPS,
            image_qos: Reliability::Reliable,
            threads: None,
            seed: DEFAULT_SEED,
            domain: 0,
            gc_port: DEFAULT_GC_PORT,
            warmup: DEFAULT_WARMUP,
            idle_timeout_s: nodes::DEFAULT_IDLE_TIMEOUT_S,
            startup_timeout_s: nodes::DEFAULT_STARTUP_TIMEOUT_S,
        }
    }
}

impl CaseConfig {
    pub fn scenario(&self) -> String {
        format!("case{}", self.case)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or_else(default_thread_count)
    }

    pub fn run_dir(&self, out: &Path) -> PathBuf {
        out.join(format!("{}-{}", self.scenario(), self.mode.as_str()))
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if !matches!(self.case, 1 | 2) {
            return bad(format!("case must be 1 or 2, got {}", self.case));
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.width < 3 || self.height < 3 {
            return bad(format!("frame {}x{} is smaller than 3x3", self.width, self.height));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.domain > DomainId::MAX {
            return bad(format!("domain {} exceeds {}", self.domain, DomainId::MAX));
        }
        Ok(())
    }
}

fn topic_name(s: &str) -> TopicName {
    TopicName::new(s).expect("static topic name")
}

fn topic_decl(name: &str, ty: MsgType, slot: u32, reliability: Reliability, transport: EndpointKind) -> TopicDecl {
    let depth = match reliability {
        Reliability::Reliable => crate::model::reliable_qos().history_depth(),
        Reliability::BestEffort => crate::model::sensor_qos().history_depth(),
    };
    TopicDecl {
        name: topic_name(name),
        msg_type: ty,
        slot,
        reliability,
        depth,
        transport,
    }
}

fn node_decl(name: &str, rate_hz: Option<f64>, publishes: &[&str], subscribes: &[&str]) -> NodeDecl {
    NodeDecl {
        name: name.to_string(),
        kind: name.to_string(),
        rate_hz,
        publishes: publishes.iter().map(|t| topic_name(t)).collect(),
        subscribes: subscribes.iter().map(|t| topic_name(t)).collect(),
        params: BTreeMap::new(),
    }
}

fn int(v: u64) -> toml::Value {
    toml::Value::Integer(v as i64)
}

/// The topology for one benchmark run. `run_dir` is where the sink writes its samples.
pub fn build_topology(cfg: &CaseConfig, run_dir: Option<PathBuf>) -> Result<Topology, HarnessError> {
    cfg.validate()?;
    use EndpointKind::{TcpReliable, UdpBestEffort};
    use Reliability::{BestEffort, Reliable};

    let mut camera = node_decl(nodes::CAMERA, Some(cfg.fps), &[IMAGE_RAW], &[]);
    camera.params.insert("width".into(), int(cfg.width.into()));
    camera.params.insert("height".into(), int(cfg.height.into()));
    camera.params.insert("seed".into(), int(cfg.seed));
    let mut sobel = node_decl(SINK_NODE, None, &[], &[IMAGE_RAW]);
    sobel.params.insert("idle_timeout_s".into(), toml::Value::Float(cfg.idle_timeout_s));
    sobel.params.insert("startup_timeout_s".into(), toml::Value::Float(cfg.startup_timeout_s));

    let mut topics = vec![topic_decl(IMAGE_RAW, MsgType::Image, 0, cfg.image_qos, TcpReliable)];
    let mut node_list = Vec::new();
    if cfg.case == 2 {
        sobel.publishes.push(topic_name(IMAGE_GRADIENT));
        topics.extend([
            topic_decl(IMAGE_GRADIENT, MsgType::Image, 1, Reliable, TcpReliable),
            topic_decl(JOINT_STATES, MsgType::JointState, 2, BestEffort, UdpBestEffort),
            topic_decl(IMU_RAW, MsgType::Imu, 3, BestEffort, UdpBestEffort),
            topic_decl(IMU_DATA, MsgType::Imu, 4, BestEffort, UdpBestEffort),
            topic_decl(CMD_HEAD, MsgType::JointState, 5, Reliable, TcpReliable),
            topic_decl(GAME_STATE, MsgType::GameState, 6, Reliable, TcpReliable),
        ]);
        let rate = Some(nodes::fusion::DEFAULT_RATE_HZ);
        let mut gc = node_decl(nodes::GC_BRIDGE, None, &[GAME_STATE], &[]);
        gc.params.insert("gc_port".into(), int(cfg.gc_port.into()));
        node_list.extend([camera, sobel]);
        node_list.extend([
            node_decl(nodes::CM730, rate, &[JOINT_STATES, IMU_RAW], &[]),
            node_decl(nodes::IMU_FUSION, rate, &[IMU_DATA], &[IMU_RAW]),
            node_decl(nodes::HEAD_CONTROLLER, None, &[CMD_HEAD], &[IMU_DATA]),
            gc,
            node_decl(nodes::MONITOR, None, &[], &[IMAGE_GRADIENT, CMD_HEAD, GAME_STATE, JOINT_STATES]),
        ]);
    } else {
        node_list.extend([camera, sobel]);
    }

    let topology = Topology {
        schema: SCHEMA.to_string(),
        scenario: cfg.scenario(),
        domain: DomainId::new(cfg.domain).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?,
        mode: cfg.mode,
        executor: ExecutorKind::MultiThreaded(cfg.threads()),
        sample_target: cfg.samples,
        warmup_discard: cfg.warmup,
        ipc_topics: match cfg.mode {
            Mode::ComposedIpc => vec![topic_name(IMAGE_RAW)],
            _ => Vec::new(),
        },
        run_dir,
        topics,
        nodes: node_list,
    };
    topology
        .validate()
        .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
    Ok(topology)
}

/// How node containers are hosted.
#[derive(Debug, Clone)]
pub enum Runner {
    /// Composed modes run inside the calling process; standalone is refused.
    InProcess,
    /// Every mode runs in child processes of the given node executable.
    Processes(Launcher),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: BenchReport,
    pub run_dir: PathBuf,
    pub samples: Vec<LatencySample>,
}

/// Sends GameController packets at 2 Hz until dropped.
struct GcFeeder {
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl GcFeeder {
    fn start(port: u16) -> Result<Self, HarnessError> {
        let socket = UdpSocket::bind("127.0.0.1:0").map_err(io_ctx("binding GameController feeder"))?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut n: u8 = 0;
            while !flag.load(Ordering::Relaxed) {
                let mut s = GameState::initial();
                s.packet_number = n;
                s.state = PlayState::ALL[(n as usize / 4) % PlayState::ALL.len()];
                let _ = socket.send_to(&encode_gc_packet(&s), ("127.0.0.1", port));
                n = n.wrapping_add(1);
                for _ in 0..10 {
                    if flag.load(Ordering::Relaxed) {
                        return;
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        });
        Ok(Self {
            stop,
            handle: Some(handle),
        })
    }
}

impl Drop for GcFeeder {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn overall_deadline(cfg: &CaseConfig) -> Duration {
    let frames = (cfg.samples + cfg.warmup) as f64;
    Duration::from_secs_f64(cfg.startup_timeout_s + 2.0 * frames / cfg.fps + 60.0)
}

/// Runs one case in one mode and writes `samples.csv`, `report.json` and
/// `plotdata.txt` into `<out>/case<N>-<mode>/`.
pub fn run_case(cfg: &CaseConfig, out: &Path, runner: &Runner) -> Result<RunOutcome, HarnessError> {
    let run_dir = cfg.run_dir(out);
    std::fs::create_dir_all(&run_dir).map_err(io_ctx(format!("creating {}", run_dir.display())))?;
    let run_dir = run_dir
        .canonicalize()
        .map_err(io_ctx(format!("resolving {}", run_dir.display())))?;
    for f in [RAW_SAMPLES_FILE, SAMPLES_FILE, REPORT_FILE, PLOTDATA_FILE] {
        let _ = std::fs::remove_file(run_dir.join(f));
    }
    let topology = build_topology(cfg, Some(run_dir.clone()))?;
    let topo_path = run_dir.join(TOPOLOGY_FILE);
    topology
        .save(&topo_path)
        .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;

    let _feeder = if cfg.case == 2 { Some(GcFeeder::start(cfg.gc_port)?) } else { None };
    let processes = match runner {
        Runner::InProcess => {
            if cfg.mode == Mode::Standalone {
                return Err(HarnessError::ConfigInvalid(
                    "standalone mode needs the node executable".into(),
                ));
            }
            let code = run_process(topology.clone(), &NodeSelection::All);
            check_exit(code, &run_dir, cfg)?;
            1
        }
        Runner::Processes(launcher) => {
            let mut launcher = launcher.clone();
            launcher.log_dir.get_or_insert_with(|| run_dir.clone());
            let mut procs = match cfg.mode {
                Mode::Standalone => launcher.launch_standalone(&topology, &topo_path)?,
                _ => vec![launcher.launch_composed(&topology, &topo_path)?],
            };
            let sink = match cfg.mode {
                Mode::Standalone => SINK_NODE.to_string(),
                _ => topology.scenario.clone(),
            };
            let count = procs.len();
            let status = await_sink(&mut procs, &sink, overall_deadline(cfg))?;
            let code = status.code().unwrap_or(-1);
            check_exit(code, &run_dir, cfg)?;
            count
        }
    };
    drop(_feeder);
    finish_run(cfg, &topology, &run_dir, processes)
}

fn check_exit(code: i32, run_dir: &Path, cfg: &CaseConfig) -> Result<(), HarnessError> {
    match code {
        EXIT_OK => Ok(()),
        EXIT_SINK_TIMEOUT => {
            let collected = read_sink_status(run_dir).map(|s| s.valid_after_warmup).unwrap_or(0);
            Err(HarnessError::Timeout {
                collected,
                target: cfg.samples,
                dir: run_dir.to_path_buf(),
            })
        }
        other => Err(HarnessError::NodeFailed(format!(
            "sink process exited with status {other}; logs in {}",
            run_dir.display()
        ))),
    }
}

/// Splits raw sink samples into warmup, clock anomalies and usable samples.
pub fn select_samples(raw: &[LatencySample], warmup: u64, target: u64) -> (Vec<LatencySample>, u64, u64) {
    let discarded = (warmup as usize).min(raw.len());
    let mut anomalies = 0;
    let mut used = Vec::new();
    for s in &raw[discarded..] {
        if used.len() as u64 >= target {
            break;
        }
        if s.latency_ns() < 0 {
            anomalies += 1;
        } else {
            used.push(*s);
        }
    }
    (used, discarded as u64, anomalies)
}

pub fn copy_stats(raw: &[LatencySample]) -> CopyStats {
    CopyStats {
        images: raw.len() as u64,
        total: raw.iter().map(|s| s.deep_copy_count).sum(),
        min_per_image: raw.iter().map(|s| s.deep_copy_count).min().unwrap_or(0),
        max_per_image: raw.iter().map(|s| s.deep_copy_count).max().unwrap_or(0),
    }
}

pub fn config_echo(cfg: &CaseConfig, topology: &Topology, processes: usize) -> ConfigEcho {
    ConfigEcho {
        width: cfg.width,
        height: cfg.height,
        fps: cfg.fps,
        image_qos: cfg.image_qos,
        executor: topology.executor,
        threads: topology.executor.threads(),
        seed: cfg.seed,
        domain: topology.domain.id(),
        gc_port: (cfg.case == 2).then_some(cfg.gc_port),
        sample_target: topology.sample_target,
        warmup_discard: topology.warmup_discard,
        nodes: topology.nodes.iter().map(|n| n.name.clone()).collect(),
        topics: topology.topics.iter().map(|t| t.name.clone()).collect(),
        ipc_topics: topology.ipc_topics.clone(),
        processes,
    }
}

fn finish_run(cfg: &CaseConfig, topology: &Topology, run_dir: &Path, processes: usize) -> Result<RunOutcome, HarnessError> {
    let raw = read_raw_samples(&run_dir.join(RAW_SAMPLES_FILE)).map_err(io_ctx("reading sink samples"))?;
    let status = read_sink_status(run_dir).map_err(io_ctx("reading sink status"))?;
    let (used, discarded, anomalies) = select_samples(&raw, cfg.warmup, cfg.samples);
    if status.state != SinkState::Complete || (used.len() as u64) < cfg.samples {
        return Err(HarnessError::Timeout {
            collected: used.len() as u64,
            target: cfg.samples,
            dir: run_dir.to_path_buf(),
        });
    }
    let latencies: Vec<i64> = used.iter().map(|s| s.latency_ns()).collect();
    let stats = compute_stats(&latencies)?;
    let report = BenchReport {
        schema: REPORT_SCHEMA.to_string(),
        scenario: topology.scenario.clone(),
        mode: cfg.mode,
        sample_count: used.len() as u64,
        collected: raw.len() as u64,
        discarded_warmup: discarded,
        anomalies,
        iqr: stats.iqr(),
        stats,
        image_copies: copy_stats(&raw),
        config: config_echo(cfg, topology, processes),
        environment: Environment::capture(),
    };
    write_samples_csv(&run_dir.join(SAMPLES_FILE), &used)?;
    write_report_json(&run_dir.join(REPORT_FILE), &report)?;
    write_plotdata(&run_dir.join(PLOTDATA_FILE), &latencies)?;
    Ok(RunOutcome {
        report,
        run_dir: run_dir.to_path_buf(),
        samples: used,
    })
}

/// Result for one robot of an isolation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainResult {
    pub domain: u32,
    /// Frames processed from this robot's own camera.
    pub own_frames: u64,
    /// Frames of the other robot that reached the sink.
    pub foreign_surfaced: u64,
    /// Frames rejected by this robot's endpoints for carrying another domain id.
    pub wrong_domain: u64,
    /// Frames the injector aimed at this robot's ports.
    pub injected: u64,
}

/// Runs two Case-1 stacks side by side, one per domain, with identical topic
/// names. Meanwhile an injector sends each robot's frames, stamped with its
/// own domain id, to the other robot's image port.
pub fn run_isolation(domains: [u32; 2], duration: Duration, width: u32, height: u32, fps: f64) -> Result<Vec<DomainResult>, HarnessError> {
    let mut stacks = Vec::new();
    for &d in &domains {
        let cfg = CaseConfig {
            case: 1,
            mode: Mode::ComposedNoipc,
            samples: u64::MAX / 4,
            width,
            height,
            fps,
            domain: d,
            warmup: 0,
            idle_timeout_s: duration.as_secs_f64() + 30.0,
            ..CaseConfig::default()
        };
        let mut topology = build_topology(&cfg, None)?;
        let frame_id = format!("robot{d}");
        for n in &mut topology.nodes {
            match n.kind.as_str() {
                nodes::CAMERA => {
                    n.params.insert("frame_id".into(), toml::Value::String(frame_id.clone()));
                }
                nodes::SOBEL => {
                    n.params.insert("expect_frame_id".into(), toml::Value::String(frame_id.clone()));
                    n.params.insert("stop_on_target".into(), toml::Value::Boolean(false));
                }
                _ => {}
            }
        }
        stacks.push(build_container(Arc::new(topology), &NodeSelection::All)?);
    }

    let image_topic = topic_name(IMAGE_RAW);
    let injectors: Vec<Sender> = domains
        .iter()
        .zip(domains.iter().rev())
        .map(|(&src, &dst)| {
            let src_id = DomainId::new(src).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
            let dst_id = DomainId::new(dst).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
            Ok(Sender::new(EndpointKind::TcpReliable, src_id, image_topic.clone(), port_for(dst_id, 0)?)?)
        })
        .collect::<Result<_, HarnessError>>()?;

    let participants: Vec<_> = stacks.iter().map(|b| b.container.participant().clone()).collect();
    let handles: Vec<_> = stacks.iter().map(|b| b.container.shutdown_handle()).collect();
    let probes: Vec<_> = stacks.iter().map(|b| b.probes.clone()).collect();
    let spinners: Vec<_> = stacks
        .into_iter()
        .map(|mut b| std::thread::spawn(move || b.container.spin()))
        .collect();

    let mut injected = [0u64; 2];
    let start = Instant::now();
    let mut seq = 0u64;
    while start.elapsed() < duration {
        for (i, sender) in injectors.iter().enumerate() {
            let img = generate_frame_with_id(width, height, seq, DEFAULT_SEED, &format!("robot{}", domains[i]))
                .expect("valid size");
            sender.send(seq, &img)?;
            injected[1 - i] += 1;
        }
        seq += 1;
        std::thread::sleep(Duration::from_millis(50));
    }
    drop(injectors);
    // Let in-flight frames drain through the endpoints.
    std::thread::sleep(Duration::from_millis(300));

    for h in &handles {
        h.request();
    }
    let mut results = Vec::new();
    for (i, spinner) in spinners.into_iter().enumerate() {
        let r = spinner.join().map_err(|_| HarnessError::NodeFailed("container panicked".into()))?;
        r?;
        let sink = probes[i].sink.as_ref().expect("case 1 has a sink").status();
        let wrong_domain = participants[i]
            .endpoint_counters()
            .values()
            .map(|c| c.wrong_domain)
            .sum();
        participants[i].close();
        results.push(DomainResult {
            domain: domains[i],
            own_frames: sink.collected,
            foreign_surfaced: sink.foreign_frames,
            wrong_domain,
            injected: injected[i],
        });
    }
    Ok(results)
}
