use serde::{Deserialize, Serialize};

use crate::bench::stats::Stats;
use crate::model::{Reliability, TopicName};
use crate::runtime::{ExecutorKind, Mode};

pub const REPORT_SCHEMA: &str = "bench_report_v1";

/// One end-to-end timing observation at the Sobel sink.
pub use crate::nodes::sink::RawSample as LatencySample;

/// Deep copies observed on delivered images, warmup included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyStats {
    pub images: u64,
    pub total: u64,
    pub min_per_image: u64,
    pub max_per_image: u64,
}

/// Everything that determines a run. Identical topologies give identical echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub image_qos: Reliability,
    pub executor: ExecutorKind,
    pub threads: usize,
    pub seed: u64,
    pub domain: u32,
    pub gc_port: Option<u16>,
    pub sample_target: u64,
    pub warmup_discard: u64,
    pub nodes: Vec<String>,
    pub topics: Vec<TopicName>,
    pub ipc_topics: Vec<TopicName>,
    pub processes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub host: String,
    pub os: String,
    pub cpu_count: usize,
    pub timestamp: String,
}

impl Environment {
    pub fn capture() -> Self {
        let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
            .map(|s| s.trim().to_string())
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| std::env::var("HOSTNAME").ok())
            .unwrap_or_else(|| "unknown".into());
        Self {
            host,
            os: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
            cpu_count: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            timestamp: crate::model::now().to_rfc3339(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub scenario: String,
    pub mode: Mode,
    /// Samples the statistics are computed over.
    pub sample_count: u64,
    pub collected: u64,
    pub discarded_warmup: u64,
    /// Negative-latency samples, excluded from the statistics.
    pub anomalies: u64,
    pub stats: Stats,
    pub iqr: i64,
    pub image_copies: CopyStats,
    pub config: ConfigEcho,
    pub environment: Environment,
}
