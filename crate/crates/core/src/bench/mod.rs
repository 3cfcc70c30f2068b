//! Benchmark scenarios, statistics, reports and comparisons.

pub mod compare;
pub mod emit;
pub mod harness;
pub mod report;
pub mod stats;

pub use compare::{compare, Comparison, CompareError};
pub use harness::{build_topology, run_case, run_isolation, CaseConfig, HarnessError, Runner, RunOutcome};
pub use report::{BenchReport, LatencySample};
pub use stats::{compute_stats, Stats, StatsError};
