//! Distribution statistics with nearest-rank percentiles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("no samples")]
    EmptyInput,
}

/// Summary of a latency distribution, all values in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: i64,
    pub p5: i64,
    pub p25: i64,
    pub median: i64,
    pub p75: i64,
    pub p95: i64,
    pub p99: i64,
    pub max: i64,
    pub mean: f64,
    pub stddev: f64,
}

impl Stats {
    pub fn iqr(&self) -> i64 {
        self.p75 - self.p25
    }
}

/// 1-based nearest rank `ceil(p / 100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(p: u32, n: usize) -> usize {
    let rank = (p as usize * n).div_ceil(100);
    rank.clamp(1, n.max(1))
}

/// The `p`-th percentile of an ascending slice.
pub fn percentile(sorted: &[i64], p: u32) -> Result<i64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(sorted[nearest_rank(p, sorted.len()) - 1])
}

pub fn compute_stats(samples: &[i64]) -> Result<Stats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mean = sorted.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = sorted.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let at = |p| sorted[nearest_rank(p, sorted.len()) - 1];
    Ok(Stats {
        min: sorted[0],
        p5: at(5),
        p25: at(25),
        median: at(50),
        p75: at(75),
        p95: at(95),
        p99: at(99),
        max: sorted[sorted.len() - 1],
        mean,
        stddev: var.sqrt(),
    })
}
