//! Benchmarks: strategy latency across condition sizes, storage sizes, and
//! retrieval accuracy on content/style corpora.

mod accuracy;
mod data;
mod memory;
mod speed;

pub use accuracy::{accuracy_at_n, noise_features, AccuracyRow, AccuracyTable};
pub use data::{zipf_weights, ClusteredData, GROUPS};
pub use memory::{measure_memory, space_model_64, MemoryTable};
pub use speed::{
    calibrate_threshold, run_speed_benchmark, BenchReport, BenchRow, ConditionInfo, Environment,
    SpeedConfig,
};

use condra_core::Strategy;
use serde::Serialize;

/// Version of every JSON report written by this module.
pub const SCHEMA_VERSION: u32 = 1;

/// Median; sorts `xs` in place. NaN-free input assumed.
pub fn median(xs: &mut [f64]) -> f64 {
    percentile(xs, 0.5)
}

/// Nearest-rank percentile with linear interpolation; sorts `xs` in place.
pub fn percentile(xs: &mut [f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "percentile of an empty sample");
    xs.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

/// The three latency orderings checked on a speed report.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeCheck {
    /// Pooled medians over conditions covering at most 1%.
    pub small_cond_us: f64,
    pub small_qtf_us: f64,
    pub small_ok: bool,
    /// Pooled medians over conditions covering at least 30%.
    pub large_cond_us: f64,
    pub large_dedicated_us: f64,
    pub large_ok: bool,
    /// Worst per-condition ratio of reconfigured to its faster branch.
    pub reconf_worst_ratio: f64,
    pub reconf_ok: bool,
}

impl ShapeCheck {
    pub fn passed(&self) -> bool {
        self.small_ok && self.large_ok && self.reconf_ok
    }
}

/// Evaluates the orderings; `None` when a needed strategy was not run.
pub fn shape_check(report: &BenchReport) -> Option<ShapeCheck> {
    let small = |f: f64| f <= 0.01;
    let large = |f: f64| f >= 0.3;
    let small_cond_us = report.pooled_median(Strategy::Conditional, small)?;
    let small_qtf_us = report.pooled_median(Strategy::QueryThenFilter, small)?;
    let large_cond_us = report.pooled_median(Strategy::Conditional, large)?;
    let large_dedicated_us = report.pooled_median(Strategy::Dedicated, large)?;
    let mut worst: f64 = 0.0;
    for ci in 0..report.conditions.len() {
        let reconf = report.row(Strategy::Reconfigured.as_str(), ci)?.median_us;
        let brute = report.row(Strategy::BruteForce.as_str(), ci)?.median_us;
        let qtf = report
            .row(Strategy::QueryThenFilter.as_str(), ci)?
            .median_us;
        worst = worst.max(reconf / brute.min(qtf));
    }
    Some(ShapeCheck {
        small_cond_us,
        small_qtf_us,
        small_ok: small_cond_us < small_qtf_us,
        large_cond_us,
        large_dedicated_us,
        large_ok: large_cond_us <= 3.0 * large_dedicated_us,
        reconf_worst_ratio: worst,
        reconf_ok: worst <= 1.5,
    })
}
