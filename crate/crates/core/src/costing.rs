//! Inference multiply-accumulate (MAC) counts for both designs.
//!
//! Bias additions, activations, and the `p_i + p_j` additions feeding each
//! secondary unit are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N·P + M·Q`.
pub fn efficient_macs(n: u64, p: u64, m: u64, q: u64) -> u64 {
    n * p + m * q
}

/// `(N + Q)·M`; the efficient count with `P = M`.
pub fn baseline_macs(n: u64, m: u64, q: u64) -> u64 {
    (n + q) * m
}

pub fn reduction_percent(efficient: u64, baseline: u64) -> Result<f64> {
    if baseline == 0 {
        return Err(Error::invalid("baseline MAC count must be positive"));
    }
    Ok(100.0 * (1.0 - efficient as f64 / baseline as f64))
}

/// Integer percent as reported, truncated toward zero.
pub fn display_percent(percent: f64) -> i64 {
    percent.trunc() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_features: u64,
    pub p_units: u64,
    pub hidden_width: u64,
    pub n_classes: u64,
    pub efficient_macs: u64,
    pub baseline_macs: u64,
    pub reduction_percent: f64,
}

impl CostReport {
    /// Compares an efficient network `(N, P, M, Q)` with a baseline of the
    /// same hidden width `M`.
    pub fn new(n: u64, p: u64, m: u64, q: u64) -> Result<Self> {
        let efficient = efficient_macs(n, p, m, q);
        let baseline = baseline_macs(n, m, q);
        Ok(CostReport {
            n_features: n,
            p_units: p,
            hidden_width: m,
            n_classes: q,
            efficient_macs: efficient,
            baseline_macs: baseline,
            reduction_percent: reduction_percent(efficient, baseline)?,
        })
    }

    /// `N,P,M,Q,efficient_macs,baseline_macs,reduction_percent`
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n_features,
            self.p_units,
            self.hidden_width,
            self.n_classes,
            self.efficient_macs,
            self.baseline_macs,
            display_percent(self.reduction_percent)
        )
    }
}

/// Running tally used by the instrumented forward pass.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MacCounter {
    pub primary: u64,
    pub output: u64,
}

impl MacCounter {
    pub fn total(&self) -> u64 {
        self.primary + self.output
    }
}
