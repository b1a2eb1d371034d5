//! τ-stride pairing of primary hidden units.
//!
//! A secondary unit is attached to two primary units `i < j` whose index
//! difference is a positive multiple of the stride `tau`. Enumerating every
//! such pair gives the plan; with `tau = 1` that is every unordered pair.
//!
//! Indices are 0-based. Plans are ordered by stride multiple `k` ascending,
//! then by `i` ascending, so a plan is fully determined by `(p_units, tau)`.

use crate::error::{Error, Result};

/// Index pair `(i, j)` of primary units feeding one secondary unit.
pub type Pair = (usize, usize);

/// Denominator of the `tau = M / 200` heuristic, which assumes `P ≈ M / 10`.
pub const TAU_HEURISTIC_DIVISOR: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingPlan {
    pairs: Vec<Pair>,
    p_units: usize,
    tau: usize,
}

impl PairingPlan {
    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn p_units(&self) -> usize {
        self.p_units
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Number of secondary units, `M`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_args(p_units: usize, tau: usize) -> Result<()> {
    if p_units < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 primary units, got {p_units}"
        )));
    }
    if tau < 1 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    if tau >= p_units {
        return Err(Error::invalid(format!(
            "tau {tau} leaves no pairs among {p_units} primary units"
        )));
    }
    Ok(())
}

pub fn build_pairing_plan(p_units: usize, tau: usize) -> Result<PairingPlan> {
    check_args(p_units, tau)?;
    let mut pairs = Vec::with_capacity(pair_count(p_units, tau)? as usize);
    let mut offset = tau;
    while offset < p_units {
        pairs.extend((0..p_units - offset).map(|i| (i, i + offset)));
        offset += tau;
    }
    Ok(PairingPlan {
        pairs,
        p_units,
        tau,
    })
}

/// Exact plan length: `Σ_{k=1..K} (P − kτ)` with `K = ⌊(P−1)/τ⌋`.
pub fn pair_count(p_units: usize, tau: usize) -> Result<u64> {
    check_args(p_units, tau)?;
    Ok(count_unchecked(p_units as u64, tau as u64))
}

fn count_unchecked(p: u64, tau: u64) -> u64 {
    if tau == 0 || p < 2 {
        return 0;
    }
    let k = (p - 1) / tau;
    k * p - tau * k * (k + 1) / 2
}

/// `P(P−1)/2`, the number of unordered pairs.
pub fn max_pairs(p_units: usize) -> Result<u64> {
    if p_units < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 primary units, got {p_units}"
        )));
    }
    let p = p_units as u64;
    Ok(p * (p - 1) / 2)
}

/// Default stride for a target secondary width: `max(1, ⌊M / 200⌋)`.
pub fn select_tau(target_m: usize) -> usize {
    (target_m / TAU_HEURISTIC_DIVISOR).max(1)
}

/// Smallest valid `P` whose plan length is closest to `target_m`.
pub fn fit_p_for_target(target_m: usize, tau: usize) -> Result<usize> {
    if target_m < 1 {
        return Err(Error::invalid("target hidden width must be at least 1"));
    }
    if tau < 1 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    let target = target_m as u64;
    let tau_u = tau as u64;
    // pair counts grow monotonically in P, so the closest value brackets the
    // first P reaching the target
    let mut p = (tau + 1).max(2);
    let guess = ((2.0 * tau as f64 * target as f64).sqrt().ceil() as usize).saturating_sub(tau);
    if guess > p {
        p = guess;
        while p > (tau + 1).max(2) && count_unchecked(p as u64, tau_u) >= target {
            p -= 1;
        }
    }
    while count_unchecked(p as u64, tau_u) < target {
        p += 1;
    }
    let lower = (tau + 1).max(2);
    if p > lower {
        let above = count_unchecked(p as u64, tau_u) - target;
        let below = target - count_unchecked(p as u64 - 1, tau_u);
        if below <= above {
            return Ok(p - 1);
        }
    }
    Ok(p)
}
