//! Operation counts for three realisations of an `N`-outcome POVM on a
//! `d`-dimensional system.
//!
//! These are formula evaluations at the level of pairwise basis-state
//! operations, not costs of a synthesised circuit:
//!
//! * full Neumark extension: an `N × N` unitary, `N(N−1)/2` operations;
//! * a single extra dimension: a `(d+1) × (d+1)` unitary applied at most
//!   `N − d` times, `(N−d)(d+1)d/2` operations;
//! * binary tree: a `2d × 2d` unitary applied `⌈log₂N⌉` times,
//!   `⌈log₂N⌉·d(2d−1)` operations.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("invalid dimensions: need N ≥ 2, d ≥ 2 and N ≥ d (got N = {n}, d = {d})")]
    InvalidDimensions { n: u64, d: u64 },
    #[error("operation count overflows 64 bits")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub n_outcomes: u64,
    pub dim: u64,
    pub neumark_ops: u64,
    pub single_extra_dim_ops: u64,
    pub binary_tree_ops: u64,
    pub binary_tree_depth: u32,
    /// Half of `single_extra_dim_ops`: the average count when all outcomes
    /// are equally likely. Only meaningful under that assumption.
    pub single_extra_dim_expected_ops: f64,
}

/// `⌈log₂ n⌉` for `n ≥ 1`.
pub fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    u64::BITS - (n - 1).leading_zeros()
}

pub fn compare(n: u64, d: u64) -> Result<CostReport, CostError> {
    if n < 2 || d < 2 || n < d {
        return Err(CostError::InvalidDimensions { n, d });
    }
    let neumark_ops = n.checked_mul(n - 1).ok_or(CostError::Overflow)? / 2;
    // (d+1)d is even, so the division is exact.
    let single_extra_dim_ops = (n - d)
        .checked_mul(d.checked_mul(d + 1).ok_or(CostError::Overflow)? / 2)
        .ok_or(CostError::Overflow)?;
    let depth = ceil_log2(n);
    let per_round = d.checked_mul(2 * d - 1).ok_or(CostError::Overflow)?;
    let binary_tree_ops = per_round.checked_mul(depth as u64).ok_or(CostError::Overflow)?;
    Ok(CostReport {
        n_outcomes: n,
        dim: d,
        neumark_ops,
        single_extra_dim_ops,
        binary_tree_ops,
        binary_tree_depth: depth,
        single_extra_dim_expected_ops: single_extra_dim_ops as f64 / 2.0,
    })
}

impl CostReport {
    /// `binary < single-extra-dimension < Neumark`.
    pub fn tree_is_cheapest(&self) -> bool {
        self.binary_tree_ops < self.single_extra_dim_ops && self.single_extra_dim_ops < self.neumark_ops
    }
}

/// Smallest `N* ≥ d` such that [`CostReport::tree_is_cheapest`] holds for
/// every `N` in `N*..=n_max`. `None` if it fails at `n_max`.
pub fn crossover(d: u64, n_max: u64) -> Result<Option<u64>, CostError> {
    let mut best = None;
    for n in (d.max(2)..=n_max).rev() {
        if compare(n, d)?.tree_is_cheapest() {
            best = Some(n);
        } else {
            break;
        }
    }
    Ok(best)
}
