//! Wilcoxon signed-rank and Friedman tests, and Bonferroni levels.
//!
//! ```
//! use deidaudit::stats::{friedman, wilcoxon_signed_rank};
//!
//! let pairs: Vec<(f64, f64)> = (1..=5).map(|d| (d as f64, 0.0)).collect();
//! let w = wilcoxon_signed_rank(&pairs).unwrap();
//! assert_eq!(w.statistic, 0.0);
//! assert!((w.p_value - 0.0625).abs() < 1e-15);
//!
//! let blocks = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
//! let f = friedman(&blocks).unwrap();
//! assert!((f.statistic - 4.0).abs() < 1e-12);
//! assert!((f.p_value - (-2.0f64).exp()).abs() < 1e-10);
//! ```

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, normal_sf};
use super::{mid_ranks, tie_sizes, StatsError};
use crate::catalog::Dimension;
use crate::rng::{derive_key, keyed_rng};

/// Largest effective sample size for which the Wilcoxon p-value is exact.
pub const WILCOXON_EXACT_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WilcoxonSignedRank,
    Friedman,
}

/// A test statistic and p-value before a significance level is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs (after dropping zero differences) or blocks.
    pub n_units: usize,
    /// Wilcoxon only: whether the p-value came from exact enumeration.
    pub exact: bool,
    /// No variation to test: every difference zero or every block fully tied.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub dimension: Dimension,
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub n_units: usize,
    pub alpha_adjusted: f64,
    pub significant: bool,
    pub degenerate: bool,
    pub exact: bool,
    /// Within-block permutation p-value, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_p: Option<f64>,
    /// `1 / (n_permutations + 1)`: permutation p-values never go below it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_floor: Option<f64>,
}

impl TestOutcome {
    pub fn at_level(self, dimension: Dimension, alpha_adjusted: f64) -> TestResult {
        TestResult {
            dimension,
            method: self.method,
            statistic: self.statistic,
            p_value: self.p_value,
            n_units: self.n_units,
            alpha_adjusted,
            significant: self.p_value < alpha_adjusted,
            degenerate: self.degenerate,
            exact: self.exact,
            permutation_p: None,
            permutation_floor: None,
        }
    }
}

/// `base_alpha` divided by the number of pairwise group comparisons in `dimension`.
pub fn bonferroni_level(base_alpha: f64, dimension: Dimension) -> f64 {
    let k = dimension.groups().len();
    base_alpha / (k * (k - 1) / 2) as f64
}

/// Two-sided Wilcoxon signed-rank test on paired values.
///
/// Zero differences are dropped and tied absolute differences get mid-ranks.
/// The statistic is `min(W+, W−)`. Up to [`WILCOXON_EXACT_MAX`] nonzero pairs
/// the p-value is the exact null probability over all sign assignments of the
/// observed ranks; above that it is the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestOutcome, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::NoPairs);
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestOutcome {
            method: Method::WilcoxonSignedRank,
            statistic: 0.0,
            p_value: 1.0,
            n_units: 0,
            exact: true,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let (p_value, exact) = if n <= WILCOXON_EXACT_MAX {
        (exact_signed_rank_p(&ranks, w), true)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let ties: f64 = tie_sizes(&abs).into_iter().map(|t| (t * t * t - t) as f64).sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w - mu).abs() - 0.5) / var.sqrt();
        ((2.0 * normal_sf(z)).min(1.0), false)
    };
    Ok(TestOutcome {
        method: Method::WilcoxonSignedRank,
        statistic: w,
        p_value,
        n_units: n,
        exact,
        degenerate: false,
    })
}

/// P(min(W+, W−) ≤ w) under the sign-flip null for the given ranks.
/// Mid-ranks are multiples of 1/2, so the distribution is counted over doubled
/// integer ranks.
fn exact_signed_rank_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w2 = (2.0 * w).round() as usize;
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| s.min(total - s) <= w2)
        .map(|(_, c)| c)
        .sum();
    (hits as f64 / (1u64 << ranks.len()) as f64).min(1.0)
}

fn check_blocks(blocks: &[Vec<f64>]) -> Result<usize, StatsError> {
    let k = blocks.first().map_or(0, Vec::len);
    if k < 3 {
        return Err(StatsError::TooFewTreatments(k));
    }
    if blocks.len() < 2 {
        return Err(StatsError::TooFewBlocks(blocks.len()));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.len() != k {
            return Err(StatsError::RaggedBlocks {
                block: i,
                got: b.len(),
                expected: k,
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    Ok(k)
}

/// Tie-corrected Friedman statistic from within-block ranks; `None` when every
/// block is fully tied.
fn friedman_q(ranks: &[Vec<f64>], tie_correction: f64) -> Option<f64> {
    let n = ranks.len() as f64;
    let k = ranks[0].len();
    let kf = k as f64;
    if tie_correction <= 1e-12 {
        return None;
    }
    let sum_sq: f64 = (0..k)
        .map(|j| ranks.iter().map(|b| b[j]).sum::<f64>().powi(2))
        .sum();
    let q = 12.0 / (n * kf * (kf + 1.0)) * sum_sq - 3.0 * n * (kf + 1.0);
    Some((q / tie_correction).max(0.0))
}

fn block_ranks(blocks: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = blocks.len() as f64;
    let k = blocks[0].len() as f64;
    let ranks: Vec<Vec<f64>> = blocks.iter().map(|b| mid_ranks(b)).collect();
    let ties: f64 = blocks
        .iter()
        .flat_map(|b| tie_sizes(b))
        .map(|t| (t * t * t - t) as f64)
        .sum();
    (ranks, 1.0 - ties / (n * k * (k * k - 1.0)))
}

/// Friedman test on an `n_blocks × k_treatments` matrix, chi-square p with
/// k − 1 degrees of freedom.
pub fn friedman(blocks: &[Vec<f64>]) -> Result<TestOutcome, StatsError> {
    let k = check_blocks(blocks)?;
    let (ranks, c) = block_ranks(blocks);
    let (statistic, p_value, degenerate) = match friedman_q(&ranks, c) {
        Some(q) => (q, chi_square_sf(q, (k - 1) as f64), false),
        None => (0.0, 1.0, true),
    };
    Ok(TestOutcome {
        method: Method::Friedman,
        statistic,
        p_value,
        n_units: blocks.len(),
        exact: false,
        degenerate,
    })
}

/// Within-block permutation p-value for the Friedman statistic:
/// `(1 + #{Q* ≥ Q}) / (1 + n_permutations)`.
pub fn friedman_permutation_p(blocks: &[Vec<f64>], n_permutations: usize, seed: u64) -> Result<f64, StatsError> {
    check_blocks(blocks)?;
    let (ranks, c) = block_ranks(blocks);
    let Some(observed) = friedman_q(&ranks, c) else {
        return Ok(1.0);
    };
    let tol = 1e-9 * observed.max(1.0);
    let hits: usize = (0..n_permutations as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = keyed_rng(derive_key(seed, &[i]));
            let shuffled: Vec<Vec<f64>> = ranks
                .iter()
                .map(|b| {
                    let mut b = b.clone();
                    b.shuffle(&mut rng);
                    b
                })
                .collect();
            friedman_q(&shuffled, c).is_some_and(|q| q >= observed - tol)
        })
        .count();
    Ok((hits + 1) as f64 / (n_permutations + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonferroni_levels() {
        assert_eq!(bonferroni_level(0.05, Dimension::Gender), 0.05);
        assert_eq!(bonferroni_level(0.05, Dimension::Race), 0.05 / 6.0);
        assert_eq!(bonferroni_level(0.05, Dimension::Popularity), 0.05 / 3.0);
        assert_eq!(bonferroni_level(0.05, Dimension::Decade), 0.05 / 3.0);
    }

    #[test]
    fn wilcoxon_degenerate_and_errors() {
        let t = wilcoxon_signed_rank(&[(1.0, 1.0), (0.5, 0.5)]).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(wilcoxon_signed_rank(&[]), Err(StatsError::NoPairs));
    }

    #[test]
    fn wilcoxon_exact_with_ties() {
        // |d| = 1,1,2: mid-ranks 1.5,1.5,3; signs +,-,+ → W+ = 4.5, W− = 1.5.
        // Doubled ranks 3,3,6 (total 12): sums 0,3,3,6,6,9,9,12; min(s,12−s) ≤ 3
        // holds for 0,3,3,9,9,12 → 6/8.
        let t = wilcoxon_signed_rank(&[(1.0, 0.0), (0.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(t.statistic, 1.5);
        assert_eq!(t.p_value, 0.75);
        assert!(t.exact);
    }

    #[test]
    fn wilcoxon_normal_branch() {
        let pairs: Vec<(f64, f64)> = (1..=30).map(|i| (i as f64, 0.0)).collect();
        let t = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(!t.exact);
        assert_eq!(t.statistic, 0.0);
        assert!(t.p_value < 1e-5);
    }

    #[test]
    fn friedman_identical_treatments() {
        let t = friedman(&[vec![1.0; 4], vec![0.3; 4], vec![0.9; 4]]).unwrap();
        assert!(t.degenerate);
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        assert_eq!(friedman_permutation_p(&[vec![1.0; 3], vec![1.0; 3]], 10, 0), Ok(1.0));
    }

    #[test]
    fn friedman_errors() {
        assert_eq!(friedman(&[vec![1.0, 2.0], vec![2.0, 1.0]]), Err(StatsError::TooFewTreatments(2)));
        assert_eq!(friedman(&[vec![1.0, 2.0, 3.0]]), Err(StatsError::TooFewBlocks(1)));
        assert!(matches!(friedman(&[vec![1.0, 2.0, 3.0], vec![1.0]]), Err(StatsError::RaggedBlocks { .. })));
    }

    #[test]
    fn friedman_tie_correction() {
        // Block ranks (1.5,1.5,3) and (1,2,3): R = (2.5, 3.5, 6), ΣR² = 54.5,
        // raw Q = 0.5·54.5 − 24 = 3.25, C = 1 − 6/(2·3·8) = 0.875.
        let t = friedman(&[vec![1.0, 1.0, 5.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!((t.statistic - 3.25 / 0.875).abs() < 1e-12);
    }

    #[test]
    fn permutation_p_is_deterministic_and_bounded() {
        let blocks: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 10.0, 20.0 + i as f64, 5.0]).collect();
        let a = friedman_permutation_p(&blocks, 999, 5).unwrap();
        assert_eq!(a, friedman_permutation_p(&blocks, 999, 5).unwrap());
        assert!((1.0 / 1000.0..=1.0).contains(&a));
    }
}
