//! Fairness gap metrics, bootstrap uncertainty, rank tests and correlation.

pub mod bootstrap;
pub mod correlation;
pub mod gaps;
pub mod special;
pub mod hypothesis;
pub mod units;

pub use bootstrap::{bootstrap, bootstrap_many, BootstrapEstimate};
pub use correlation::{correlate, Correlation};
pub use gaps::{gap_metrics, recall_equality_difference, recall_maximum_difference, GapMetrics, GapReference};
pub use hypothesis::{bonferroni_level, friedman, friedman_permutation_p, wilcoxon_signed_rank, Method, TestOutcome, TestResult};
pub use units::{dimension_test, hypothesis_unit_recalls, HypothesisUnit, UnitKey, UnitTable};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("gap metrics need at least two groups with mentions, got {0}")]
    TooFewGroups(usize),
    #[error("bootstrap over an empty note set")]
    EmptySample,
    #[error("bootstrap needs at least one resample")]
    ZeroResamples,
    #[error("statistic undefined on the full sample")]
    UndefinedPoint,
    #[error("statistic undefined on every resample")]
    AllResamplesUndefined,
    #[error("wilcoxon signed-rank needs at least one pair")]
    NoPairs,
    #[error("friedman needs at least 3 treatments, got {0}; use the wilcoxon signed-rank test for two")]
    TooFewTreatments(usize),
    #[error("friedman needs at least 2 blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("block {block} has {got} values, expected {expected}")]
    RaggedBlocks { block: usize, got: usize, expected: usize },
    #[error("correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("feature and recall vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("feature is constant; correlation undefined")]
    ConstantFeature,
    #[error("recall vector is constant; correlation undefined")]
    ConstantResponse,
    #[error("fewer than 2 usable units ({usable} usable, {dropped} dropped)")]
    TooFewUnits { usable: usize, dropped: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

/// Mid-ranks (1-based) of `values`; tied values share the mean of their ranks.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the tie groups in `values` (groups of one included).
pub fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes
}

#[cfg(test)]
mod rank_tests {
    use super::*;

    #[test]
    fn mid_ranks_with_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(tie_sizes(&[3.0, 1.0, 3.0, 2.0]), vec![1, 1, 2]);
        assert!(mid_ranks(&[]).is_empty());
    }
}
