//! Recall equality difference and recall maximum difference.
//!
//! Both measure how far each group's recall sits from the recall of the whole
//! dimension: the first averages the absolute deviations, the second takes the
//! largest one.
//!
//! ```
//! use deidaudit::catalog::{Gender, Group};
//! use deidaudit::eval::GroupRecall;
//! use deidaudit::stats::{recall_equality_difference, recall_maximum_difference};
//!
//! let groups = [
//!     GroupRecall::new(Group::Gender(Gender::Male), 90, 100),
//!     GroupRecall::new(Group::Gender(Gender::Female), 80, 100),
//! ];
//! assert!((recall_equality_difference(&groups).unwrap() - 0.05).abs() < 1e-12);
//! assert!((recall_maximum_difference(&groups).unwrap() - 0.05).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::catalog::{Dimension, Group};
use crate::eval::GroupRecall;

/// What each group's recall is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReference {
    /// Recalled mentions over all mentions of the dimension.
    #[default]
    PooledMicro,
    /// Unweighted mean of the group recalls.
    UnweightedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMetrics {
    pub dimension: Dimension,
    pub red: f64,
    pub rmd: f64,
    pub reference: GapReference,
    pub reference_recall: f64,
    pub per_group_deviation: BTreeMap<Group, f64>,
}

fn check(groups: &[GroupRecall]) -> Result<(), StatsError> {
    let usable = groups.iter().filter(|g| g.mentions > 0).count();
    if groups.len() < 2 || usable < groups.len() {
        return Err(StatsError::TooFewGroups(usable));
    }
    Ok(())
}

fn reference_recall(groups: &[GroupRecall], reference: GapReference) -> f64 {
    match reference {
        GapReference::PooledMicro => {
            let r: u64 = groups.iter().map(|g| g.recalled).sum();
            let m: u64 = groups.iter().map(|g| g.mentions).sum();
            r as f64 / m as f64
        }
        GapReference::UnweightedMean => {
            groups.iter().map(|g| g.recall).sum::<f64>() / groups.len() as f64
        }
    }
}

fn deviations(groups: &[GroupRecall], reference: GapReference) -> (f64, Vec<f64>) {
    let r = reference_recall(groups, reference);
    (r, groups.iter().map(|g| (g.recall - r).abs()).collect())
}

/// Mean absolute deviation of group recalls from the pooled micro recall.
pub fn recall_equality_difference(groups: &[GroupRecall]) -> Result<f64, StatsError> {
    Ok(gap_metrics(groups, GapReference::PooledMicro)?.red)
}

/// Largest absolute deviation of a group recall from the pooled micro recall.
pub fn recall_maximum_difference(groups: &[GroupRecall]) -> Result<f64, StatsError> {
    Ok(gap_metrics(groups, GapReference::PooledMicro)?.rmd)
}

/// Both gap metrics plus the per-group deviations. Groups must all have
/// mentions and belong to one dimension.
pub fn gap_metrics(groups: &[GroupRecall], reference: GapReference) -> Result<GapMetrics, StatsError> {
    check(groups)?;
    let (reference_recall, devs) = deviations(groups, reference);
    let red = devs.iter().sum::<f64>() / devs.len() as f64;
    let rmd = devs.iter().copied().fold(0.0, f64::max);
    Ok(GapMetrics {
        dimension: groups[0].group.dimension(),
        red,
        rmd,
        reference,
        reference_recall,
        per_group_deviation: groups.iter().map(|g| g.group).zip(devs).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Dimension, Race};

    fn race(counts: &[(u64, u64)]) -> Vec<GroupRecall> {
        Dimension::Race
            .groups()
            .into_iter()
            .zip(counts)
            .map(|(g, &(r, m))| GroupRecall::new(g, r, m))
            .collect()
    }

    #[test]
    fn three_group_example() {
        let g = race(&[(95, 100), (90, 100), (70, 100)]);
        let m = gap_metrics(&g, GapReference::PooledMicro).unwrap();
        assert!((m.red - 0.10).abs() < 1e-12);
        assert!((m.rmd - 0.15).abs() < 1e-12);
        assert!((m.per_group_deviation[&Group::Race(Race::Asian)] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn weighting_switch() {
        // unequal counts: pooled 0.82, unweighted mean 0.85
        let g = race(&[(9, 10), (80, 100)]);
        let pooled = gap_metrics(&g, GapReference::PooledMicro).unwrap();
        let mean = gap_metrics(&g, GapReference::UnweightedMean).unwrap();
        assert!((pooled.reference_recall - 89.0 / 110.0).abs() < 1e-15);
        assert!((mean.reference_recall - 0.85).abs() < 1e-15);
        assert!((mean.red - 0.05).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(recall_equality_difference(&race(&[(1, 2)])), Err(StatsError::TooFewGroups(1)));
        assert!(recall_maximum_difference(&race(&[(1, 2), (0, 0)])).is_err());
    }
}
