//! Per-unit group recall tables feeding the rank tests.
//!
//! A unit is a template (all of its notes pooled) or a single populated copy
//! of a template, identified by (template, rep). Within a unit, a group's recall
//! pools the mentions of every note populated from that group's name sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hypothesis::{bonferroni_level, friedman, friedman_permutation_p, wilcoxon_signed_rank, TestResult};
use super::StatsError;
use crate::catalog::{Group, Pooling};
use crate::eval::NoteOutcome;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisUnit {
    #[default]
    Template,
    Note,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub template_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep: Option<u32>,
}

/// Rows are units, columns follow `groups`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTable {
    pub groups: Vec<Group>,
    pub units: Vec<UnitKey>,
    pub recalls: Vec<Vec<f64>>,
    /// Units lacking mentions for at least one group.
    pub dropped: Vec<UnitKey>,
}

pub fn hypothesis_unit_recalls(
    outcomes: &[NoteOutcome],
    pooling: &Pooling,
    unit: HypothesisUnit,
) -> Result<UnitTable, StatsError> {
    let groups: Vec<Group> = pooling.groups.iter().map(|(g, _)| *g).collect();
    let mut tallies: BTreeMap<UnitKey, Vec<(u64, u64)>> = BTreeMap::new();
    for o in outcomes {
        let Some(g) = pooling.group_of(o.set_id) else {
            continue;
        };
        let col = groups.iter().position(|x| *x == g).expect("group from pooling");
        let key = UnitKey {
            template_id: o.template_id,
            rep: (unit == HypothesisUnit::Note).then_some(o.rep),
        };
        let row = tallies.entry(key).or_insert_with(|| vec![(0, 0); groups.len()]);
        row[col].0 += o.recalled() as u64;
        row[col].1 += o.mentions.len() as u64;
    }
    let mut table = UnitTable {
        groups,
        units: Vec::new(),
        recalls: Vec::new(),
        dropped: Vec::new(),
    };
    for (key, row) in tallies {
        if row.iter().any(|&(_, m)| m == 0) {
            table.dropped.push(key);
            continue;
        }
        table.units.push(key);
        table.recalls.push(row.iter().map(|&(r, m)| r as f64 / m as f64).collect());
    }
    if !table.dropped.is_empty() {
        log::warn!(
            "{} of {} units dropped for lacking mentions in some group",
            table.dropped.len(),
            table.dropped.len() + table.units.len()
        );
    }
    if table.units.len() < 2 {
        return Err(StatsError::TooFewUnits {
            usable: table.units.len(),
            dropped: table.dropped.len(),
        });
    }
    Ok(table)
}

/// Wilcoxon for two-group dimensions, Friedman otherwise, at the Bonferroni
/// level of the dimension. `permutations` adds a within-block permutation p
/// for Friedman.
pub fn dimension_test(
    table: &UnitTable,
    base_alpha: f64,
    permutations: Option<(usize, u64)>,
) -> Result<TestResult, StatsError> {
    let dimension = table.groups[0].dimension();
    let alpha = bonferroni_level(base_alpha, dimension);
    if table.groups.len() == 2 {
        let pairs: Vec<(f64, f64)> = table.recalls.iter().map(|r| (r[0], r[1])).collect();
        return Ok(wilcoxon_signed_rank(&pairs)?.at_level(dimension, alpha));
    }
    let mut result = friedman(&table.recalls)?.at_level(dimension, alpha);
    if let Some((n, seed)) = permutations {
        result.permutation_p = Some(friedman_permutation_p(&table.recalls, n, seed)?);
        result.permutation_floor = Some(1.0 / (n + 1) as f64);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{pool_groups, Catalog, Dimension};
    use crate::eval::{MentionMeta, MentionOutcome};
    use crate::template::Part;

    fn outcome(template_id: u32, set_id: u8, rep: u32, recalled: &[bool]) -> NoteOutcome {
        NoteOutcome {
            note_id: crate::template::note_id(template_id, set_id, rep),
            template_id,
            set_id,
            rep,
            mentions: recalled
                .iter()
                .enumerate()
                .map(|(i, &r)| MentionOutcome {
                    note_id: String::new(),
                    mention_index: i,
                    recalled: r,
                    covered_parts: Default::default(),
                })
                .collect(),
            false_positives: 0,
            predicted: 0,
            meta: vec![MentionMeta { part: Part::First, ctx: None, set_gender: None }; recalled.len()],
        }
    }

    #[test]
    fn template_units_pair_gender_pools() {
        let pooling = pool_groups(&Catalog::bundled(), Dimension::Gender);
        let outcomes: Vec<NoteOutcome> = (1..=100)
            .flat_map(|t| (1..=16).map(move |s| outcome(t, s, 0, &[true, s % 2 == 0])))
            .collect();
        let table = hypothesis_unit_recalls(&outcomes, &pooling, HypothesisUnit::Template).unwrap();
        assert_eq!(table.units.len(), 100);
        assert!(table.dropped.is_empty());
    }

    #[test]
    fn unit_missing_a_group_is_dropped() {
        let pooling = pool_groups(&Catalog::bundled(), Dimension::Gender);
        let mut outcomes = vec![outcome(1, 1, 0, &[true]), outcome(1, 2, 0, &[true])];
        outcomes.push(outcome(2, 1, 0, &[true]));
        outcomes.push(outcome(2, 2, 0, &[]));
        outcomes.push(outcome(3, 1, 0, &[false]));
        outcomes.push(outcome(3, 2, 0, &[true]));
        let table = hypothesis_unit_recalls(&outcomes, &pooling, HypothesisUnit::Template).unwrap();
        assert_eq!(table.dropped, vec![UnitKey { template_id: 2, rep: None }]);
        assert_eq!(table.units.len(), 2);
        let too_few = hypothesis_unit_recalls(&outcomes[..4], &pooling, HypothesisUnit::Template);
        assert_eq!(too_few, Err(StatsError::TooFewUnits { usable: 1, dropped: 1 }));
    }

    #[test]
    fn note_units_split_reps() {
        let pooling = pool_groups(&Catalog::bundled(), Dimension::Gender);
        let outcomes: Vec<NoteOutcome> = (0..3)
            .flat_map(|r| [outcome(1, 1, r, &[true]), outcome(1, 2, r, &[true])])
            .collect();
        let table = hypothesis_unit_recalls(&outcomes, &pooling, HypothesisUnit::Note).unwrap();
        assert_eq!(table.units.len(), 3);
    }

    #[test]
    fn perfect_recall_is_degenerate() {
        let pooling = pool_groups(&Catalog::bundled(), Dimension::Race);
        let outcomes: Vec<NoteOutcome> = (1..=5)
            .flat_map(|t| (1..=16).map(move |s| outcome(t, s, 0, &[true, true])))
            .collect();
        let table = hypothesis_unit_recalls(&outcomes, &pooling, HypothesisUnit::Template).unwrap();
        let result = dimension_test(&table, 0.05, Some((99, 1))).unwrap();
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.permutation_p, Some(1.0));
        assert!(!result.significant && result.degenerate);
    }
}
