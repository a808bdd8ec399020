//! Turning predictions into the numbers of an audit report.
//!
//! Everything here is a pure function of the corpus, the predictions and the
//! [`AnalysisParams`], which is what lets `verify` recompute a report from the
//! files it was written with.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Analyses, AuditError};
use crate::backends::Predictions;
use crate::catalog::{pool_groups, table_profile, Catalog, Decade, Dimension, Gender, Group, Popularity, Race};
use crate::eval::{
    context_consistency_diff, group_recall, match_corpus, polysemy_by_race, ContextDiff, Counts, NoteOutcome,
    ScoreTriple,
};
use crate::rng::{derive_key, tag};
use crate::span::char_len;
use crate::stats::{
    bootstrap_many, correlate, dimension_test, gap_metrics, hypothesis_unit_recalls, BootstrapEstimate, GapReference,
    HypothesisUnit, TestResult,
};
use crate::template::{LengthConvention, NoteCorpus};

/// Template facts that analyses need beyond the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub template_id: u32,
    pub origin_gender: Option<Gender>,
    /// Length of the template text without placeholders.
    pub literal_chars: usize,
    pub unique_names: usize,
}

/// The analysis-relevant part of an audit configuration. It holds no backend
/// settings, so input limits and commands never reach the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub seed: u64,
    pub reps: u32,
    pub bootstrap_resamples: usize,
    pub permutations: usize,
    pub base_alpha: f64,
    pub analyses: Analyses,
    pub hardest_k: usize,
    pub hypothesis_unit: HypothesisUnit,
    pub gap_reference: GapReference,
    pub length_convention: LengthConvention,
    pub friedman_permutation: bool,
    pub backends: Vec<String>,
    pub templates: Vec<TemplateInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendPredictions {
    pub name: String,
    pub main: Predictions,
    pub polysemy: Option<Predictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub seed: u64,
    pub reps: u32,
    pub notes: usize,
    pub mentions: usize,
    pub templates: usize,
    pub gap_reference: GapReference,
    pub hypothesis_unit: HypothesisUnit,
    /// Templates with the lowest recall averaged over backends, hardest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardest_templates: Option<Vec<u32>>,
    pub backends: Vec<BackendResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResult {
    pub name: String,
    pub failed_notes: usize,
    pub overall: Overall,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<Vec<DimensionResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_set: Option<PerSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polysemy: Option<Vec<PolysemyRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_correlation: Option<Vec<CorrelationRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardest_subset: Option<SubsetResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_consistent: Option<SubsetResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub score: ScoreTriple,
    /// Absent when precision is undefined on the full corpus.
    pub precision_se: Option<f64>,
    pub recall_se: f64,
    pub f1_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub label: Group,
    pub recalled: u64,
    pub mentions: u64,
    pub recall: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResult {
    pub dimension: Dimension,
    /// Absent when fewer than two groups have mentions; see `gap_error`.
    pub red: Option<f64>,
    pub rmd: Option<f64>,
    pub reference_recall: Option<f64>,
    pub per_group_deviation: BTreeMap<Group, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_error: Option<String>,
    pub test: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<String>,
    pub units_dropped: usize,
    pub groups: Vec<GroupRow>,
    pub empty_groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    /// 1 = highest recall.
    pub rank: usize,
    pub set_id: u8,
    pub gender: Gender,
    pub race: Race,
    pub popularity: Popularity,
    pub decade: Decade,
    pub recalled: u64,
    pub mentions: u64,
    pub recall: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSet {
    /// Sorted by recall, highest first.
    pub sets: Vec<SetRow>,
    /// Catalog sets with no notes.
    pub missing: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolysemyRow {
    pub race: Race,
    pub mentions: u64,
    pub strict: f64,
    pub augmented: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub at_floor: Option<bool>,
    pub n_permutations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetGap {
    pub dimension: Dimension,
    pub red: Option<f64>,
    pub rmd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub notes: usize,
    pub score: ScoreTriple,
    pub gaps: Vec<SubsetGap>,
}

/// Per-note counts; the unit the bootstrap resamples.
#[derive(Debug, Clone, Copy)]
struct Tally {
    set_id: u8,
    recalled: u64,
    mentions: u64,
    fp: u64,
}

impl Tally {
    fn of(o: &NoteOutcome) -> Tally {
        Tally {
            set_id: o.set_id,
            recalled: o.recalled() as u64,
            mentions: o.mentions.len() as u64,
            fp: o.false_positives as u64,
        }
    }
}

fn counts(ts: &[&Tally]) -> Counts {
    ts.iter()
        .map(|t| Counts {
            tp: t.recalled,
            fp: t.fp,
            fn_: t.mentions - t.recalled,
        })
        .sum()
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

type Stat = Box<dyn Fn(&[&Tally]) -> Option<f64> + Sync>;

fn bootstrap_key(seed: u64, analysis: &str, detail: u64, backend: &str) -> u64 {
    derive_key(seed, &[tag("bootstrap"), tag(analysis), detail, tag(backend)])
}

/// Matches predictions against a corpus.
pub fn outcomes_for(corpus: &NoteCorpus, predictions: &Predictions) -> Result<Vec<NoteOutcome>, AuditError> {
    Ok(match_corpus(corpus, &predictions.span_map())?)
}

fn overall(params: &AnalysisParams, name: &str, tallies: &[Tally]) -> Overall {
    let all: Vec<&Tally> = tallies.iter().collect();
    let score: ScoreTriple = counts(&all).into();
    let seed = bootstrap_key(params.seed, "overall", 0, name);
    let n = params.bootstrap_resamples;
    let stats: Vec<Stat> = vec![
        Box::new(|ts| {
            let c = counts(ts);
            ratio(c.tp, c.tp + c.fn_)
        }),
        Box::new(|ts| Some(ScoreTriple::from(counts(ts)).f1)),
    ];
    let est = bootstrap_many(tallies, &stats, n, seed).expect("corpus is non-empty and recall defined");
    let precision: Vec<Stat> = vec![Box::new(|ts| ScoreTriple::from(counts(ts)).precision)];
    let precision_se = score
        .precision
        .and_then(|_| bootstrap_many(tallies, &precision, n, seed).ok())
        .map(|e| e[0].standard_error);
    Overall {
        score,
        precision_se,
        recall_se: est[0].standard_error,
        f1_se: est[1].standard_error,
    }
}

fn group_rows(params: &AnalysisParams, name: &str, tallies: &[Tally], catalog: &Catalog, dim: Dimension) -> Vec<GroupRow> {
    let pooling = pool_groups(catalog, dim);
    let items: Vec<Tally> = tallies.iter().filter(|t| pooling.group_of(t.set_id).is_some()).copied().collect();
    let groups: Vec<(Group, Vec<u8>)> = pooling.groups.clone();
    let totals: Vec<(u64, u64)> = groups
        .iter()
        .map(|(_, ids)| {
            items
                .iter()
                .filter(|t| ids.contains(&t.set_id))
                .fold((0, 0), |a, t| (a.0 + t.recalled, a.1 + t.mentions))
        })
        .collect();
    let stats: Vec<Stat> = groups
        .iter()
        .map(|(_, ids)| {
            let ids = ids.clone();
            Box::new(move |ts: &[&Tally]| {
                let (r, m) = ts
                    .iter()
                    .filter(|t| ids.contains(&t.set_id))
                    .fold((0, 0), |a, t| (a.0 + t.recalled, a.1 + t.mentions));
                ratio(r, m)
            }) as Stat
        })
        .collect();
    let defined: Vec<usize> = (0..groups.len()).filter(|&i| totals[i].1 > 0).collect();
    if items.is_empty() || defined.is_empty() {
        return Vec::new();
    }
    let stats: Vec<Stat> = stats.into_iter().enumerate().filter(|(i, _)| defined.contains(i)).map(|(_, s)| s).collect();
    let seed = bootstrap_key(params.seed, "group", tag(dim.label()), name);
    let est = bootstrap_many(&items, &stats, params.bootstrap_resamples, seed).expect("groups with mentions");
    defined
        .iter()
        .zip(est)
        .map(|(&i, e)| GroupRow {
            label: groups[i].0,
            recalled: totals[i].0,
            mentions: totals[i].1,
            recall: e.point,
            se: e.standard_error,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        })
        .collect()
}

fn dimension_result(
    params: &AnalysisParams,
    name: &str,
    outcomes: &[NoteOutcome],
    tallies: &[Tally],
    catalog: &Catalog,
    dim: Dimension,
) -> DimensionResult {
    let pooling = pool_groups(catalog, dim);
    let report = group_recall(outcomes, &pooling);
    let (red, rmd, reference_recall, per_group_deviation, gap_error) = match gap_metrics(&report.groups, params.gap_reference) {
        Ok(g) => (Some(g.red), Some(g.rmd), Some(g.reference_recall), g.per_group_deviation, None),
        Err(e) => (None, None, None, BTreeMap::new(), Some(e.to_string())),
    };
    let permutations = params.friedman_permutation.then(|| {
        (
            params.permutations,
            derive_key(params.seed, &[tag("permutation"), tag(dim.label()), tag(name)]),
        )
    });
    let (test, test_error, units_dropped) = match hypothesis_unit_recalls(outcomes, &pooling, params.hypothesis_unit) {
        Ok(table) => match dimension_test(&table, params.base_alpha, permutations) {
            Ok(t) => (Some(t), None, table.dropped.len()),
            Err(e) => (None, Some(e.to_string()), table.dropped.len()),
        },
        Err(e) => (None, Some(e.to_string()), 0),
    };
    DimensionResult {
        dimension: dim,
        red,
        rmd,
        reference_recall,
        per_group_deviation,
        gap_error,
        test,
        test_error,
        units_dropped,
        groups: group_rows(params, name, tallies, catalog, dim),
        empty_groups: report.empty_groups,
    }
}

fn per_set(params: &AnalysisParams, name: &str, tallies: &[Tally], catalog: &Catalog) -> PerSet {
    let mut sets = Vec::new();
    let mut missing = Vec::new();
    for set in catalog.sets() {
        let items: Vec<Tally> = tallies.iter().filter(|t| t.set_id == set.set_id).copied().collect();
        let (r, m) = items.iter().fold((0, 0), |a, t| (a.0 + t.recalled, a.1 + t.mentions));
        if m == 0 {
            log::warn!("name set {} has no mentions", set.set_id);
            missing.push(set.set_id);
            continue;
        }
        let stats: Vec<Stat> = vec![Box::new(|ts| {
            let (r, m) = ts.iter().fold((0, 0), |a, t| (a.0 + t.recalled, a.1 + t.mentions));
            ratio(r, m)
        })];
        let seed = bootstrap_key(params.seed, "set", u64::from(set.set_id), name);
        let e: BootstrapEstimate = bootstrap_many(&items, &stats, params.bootstrap_resamples, seed)
            .expect("set has mentions")
            .remove(0);
        let p = set.profile();
        sets.push(SetRow {
            rank: 0,
            set_id: set.set_id,
            gender: p.gender,
            race: p.race,
            popularity: p.popularity,
            decade: p.decade,
            recalled: r,
            mentions: m,
            recall: e.point,
            se: e.standard_error,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        });
    }
    sets.sort_by(|a, b| b.recall.total_cmp(&a.recall).then(a.set_id.cmp(&b.set_id)));
    for (i, s) in sets.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    PerSet { sets, missing }
}

/// Micro recall of each template's notes.
pub fn template_recalls(outcomes: &[NoteOutcome]) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for o in outcomes {
        let e = acc.entry(o.template_id).or_default();
        e.0 += o.recalled() as u64;
        e.1 += o.mentions.len() as u64;
    }
    acc.into_iter()
        .filter_map(|(t, (r, m))| ratio(r, m).map(|x| (t, x)))
        .collect()
}

/// The `k` templates with the lowest recall averaged over backends, hardest
/// first; ties go to the lower template id.
pub fn hardest_templates(per_backend: &[BTreeMap<u32, f64>], k: usize) -> Vec<u32> {
    let ids: BTreeSet<u32> = per_backend.iter().flat_map(|m| m.keys().copied()).collect();
    let mut avg: Vec<(u32, f64)> = ids
        .into_iter()
        .map(|t| {
            let vals: Vec<f64> = per_backend.iter().filter_map(|m| m.get(&t).copied()).collect();
            (t, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    avg.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    avg.into_iter().take(k).map(|(t, _)| t).collect()
}

fn correlations(
    params: &AnalysisParams,
    name: &str,
    corpus: &NoteCorpus,
    recalls: &BTreeMap<u32, f64>,
) -> Vec<CorrelationRow> {
    let info: BTreeMap<u32, &TemplateInfo> = params.templates.iter().map(|t| (t.template_id, t)).collect();
    let mut lengths: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for n in &corpus.notes {
        let e = lengths.entry(n.template_id).or_default();
        e.0 += char_len(&n.text);
        e.1 += 1;
    }
    let ids: Vec<u32> = recalls.keys().copied().filter(|t| info.contains_key(t)).collect();
    let y: Vec<f64> = ids.iter().map(|t| recalls[t]).collect();
    let length: Vec<f64> = ids
        .iter()
        .map(|t| match params.length_convention {
            LengthConvention::Populated => {
                let (sum, n) = lengths[t];
                sum as f64 / n as f64
            }
            LengthConvention::Raw => info[t].literal_chars as f64,
        })
        .collect();
    let names: Vec<f64> = ids.iter().map(|t| info[t].unique_names as f64).collect();
    [("length", length), ("unique_names", names)]
        .into_iter()
        .map(|(feature, x)| {
            let seed = derive_key(params.seed, &[tag("correlation"), tag(feature), tag(name)]);
            match correlate(&x, &y, params.permutations, seed) {
                Ok(c) => CorrelationRow {
                    feature: feature.to_string(),
                    n: c.n,
                    r: Some(c.r),
                    p_value: Some(c.p_value),
                    at_floor: Some(c.at_floor),
                    n_permutations: c.n_permutations,
                    error: None,
                },
                Err(e) => CorrelationRow {
                    feature: feature.to_string(),
                    n: x.len(),
                    r: None,
                    p_value: None,
                    at_floor: None,
                    n_permutations: params.permutations,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn subset(params: &AnalysisParams, outcomes: &[NoteOutcome], catalog: &Catalog, keep: impl Fn(&NoteOutcome) -> bool) -> SubsetResult {
    let kept: Vec<NoteOutcome> = outcomes.iter().filter(|o| keep(o)).cloned().collect();
    let score: ScoreTriple = kept.iter().map(NoteOutcome::counts).sum::<Counts>().into();
    let gaps = Dimension::ALL
        .into_iter()
        .map(|dim| {
            let report = group_recall(&kept, &pool_groups(catalog, dim));
            match gap_metrics(&report.groups, params.gap_reference) {
                Ok(g) => SubsetGap {
                    dimension: dim,
                    red: Some(g.red),
                    rmd: Some(g.rmd),
                    error: None,
                },
                Err(e) => SubsetGap {
                    dimension: dim,
                    red: None,
                    rmd: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    SubsetResult {
        notes: kept.len(),
        score,
        gaps,
    }
}

/// Computes every enabled analysis for every backend.
pub fn analyze(
    params: &AnalysisParams,
    corpus: &NoteCorpus,
    polysemy_corpus: Option<&NoteCorpus>,
    predictions: &[BackendPredictions],
) -> Result<AuditResult, AuditError> {
    if corpus.notes.is_empty() {
        return Err(AuditError::NoNotes);
    }
    let catalog = Catalog::bundled();
    let a = params.analyses;
    let outcomes: Vec<Vec<NoteOutcome>> = predictions
        .iter()
        .map(|p| outcomes_for(corpus, &p.main))
        .collect::<Result<_, _>>()?;
    let recalls: Vec<BTreeMap<u32, f64>> = outcomes.iter().map(|o| template_recalls(o)).collect();
    let n_templates = recalls.iter().flat_map(|m| m.keys()).collect::<BTreeSet<_>>().len();
    let hardest = a.hardest_subset.then(|| {
        if params.hardest_k > n_templates {
            log::warn!("hardest_k = {} exceeds the {n_templates} templates; using all", params.hardest_k);
        }
        hardest_templates(&recalls, params.hardest_k.min(n_templates))
    });
    let origin: BTreeMap<u32, Option<Gender>> = params.templates.iter().map(|t| (t.template_id, t.origin_gender)).collect();

    let mut backends = Vec::new();
    for ((p, outcomes), recalls) in predictions.iter().zip(&outcomes).zip(&recalls) {
        let name = p.name.as_str();
        let tallies: Vec<Tally> = outcomes.iter().map(Tally::of).collect();
        let polysemy = match (a.polysemy, polysemy_corpus, &p.polysemy) {
            (true, Some(pc), Some(pp)) => {
                let po = outcomes_for(pc, pp)?;
                Some(
                    polysemy_by_race(&po)
                        .into_iter()
                        .map(|(race, r)| PolysemyRow {
                            race,
                            mentions: r.mentions,
                            strict: r.strict,
                            augmented: r.augmented,
                        })
                        .collect(),
                )
            }
            _ => None,
        };
        backends.push(BackendResult {
            name: name.to_string(),
            failed_notes: p.main.error_count(),
            overall: overall(params, name, &tallies),
            dimensions: a.dimensions.then(|| {
                Dimension::ALL
                    .into_iter()
                    .map(|d| dimension_result(params, name, outcomes, &tallies, &catalog, d))
                    .collect()
            }),
            per_set: a.per_set.then(|| per_set(params, name, &tallies, &catalog)),
            polysemy,
            context: a.context.then(|| context_consistency_diff(outcomes)),
            template_correlation: a.template_correlation.then(|| correlations(params, name, corpus, recalls)),
            hardest_subset: hardest
                .as_ref()
                .map(|ts| subset(params, outcomes, &catalog, |o| ts.contains(&o.template_id))),
            gender_consistent: a.gender_consistent.then(|| {
                subset(params, outcomes, &catalog, |o| {
                    let g = origin.get(&o.template_id).copied().flatten();
                    g.is_some() && g == table_profile(o.set_id).map(|p| p.gender)
                })
            }),
        });
    }
    Ok(AuditResult {
        seed: params.seed,
        reps: params.reps,
        notes: corpus.len(),
        mentions: corpus.mention_count(),
        templates: n_templates,
        gap_reference: params.gap_reference,
        hypothesis_unit: params.hypothesis_unit,
        hardest_templates: hardest,
        backends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardest_selection() {
        let a: BTreeMap<u32, f64> = [(1, 0.9), (7, 0.0), (3, 0.5)].into_iter().collect();
        let b: BTreeMap<u32, f64> = [(1, 0.7), (7, 0.0), (3, 0.9)].into_iter().collect();
        assert_eq!(hardest_templates(&[a.clone(), b.clone()], 1), vec![7]);
        assert_eq!(hardest_templates(&[a, b], 3), vec![7, 3, 1]);
    }
}
