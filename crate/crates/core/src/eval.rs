//! Matching predictions against ground-truth mentions, and the recall-based
//! aggregates built on top of the per-mention outcomes.
//!
//! A mention is recalled when every code point of it lies in the union of the
//! predicted spans for its note. Coverage by a union (rather than exact span
//! equality) makes the score indifferent to whether a backend emits one span
//! per token or one per full name, and to chunk boundaries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{polysemy_race, Gender, Group, Pooling, Race};
use crate::span::{covered_by, merge_spans, Span};
use crate::template::{GroundTruthMention, NoteCorpus, Part, PopulatedNote};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("note {note_id}: predicted span {start}..{end} outside text of length {len}")]
    SpanOutOfBounds {
        note_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("note {note_id}: full-name mention at {start} has no space between first and last name")]
    MalformedFullMention { note_id: String, start: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamePart {
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionOutcome {
    pub note_id: String,
    pub mention_index: usize,
    pub recalled: bool,
    /// Name components fully covered. A first-only mention can only cover
    /// `first`, a last-only mention only `last`.
    pub covered_parts: BTreeSet<NamePart>,
}

/// Outcomes for one note plus its false-positive count and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteOutcome {
    pub note_id: String,
    pub template_id: u32,
    pub set_id: u8,
    pub rep: u32,
    pub mentions: Vec<MentionOutcome>,
    /// Merged predicted spans overlapping no ground-truth mention.
    pub false_positives: usize,
    /// Number of merged predicted spans.
    pub predicted: usize,
    /// Copied from the ground truth so later splits need no corpus lookup.
    pub meta: Vec<MentionMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionMeta {
    pub part: Part,
    pub ctx: Option<Gender>,
    pub set_gender: Option<Gender>,
}

impl NoteOutcome {
    pub fn recalled(&self) -> usize {
        self.mentions.iter().filter(|m| m.recalled).count()
    }

    pub fn counts(&self) -> Counts {
        let tp = self.recalled() as u64;
        Counts {
            tp,
            fp: self.false_positives as u64,
            fn_: self.mentions.len() as u64 - tp,
        }
    }
}

fn component_spans(note: &PopulatedNote, m: &GroundTruthMention, chars: &[char]) -> Result<Vec<(NamePart, Span)>, EvalError> {
    Ok(match m.part {
        Part::First => vec![(NamePart::First, m.span())],
        Part::Last => vec![(NamePart::Last, m.span())],
        Part::Full => {
            // names carry no whitespace, so the first space splits first from last
            let split = (m.start..m.end)
                .find(|&i| chars[i] == ' ')
                .ok_or_else(|| EvalError::MalformedFullMention {
                    note_id: note.note_id.clone(),
                    start: m.start,
                })?;
            vec![
                (NamePart::First, Span::new(m.start, split)),
                (NamePart::Last, Span::new(split + 1, m.end)),
            ]
        }
    })
}

/// Matches one note's predictions against its ground truth.
pub fn match_spans(note: &PopulatedNote, predicted: &[Span]) -> Result<NoteOutcome, EvalError> {
    let chars: Vec<char> = note.text.chars().collect();
    for p in predicted {
        if p.end > chars.len() || p.start > p.end {
            return Err(EvalError::SpanOutOfBounds {
                note_id: note.note_id.clone(),
                start: p.start,
                end: p.end,
                len: chars.len(),
            });
        }
    }
    let union = merge_spans(predicted);
    let mut mentions = Vec::with_capacity(note.mentions.len());
    for (i, m) in note.mentions.iter().enumerate() {
        let covered_parts = component_spans(note, m, &chars)?
            .into_iter()
            .filter(|(_, s)| covered_by(*s, &union))
            .map(|(p, _)| p)
            .collect();
        mentions.push(MentionOutcome {
            note_id: note.note_id.clone(),
            mention_index: i,
            recalled: covered_by(m.span(), &union),
            covered_parts,
        });
    }
    let false_positives = union
        .iter()
        .filter(|p| !note.mentions.iter().any(|m| p.overlaps(&m.span())))
        .count();
    Ok(NoteOutcome {
        note_id: note.note_id.clone(),
        template_id: note.template_id,
        set_id: note.set_id,
        rep: note.rep,
        mentions,
        false_positives,
        predicted: union.len(),
        meta: note
            .mentions
            .iter()
            .map(|m| MentionMeta {
                part: m.part,
                ctx: m.ctx,
                set_gender: m.set_gender,
            })
            .collect(),
    })
}

/// Matches every note of `corpus`; notes missing from `predictions` count as
/// having no predictions.
pub fn match_corpus(
    corpus: &NoteCorpus,
    predictions: &BTreeMap<String, Vec<Span>>,
) -> Result<Vec<NoteOutcome>, EvalError> {
    corpus
        .notes
        .iter()
        .map(|n| match_spans(n, predictions.get(&n.note_id).map(Vec::as_slice).unwrap_or(&[])))
        .collect()
}

/// Additive true-positive / false-positive / false-negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    /// `None` when the backend predicted nothing that could be judged.
    pub precision: Option<f64>,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ScoreTriple {
    pub fn precision_defined(&self) -> bool {
        self.precision.is_some()
    }
}

impl From<Counts> for ScoreTriple {
    fn from(c: Counts) -> Self {
        let precision = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
        let gold = c.tp + c.fn_;
        let recall = if gold == 0 { 0.0 } else { c.tp as f64 / gold as f64 };
        let f1 = match precision {
            Some(p) if p + recall > 0.0 => 2.0 * p * recall / (p + recall),
            _ => 0.0,
        };
        ScoreTriple {
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

/// Precision, recall and F1 over a set of notes.
pub fn score(outcomes: &[NoteOutcome]) -> ScoreTriple {
    outcomes.iter().map(NoteOutcome::counts).sum::<Counts>().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRecall {
    pub group: Group,
    pub recalled: u64,
    pub mentions: u64,
    pub recall: f64,
}

impl GroupRecall {
    pub fn new(group: Group, recalled: u64, mentions: u64) -> GroupRecall {
        let recall = if mentions == 0 {
            f64::NAN
        } else {
            recalled as f64 / mentions as f64
        };
        GroupRecall {
            group,
            recalled,
            mentions,
            recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecallReport {
    /// Groups with at least one mention, in dimension order.
    pub groups: Vec<GroupRecall>,
    /// Micro recall over all mentions of the reported groups.
    pub pooled_recalled: u64,
    pub pooled_mentions: u64,
    pub pooled: f64,
    /// Groups with no mentions; excluded from gap metrics.
    pub empty_groups: Vec<Group>,
}

/// Per-group micro recall for one pooling, from (set id, recalled, mentions) rows.
pub fn group_recall_from_sets(
    per_set: impl IntoIterator<Item = (u8, u64, u64)>,
    pooling: &Pooling,
) -> GroupRecallReport {
    let mut tallies: BTreeMap<Group, (u64, u64)> = BTreeMap::new();
    for (set_id, r, m) in per_set {
        if let Some(g) = pooling.group_of(set_id) {
            let e = tallies.entry(g).or_default();
            e.0 += r;
            e.1 += m;
        }
    }
    let mut groups = Vec::new();
    let mut empty_groups = Vec::new();
    for (g, _) in &pooling.groups {
        match tallies.get(g) {
            Some(&(r, m)) if m > 0 => groups.push(GroupRecall::new(*g, r, m)),
            _ => {
                log::warn!("group {g} has no mentions; excluded from gap metrics");
                empty_groups.push(*g)
            }
        }
    }
    let pooled_recalled: u64 = groups.iter().map(|g| g.recalled).sum();
    let pooled_mentions: u64 = groups.iter().map(|g| g.mentions).sum();
    let pooled = if pooled_mentions == 0 {
        f64::NAN
    } else {
        pooled_recalled as f64 / pooled_mentions as f64
    };
    GroupRecallReport {
        groups,
        pooled_recalled,
        pooled_mentions,
        pooled,
        empty_groups,
    }
}

/// Per-group micro recall over the notes populated from each group's sets.
pub fn group_recall(outcomes: &[NoteOutcome], pooling: &Pooling) -> GroupRecallReport {
    group_recall_from_sets(
        outcomes
            .iter()
            .map(|o| (o.set_id, o.recalled() as u64, o.mentions.len() as u64)),
        pooling,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolysemyRecall {
    pub strict: f64,
    pub augmented: f64,
    pub mentions: u64,
}

/// Strict recall (full coverage) and augmented recall, which also credits a
/// mention whose last-name component is covered.
pub fn polysemy_partial_recall<'a>(outcomes: impl IntoIterator<Item = &'a MentionOutcome>) -> PolysemyRecall {
    let (mut strict, mut augmented, mut n) = (0u64, 0u64, 0u64);
    for m in outcomes {
        n += 1;
        if m.recalled {
            strict += 1;
        }
        if m.recalled || m.covered_parts.contains(&NamePart::Last) {
            augmented += 1;
        }
    }
    let ratio = |k: u64| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    PolysemyRecall {
        strict: ratio(strict),
        augmented: ratio(augmented),
        mentions: n,
    }
}

/// Polysemy recall per race over the full-name mentions of a polysemy corpus.
pub fn polysemy_by_race(outcomes: &[NoteOutcome]) -> BTreeMap<Race, PolysemyRecall> {
    let mut by_race: BTreeMap<Race, Vec<&MentionOutcome>> = BTreeMap::new();
    for o in outcomes {
        if let Some(race) = polysemy_race(o.set_id) {
            let full = o
                .mentions
                .iter()
                .zip(&o.meta)
                .filter(|(_, meta)| meta.part == Part::Full)
                .map(|(m, _)| m);
            by_race.entry(race).or_default().extend(full);
        }
    }
    by_race
        .into_iter()
        .map(|(r, ms)| (r, polysemy_partial_recall(ms)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextDiff {
    /// Recall(consistent) − Recall(inconsistent); `None` when a side is empty.
    pub difference: Option<f64>,
    pub consistent_recalled: u64,
    pub consistent_mentions: u64,
    pub inconsistent_recalled: u64,
    pub inconsistent_mentions: u64,
}

impl ContextDiff {
    pub fn from_counts(cr: u64, cn: u64, ir: u64, inn: u64) -> ContextDiff {
        let difference =
            (cn > 0 && inn > 0).then(|| cr as f64 / cn as f64 - ir as f64 / inn as f64);
        ContextDiff {
            difference,
            consistent_recalled: cr,
            consistent_mentions: cn,
            inconsistent_recalled: ir,
            inconsistent_mentions: inn,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.difference.is_some()
    }
}

/// (consistent recalled, consistent total, inconsistent recalled, inconsistent total)
/// over mentions carrying a context-gender annotation.
pub fn context_counts(outcome: &NoteOutcome) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (m, t) in outcome.mentions.iter().zip(&outcome.meta) {
        let (Some(ctx), Some(set_gender)) = (t.ctx, t.set_gender) else {
            continue;
        };
        let hit = u64::from(m.recalled);
        if ctx == set_gender {
            c.0 += hit;
            c.1 += 1;
        } else {
            c.2 += hit;
            c.3 += 1;
        }
    }
    c
}

/// Recall on context-consistent minus context-inconsistent mentions.
pub fn context_consistency_diff(outcomes: &[NoteOutcome]) -> ContextDiff {
    let (cr, cn, ir, inn) = outcomes.iter().map(context_counts).fold((0, 0, 0, 0), |a, b| {
        (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3)
    });
    let diff = ContextDiff::from_counts(cr, cn, ir, inn);
    if !diff.is_defined() {
        log::warn!("context consistency difference undefined: one side has no annotated mentions");
    }
    diff
}

#[derive(Serialize)]
struct OutcomeRecord<'a> {
    note_id: &'a str,
    mention_index: usize,
    recalled: bool,
    covered_parts: &'a BTreeSet<NamePart>,
}

/// Newline-delimited `{note_id, mention_index, recalled, covered_parts}` records.
pub fn write_outcome_dump(outcomes: &[NoteOutcome], mut out: impl Write) -> std::io::Result<()> {
    for o in outcomes {
        for m in &o.mentions {
            serde_json::to_writer(
                &mut out,
                &OutcomeRecord {
                    note_id: &m.note_id,
                    mention_index: m.mention_index,
                    recalled: m.recalled,
                    covered_parts: &m.covered_parts,
                },
            )?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
