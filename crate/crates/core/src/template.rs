//! Annotated note templates and corpus population.
//!
//! A template is ordinary note text with name placeholders:
//!
//! ```text
//! {{name:<k>:<part>}}            part = first | last | full
//! {{name:<k>:<part>:ctx=<m|f>}}  local text implies the person's gender
//! ```
//!
//! `k` identifies a person within the template; every placeholder with the same
//! `k` receives the same sampled name. A template file may start with the
//! front-matter line `#origin_gender: male|female` recording the gender of the
//! patient the note was written about.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    sample_full_name, sample_polysemy_name, table_profile, Catalog, CatalogError, FullName,
    Gender, PolysemySet, SET_COUNT,
};
use crate::rng::{derive_key, keyed_rng, tag};
use crate::span::{char_len, Span};

const ORIGIN_PREFIX: &str = "#origin_gender:";

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: malformed placeholder at offset {offset}: {reason}")]
    Placeholder {
        template: String,
        offset: usize,
        reason: String,
    },
    #[error("template {template}: bad front matter: {reason}")]
    FrontMatter { template: String, reason: String },
    #[error("template {template_id}: no name assigned for person {name_index}")]
    MissingAssignment { template_id: u32, name_index: u32 },
    #[error("no templates supplied")]
    NoTemplates,
    #[error("reps must be at least 1")]
    ZeroReps,
    #[error("duplicate template id {0}")]
    DuplicateTemplate(u32),
    #[error("cannot derive a template id from file name {0}")]
    TemplateId(String),
    #[error("{needed} context documents requested but only {available} supplied")]
    NotEnoughContext { needed: usize, available: usize },
    #[error("popular name pool: {0}")]
    PopularPool(String),
    #[error("corpus line {line}: {source}")]
    CorpusLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    First,
    Last,
    Full,
}

impl Part {
    pub fn render(self, name: &FullName) -> String {
        match self {
            Part::First => name.first.clone(),
            Part::Last => name.last.clone(),
            Part::Full => name.full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSlot {
    pub name_index: u32,
    pub part: Part,
    pub context_gender: Option<Gender>,
    /// Placeholder location in the raw template text (code points).
    pub char_range: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: u32,
    pub raw_text: String,
    pub slots: Vec<NameSlot>,
    pub origin_gender: Option<Gender>,
    // literal text around the slots; literals.len() == slots.len() + 1
    literals: Vec<String>,
}

impl Template {
    pub fn name_indices(&self) -> BTreeSet<u32> {
        self.slots.iter().map(|s| s.name_index).collect()
    }

    /// Code points of template text outside placeholders.
    pub fn literal_len(&self) -> usize {
        self.literals.iter().map(|l| char_len(l)).sum()
    }
}

/// Parses placeholder-annotated text (no front matter).
pub fn parse_template(text: &str) -> Result<Template, TemplateError> {
    parse_with_id(0, text)
}

fn parse_with_id(template_id: u32, text: &str) -> Result<Template, TemplateError> {
    let chars: Vec<char> = text.chars().collect();
    let mut slots = Vec::new();
    let mut literals = Vec::new();
    let mut literal = String::new();
    let mut i = 0;
    let err = |offset: usize, reason: &str| TemplateError::Placeholder {
        template: template_id.to_string(),
        offset,
        reason: reason.to_string(),
    };
    while i < chars.len() {
        if chars[i] == '{' && chars.get(i + 1) == Some(&'{') {
            let start = i;
            let close = (i + 2..chars.len().saturating_sub(1))
                .find(|&j| chars[j] == '}' && chars[j + 1] == '}')
                .ok_or_else(|| err(start, "unterminated placeholder"))?;
            let body: String = chars[i + 2..close].iter().collect();
            let fields: Vec<&str> = body.split(':').collect();
            if fields.first() != Some(&"name") || !(3..=4).contains(&fields.len()) {
                return Err(err(start, "expected {{name:<k>:<part>[:ctx=<m|f>]}}"));
            }
            if fields[1].is_empty() || !fields[1].chars().all(|c| c.is_ascii_digit()) {
                return Err(err(start, "name index must be a non-negative integer"));
            }
            let name_index: u32 = fields[1]
                .parse()
                .map_err(|_| err(start, "name index out of range"))?;
            let part = match fields[2] {
                "first" => Part::First,
                "last" => Part::Last,
                "full" => Part::Full,
                _ => return Err(err(start, "part must be first, last or full")),
            };
            let context_gender = match fields.get(3) {
                None => None,
                Some(&"ctx=m") => Some(Gender::Male),
                Some(&"ctx=f") => Some(Gender::Female),
                Some(_) => return Err(err(start, "context must be ctx=m or ctx=f")),
            };
            let end = close + 2;
            slots.push(NameSlot {
                name_index,
                part,
                context_gender,
                char_range: Span::new(start, end),
            });
            literals.push(std::mem::take(&mut literal));
            i = end;
        } else {
            literal.push(chars[i]);
            i += 1;
        }
    }
    literals.push(literal);
    Ok(Template {
        template_id,
        raw_text: text.to_string(),
        slots,
        origin_gender: None,
        literals,
    })
}

/// Parses a template file body: optional `#origin_gender:` line, then note text.
pub fn parse_template_file(template_id: u32, contents: &str) -> Result<Template, TemplateError> {
    let (origin_gender, body) = match contents.strip_prefix(ORIGIN_PREFIX) {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let gender = match line.trim() {
                "male" => Gender::Male,
                "female" => Gender::Female,
                other => {
                    return Err(TemplateError::FrontMatter {
                        template: template_id.to_string(),
                        reason: format!("unknown origin gender `{other}`"),
                    })
                }
            };
            (Some(gender), body)
        }
        None => (None, contents),
    };
    let mut template = parse_with_id(template_id, body)?;
    template.origin_gender = origin_gender;
    Ok(template)
}

fn template_id_from_stem(stem: &str) -> Option<u32> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Loads every `*.txt` template in `dir`. The template id is the trailing
/// number of the file stem (`template_007.txt` is template 7).
pub fn load_templates(dir: impl AsRef<Path>) -> Result<Vec<Template>, TemplateError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut templates = Vec::with_capacity(paths.len());
    for path in paths {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let id = template_id_from_stem(stem)
            .ok_or_else(|| TemplateError::TemplateId(path.display().to_string()))?;
        let text = std::fs::read_to_string(&path)?;
        templates.push(parse_template_file(id, &text).map_err(|e| match e {
            TemplateError::Placeholder { offset, reason, .. } => TemplateError::Placeholder {
                template: path.display().to_string(),
                offset,
                reason,
            },
            other => other,
        })?);
    }
    check_unique_ids(&templates)?;
    Ok(templates)
}

fn check_unique_ids(templates: &[Template]) -> Result<(), TemplateError> {
    let mut seen = HashSet::new();
    for t in templates {
        if !seen.insert(t.template_id) {
            return Err(TemplateError::DuplicateTemplate(t.template_id));
        }
    }
    Ok(())
}

const BUNDLED_TEMPLATES: [&str; 10] = [
    include_str!("../data/templates/template_001.txt"),
    include_str!("../data/templates/template_002.txt"),
    include_str!("../data/templates/template_003.txt"),
    include_str!("../data/templates/template_004.txt"),
    include_str!("../data/templates/template_005.txt"),
    include_str!("../data/templates/template_006.txt"),
    include_str!("../data/templates/template_007.txt"),
    include_str!("../data/templates/template_008.txt"),
    include_str!("../data/templates/template_009.txt"),
    include_str!("../data/templates/template_010.txt"),
];

/// Ten synthetic discharge-summary templates shipped with the crate (ids 1..=10).
pub fn bundled_templates() -> Vec<Template> {
    BUNDLED_TEMPLATES
        .iter()
        .enumerate()
        .map(|(i, text)| parse_template_file(i as u32 + 1, text).expect("bundled template parses"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMention {
    pub start: usize,
    pub end: usize,
    pub part: Part,
    pub name_index: u32,
    /// Gender implied by the surrounding text, when annotated.
    pub ctx: Option<Gender>,
    /// Gender of the name set the inserted name came from.
    pub set_gender: Option<Gender>,
}

impl GroundTruthMention {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulatedNote {
    pub note_id: String,
    pub text: String,
    pub mentions: Vec<GroundTruthMention>,
    pub template_id: u32,
    pub set_id: u8,
    pub rep: u32,
    /// Names inserted per person; not part of the corpus file.
    #[serde(skip)]
    pub assignment: BTreeMap<u32, FullName>,
}

pub fn note_id(template_id: u32, set_id: u8, rep: u32) -> String {
    format!("t{template_id:03}-s{set_id:02}-r{rep:02}")
}

/// Replaces every slot with its assigned name and records mention spans in
/// code points over the output text.
pub fn populate(
    template: &Template,
    assignment: &BTreeMap<u32, FullName>,
    set_id: u8,
    rep: u32,
) -> Result<PopulatedNote, TemplateError> {
    let set_gender = table_profile(set_id).map(|p| p.gender);
    let (text, mentions) = render(template, assignment, |_| set_gender)?;
    Ok(PopulatedNote {
        note_id: note_id(template.template_id, set_id, rep),
        text,
        mentions,
        template_id: template.template_id,
        set_id,
        rep,
        assignment: assignment.clone(),
    })
}

fn render(
    template: &Template,
    assignment: &BTreeMap<u32, FullName>,
    set_gender: impl Fn(&FullName) -> Option<Gender>,
) -> Result<(String, Vec<GroundTruthMention>), TemplateError> {
    let mut text = String::with_capacity(template.raw_text.len());
    let mut cursor = 0usize;
    let mut mentions = Vec::with_capacity(template.slots.len());
    for (slot, literal) in template.slots.iter().zip(&template.literals) {
        text.push_str(literal);
        cursor += char_len(literal);
        let name = assignment
            .get(&slot.name_index)
            .ok_or(TemplateError::MissingAssignment {
                template_id: template.template_id,
                name_index: slot.name_index,
            })?;
        let inserted = slot.part.render(name);
        let len = char_len(&inserted);
        text.push_str(&inserted);
        mentions.push(GroundTruthMention {
            start: cursor,
            end: cursor + len,
            part: slot.part,
            name_index: slot.name_index,
            ctx: slot.context_gender,
            set_gender: set_gender(name),
        });
        cursor += len;
    }
    text.push_str(template.literals.last().expect("at least one literal"));
    Ok((text, mentions))
}

/// Evaluation notes in `note_id` order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoteCorpus {
    pub notes: Vec<PopulatedNote>,
}

impl NoteCorpus {
    pub fn new(mut notes: Vec<PopulatedNote>) -> NoteCorpus {
        notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));
        NoteCorpus { notes }
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.notes.iter().map(|n| n.mentions.len()).sum()
    }

    pub fn get(&self, note_id: &str) -> Option<&PopulatedNote> {
        self.notes
            .binary_search_by(|n| n.note_id.as_str().cmp(note_id))
            .ok()
            .map(|i| &self.notes[i])
    }

    /// Newline-delimited JSON, one note per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for note in &self.notes {
            serde_json::to_writer(&mut out, note)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<NoteCorpus, TemplateError> {
        let mut notes = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let note: PopulatedNote = serde_json::from_str(&line)
                .map_err(|source| TemplateError::CorpusLine { line: i + 1, source })?;
            notes.push(note);
        }
        Ok(NoteCorpus::new(notes))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TemplateError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NoteCorpus, TemplateError> {
        let file = std::fs::File::open(path)?;
        NoteCorpus::read_jsonl(std::io::BufReader::new(file))
    }
}

/// Key for the name of person `name_index` in copy `rep` of `template_id`
/// populated from `set_id`.
pub fn name_key(seed: u64, template_id: u32, rep: u32, set_id: u8, name_index: u32) -> u64 {
    derive_key(
        seed,
        &[
            u64::from(template_id),
            u64::from(rep),
            u64::from(set_id),
            u64::from(name_index),
        ],
    )
}

/// Populates every template `reps` times from each of the sixteen name sets.
/// Output is a pure function of the inputs and independent of thread count.
pub fn generate_corpus(
    catalog: &Catalog,
    templates: &[Template],
    reps: u32,
    seed: u64,
) -> Result<NoteCorpus, TemplateError> {
    if templates.is_empty() {
        return Err(TemplateError::NoTemplates);
    }
    if reps == 0 {
        return Err(TemplateError::ZeroReps);
    }
    check_unique_ids(templates)?;
    let jobs: Vec<(&Template, u8, u32)> = templates
        .iter()
        .flat_map(|t| (1..=SET_COUNT as u8).flat_map(move |s| (0..reps).map(move |r| (t, s, r))))
        .collect();
    let notes = jobs
        .into_par_iter()
        .map(|(t, set_id, rep)| {
            let assignment = t
                .name_indices()
                .into_iter()
                .map(|k| {
                    sample_full_name(catalog, set_id, name_key(seed, t.template_id, rep, set_id, k))
                        .map(|n| (k, n))
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            populate(t, &assignment, set_id, rep)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NoteCorpus::new(notes))
}

/// Populates every template `reps` times from each polysemy set. Notes carry the
/// polysemy pseudo set id (17..=19) and no set gender.
pub fn generate_polysemy_corpus(
    catalog: &Catalog,
    templates: &[Template],
    sets: &[PolysemySet],
    reps: u32,
    seed: u64,
) -> Result<NoteCorpus, TemplateError> {
    if templates.is_empty() {
        return Err(TemplateError::NoTemplates);
    }
    if reps == 0 {
        return Err(TemplateError::ZeroReps);
    }
    let seed = derive_key(seed, &[tag("polysemy")]);
    let mut notes = Vec::new();
    for t in templates {
        for set in sets {
            for rep in 0..reps {
                let assignment = t
                    .name_indices()
                    .into_iter()
                    .map(|k| {
                        let key = name_key(seed, t.template_id, rep, set.set_id(), k);
                        sample_polysemy_name(catalog, set, key).map(|n| (k, n))
                    })
                    .collect::<Result<BTreeMap<_, _>, _>>()?;
                notes.push(populate(t, &assignment, set.set_id(), rep)?);
            }
        }
    }
    Ok(NoteCorpus::new(notes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateStats {
    pub length_chars: f64,
    pub unique_names: usize,
    pub total_mentions: usize,
}

/// Which text length feeds template-characteristic analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthConvention {
    /// Mean length of the template's populated notes.
    #[default]
    Populated,
    /// Template text with placeholders removed.
    Raw,
}

/// Length is the template text without placeholders; see
/// [`template_stats_populated`] for the populated-note convention.
pub fn template_stats(template: &Template) -> TemplateStats {
    TemplateStats {
        length_chars: template.literal_len() as f64,
        unique_names: template.name_indices().len(),
        total_mentions: template.slots.len(),
    }
}

/// Like [`template_stats`], with length averaged over the template's notes in `corpus`.
pub fn template_stats_populated(template: &Template, corpus: &NoteCorpus) -> TemplateStats {
    let lengths: Vec<usize> = corpus
        .notes
        .iter()
        .filter(|n| n.template_id == template.template_id)
        .map(|n| char_len(&n.text))
        .collect();
    let mut stats = template_stats(template);
    if !lengths.is_empty() {
        stats.length_chars = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenderConsistentSubset {
    pub corpus: NoteCorpus,
    /// Note ids removed from the input corpus.
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Keeps notes whose name-set gender matches the origin gender of their template.
/// Templates without an origin annotation are excluded with a warning.
pub fn gender_consistent_subset(corpus: &NoteCorpus, templates: &[Template]) -> GenderConsistentSubset {
    let origin: BTreeMap<u32, Option<Gender>> = templates
        .iter()
        .map(|t| (t.template_id, t.origin_gender))
        .collect();
    let mut warnings: BTreeSet<String> = BTreeSet::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for note in &corpus.notes {
        let set_gender = table_profile(note.set_id).map(|p| p.gender);
        match origin.get(&note.template_id).copied().flatten() {
            Some(g) if Some(g) == set_gender => kept.push(note.clone()),
            Some(_) => dropped.push(note.note_id.clone()),
            None => {
                warnings.insert(format!(
                    "template {} has no origin gender; its notes are excluded",
                    note.template_id
                ));
                dropped.push(note.note_id.clone());
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    GenderConsistentSubset {
        corpus: NoteCorpus::new(kept),
        dropped,
        warnings: warnings.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameMode {
    /// Ten names sampled from each of the sixteen sets.
    Diverse,
    /// A user-supplied pool of popular names outside the sets.
    Popular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneSizes {
    pub train: usize,
    pub validation: usize,
}

impl Default for FinetuneSizes {
    fn default() -> Self {
        FinetuneSizes {
            train: 1000,
            validation: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// A populated fine-tuning document; mentions use the evaluation corpus schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDoc {
    pub note_id: String,
    pub text: String,
    pub mentions: Vec<GroundTruthMention>,
    pub template_id: u32,
    pub split: Split,
}

/// Names per set withheld from fine-tuning, for building disjoint test notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOutNames {
    pub set_id: u8,
    pub first_names: Vec<String>,
    pub last_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneCorpus {
    pub mode: NameMode,
    pub names: Vec<FullName>,
    pub train: Vec<AnnotatedDoc>,
    pub validation: Vec<AnnotatedDoc>,
    /// Empty in popular mode.
    pub held_out: Vec<HeldOutNames>,
}

pub const FINETUNE_NAMES_PER_SET: usize = 10;

/// Assembles fine-tuning data: context documents (name-annotated templates) are
/// split into train/validation and populated from the chosen name pool. Names
/// are dealt from a shuffled pool in rotation so every pool name is used once
/// the documents hold at least as many people as the pool has names.
pub fn build_finetune_corpus(
    context_docs: &[Template],
    mode: NameMode,
    catalog: &Catalog,
    popular_pool: Option<&[FullName]>,
    sizes: FinetuneSizes,
    seed: u64,
) -> Result<FinetuneCorpus, TemplateError> {
    let needed = sizes.train + sizes.validation;
    if context_docs.len() < needed {
        return Err(TemplateError::NotEnoughContext {
            needed,
            available: context_docs.len(),
        });
    }
    let (names, held_out) = match mode {
        NameMode::Diverse => diverse_names(catalog, seed),
        NameMode::Popular => {
            let pool = popular_pool
                .ok_or_else(|| TemplateError::PopularPool("popular mode needs a name pool".into()))?;
            if pool.is_empty() {
                return Err(TemplateError::PopularPool("pool is empty".into()));
            }
            let catalog_firsts: HashSet<&str> = catalog
                .sets()
                .iter()
                .flat_map(|s| s.first_names.iter().map(String::as_str))
                .collect();
            if let Some(clash) = pool.iter().find(|n| catalog_firsts.contains(n.first.as_str())) {
                return Err(TemplateError::PopularPool(format!(
                    "`{}` is a first name of the sixteen name sets",
                    clash.first
                )));
            }
            (pool.to_vec(), Vec::new())
        }
    };

    let mut doc_order: Vec<usize> = (0..context_docs.len()).collect();
    doc_order.shuffle(&mut keyed_rng(derive_key(seed, &[tag("finetune-docs")])));
    let mut deal: Vec<usize> = (0..names.len()).collect();
    deal.shuffle(&mut keyed_rng(derive_key(seed, &[tag("finetune-deal")])));
    let mut dealt = 0usize;

    let mut train = Vec::with_capacity(sizes.train);
    let mut validation = Vec::with_capacity(sizes.validation);
    for (i, &doc) in doc_order.iter().take(needed).enumerate() {
        let template = &context_docs[doc];
        let assignment: BTreeMap<u32, FullName> = template
            .name_indices()
            .into_iter()
            .map(|k| {
                let name = names[deal[dealt % deal.len()]].clone();
                dealt += 1;
                (k, name)
            })
            .collect();
        let (text, mentions) = render(template, &assignment, |n| table_profile(n.source_set).map(|p| p.gender))?;
        let (split, list, idx) = if i < sizes.train {
            (Split::Train, &mut train, i)
        } else {
            (Split::Validation, &mut validation, i - sizes.train)
        };
        let prefix = match split {
            Split::Train => "train",
            Split::Validation => "val",
        };
        list.push(AnnotatedDoc {
            note_id: format!("ft-{prefix}-{idx:05}"),
            text,
            mentions,
            template_id: template.template_id,
            split,
        });
    }
    Ok(FinetuneCorpus {
        mode,
        names,
        train,
        validation,
        held_out,
    })
}

fn diverse_names(catalog: &Catalog, seed: u64) -> (Vec<FullName>, Vec<HeldOutNames>) {
    let mut names = Vec::new();
    let mut held_out = Vec::new();
    for set in catalog.sets() {
        let key = |list: &str| derive_key(seed, &[tag("finetune-names"), u64::from(set.set_id), tag(list)]);
        let firsts = index::sample(&mut keyed_rng(key("first")), set.first_names.len(), FINETUNE_NAMES_PER_SET).into_vec();
        let lasts = index::sample(&mut keyed_rng(key("last")), set.last_names.len(), FINETUNE_NAMES_PER_SET).into_vec();
        for (&f, &l) in firsts.iter().zip(&lasts) {
            names.push(FullName {
                first: set.first_names[f].clone(),
                last: set.last_names[l].clone(),
                source_set: set.set_id,
            });
        }
        let remaining = |list: &[String], used: &[usize]| {
            list.iter()
                .enumerate()
                .filter(|(i, _)| !used.contains(i))
                .map(|(_, n)| n.clone())
                .collect::<Vec<_>>()
        };
        held_out.push(HeldOutNames {
            set_id: set.set_id,
            first_names: remaining(&set.first_names, &firsts),
            last_names: remaining(&set.last_names, &lasts),
        });
    }
    (names, held_out)
}
