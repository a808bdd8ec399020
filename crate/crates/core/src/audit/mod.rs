//! End-to-end audits: generate the corpus, run every backend, score, compute
//! statistics, and write the report directory.
//!
//! ```no_run
//! use deidaudit::audit::{run_audit, AuditConfig, RunOptions};
//!
//! let config = AuditConfig::from_json_str(r#"{
//!     "seed": 42, "reps": 10,
//!     "backends": [{"name": "oracle", "kind": "oracle"}]
//! }"#).unwrap();
//! let run = run_audit(&config, &RunOptions::default()).unwrap();
//! run.write(std::path::Path::new("report")).unwrap();
//! ```

mod analysis;
mod report;
mod verify;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{build_backend, run_backend, BackendDescriptor, BackendError, BuildContext, Predictions};
use crate::catalog::{load_catalog, polysemy_catalog, AsianPolysemyVariant, Catalog, CatalogError};
use crate::stats::{GapReference, HypothesisUnit};
use crate::template::{
    bundled_templates, generate_corpus, generate_polysemy_corpus, load_templates, template_stats, LengthConvention,
    NoteCorpus, Template, TemplateError,
};

pub use analysis::*;
pub use report::{emit_report, read_result, write_run_files, write_tables, ReportError, CSV_TABLES};
pub use verify::{verify_report, VerifyOutcome};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("no usable notes")]
    NoNotes,
    #[error("backend `{0}` failed on every note")]
    BackendDown(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn default_bootstrap() -> usize {
    1000
}
fn default_permutations() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_hardest_k() -> usize {
    20
}
fn yes() -> bool {
    true
}

/// Which analyses an audit computes. All are on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default = "yes")]
    pub dimensions: bool,
    #[serde(default = "yes")]
    pub per_set: bool,
    #[serde(default = "yes")]
    pub polysemy: bool,
    #[serde(default = "yes")]
    pub context: bool,
    #[serde(default = "yes")]
    pub template_correlation: bool,
    #[serde(default = "yes")]
    pub hardest_subset: bool,
    #[serde(default = "yes")]
    pub gender_consistent: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            dimensions: true,
            per_set: true,
            polysemy: true,
            context: true,
            template_correlation: true,
            hardest_subset: true,
            gender_consistent: true,
        }
    }
}

/// Audit configuration file (JSON). Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Name-set catalog; the bundled catalog when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    /// Directory of `*.txt` templates; the bundled templates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub backends: Vec<BackendDescriptor>,
    pub reps: u32,
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_alpha")]
    pub base_alpha: f64,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default = "default_hardest_k")]
    pub hardest_k: usize,
    #[serde(default)]
    pub hypothesis_unit: HypothesisUnit,
    #[serde(default)]
    pub gap_reference: GapReference,
    #[serde(default)]
    pub length_convention: LengthConvention,
    #[serde(default)]
    pub asian_polysemy: AsianPolysemyVariant,
    /// Also compute within-block permutation p-values for Friedman tests.
    #[serde(default)]
    pub friedman_permutation: bool,
}

impl AuditConfig {
    pub fn from_json_str(s: &str) -> Result<AuditConfig, AuditError> {
        let c: AuditConfig = serde_json::from_str(s).map_err(|e| AuditError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<AuditConfig, AuditError> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::Config(format!("{}: {e}", path.display())))?;
        let mut c = AuditConfig::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.catalog = c.catalog.map(|p| base.join(p));
        c.templates = c.templates.map(|p| base.join(p));
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        let err = |m: &str| Err(AuditError::Config(m.to_string()));
        if self.backends.is_empty() {
            return err("at least one backend is required");
        }
        if self.reps == 0 {
            return err("reps must be at least 1");
        }
        if self.bootstrap_resamples == 0 {
            return err("bootstrap_resamples must be at least 1");
        }
        if self.permutations == 0 {
            return err("permutations must be at least 1");
        }
        if !(self.base_alpha > 0.0 && self.base_alpha < 1.0) {
            return err("base_alpha must lie in (0, 1)");
        }
        if self.hardest_k == 0 {
            return err("hardest_k must be at least 1");
        }
        let mut names = std::collections::BTreeSet::new();
        for b in &self.backends {
            b.validate()?;
            if !names.insert(b.name.as_str()) {
                return Err(AuditError::Config(format!("duplicate backend name `{}`", b.name)));
            }
            if b.name.contains(['/', '\\']) || b.name.starts_with('.') {
                return Err(AuditError::Config(format!("backend name `{}` is not a valid file stem", b.name)));
            }
        }
        Ok(())
    }

    pub fn params(&self, templates: &[Template]) -> AnalysisParams {
        AnalysisParams {
            seed: self.seed,
            reps: self.reps,
            bootstrap_resamples: self.bootstrap_resamples,
            permutations: self.permutations,
            base_alpha: self.base_alpha,
            analyses: self.analyses,
            hardest_k: self.hardest_k,
            hypothesis_unit: self.hypothesis_unit,
            gap_reference: self.gap_reference,
            length_convention: self.length_convention,
            friedman_permutation: self.friedman_permutation,
            backends: self.backends.iter().map(|b| b.name.clone()).collect(),
            templates: templates
                .iter()
                .map(|t| {
                    let s = template_stats(t);
                    TemplateInfo {
                        template_id: t.template_id,
                        origin_gender: t.origin_gender,
                        literal_chars: s.length_chars as usize,
                        unique_names: s.unique_names,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Concurrent requests per backend.
    pub workers: usize,
    /// Directory that relative backend settings resolve against.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: std::thread::available_parallelism().map_or(1, usize::from),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Everything an audit produced: inputs, raw predictions and the analysis.
#[derive(Debug, Clone)]
pub struct AuditRun {
    pub params: AnalysisParams,
    pub corpus: NoteCorpus,
    pub polysemy_corpus: Option<NoteCorpus>,
    pub predictions: Vec<BackendPredictions>,
    pub result: AuditResult,
}

impl AuditRun {
    /// True when some backend failed on some note.
    pub fn partial_failure(&self) -> bool {
        self.result.backends.iter().any(|b| b.failed_notes > 0)
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        emit_report(self, dir)
    }
}

pub fn load_inputs(config: &AuditConfig) -> Result<(Catalog, Vec<Template>), AuditError> {
    let catalog = match &config.catalog {
        Some(p) => load_catalog(p)?,
        None => Catalog::bundled(),
    };
    let templates = match &config.templates {
        Some(dir) => load_templates(dir)?,
        None => bundled_templates(),
    };
    Ok((catalog, templates))
}

pub fn run_audit(config: &AuditConfig, opts: &RunOptions) -> Result<AuditRun, AuditError> {
    config.validate()?;
    let (catalog, templates) = load_inputs(config)?;
    let corpus = generate_corpus(&catalog, &templates, config.reps, config.seed)?;
    if corpus.notes.is_empty() {
        return Err(AuditError::NoNotes);
    }
    log::info!("corpus: {} notes, {} mentions", corpus.len(), corpus.mention_count());
    let polysemy_corpus = if config.analyses.polysemy {
        let sets = polysemy_catalog(config.asian_polysemy);
        Some(generate_polysemy_corpus(&catalog, &templates, &sets, config.reps, config.seed)?)
    } else {
        None
    };

    let mut predictions = Vec::new();
    for desc in &config.backends {
        log::info!("running backend `{}`", desc.name);
        let run_on = |c: &NoteCorpus| -> Result<Predictions, AuditError> {
            let ctx = BuildContext {
                catalog: &catalog,
                corpus: c,
                base_dir: &opts.base_dir,
            };
            let backend = build_backend(desc, &ctx)?;
            Ok(run_backend(backend.as_ref(), desc, c, opts.workers))
        };
        let main = run_on(&corpus)?;
        if main.error_count() == main.notes.len() {
            return Err(AuditError::BackendDown(desc.name.clone()));
        }
        let polysemy = polysemy_corpus.as_ref().map(run_on).transpose()?;
        predictions.push(BackendPredictions {
            name: desc.name.clone(),
            main,
            polysemy,
        });
    }

    let params = config.params(&templates);
    let result = analyze(&params, &corpus, polysemy_corpus.as_ref(), &predictions)?;
    Ok(AuditRun {
        params,
        corpus,
        polysemy_corpus,
        predictions,
        result,
    })
}
