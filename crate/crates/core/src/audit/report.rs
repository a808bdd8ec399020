//! Report directory layout.
//!
//! ```text
//! report/
//!   result.json                full AuditResult
//!   audit_params.json          analysis parameters, for `verify`
//!   overall_performance.csv    bias_by_dimension.csv   group_recall.csv
//!   set_recall.csv             polysemy.csv            context_diff.csv
//!   template_correlation.csv
//!   corpus.jsonl               polysemy_corpus.jsonl
//!   predictions/<backend>.jsonl            predictions/<backend>.polysemy.jsonl
//!   outcomes/<backend>.jsonl               errors/<backend>.jsonl
//! ```
//!
//! Tables for analyses that were switched off are not written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{outcomes_for, AuditResult, AuditRun};
use crate::eval::write_outcome_dump;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Backend(#[from] crate::backends::BackendError),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error("{0}")]
    Other(String),
}

pub const CSV_TABLES: [&str; 7] = [
    "overall_performance.csv",
    "bias_by_dimension.csv",
    "group_recall.csv",
    "set_recall.csv",
    "polysemy.csv",
    "context_diff.csv",
    "template_correlation.csv",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Table, ReportError> {
        let mut t = Table {
            path: dir.join(name),
            w: csv::Writer::from_writer(Vec::new()),
        };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), ReportError> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|source| ReportError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn finish(self) -> Result<(), ReportError> {
        let bytes = self.w.into_inner().map_err(|e| ReportError::Other(e.to_string()))?;
        write_file(&self.path, &bytes)
    }
}

/// Writes the CSV tables of `result` into `dir`.
pub fn write_tables(result: &AuditResult, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut t = Table::new(
        dir,
        "overall_performance.csv",
        &["backend", "precision", "precision_se", "recall", "recall_se", "f1", "f1_se", "tp", "fp", "fn", "failed_notes"],
    )?;
    for b in &result.backends {
        let s = &b.overall.score;
        t.row([
            b.name.clone(),
            opt(s.precision),
            opt(b.overall.precision_se),
            s.recall.to_string(),
            b.overall.recall_se.to_string(),
            s.f1.to_string(),
            b.overall.f1_se.to_string(),
            s.tp.to_string(),
            s.fp.to_string(),
            s.fn_.to_string(),
            b.failed_notes.to_string(),
        ])?;
    }
    t.finish()?;

    let has = |f: fn(&super::BackendResult) -> bool| result.backends.iter().any(f);
    if has(|b| b.dimensions.is_some()) {
        let mut bias = Table::new(
            dir,
            "bias_by_dimension.csv",
            &[
                "backend", "dimension", "red", "rmd", "method", "statistic", "p_value", "alpha_adjusted", "significant",
                "marker", "n_units",
            ],
        )?;
        let mut groups = Table::new(
            dir,
            "group_recall.csv",
            &["backend", "dimension", "group", "recalled", "mentions", "recall", "se", "ci_low", "ci_high"],
        )?;
        for b in &result.backends {
            for d in b.dimensions.iter().flatten() {
                let (method, stat, p, alpha, sig, n) = match &d.test {
                    Some(t) => (
                        serde_json::to_value(t.method).expect("enum").as_str().unwrap_or_default().to_string(),
                        t.statistic.to_string(),
                        t.p_value.to_string(),
                        t.alpha_adjusted.to_string(),
                        t.significant,
                        t.n_units.to_string(),
                    ),
                    None => Default::default(),
                };
                bias.row([
                    b.name.clone(),
                    d.dimension.to_string(),
                    opt(d.red),
                    opt(d.rmd),
                    method,
                    stat,
                    p,
                    alpha,
                    if d.test.is_some() { sig.to_string() } else { String::new() },
                    if sig { "*".to_string() } else { String::new() },
                    n,
                ])?;
                for g in &d.groups {
                    groups.row([
                        b.name.clone(),
                        d.dimension.to_string(),
                        g.label.to_string(),
                        g.recalled.to_string(),
                        g.mentions.to_string(),
                        g.recall.to_string(),
                        g.se.to_string(),
                        g.ci_low.to_string(),
                        g.ci_high.to_string(),
                    ])?;
                }
            }
        }
        bias.finish()?;
        groups.finish()?;
    }

    if has(|b| b.per_set.is_some()) {
        let mut t = Table::new(
            dir,
            "set_recall.csv",
            &[
                "backend", "rank", "set_id", "gender", "race", "popularity", "decade", "recalled", "mentions", "recall",
                "se", "ci_low", "ci_high",
            ],
        )?;
        for b in &result.backends {
            for s in b.per_set.iter().flat_map(|p| &p.sets) {
                let label = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
                t.row([
                    b.name.clone(),
                    s.rank.to_string(),
                    s.set_id.to_string(),
                    label(serde_json::to_value(s.gender).expect("enum")),
                    label(serde_json::to_value(s.race).expect("enum")),
                    label(serde_json::to_value(s.popularity).expect("enum")),
                    label(serde_json::to_value(s.decade).expect("enum")),
                    s.recalled.to_string(),
                    s.mentions.to_string(),
                    s.recall.to_string(),
                    s.se.to_string(),
                    s.ci_low.to_string(),
                    s.ci_high.to_string(),
                ])?;
            }
        }
        t.finish()?;
    }

    if has(|b| b.polysemy.is_some()) {
        let mut t = Table::new(dir, "polysemy.csv", &["backend", "race", "mentions", "strict_recall", "augmented_recall"])?;
        for b in &result.backends {
            for p in b.polysemy.iter().flatten() {
                t.row([
                    b.name.clone(),
                    serde_json::to_value(p.race).expect("enum").as_str().unwrap_or_default().to_string(),
                    p.mentions.to_string(),
                    p.strict.to_string(),
                    p.augmented.to_string(),
                ])?;
            }
        }
        t.finish()?;
    }

    if has(|b| b.context.is_some()) {
        let mut t = Table::new(
            dir,
            "context_diff.csv",
            &[
                "backend", "consistent_recalled", "consistent_mentions", "inconsistent_recalled", "inconsistent_mentions",
                "difference",
            ],
        )?;
        for b in &result.backends {
            if let Some(c) = &b.context {
                t.row([
                    b.name.clone(),
                    c.consistent_recalled.to_string(),
                    c.consistent_mentions.to_string(),
                    c.inconsistent_recalled.to_string(),
                    c.inconsistent_mentions.to_string(),
                    opt(c.difference),
                ])?;
            }
        }
        t.finish()?;
    }

    if has(|b| b.template_correlation.is_some()) {
        let mut t = Table::new(
            dir,
            "template_correlation.csv",
            &["backend", "feature", "n", "r", "p_value", "at_floor", "n_permutations", "error"],
        )?;
        for b in &result.backends {
            for c in b.template_correlation.iter().flatten() {
                t.row([
                    b.name.clone(),
                    c.feature.clone(),
                    c.n.to_string(),
                    opt(c.r),
                    opt(c.p_value),
                    c.at_floor.map(|x| x.to_string()).unwrap_or_default(),
                    c.n_permutations.to_string(),
                    c.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        t.finish()?;
    }
    Ok(())
}

pub fn read_result(path: &Path) -> Result<AuditResult, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

/// Writes the whole report directory for `run`.
pub fn emit_report(run: &AuditRun, dir: &Path) -> Result<(), ReportError> {
    write_run_files(run, dir)?;
    write_tables(&run.result, dir)
}

/// Writes everything [`emit_report`] does except the CSV tables.
pub fn write_run_files(run: &AuditRun, dir: &Path) -> Result<(), ReportError> {
    for sub in ["predictions", "outcomes", "errors"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    write_file(&dir.join("result.json"), &json_bytes(&run.result))?;
    write_file(&dir.join("audit_params.json"), &json_bytes(&run.params))?;
    run.corpus.save(dir.join("corpus.jsonl"))?;
    if let Some(pc) = &run.polysemy_corpus {
        pc.save(dir.join("polysemy_corpus.jsonl"))?;
    }
    for p in &run.predictions {
        p.main.save(&dir.join("predictions").join(format!("{}.jsonl", p.name)))?;
        if let Some(pp) = &p.polysemy {
            pp.save(&dir.join("predictions").join(format!("{}.polysemy.jsonl", p.name)))?;
        }
        let outcomes = outcomes_for(&run.corpus, &p.main).map_err(|e| ReportError::Other(e.to_string()))?;
        let path = dir.join("outcomes").join(format!("{}.jsonl", p.name));
        let mut buf = Vec::new();
        write_outcome_dump(&outcomes, &mut buf).map_err(io_err(&path))?;
        write_file(&path, &buf)?;
        let path = dir.join("errors").join(format!("{}.jsonl", p.name));
        let mut buf = Vec::new();
        p.main.write_error_ledger(&mut buf).map_err(io_err(&path))?;
        if let Some(pp) = &p.polysemy {
            pp.write_error_ledger(&mut buf).map_err(io_err(&path))?;
        }
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(&buf).map_err(io_err(&path))?;
    }
    Ok(())
}
