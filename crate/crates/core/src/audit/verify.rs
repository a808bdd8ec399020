//! Recomputing a report from its persisted inputs.

use std::path::Path;

use serde_json::Value;

use super::report::ReportError;
use super::{analyze, outcomes_for, read_result, AnalysisParams, AuditError, BackendPredictions};
use crate::backends::Predictions;
use crate::eval::write_outcome_dump;
use crate::template::NoteCorpus;

pub const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyOutcome {
    /// JSON paths or files whose recomputed value differs.
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn compare(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let close = (x - y).abs() <= TOLERANCE;
            if !close {
                out.push(format!("{path}: reported {x}, recomputed {y}"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for k in x.keys().chain(y.keys().filter(|k| !x.contains_key(*k))) {
                let p = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => compare(&p, u, v, out),
                    _ => out.push(format!("{p}: present on one side only")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                compare(&format!("{path}[{i}]"), u, v, out);
            }
        }
        _ if a == b => {}
        _ => out.push(format!("{path}: reported {a}, recomputed {b}")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Re-derives `result.json` and the outcome dumps of a report directory from
/// its corpus, predictions and parameters, and lists every disagreement.
pub fn verify_report(dir: &Path) -> Result<VerifyOutcome, AuditError> {
    let params: AnalysisParams = read_json(&dir.join("audit_params.json"))?;
    let corpus = NoteCorpus::load(dir.join("corpus.jsonl"))?;
    let poly_path = dir.join("polysemy_corpus.jsonl");
    let polysemy_corpus = poly_path.exists().then(|| NoteCorpus::load(&poly_path)).transpose()?;
    let mut predictions = Vec::new();
    for name in &params.backends {
        let main = Predictions::load(&dir.join("predictions").join(format!("{name}.jsonl")))?;
        let pp = dir.join("predictions").join(format!("{name}.polysemy.jsonl"));
        let polysemy = pp.exists().then(|| Predictions::load(&pp)).transpose()?;
        predictions.push(BackendPredictions {
            name: name.clone(),
            main,
            polysemy,
        });
    }
    let recomputed = analyze(&params, &corpus, polysemy_corpus.as_ref(), &predictions)?;
    let reported = read_result(&dir.join("result.json"))?;

    let mut out = VerifyOutcome::default();
    compare(
        "result",
        &serde_json::to_value(&reported).expect("serializable"),
        &serde_json::to_value(&recomputed).expect("serializable"),
        &mut out.mismatches,
    );
    for p in &predictions {
        let path = dir.join("outcomes").join(format!("{}.jsonl", p.name));
        let on_disk = std::fs::read(&path).map_err(|source| ReportError::Io { path: path.clone(), source })?;
        let mut fresh = Vec::new();
        write_outcome_dump(&outcomes_for(&corpus, &p.main)?, &mut fresh).expect("in-memory write");
        if on_disk != fresh {
            out.mismatches.push(format!("{}: outcome dump differs", path.display()));
        }
    }
    Ok(out)
}
