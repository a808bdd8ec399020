//! De-identification backends behind one interface.
//!
//! A backend sees one [`Request`] per chunk of a note and returns code-point
//! spans relative to the request text. [`run_backend`] chunks the notes,
//! fans requests out over a worker pool, maps spans back to note offsets,
//! optionally strips titles, and records failures per note.

pub mod chunk;
pub mod http;
pub mod llm;
pub mod oracle;
pub mod process;
pub mod reference;
pub mod title;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::Catalog;
use crate::span::{char_len, merge_spans, Span};
use crate::template::NoteCorpus;

pub use chunk::{chunk_note, remap_spans, Chunk};
pub use llm::{ground_llm_names, Grounding};
pub use title::{strip_title, DEFAULT_TITLES};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("failed to start `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("backend process exited")]
    Exited,
    #[error("http: {0}")]
    Http(String),
    #[error("span {start}..{end} outside chunk of length {len}")]
    SpanOutsideChunk { start: usize, end: usize, len: usize },
    #[error("backend `{backend}`: {reason}")]
    Config { backend: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("predictions line {line}: {reason}")]
    PredictionsLine { line: usize, reason: String },
}

/// One unit of work for a backend: a whole note or one chunk of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    /// The note id, or `note_id#i` for the i-th chunk of a chunked note.
    pub id: String,
    pub text: String,
    #[serde(skip)]
    pub note_id: String,
    /// Code-point offset of `text` within the note.
    #[serde(skip)]
    pub offset: usize,
}

/// Line-protocol response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    pub spans: Vec<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub trait Deidentifier: Send + Sync {
    /// Spans in code points of `request.text`.
    fn predict(&self, request: &Request) -> Result<Vec<Span>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Reference,
    Oracle,
    ExternalProcess,
    Http,
    LlmGrounded,
}

/// How to build and drive one backend.
///
/// `settings` by kind:
/// - `reference`: `lexicon` (file, one name per line) or `exclude_sets`
///   (lexicon = catalog names minus those sets); `title_rule` (default true).
/// - `oracle`: none.
/// - `external_process`: `command` (argv array), `timeout_secs` (default 60).
/// - `http`: `url`, `timeout_secs`.
/// - `llm_grounded`: one of `command`, `url` or `fixture` (NDJSON of
///   `{"id", "output"}`), plus `timeout_secs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_input_chars: Option<usize>,
    #[serde(default)]
    pub strip_titles: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub titles: Option<Vec<String>>,
    #[serde(default)]
    pub settings: BTreeMap<String, Value>,
}

impl BackendDescriptor {
    pub fn new(name: impl Into<String>, kind: BackendKind) -> BackendDescriptor {
        BackendDescriptor {
            name: name.into(),
            kind,
            max_input_chars: None,
            strip_titles: false,
            titles: None,
            settings: BTreeMap::new(),
        }
    }

    pub fn with_setting(mut self, key: &str, value: impl Into<Value>) -> BackendDescriptor {
        self.settings.insert(key.to_string(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_input_chars == Some(0) {
            return Err(self.config_error("max_input_chars must be positive"));
        }
        if self.name.is_empty() {
            return Err(self.config_error("name must not be empty"));
        }
        Ok(())
    }

    pub(crate) fn config_error(&self, reason: impl Into<String>) -> BackendError {
        BackendError::Config {
            backend: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub(crate) fn str_setting(&self, key: &str) -> Result<Option<&str>, BackendError> {
        match self.settings.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.config_error(format!("setting `{key}` must be a string"))),
        }
    }

    pub(crate) fn timeout(&self) -> Result<Duration, BackendError> {
        match self.settings.get("timeout_secs") {
            None => Ok(Duration::from_secs(60)),
            Some(v) => v
                .as_f64()
                .filter(|s| *s > 0.0)
                .map(Duration::from_secs_f64)
                .ok_or_else(|| self.config_error("timeout_secs must be a positive number")),
        }
    }

    pub(crate) fn command(&self) -> Result<Option<Vec<String>>, BackendError> {
        match self.settings.get("command") {
            None => Ok(None),
            Some(Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| self.config_error("command must be an array of strings")),
            Some(_) => Err(self.config_error("command must be a non-empty array of strings")),
        }
    }
}

/// What backends may need beyond their descriptor.
pub struct BuildContext<'a> {
    pub catalog: &'a Catalog,
    /// Ground truth for the oracle backend.
    pub corpus: &'a NoteCorpus,
    /// Relative paths in settings resolve against this directory.
    pub base_dir: &'a Path,
}

impl BuildContext<'_> {
    pub(crate) fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn build_backend(desc: &BackendDescriptor, ctx: &BuildContext) -> Result<Box<dyn Deidentifier>, BackendError> {
    desc.validate()?;
    Ok(match desc.kind {
        BackendKind::Reference => Box::new(reference::ReferenceScrubber::from_descriptor(desc, ctx)?),
        BackendKind::Oracle => Box::new(oracle::Oracle::new(ctx.corpus)),
        BackendKind::ExternalProcess => {
            let command = desc.command()?.ok_or_else(|| desc.config_error("missing `command`"))?;
            Box::new(process::ExternalProcess::new(command, desc.timeout()?))
        }
        BackendKind::Http => {
            let url = desc.str_setting("url")?.ok_or_else(|| desc.config_error("missing `url`"))?;
            Box::new(http::HttpBackend::new(url, desc.timeout()?))
        }
        BackendKind::LlmGrounded => Box::new(llm::LlmBackend::from_descriptor(desc, ctx)?),
    })
}

/// Predictions for one note. `error` is set when any chunk failed, in which
/// case `spans` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotePrediction {
    pub id: String,
    pub spans: Vec<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A backend's predictions over a corpus, one entry per note in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Predictions {
    pub notes: Vec<NotePrediction>,
}

impl Predictions {
    pub fn error_count(&self) -> usize {
        self.notes.iter().filter(|n| n.error.is_some()).count()
    }

    pub fn span_map(&self) -> BTreeMap<String, Vec<Span>> {
        self.notes.iter().map(|n| (n.id.clone(), n.spans.clone())).collect()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for n in &self.notes {
            serde_json::to_writer(&mut out, n)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Newline-delimited `{id, error}` records for failed notes.
    pub fn write_error_ledger(&self, mut out: impl Write) -> std::io::Result<()> {
        for n in self.notes.iter().filter(|n| n.error.is_some()) {
            serde_json::to_writer(&mut out, &serde_json::json!({"id": n.id, "error": n.error}))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Predictions, BackendError> {
        let mut notes = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| BackendError::PredictionsLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let n: NotePrediction = serde_json::from_str(&line).map_err(|e| BackendError::PredictionsLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
            notes.push(n);
        }
        Ok(Predictions { notes })
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let io = |source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_jsonl(&mut f).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Predictions, BackendError> {
        let f = std::fs::File::open(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Predictions::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Splits each note into requests according to `max_input_chars`.
pub fn build_requests(corpus: &NoteCorpus, max_input_chars: Option<usize>) -> Vec<Request> {
    corpus
        .notes
        .iter()
        .flat_map(|note| {
            let chunks = chunk_note(&note.text, max_input_chars.unwrap_or(usize::MAX));
            let single = chunks.len() == 1;
            chunks.into_iter().enumerate().map(move |(i, c)| Request {
                id: if single {
                    note.note_id.clone()
                } else {
                    format!("{}#{i}", note.note_id)
                },
                text: c.text,
                note_id: note.note_id.clone(),
                offset: c.offset,
            })
        })
        .collect()
}

/// Runs `backend` over every note of `corpus` on `workers` threads. The result
/// has exactly one entry per note, in corpus order, and does not depend on the
/// worker count.
pub fn run_backend(
    backend: &dyn Deidentifier,
    desc: &BackendDescriptor,
    corpus: &NoteCorpus,
    workers: usize,
) -> Predictions {
    let requests = build_requests(corpus, desc.max_input_chars);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<Vec<Span>, BackendError>> = pool.install(|| {
        requests
            .par_iter()
            .map(|r| backend.predict(r).and_then(|s| remap_spans(&s, r.offset, char_len(&r.text))))
            .collect()
    });

    let titles: Vec<String> = desc
        .titles
        .clone()
        .unwrap_or_else(|| DEFAULT_TITLES.iter().map(|t| t.to_string()).collect());
    let mut by_note: BTreeMap<&str, (Vec<Span>, Vec<String>)> = BTreeMap::new();
    for (req, res) in requests.iter().zip(results) {
        let entry = by_note.entry(req.note_id.as_str()).or_default();
        match res {
            Ok(spans) => entry.0.extend(spans),
            Err(e) => {
                log::warn!("backend `{}` failed on {}: {e}", desc.name, req.id);
                entry.1.push(format!("{}: {e}", req.id))
            }
        }
    }
    let notes = corpus
        .notes
        .iter()
        .map(|note| {
            let (spans, errors) = by_note.remove(note.note_id.as_str()).unwrap_or_default();
            if !errors.is_empty() {
                return NotePrediction {
                    id: note.note_id.clone(),
                    spans: Vec::new(),
                    error: Some(errors.join("; ")),
                };
            }
            let spans: Vec<Span> = if desc.strip_titles {
                spans.into_iter().map(|s| strip_title(s, &note.text, &titles)).collect()
            } else {
                spans
            };
            NotePrediction {
                id: note.note_id.clone(),
                spans: merge_spans(&spans),
                error: None,
            }
        })
        .collect();
    Predictions { notes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_json_shape() {
        let d: BackendDescriptor = serde_json::from_str(
            r#"{"name": "scrubber", "kind": "reference", "max_input_chars": 5120,
                "strip_titles": true, "settings": {"exclude_sets": [9, 10]}}"#,
        )
        .unwrap();
        assert_eq!(d.kind, BackendKind::Reference);
        assert_eq!(d.max_input_chars, Some(5120));
        assert!(serde_json::from_str::<BackendDescriptor>(r#"{"name": "x", "kind": "magic"}"#).is_err());
        let zero = BackendDescriptor {
            max_input_chars: Some(0),
            ..BackendDescriptor::new("z", BackendKind::Oracle)
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn request_wire_format_hides_internal_fields() {
        let r = Request {
            id: "n#1".into(),
            text: "Zoë".into(),
            note_id: "n".into(),
            offset: 7,
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"id":"n#1","text":"Zoë"}"#);
    }

    #[test]
    fn prediction_lines_round_trip() {
        let p = Predictions {
            notes: vec![
                NotePrediction { id: "a".into(), spans: vec![Span::new(1, 3)], error: None },
                NotePrediction { id: "b".into(), spans: vec![], error: Some("timeout".into()) },
            ],
        };
        let mut buf = Vec::new();
        p.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "{\"id\":\"a\",\"spans\":[{\"start\":1,\"end\":3}]}\n{\"id\":\"b\",\"spans\":[],\"error\":\"timeout\"}\n"
        );
        assert_eq!(Predictions::read_jsonl(&buf[..]).unwrap(), p);
        assert_eq!(p.error_count(), 1);
    }
}
