//! Grounding free-text LLM output in the note.
//!
//! A generative model asked to list the names in a note answers with text,
//! not offsets. Each comma-separated name in the answer is located at every
//! whole-word occurrence in the note; names that never occur are reported as
//! ungroundable.

use std::collections::HashMap;

use serde::Deserialize;

use super::http::HttpTransport;
use super::process::LineProcess;
use super::{BackendDescriptor, BackendError, BuildContext, Deidentifier, Request};
use crate::span::Span;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Grounding {
    pub spans: Vec<Span>,
    pub ungroundable: Vec<String>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Locates every name listed in `output` in `text`.
///
/// ```
/// use deidaudit::backends::ground_llm_names;
/// use deidaudit::Span;
///
/// let g = ground_llm_names("Pt Aisha Booker, Dr. Smith", "Aisha Booker, Smith, Zzz");
/// assert_eq!(g.spans, vec![Span::new(3, 15), Span::new(21, 26)]);
/// assert_eq!(g.ungroundable, vec!["Zzz".to_string()]);
/// ```
pub fn ground_llm_names(text: &str, output: &str) -> Grounding {
    let chars: Vec<char> = text.chars().collect();
    let mut seen = Vec::<&str>::new();
    let mut grounding = Grounding::default();
    for name in output.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        if seen.contains(&name) {
            continue;
        }
        seen.push(name);
        let needle: Vec<char> = name.chars().collect();
        let mut found = false;
        if needle.len() <= chars.len() {
            for start in 0..=chars.len() - needle.len() {
                let end = start + needle.len();
                if chars[start..end] != needle[..] {
                    continue;
                }
                let left_ok = start == 0 || !is_word_char(chars[start - 1]) || !is_word_char(needle[0]);
                let right_ok = end == chars.len() || !is_word_char(chars[end]) || !is_word_char(needle[needle.len() - 1]);
                if left_ok && right_ok {
                    grounding.spans.push(Span::new(start, end));
                    found = true;
                }
            }
        }
        if !found {
            grounding.ungroundable.push(name.to_string());
        }
    }
    grounding.spans.sort_unstable();
    grounding.spans.dedup();
    grounding
}

#[derive(Debug, Deserialize)]
struct LlmResponse {
    id: String,
    output: String,
}

enum Transport {
    Command(LineProcess),
    Http(HttpTransport),
    Fixture(HashMap<String, String>),
}

/// A backend whose answers are comma-separated name lists, grounded per request.
pub struct LlmBackend {
    transport: Transport,
}

impl LlmBackend {
    pub fn from_fixture(outputs: HashMap<String, String>) -> LlmBackend {
        LlmBackend {
            transport: Transport::Fixture(outputs),
        }
    }

    pub fn from_descriptor(desc: &BackendDescriptor, ctx: &BuildContext) -> Result<LlmBackend, BackendError> {
        let command = desc.command()?;
        let url = desc.str_setting("url")?;
        let fixture = desc.str_setting("fixture")?;
        let transport = match (command, url, fixture) {
            (Some(c), None, None) => Transport::Command(LineProcess::new(c, desc.timeout()?)),
            (None, Some(u), None) => Transport::Http(HttpTransport::new(u, desc.timeout()?)),
            (None, None, Some(f)) => {
                let path = ctx.resolve(f);
                let contents = std::fs::read_to_string(&path).map_err(|source| BackendError::Io { path: path.clone(), source })?;
                let mut outputs = HashMap::new();
                for (i, line) in contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let r: LlmResponse = serde_json::from_str(line)
                        .map_err(|e| desc.config_error(format!("{} line {}: {e}", path.display(), i + 1)))?;
                    outputs.insert(r.id, r.output);
                }
                Transport::Fixture(outputs)
            }
            _ => return Err(desc.config_error("llm_grounded needs exactly one of `command`, `url`, `fixture`")),
        };
        Ok(LlmBackend { transport })
    }

    fn output(&self, request: &Request) -> Result<String, BackendError> {
        let resp = match &self.transport {
            Transport::Command(p) => p.call(request, |r: &LlmResponse| &r.id)?,
            Transport::Http(h) => h.call::<LlmResponse>(request)?,
            Transport::Fixture(m) => {
                return m
                    .get(&request.id)
                    .cloned()
                    .ok_or_else(|| BackendError::Protocol(format!("no fixture output for `{}`", request.id)))
            }
        };
        if resp.id != request.id {
            return Err(BackendError::Protocol(format!(
                "response id `{}` does not match request `{}`",
                resp.id, request.id
            )));
        }
        Ok(resp.output)
    }
}

impl Deidentifier for LlmBackend {
    fn predict(&self, request: &Request) -> Result<Vec<Span>, BackendError> {
        let g = ground_llm_names(&request.text, &self.output(request)?);
        if !g.ungroundable.is_empty() {
            log::debug!("{}: ungroundable names {:?}", request.id, g.ungroundable);
        }
        Ok(g.spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every start offset where `needle` occurs with non-letter neighbours.
    fn scan_oracle(text: &str, needle: &str) -> Vec<usize> {
        let t: Vec<char> = text.chars().collect();
        let n: Vec<char> = needle.chars().collect();
        (0..t.len())
            .filter(|&i| t[i..].starts_with(&n))
            .filter(|&i| i == 0 || !t[i - 1].is_alphanumeric())
            .filter(|&i| t.get(i + n.len()).is_none_or(|c| !c.is_alphanumeric()))
            .collect()
    }

    #[test]
    fn repeated_name_found_twice() {
        let text = "Aisha called. Later Aisha, not Aishah, returned.";
        let g = ground_llm_names(text, "Aisha, Aisha");
        let starts: Vec<usize> = g.spans.iter().map(|s| s.start).collect();
        assert_eq!(starts, scan_oracle(text, "Aisha"));
        assert_eq!(starts.len(), 2);
    }

    #[test]
    fn empty_and_missing() {
        assert_eq!(ground_llm_names("text", ""), Grounding::default());
        let g = ground_llm_names("Dr. Ngô saw her", " Ngô ,Zzz,");
        assert_eq!(g.spans, vec![Span::new(4, 7)]);
        assert_eq!(g.ungroundable, vec!["Zzz"]);
    }

    #[test]
    fn fixture_transport() {
        let backend = LlmBackend::from_fixture([("n1".to_string(), "Smith".to_string())].into_iter().collect());
        let req = Request {
            id: "n1".into(),
            text: "Dr. Smith".into(),
            note_id: "n1".into(),
            offset: 0,
        };
        assert_eq!(backend.predict(&req).unwrap(), vec![Span::new(4, 9)]);
        let missing = Request { id: "n2".into(), ..req };
        assert!(backend.predict(&missing).is_err());
    }
}
