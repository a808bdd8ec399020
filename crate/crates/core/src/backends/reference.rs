//! A small rule-based name scrubber in the style of lexicon-plus-regex
//! de-identifiers. It needs no network or model and is the default backend
//! for hermetic audits.
//!
//! Two rules fire:
//! - a token that appears in the lexicon (exact, case-sensitive);
//! - up to two capitalized tokens right after a title (`Dr.`, `Mr.`, `Mrs.`, `Ms.`).
//!
//! Hits separated only by spaces are joined into one span.
//!
//! ```
//! use deidaudit::backends::reference::ReferenceScrubber;
//! use deidaudit::Span;
//!
//! let s = ReferenceScrubber::new(["Aisha"], true);
//! assert_eq!(s.scrub("Pt Aisha seen"), vec![Span::new(3, 8)]);
//! assert_eq!(s.scrub("Dr. Waldon reviewed"), vec![Span::new(4, 10)]);
//! ```

use std::collections::HashSet;

use super::{BackendDescriptor, BackendError, BuildContext, Deidentifier, Request};
use crate::span::Span;

const TRIGGERS: [&str; 4] = ["Dr.", "Mr.", "Mrs.", "Ms."];
const TITLE_WINDOW: usize = 2;

#[derive(Debug, Clone)]
pub struct ReferenceScrubber {
    lexicon: HashSet<String>,
    title_rule: bool,
}

struct Token {
    span: Span,
    text: String,
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

fn tokenize(chars: &[char]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_token_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_token_char(chars[i]) {
            i += 1;
        }
        tokens.push(Token {
            span: Span::new(start, i),
            text: chars[start..i].iter().collect(),
        });
    }
    tokens
}

fn is_trigger(chars: &[char], tokens: &[Token], t: usize) -> bool {
    // a title token is followed immediately by its period
    let tok = &tokens[t];
    chars.get(tok.span.end) == Some(&'.')
        && TRIGGERS.iter().any(|tr| tr.strip_suffix('.') == Some(tok.text.as_str()))
}

fn capitalized(text: &str) -> bool {
    text.chars().next().is_some_and(char::is_uppercase)
}

impl ReferenceScrubber {
    pub fn new<I, S>(lexicon: I, title_rule: bool) -> ReferenceScrubber
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ReferenceScrubber {
            lexicon: lexicon.into_iter().map(Into::into).collect(),
            title_rule,
        }
    }

    pub fn from_descriptor(desc: &BackendDescriptor, ctx: &BuildContext) -> Result<ReferenceScrubber, BackendError> {
        let title_rule = match desc.settings.get("title_rule") {
            None => true,
            Some(v) => v.as_bool().ok_or_else(|| desc.config_error("title_rule must be a boolean"))?,
        };
        let lexicon: Vec<String> = match (desc.str_setting("lexicon")?, desc.settings.get("exclude_sets")) {
            (Some(_), Some(_)) => return Err(desc.config_error("give either `lexicon` or `exclude_sets`, not both")),
            (Some(path), None) => {
                let path = ctx.resolve(path);
                std::fs::read_to_string(&path)
                    .map_err(|source| BackendError::Io { path, source })?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_string)
                    .collect()
            }
            (None, excluded) => {
                let excluded: Vec<u64> = match excluded {
                    None => Vec::new(),
                    Some(v) => v
                        .as_array()
                        .and_then(|a| a.iter().map(|x| x.as_u64()).collect::<Option<Vec<_>>>())
                        .ok_or_else(|| desc.config_error("exclude_sets must be an array of set ids"))?,
                };
                ctx.catalog
                    .sets()
                    .iter()
                    .filter(|s| !excluded.contains(&u64::from(s.set_id)))
                    .flat_map(|s| s.first_names.iter().chain(&s.last_names).cloned())
                    .collect()
            }
        };
        Ok(ReferenceScrubber::new(lexicon, title_rule))
    }

    pub fn scrub(&self, text: &str) -> Vec<Span> {
        let chars: Vec<char> = text.chars().collect();
        let tokens = tokenize(&chars);
        let mut hit = vec![false; tokens.len()];
        for (i, tok) in tokens.iter().enumerate() {
            if self.lexicon.contains(&tok.text) {
                hit[i] = true;
            }
            if self.title_rule && is_trigger(&chars, &tokens, i) {
                for j in (i + 1..tokens.len()).take(TITLE_WINDOW) {
                    if !capitalized(&tokens[j].text) {
                        break;
                    }
                    hit[j] = true;
                    // stop at punctuation between name tokens
                    let gap = &chars[tokens[j].span.end..tokens.get(j + 1).map_or(chars.len(), |t| t.span.start)];
                    if gap.iter().any(|c| *c != ' ') {
                        break;
                    }
                }
            }
        }
        let mut spans: Vec<Span> = Vec::new();
        for (tok, _) in tokens.iter().zip(&hit).filter(|(_, h)| **h) {
            match spans.last_mut() {
                Some(last) if chars[last.end..tok.span.start].iter().all(|c| *c == ' ') => last.end = tok.span.end,
                _ => spans.push(tok.span),
            }
        }
        spans
    }
}

impl Deidentifier for ReferenceScrubber {
    fn predict(&self, request: &Request) -> Result<Vec<Span>, BackendError> {
        Ok(self.scrub(&request.text))
    }
}
