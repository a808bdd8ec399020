//! Test adapter for the line protocol.
//!
//! Answers each request with the ground-truth spans of a corpus file, or
//! misbehaves on demand:
//!
//! ```text
//! deidaudit-stub-adapter --gold corpus.jsonl [--empty] [--bad-json ID] [--hang ID] [--die-after N]
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::process::ExitCode;

use deidaudit::span::{char_len, Span};
use deidaudit::template::NoteCorpus;
use serde_json::{json, Value};

struct Options {
    gold: Option<String>,
    empty: bool,
    bad_json: Vec<String>,
    hang: Vec<String>,
    die_after: Option<usize>,
}

fn parse_args() -> Result<Options, String> {
    let mut opts = Options {
        gold: None,
        empty: false,
        bad_json: Vec::new(),
        hang: Vec::new(),
        die_after: None,
    };
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        let mut value = || args.next().ok_or_else(|| format!("{a} needs a value"));
        match a.as_str() {
            "--gold" => opts.gold = Some(value()?),
            "--empty" => opts.empty = true,
            "--bad-json" => opts.bad_json.push(value()?),
            "--hang" => opts.hang.push(value()?),
            "--die-after" => opts.die_after = Some(value()?.parse().map_err(|e| format!("--die-after: {e}"))?),
            other => return Err(format!("unknown argument `{other}`")),
        }
    }
    Ok(opts)
}

fn gold_spans(corpus: &HashMap<String, (String, Vec<Span>)>, id: &str, text: &str) -> Vec<Span> {
    let note_id = id.split('#').next().unwrap_or(id);
    let Some((note_text, spans)) = corpus.get(note_id) else {
        return Vec::new();
    };
    let Some(byte) = note_text.find(text) else {
        return Vec::new();
    };
    let lo = char_len(&note_text[..byte]);
    let hi = lo + char_len(text);
    spans
        .iter()
        .filter(|s| s.start < hi && lo < s.end)
        .map(|s| Span::new(s.start.max(lo) - lo, s.end.min(hi) - lo))
        .collect()
}

fn main() -> ExitCode {
    let opts = match parse_args() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("stub adapter: {e}");
            return ExitCode::from(2);
        }
    };
    let corpus: HashMap<String, (String, Vec<Span>)> = match &opts.gold {
        None => HashMap::new(),
        Some(path) => match NoteCorpus::load(path) {
            Ok(c) => c
                .notes
                .into_iter()
                .map(|n| {
                    let spans = n.mentions.iter().map(|m| m.span()).collect();
                    (n.note_id, (n.text, spans))
                })
                .collect(),
            Err(e) => {
                eprintln!("stub adapter: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for (served, line) in stdin.lock().lines().enumerate() {
        if opts.die_after.is_some_and(|n| served >= n) {
            return ExitCode::from(3);
        }
        let Ok(line) = line else { break };
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("stub adapter: bad request: {e}");
                continue;
            }
        };
        let id = req["id"].as_str().unwrap_or_default().to_string();
        let text = req["text"].as_str().unwrap_or_default();
        if opts.hang.contains(&id) {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        }
        let reply = if opts.bad_json.contains(&id) {
            "{\"id\": not json".to_string()
        } else {
            let spans = if opts.empty { Vec::new() } else { gold_spans(&corpus, &id, text) };
            json!({"id": id, "spans": spans}).to_string()
        };
        if writeln!(stdout, "{reply}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
