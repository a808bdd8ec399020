#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use deidaudit::audit::{run_audit, AuditConfig, AuditRun, RunOptions};

pub const ORACLE: &str = r#"{"name": "oracle", "kind": "oracle"}"#;
pub const BIASED: &str =
    r#"{"name": "biased", "kind": "reference", "settings": {"exclude_sets": [9, 10], "title_rule": false}}"#;

pub fn config(seed: u64, reps: u32, backends: &[&str]) -> AuditConfig {
    AuditConfig::from_json_str(&format!(
        r#"{{"seed": {seed}, "reps": {reps}, "backends": [{}]}}"#,
        backends.join(",")
    ))
    .unwrap()
}

pub fn run(config: &AuditConfig, workers: usize) -> AuditRun {
    run_audit(
        config,
        &RunOptions {
            workers,
            ..RunOptions::default()
        },
    )
    .unwrap()
}

/// Runs `f` on a rayon pool with `threads` threads.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn report_files(run: &AuditRun) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    run.write(dir.path()).unwrap();
    snapshot(dir.path())
}

/// Small xorshift generator, independent of the crate's rng.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.below(i + 1);
            v.swap(i, j);
        }
    }
}

/// Mid-rank by counting: rank = #smaller + (#equal + 1) / 2.
pub fn brute_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|w| *w < v).count() as f64;
            let eq = values.iter().filter(|w| *w == v).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

/// Friedman statistic from the textbook rank-sum formula with tie correction.
pub fn brute_friedman_q(blocks: &[Vec<f64>]) -> f64 {
    let n = blocks.len() as f64;
    let k = blocks[0].len();
    let kf = k as f64;
    let ranks: Vec<Vec<f64>> = blocks.iter().map(|b| brute_ranks(b)).collect();
    let mut r = vec![0.0; k];
    for b in &ranks {
        for j in 0..k {
            r[j] += b[j];
        }
    }
    let mut ties = 0.0;
    for b in blocks {
        let mut seen: Vec<f64> = Vec::new();
        for v in b {
            if !seen.contains(v) {
                seen.push(*v);
                let t = b.iter().filter(|w| *w == v).count() as f64;
                ties += t * t * t - t;
            }
        }
    }
    let c = 1.0 - ties / (n * kf * (kf * kf - 1.0));
    let q = 12.0 / (n * kf * (kf + 1.0)) * r.iter().map(|x| x * x).sum::<f64>() - 3.0 * n * (kf + 1.0);
    q / c
}
