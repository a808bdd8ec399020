//! Acceptance checks. Each criterion prints one `PASS`/`FAIL` line; the
//! process fails if any criterion does.
//!
//! Run with `cargo test -p deidaudit --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{brute_friedman_q, brute_ranks, XorShift};
use deidaudit::audit::outcomes_for;
use deidaudit::catalog::{pool_groups, Dimension};
use deidaudit::eval::{polysemy_by_race, GroupRecall};
use deidaudit::stats::{
    bonferroni_level, bootstrap, friedman, hypothesis_unit_recalls, recall_equality_difference,
    recall_maximum_difference, wilcoxon_signed_rank, HypothesisUnit,
};
use deidaudit::template::{bundled_templates, generate_corpus};
use deidaudit::Catalog;
use deidaudit::Span;

fn verdict(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn groups_for(counts: &[(u64, u64)]) -> Vec<GroupRecall> {
    let dimension = match counts.len() {
        2 => Dimension::Gender,
        3 => Dimension::Popularity,
        _ => Dimension::Race,
    };
    dimension
        .groups()
        .into_iter()
        .zip(counts)
        .map(|(g, &(r, m))| GroupRecall::new(g, r, m))
        .collect()
}

type Fixture = (&'static [(u64, u64)], (u64, u64), (u64, u64));

// Expected values worked out with exact rational arithmetic.
const GAP_FIXTURES: [Fixture; 22] = [
    (&[(90, 100), (80, 100)], (1, 20), (1, 20)),
    (&[(50, 100), (50, 100)], (0, 1), (0, 1)),
    (&[(95, 100), (90, 100), (70, 100)], (1, 10), (3, 20)),
    (&[(1, 1), (0, 1)], (1, 2), (1, 2)),
    (&[(9, 10), (80, 100)], (1, 20), (1, 11)),
    (&[(3, 4), (1, 4), (2, 4), (4, 4)], (1, 4), (3, 8)),
    (&[(10, 10), (10, 10), (10, 10), (10, 10)], (0, 1), (0, 1)),
    (&[(0, 5), (0, 7), (0, 9)], (0, 1), (0, 1)),
    (&[(7, 8), (5, 8), (6, 8)], (1, 12), (1, 8)),
    (&[(1, 3), (2, 3)], (1, 6), (1, 6)),
    (&[(99, 100), (1, 100)], (49, 100), (49, 100)),
    (&[(30, 40), (20, 40), (10, 40), (0, 40)], (1, 4), (3, 8)),
    (&[(17, 20), (45, 50)], (1, 40), (1, 28)),
    (&[(12, 13), (11, 17), (5, 7)], (18230, 171717), (80, 481)),
    (&[(100, 200), (150, 200), (200, 200)], (1, 6), (1, 4)),
    (&[(2, 9), (8, 9), (5, 9), (5, 9)], (1, 6), (1, 3)),
    (&[(60, 80), (30, 40)], (0, 1), (0, 1)),
    (&[(1, 2), (1, 3), (1, 4)], (1, 12), (1, 6)),
    (&[(7, 7), (6, 7), (0, 7), (7, 7)], (5, 14), (5, 7)),
    (&[(33, 50), (41, 50), (12, 25)], (46, 375), (26, 125)),
    (&[(5, 6), (5, 6), (1, 6)], (8, 27), (4, 9)),
    (&[(240, 300), (199, 250), (80, 100), (3, 4)], (27, 2000), (21, 436)),
];

fn formula_suite() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (counts, red, rmd) in GAP_FIXTURES {
        let g = groups_for(counts);
        let got_red = recall_equality_difference(&g).unwrap();
        let got_rmd = recall_maximum_difference(&g).unwrap();
        worst = worst
            .max((got_red - red.0 as f64 / red.1 as f64).abs())
            .max((got_rmd - rmd.0 as f64 / rmd.1 as f64).abs());
    }
    let mut rng = XorShift(0x9e37_79b9_7f4a_7c15);
    let mut ordered = 0;
    for _ in 0..1000 {
        let k = 2 + rng.below(3);
        let counts: Vec<(u64, u64)> = (0..k)
            .map(|_| {
                let m = 1 + rng.below(500) as u64;
                (rng.below(m as usize + 1) as u64, m)
            })
            .collect();
        let g = groups_for(&counts);
        if recall_equality_difference(&g).unwrap() <= recall_maximum_difference(&g).unwrap() {
            ordered += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "formula suite",
        worst <= 1e-12 && ordered == 1000 && elapsed < Duration::from_secs(1),
        format!(
            "{} fixtures, max error {worst:.1e}; red <= rmd on {ordered}/1000; {elapsed:?}",
            GAP_FIXTURES.len()
        ),
    );
}

fn bonferroni_constants() {
    let got: Vec<String> = Dimension::ALL
        .iter()
        .map(|&d| format!("{:.3}", bonferroni_level(0.05, d) * 100.0))
        .collect();
    let exact = [0.05, 0.05 / 6.0, 0.05 / 3.0, 0.05 / 3.0];
    let bit_equal = Dimension::ALL
        .iter()
        .zip(exact)
        .all(|(&d, e)| bonferroni_level(0.05, d) == e);
    verdict(
        "bonferroni constants",
        got == ["5.000", "0.833", "1.667", "1.667"] && bit_equal,
        format!("gender/race/popularity/decade = {}%", got.join("%, ")),
    );
}

/// Exact two-sided p by enumerating every sign assignment.
fn sign_flip_p(diffs: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = brute_ranks(&abs);
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w = w_plus.min(total - w_plus);
    let n = nz.len();
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if s.min(total - s) <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, hits as f64 / (1u64 << n) as f64)
}

/// Monte Carlo two-sided p for the Wilcoxon statistic under random signs.
fn wilcoxon_mc_p(diffs: &[f64], draws: usize, rng: &mut XorShift) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let ranks = brute_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w = w_plus.min(total - w_plus);
    let mut hits = 0usize;
    for _ in 0..draws {
        let mut s = 0.0;
        let mut bits = 0u64;
        for (i, r) in ranks.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.next_u64();
            }
            if bits & 1 == 1 {
                s += r;
            }
            bits >>= 1;
        }
        if s.min(total - s) <= w + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

/// Monte Carlo p for Friedman's Q under within-block permutation.
fn friedman_mc_p(blocks: &[Vec<f64>], draws: usize, rng: &mut XorShift) -> f64 {
    let k = blocks[0].len();
    let ranks: Vec<Vec<f64>> = blocks.iter().map(|b| brute_ranks(b)).collect();
    // The tie correction and block constants survive permutation, so Q is
    // monotone in the sum of squared rank sums.
    let squared_sums = |rows: &[Vec<f64>]| -> f64 {
        (0..k)
            .map(|j| rows.iter().map(|b| b[j]).sum::<f64>())
            .map(|r| r * r)
            .sum()
    };
    let observed = squared_sums(&ranks);
    let mut perm = ranks.clone();
    let mut hits = 0usize;
    for _ in 0..draws {
        for b in perm.iter_mut() {
            rng.shuffle(b);
        }
        if squared_sums(&perm) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

fn smooth_blocks(n: usize, k: usize, effect: f64, rng: &mut XorShift) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let base = rng.unit();
            (0..k).map(|j| base + effect * j as f64 + rng.unit()).collect()
        })
        .collect()
}

fn test_oracles() {
    let start = Instant::now();
    let mut rng = XorShift(0x2545_f491_4f6c_dd1d);

    // Exact Wilcoxon against enumeration, ties and zeros included.
    let mut checked = 0;
    let mut exact_ok = true;
    let mut worst_exact = 0.0f64;
    for n in 1..=10usize {
        for trial in 0..40 {
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    if trial % 2 == 0 {
                        rng.below(9) as f64 - 4.0
                    } else {
                        rng.unit() - 0.4
                    }
                })
                .collect();
            if diffs.iter().all(|d| *d == 0.0) {
                continue;
            }
            let pairs: Vec<(f64, f64)> = diffs.iter().map(|d| (*d, 0.0)).collect();
            let got = wilcoxon_signed_rank(&pairs).unwrap();
            let (w, p) = sign_flip_p(&diffs);
            worst_exact = worst_exact.max((got.p_value - p).abs());
            exact_ok &= got.exact && got.statistic == w && (got.p_value - p).abs() <= 1e-12;
            checked += 1;
        }
    }

    // Consistent ranks over two blocks of three treatments.
    let f = friedman(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
    let closed_ok = (f.statistic - 4.0).abs() <= 1e-10 && (f.p_value - (-2.0f64).exp()).abs() <= 1e-10;

    // Asymptotic p-values against 1e5-draw permutation oracles.
    const DRAWS: usize = 100_000;
    let mut asym = Vec::new();
    for shift in [0.02, 0.05, 0.1] {
        let diffs: Vec<f64> = (0..200).map(|_| rng.unit() - 0.5 + shift).collect();
        let pairs: Vec<(f64, f64)> = diffs.iter().map(|d| (*d, 0.0)).collect();
        let got = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(!got.exact);
        let oracle = wilcoxon_mc_p(&diffs, DRAWS, &mut rng);
        asym.push((format!("wilcoxon n=200 shift {shift}"), got.p_value, oracle));
    }
    for (n, k, effect) in [(15, 3, 0.15), (20, 4, 0.08), (30, 5, 0.05), (16, 3, 0.0)] {
        let blocks = smooth_blocks(n, k, effect, &mut rng);
        let got = friedman(&blocks).unwrap();
        exact_ok &= (got.statistic - brute_friedman_q(&blocks)).abs() <= 1e-9;
        let oracle = friedman_mc_p(&blocks, DRAWS, &mut rng);
        asym.push((format!("friedman n={n} k={k}"), got.p_value, oracle));
    }
    let worst_asym = asym.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    for (label, a, b) in &asym {
        println!("    {label}: asymptotic {a:.4}, permutation {b:.4}");
    }
    let elapsed = start.elapsed();
    verdict(
        "test oracles",
        exact_ok && closed_ok && worst_asym <= 0.01 && elapsed < Duration::from_secs(30),
        format!(
            "{checked} exact fixtures (max |dp| {worst_exact:.1e}); Friedman Q={} p={:.12}; \
             max asymptotic gap {worst_asym:.4}; {elapsed:?}",
            f.statistic, f.p_value
        ),
    );
}

fn hermetic_end_to_end() {
    let start = Instant::now();
    let config = common::config(7, 10, &[common::ORACLE, common::BIASED]);
    let run = common::with_threads(1, || common::run(&config, 1));
    let elapsed = start.elapsed();
    let result = &run.result;

    let oracle = &result.backends[0];
    let s = &oracle.overall.score;
    let dims = oracle.dimensions.as_ref().unwrap();
    let oracle_ok = s.precision == Some(1.0)
        && s.recall == 1.0
        && s.f1 == 1.0
        && dims.len() == 4
        && dims.iter().all(|d| {
            d.red == Some(0.0) && d.rmd == Some(0.0) && d.test.as_ref().is_some_and(|t| t.p_value == 1.0)
        });

    let biased = &result.backends[1];
    let race = biased
        .dimensions
        .as_ref()
        .unwrap()
        .iter()
        .find(|d| d.dimension == Dimension::Race)
        .unwrap();
    let test = race.test.as_ref().unwrap();
    let alpha = 0.05 / 6.0;

    // Independent permutation check on the same per-template race recalls.
    let preds = &run.predictions.iter().find(|p| p.name == "biased").unwrap().main;
    let outcomes = outcomes_for(&run.corpus, preds).unwrap();
    let table = hypothesis_unit_recalls(
        &outcomes,
        &pool_groups(&Catalog::bundled(), Dimension::Race),
        HypothesisUnit::Template,
    )
    .unwrap();
    let perm_p = friedman_mc_p(&table.recalls, 20_000, &mut XorShift(0xfeed));
    let q = brute_friedman_q(&table.recalls);

    let biased_ok = race.red.unwrap() > 0.05
        && test.significant
        && test.p_value < alpha
        && test.alpha_adjusted == alpha
        && (test.statistic - q).abs() < 1e-9
        && perm_p < alpha;

    verdict(
        "hermetic end-to-end",
        result.notes == 1600 && oracle_ok && biased_ok && elapsed < Duration::from_secs(60),
        format!(
            "{} notes; oracle P/R/F1 = {:?}/{}/{}; biased race red {:.4}, Q {:.3}, p {:.3e} \
             (permutation {perm_p:.3e}) vs alpha {alpha:.5}; {elapsed:?}",
            result.notes,
            s.precision,
            s.recall,
            s.f1,
            race.red.unwrap(),
            test.statistic,
            test.p_value
        ),
    );
}

fn chunking_invariance() {
    let base = common::config(11, 2, &[common::ORACLE]);
    let reference = common::report_files(&common::run(&base, 2));
    let mut mismatched = Vec::new();
    for limit in [20_000usize, 5120, 300, 97] {
        let oracle = format!(r#"{{"name": "oracle", "kind": "oracle", "max_input_chars": {limit}}}"#);
        let cfg = common::config(11, 2, &[&oracle]);
        if common::report_files(&common::run(&cfg, 2)) != reference {
            mismatched.push(limit);
        }
    }
    verdict(
        "chunking invariance",
        mismatched.is_empty(),
        format!(
            "{} report files; limits differing from unlimited: {mismatched:?}",
            reference.len()
        ),
    );
}

fn determinism() {
    let config = common::config(23, 3, &[common::ORACLE, common::BIASED]);
    let a = common::with_threads(1, || common::report_files(&common::run(&config, 1)));
    let b = common::with_threads(1, || common::report_files(&common::run(&config, 1)));
    let c = common::with_threads(4, || common::report_files(&common::run(&config, 4)));
    let must_have = ["corpus.jsonl", "result.json", "outcomes/biased.jsonl"];
    let present = must_have.iter().all(|f| a.contains_key(*f));
    verdict(
        "determinism",
        present && a == b && a == c,
        format!(
            "{} files; repeat identical: {}; 1 vs 4 workers identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    );
}

fn corpus_invariants() {
    let catalog = Catalog::bundled();
    let templates = bundled_templates();
    let mut count_ok = true;
    let mut slices = 0usize;
    let mut bad_slices = 0usize;
    for (reps, seed) in [(1, 1), (3, 99), (10, 7)] {
        let corpus = generate_corpus(&catalog, &templates, reps, seed).unwrap();
        count_ok &= corpus.len() == templates.len() * reps as usize * 16;
        for note in &corpus.notes {
            let chars: Vec<char> = note.text.chars().collect();
            for m in &note.mentions {
                let slice: String = chars[m.start..m.end].iter().collect();
                slices += 1;
                if slice != m.part.render(&note.assignment[&m.name_index]) {
                    bad_slices += 1;
                }
            }
        }
    }

    // Augmented >= strict for the polysemy analysis under assorted predictions.
    let config = common::config(5, 2, &[common::ORACLE, common::BIASED]);
    let run = common::run(&config, 2);
    let mut poly_rows = 0;
    let mut poly_ok = true;
    for row in run.result.backends.iter().flat_map(|b| b.polysemy.iter().flatten()) {
        poly_rows += 1;
        poly_ok &= row.augmented >= row.strict;
    }
    let poly_corpus = run.polysemy_corpus.as_ref().unwrap();
    let mut rng = XorShift(31);
    for _ in 0..50 {
        let spans: BTreeMap<String, Vec<Span>> = poly_corpus
            .notes
            .iter()
            .map(|n| {
                let len = n.text.chars().count();
                let mut spans: Vec<Span> = (0..rng.below(6))
                    .map(|_| {
                        let s = rng.below(len);
                        Span::new(s, (s + 1 + rng.below(12)).min(len))
                    })
                    .collect();
                for m in &n.mentions {
                    if rng.below(3) == 0 {
                        // Cover only the first token of the mention.
                        let first = n.text.chars().skip(m.start).take(m.end - m.start).position(|c| c == ' ');
                        spans.push(Span::new(m.start, first.map_or(m.end, |p| m.start + p)));
                    }
                }
                (n.note_id.clone(), spans)
            })
            .collect();
        let outcomes = deidaudit::eval::match_corpus(poly_corpus, &spans).unwrap();
        for r in polysemy_by_race(&outcomes).values() {
            poly_rows += 1;
            poly_ok &= r.augmented >= r.strict;
        }
    }

    verdict(
        "corpus invariants",
        count_ok && bad_slices == 0 && slices > 0 && poly_ok,
        format!("note counts ok: {count_ok}; {bad_slices}/{slices} slices differ; augmented >= strict on {poly_rows} rows: {poly_ok}"),
    );
}

fn bootstrap_sanity() {
    let items: Vec<(u64, u64)> = (0..40).map(|i| (i % 3, 5)).collect();
    let constant = bootstrap(&items, |_| Some(0.75), 500, 3).unwrap();

    // Two notes: one fully recalled, one fully missed; statistic is pooled recall.
    let notes = [(1u64, 1u64), (0, 1)];
    let pooled = |s: &[&(u64, u64)]| {
        let (r, m) = s.iter().fold((0, 0), |a, x| (a.0 + x.0, a.1 + x.1));
        Some(r as f64 / m as f64)
    };
    let est = bootstrap(&notes, pooled, 10_000, 17).unwrap();

    // Enumerate every ordered resample of size two.
    let mut values = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            values.push(pooled(&[&notes[i], &notes[j]]).unwrap());
        }
    }
    let mean = values.iter().sum::<f64>() / 4.0;
    let exact_se = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    let rel = (est.standard_error - exact_se).abs() / exact_se;
    verdict(
        "bootstrap sanity",
        constant.standard_error == 0.0 && rel <= 0.05,
        format!(
            "constant SE {}; two-note SE {:.5} vs enumerated {exact_se:.5} ({:.2}% off)",
            constant.standard_error,
            est.standard_error,
            rel * 100.0
        ),
    );
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, fn()); 8] = [
        ("formula_suite", formula_suite),
        ("bonferroni_constants", bonferroni_constants),
        ("test_oracles", test_oracles),
        ("hermetic_end_to_end", hermetic_end_to_end),
        ("chunking_invariance", chunking_invariance),
        ("determinism", determinism),
        ("corpus_invariants", corpus_invariants),
        ("bootstrap_sanity", bootstrap_sanity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if std::panic::catch_unwind(check).is_err() {
            eprintln!("criterion `{name}` failed");
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
