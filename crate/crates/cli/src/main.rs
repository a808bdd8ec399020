//! `deidaudit` command-line driver.
//!
//! Exit codes: 0 on success, 2 when some backend failed on some note, 1 on any
//! other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deidaudit::audit::{
    analyze, load_inputs, read_result, run_audit, verify_report, write_run_files, write_tables, AuditConfig,
    AuditRun, BackendPredictions, RunOptions,
};
use deidaudit::backends::{build_backend, run_backend, BackendDescriptor, BuildContext, Predictions};
use deidaudit::catalog::{load_catalog, polysemy_catalog, AsianPolysemyVariant, FullName};
use deidaudit::template::{
    build_finetune_corpus, bundled_templates, generate_corpus, generate_polysemy_corpus, load_templates,
    FinetuneSizes, NameMode, NoteCorpus,
};
use deidaudit::Catalog;

const CORPUS_SCHEMA: &str = "\
corpus.jsonl, one note per line:
  {\"note_id\": \"t001-s03-r00\", \"text\": \"...\", \"mentions\": [MENTION, ...],
   \"template_id\": 1, \"set_id\": 3, \"rep\": 0}
  MENTION = {\"start\": 12, \"end\": 25, \"part\": \"full\"|\"first\"|\"last\",
             \"name_index\": 0, \"ctx\": \"male\"|\"female\"|null, \"set_gender\": \"male\"|\"female\"|null}
Offsets count Unicode code points; `end` is exclusive.";

const PREDICTIONS_SCHEMA: &str = "\
predictions/<backend>.jsonl, one note per line:
  {\"id\": \"t001-s03-r00\", \"spans\": [{\"start\": 12, \"end\": 25}], \"error\": \"...\"?}
errors/<backend>.jsonl, one failed note per line:
  {\"id\": \"t001-s03-r00\", \"error\": \"...\"}";

const BACKEND_SCHEMA: &str = "\
Backend descriptor:
  {\"name\": \"scrubber\", \"kind\": \"reference\"|\"oracle\"|\"external_process\"|\"http\"|\"llm_grounded\",
   \"max_input_chars\": 5120?, \"strip_titles\": false?, \"titles\": [\"Dr.\", ...]?,
   \"settings\": {...}?}
settings by kind:
  reference         lexicon (file, one name per line) | exclude_sets [9, 10]; title_rule (bool)
  external_process  command [argv...]; timeout_secs
  http              url; timeout_secs
  llm_grounded      exactly one of command, url, fixture (NDJSON {\"id\", \"output\"}); timeout_secs
Line protocol (external_process, http): request {\"id\", \"text\"}, reply {\"id\", \"spans\", \"error\"?}.";

const CONFIG_SCHEMA: &str = "\
Audit config:
  {\"seed\": 42, \"reps\": 10, \"backends\": [DESCRIPTOR, ...],
   \"catalog\": \"names.json\"?, \"templates\": \"templates/\"?,
   \"bootstrap_resamples\": 1000, \"permutations\": 10000, \"base_alpha\": 0.05, \"hardest_k\": 20,
   \"hypothesis_unit\": \"template\"|\"note\", \"gap_reference\": \"pooled_micro\"|\"unweighted_mean\",
   \"length_convention\": \"populated\"|\"raw\", \"asian_polysemy\": \"five_names\"|\"six_names\",
   \"friedman_permutation\": false,
   \"analyses\": {\"gaps\", \"tests\", \"per_set\", \"polysemy\", \"context\", \"correlation\",
                  \"gender_consistent\": bool}}
Relative paths resolve against the config file's directory.";

const REPORT_LAYOUT: &str = "\
Report directory:
  result.json              full results
  audit_params.json        analysis parameters (seed, reps, template features, ...)
  corpus.jsonl             evaluation corpus
  polysemy_corpus.jsonl    polysemy corpus (when that analysis is on)
  predictions/<b>.jsonl    per-note spans (and <b>.polysemy.jsonl)
  outcomes/<b>.jsonl       {\"note_id\", \"mention_index\", \"recalled\", \"covered_parts\"} per mention
  errors/<b>.jsonl         error ledger
  overall_performance.csv, bias_by_dimension.csv, group_recall.csv, set_recall.csv,
  polysemy.csv, context_diff.csv, template_correlation.csv";

#[derive(Parser)]
#[command(name = "deidaudit", about = "Audit name de-identification systems for demographic recall gaps")]
#[command(disable_version_flag = true, subcommand_required = false, arg_required_else_help = true)]
struct Cli {
    /// Print name and version as JSON and exit.
    #[arg(long, short = 'V')]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Populate templates with names from every name set.
    #[command(after_long_help = CORPUS_SCHEMA)]
    Generate(GenerateArgs),
    /// Run one backend over a corpus.
    #[command(after_long_help = help_sections(&[BACKEND_SCHEMA, PREDICTIONS_SCHEMA]))]
    Run(RunArgs),
    /// Match predictions against gold and compute every analysis.
    #[command(after_long_help = help_sections(&[CONFIG_SCHEMA, PREDICTIONS_SCHEMA, REPORT_LAYOUT]))]
    Score(ScoreArgs),
    /// Generate, run, score and report in one go.
    #[command(after_long_help = help_sections(&[CONFIG_SCHEMA, BACKEND_SCHEMA, REPORT_LAYOUT]))]
    Audit(AuditArgs),
    /// Write tables from a result file.
    #[command(after_long_help = REPORT_LAYOUT)]
    Report(ReportArgs),
    /// Build fine-tuning data from name-annotated context documents.
    #[command(after_long_help = CORPUS_SCHEMA)]
    Corpus(CorpusArgs),
    /// Recompute a report from its persisted inputs and compare.
    #[command(after_long_help = REPORT_LAYOUT)]
    Verify(VerifyArgs),
}

fn help_sections(parts: &[&str]) -> String {
    parts.join("\n\n")
}

#[derive(Args)]
struct GenerateArgs {
    /// Name-set catalog JSON; the bundled catalog when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory of template files; the bundled templates when omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    reps: u32,
    #[arg(long)]
    seed: u64,
    /// Output directory for corpus.jsonl and polysemy_corpus.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Skip the polysemy corpus.
    #[arg(long)]
    no_polysemy: bool,
    #[arg(long, value_enum, default_value_t = AsianVariant::FiveNames)]
    asian_polysemy: AsianVariant,
}

#[derive(Clone, Copy, ValueEnum)]
enum AsianVariant {
    FiveNames,
    SixNames,
}

impl From<AsianVariant> for AsianPolysemyVariant {
    fn from(v: AsianVariant) -> Self {
        match v {
            AsianVariant::FiveNames => AsianPolysemyVariant::FiveNames,
            AsianVariant::SixNames => AsianPolysemyVariant::SixNames,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Backend descriptor file, or a backend name from --config.
    #[arg(long)]
    backend: String,
    /// Audit config to take the backend (and catalog) from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    polysemy_corpus: Option<PathBuf>,
    /// Output directory; writes predictions/ and errors/.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seed for bootstrap and permutation draws.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    polysemy_corpus: Option<PathBuf>,
    /// Directory holding <backend>.jsonl prediction files.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// result.json written by `score` or `audit`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output directory; the result's directory when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Diverse,
    Popular,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Directory of name-annotated context documents.
    #[arg(long)]
    context: PathBuf,
    /// Popular-name pool, one `First Last` per line (popular mode).
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    validation: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory for train.jsonl, validation.jsonl and names.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// result.json or the report directory holding it.
    #[arg(long)]
    result: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit 1 so that 2 keeps meaning partial backend failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.version {
        println!(
            "{}",
            serde_json::json!({"name": "deidaudit", "version": env!("CARGO_PKG_VERSION")})
        );
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    match dispatch(command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Audit(a) => audit(a),
        Command::Report(a) => report(a),
        Command::Corpus(a) => corpus(a),
        Command::Verify(a) => verify(a),
    }
}

fn catalog_from(path: Option<&Path>) -> Result<Catalog> {
    Ok(match path {
        Some(p) => load_catalog(p).with_context(|| format!("loading catalog {}", p.display()))?,
        None => Catalog::bundled(),
    })
}

fn workers(n: Option<usize>) -> usize {
    n.unwrap_or_else(|| RunOptions::default().workers).max(1)
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let catalog = catalog_from(a.catalog.as_deref())?;
    let templates = match &a.templates {
        Some(dir) => load_templates(dir).with_context(|| format!("loading templates from {}", dir.display()))?,
        None => bundled_templates(),
    };
    let corpus = generate_corpus(&catalog, &templates, a.reps, a.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    corpus.save(a.out.join("corpus.jsonl"))?;
    println!("templates: {}", templates.len());
    println!("notes: {}", corpus.len());
    println!("mentions: {}", corpus.mention_count());
    if !a.no_polysemy {
        let sets = polysemy_catalog(a.asian_polysemy.into());
        let pc = generate_polysemy_corpus(&catalog, &templates, &sets, a.reps, a.seed)?;
        pc.save(a.out.join("polysemy_corpus.jsonl"))?;
        println!("polysemy notes: {}", pc.len());
    }
    Ok(ExitCode::SUCCESS)
}

/// Resolves `--backend` to a descriptor, the directory its relative paths
/// resolve against, and the catalog to use.
fn backend_from(a: &RunArgs) -> Result<(BackendDescriptor, PathBuf, Catalog)> {
    if let Some(cfg_path) = &a.config {
        let config = AuditConfig::load(cfg_path)?;
        let desc = config
            .backends
            .iter()
            .find(|b| b.name == a.backend)
            .cloned()
            .with_context(|| format!("no backend `{}` in {}", a.backend, cfg_path.display()))?;
        let base = cfg_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let catalog = match (&a.catalog, &config.catalog) {
            (Some(p), _) | (None, Some(p)) => catalog_from(Some(p))?,
            (None, None) => Catalog::bundled(),
        };
        return Ok((desc, base, catalog));
    }
    let path = Path::new(&a.backend);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading backend descriptor {}", path.display()))?;
    let desc: BackendDescriptor =
        serde_json::from_str(&text).with_context(|| format!("parsing backend descriptor {}", path.display()))?;
    desc.validate()?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((desc, base, catalog_from(a.catalog.as_deref())?))
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let (desc, base, catalog) = backend_from(&a)?;
    let workers = workers(a.workers);
    let load = |p: &Path| NoteCorpus::load(p).with_context(|| format!("loading corpus {}", p.display()));
    let corpus = load(&a.corpus)?;
    let poly = a.polysemy_corpus.as_deref().map(load).transpose()?;

    let run_on = |c: &NoteCorpus| -> Result<Predictions> {
        let ctx = BuildContext {
            catalog: &catalog,
            corpus: c,
            base_dir: &base,
        };
        let backend = build_backend(&desc, &ctx)?;
        Ok(run_backend(backend.as_ref(), &desc, c, workers))
    };
    let main = run_on(&corpus)?;
    let polysemy = poly.as_ref().map(run_on).transpose()?;

    let pred_dir = a.out.join("predictions");
    let err_dir = a.out.join("errors");
    std::fs::create_dir_all(&pred_dir).with_context(|| format!("creating {}", pred_dir.display()))?;
    std::fs::create_dir_all(&err_dir).with_context(|| format!("creating {}", err_dir.display()))?;
    main.save(&pred_dir.join(format!("{}.jsonl", desc.name)))?;
    let mut ledger = Vec::new();
    main.write_error_ledger(&mut ledger)?;
    if let Some(p) = &polysemy {
        p.save(&pred_dir.join(format!("{}.polysemy.jsonl", desc.name)))?;
        p.write_error_ledger(&mut ledger)?;
    }
    let ledger_path = err_dir.join(format!("{}.jsonl", desc.name));
    std::fs::write(&ledger_path, &ledger).with_context(|| format!("writing {}", ledger_path.display()))?;

    let failed = main.error_count() + polysemy.as_ref().map_or(0, Predictions::error_count);
    let total = main.notes.len() + polysemy.as_ref().map_or(0, |p| p.notes.len());
    println!("backend: {}", desc.name);
    println!("notes: {total}");
    println!("failed: {failed}");
    if failed > 0 {
        eprintln!("{failed} notes failed; see {}", ledger_path.display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn score(a: ScoreArgs) -> Result<ExitCode> {
    let mut config = AuditConfig::load(&a.config)?;
    config.seed = a.seed;
    let (_, templates) = load_inputs(&config)?;
    let load = |p: &Path| NoteCorpus::load(p).with_context(|| format!("loading corpus {}", p.display()));
    let corpus = load(&a.corpus)?;
    let polysemy_corpus = if config.analyses.polysemy {
        a.polysemy_corpus.as_deref().map(load).transpose()?
    } else {
        None
    };
    let mut predictions = Vec::new();
    for b in &config.backends {
        let main = Predictions::load(&a.predictions.join(format!("{}.jsonl", b.name)))?;
        let pp = a.predictions.join(format!("{}.polysemy.jsonl", b.name));
        let polysemy = if polysemy_corpus.is_some() {
            Some(Predictions::load(&pp)?)
        } else {
            None
        };
        predictions.push(BackendPredictions {
            name: b.name.clone(),
            main,
            polysemy,
        });
    }
    let params = config.params(&templates);
    let result = analyze(&params, &corpus, polysemy_corpus.as_ref(), &predictions)?;
    let run = AuditRun {
        params,
        corpus,
        polysemy_corpus,
        predictions,
        result,
    };
    write_run_files(&run, &a.out)?;
    summarize(&run);
    Ok(exit_for(&run))
}

fn audit(a: AuditArgs) -> Result<ExitCode> {
    let mut config = AuditConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let opts = RunOptions {
        workers: workers(a.workers),
        base_dir: a.config.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    let run = run_audit(&config, &opts)?;
    run.write(&a.out)?;
    summarize(&run);
    Ok(exit_for(&run))
}

fn summarize(run: &AuditRun) {
    println!("notes: {}", run.result.notes);
    println!("mentions: {}", run.result.mentions);
    for b in &run.result.backends {
        let s = &b.overall.score;
        let p = s.precision.map_or("undefined".to_string(), |p| format!("{p:.4}"));
        println!("{}: precision {p} recall {:.4} f1 {:.4} failed {}", b.name, s.recall, s.f1, b.failed_notes);
    }
}

fn exit_for(run: &AuditRun) -> ExitCode {
    if run.partial_failure() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let result = read_result(&a.result)?;
    let out = a
        .out
        .unwrap_or_else(|| a.result.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match a.format {
        Format::Csv => write_tables(&result, &out)?,
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(&result)?;
            bytes.push(b'\n');
            let path = out.join("result.json");
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_pool(path: &Path) -> Result<Vec<FullName>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(first), Some(last), None) => Ok(FullName {
                    first: first.to_string(),
                    last: last.to_string(),
                    source_set: 0,
                }),
                _ => bail!("{} line {}: expected `First Last`", path.display(), i + 1),
            }
        })
        .collect()
}

fn corpus(a: CorpusArgs) -> Result<ExitCode> {
    let catalog = catalog_from(a.catalog.as_deref())?;
    let docs = load_templates(&a.context).with_context(|| format!("loading context documents from {}", a.context.display()))?;
    let (mode, pool) = match a.mode {
        Mode::Diverse => (NameMode::Diverse, None),
        Mode::Popular => {
            let path = a.pool.as_deref().context("--mode popular needs --pool")?;
            (NameMode::Popular, Some(read_pool(path)?))
        }
    };
    let sizes = FinetuneSizes {
        train: a.train,
        validation: a.validation,
    };
    let ft = build_finetune_corpus(&docs, mode, &catalog, pool.as_deref(), sizes, a.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (name, docs) in [("train.jsonl", &ft.train), ("validation.jsonl", &ft.validation)] {
        let mut buf = String::new();
        for d in docs {
            buf.push_str(&serde_json::to_string(d)?);
            buf.push('\n');
        }
        let path = a.out.join(name);
        std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let names = serde_json::json!({"mode": ft.mode, "names": ft.names, "held_out": ft.held_out});
    let path = a.out.join("names.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&names)?).with_context(|| format!("writing {}", path.display()))?;
    println!("train: {}", ft.train.len());
    println!("validation: {}", ft.validation.len());
    println!("names: {}", ft.names.len());
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let dir = if a.result.is_dir() {
        a.result.clone()
    } else {
        a.result.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let outcome = verify_report(&dir)?;
    if outcome.ok() {
        println!("OK");
        Ok(ExitCode::SUCCESS)
    } else {
        for m in &outcome.mismatches {
            println!("MISMATCH {m}");
        }
        Ok(ExitCode::from(1))
    }
}
