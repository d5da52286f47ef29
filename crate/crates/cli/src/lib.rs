//! The `textstrat` command line: config loading, subcommands and run persistence.

pub mod config;
pub mod persist;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use textstrat_core::corpus::{
    load_document, randomize_document, serialize_document, vocabulary_overlap_stats, Document,
    SeedVocabulary, BUNDLED_DISTRACTORS, BUNDLED_MANUAL, BUNDLED_VOCABULARY,
};
use textstrat_core::eval::{
    self, norms_csv, rollouts_csv, run_matrix, run_one, runs_csv, summarize, sweep, sweep_csv,
    Arm, Corpus, ExperimentSpec,
};
use textstrat_core::model::{grad_check, random_instance};
use textstrat_core::search::Variant;

use config::{keys_help, parse_config, Config, KEYS};
use persist::{persist_run, Manifest};

#[derive(Parser, Debug)]
#[command(name = "textstrat", version, about = "Monte-Carlo game play guided by a strategy manual")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Config file; falls back to $TEXTSTRAT_CONFIG.
    #[arg(long, global = true, env = "TEXTSTRAT_CONFIG")]
    config: Option<PathBuf>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Play one game with full logging.
    Play,
    /// Play every arm against every seed and write runs.csv.
    Matrix,
    /// Vary one setting and write sweep.csv.
    Sweep,
    /// Compare analytic and finite-difference gradients on random instances.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Corpus utilities.
    Corpus {
        #[command(subcommand)]
        action: CorpusCommand,
    },
    /// Reports on trained parameters.
    Report {
        #[command(subcommand)]
        action: ReportCommand,
    },
}

#[derive(Subcommand, Debug)]
enum CorpusCommand {
    /// Check every sentence of a corpus file (default: the configured manual).
    Validate { file: Option<PathBuf> },
    /// Print a word-shuffled copy of a corpus.
    Randomize { file: Option<PathBuf> },
    /// Print sentence, token and vocabulary-overlap counts.
    Stats { file: Option<PathBuf> },
}

#[derive(Subcommand, Debug)]
enum ReportCommand {
    /// Train the full model for one game and list the heaviest word weights.
    Associations {
        /// Comma-separated query words.
        #[arg(long, default_value = "build,city,river,attack,irrigate,hills,road,settlers")]
        words: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
}

/// Rewrites `--KEY VALUE` and `--KEY=VALUE` for config keys without a dedicated flag
/// into `--set KEY=VALUE`.
fn expand_key_flags(argv: Vec<OsString>) -> Vec<OsString> {
    const DEDICATED: [&str; 4] = ["seed", "variant", "workers", "config"];
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if let Some(flag) = s.strip_prefix("--") {
            let (key, inline) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), Some(v.to_string())),
                None => (flag.to_string(), None),
            };
            if KEYS.iter().any(|(k, _)| *k == key) && !DEDICATED.contains(&key.as_str()) {
                let value = match inline {
                    Some(v) => Some(v),
                    None => it.next().map(|v| v.to_string_lossy().into_owned()),
                };
                if let Some(v) = value {
                    out.push("--set".into());
                    out.push(format!("{key}={v}").into());
                    continue;
                }
            }
        }
        out.push(a);
    }
    out
}

fn load_config(g: &GlobalArgs) -> Result<Config> {
    let mut sets = g.set.clone();
    if let Some(s) = g.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(v) = &g.variant {
        sets.push(format!("variant={v}"));
    }
    if let Some(o) = &g.out {
        sets.push(format!("out_dir={}", o.display()));
    }
    if let Some(w) = g.workers {
        sets.push(format!("workers={w}"));
    }
    Ok(parse_config(g.config.as_deref(), &sets)?)
}

/// Loaded corpus plus the raw bytes it came from, for the manifest checksum.
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub raw: Vec<u8>,
}

fn read_or(path: &Option<PathBuf>, bundled: &str) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(bundled.to_string()),
    }
}

pub fn load_corpus(cfg: &Config) -> Result<LoadedCorpus> {
    let manual_text = read_or(&cfg.manual_path, BUNDLED_MANUAL)?;
    let distractor_text = read_or(&cfg.distractors_path, BUNDLED_DISTRACTORS)?;
    let vocab_text = read_or(&cfg.vocabulary_path, BUNDLED_VOCABULARY)?;
    let parse = |t: &str, what: &str| {
        textstrat_core::corpus::parse_document(t).with_context(|| format!("parsing {what}"))
    };
    let corpus = Corpus {
        manual: parse(&manual_text, "manual")?,
        distractors: parse(&distractor_text, "distractors")?,
        vocab: SeedVocabulary::parse(&vocab_text).context("parsing vocabulary")?,
    };
    let mut raw = Vec::new();
    for t in [&manual_text, &distractor_text, &vocab_text] {
        raw.extend_from_slice(t.as_bytes());
        raw.push(0);
    }
    Ok(LoadedCorpus { corpus, raw })
}

/// Builds a matrix arm from its name: a variant name, `full_empty_vocabulary`, or one
/// of the `full_no_*` predicate-template ablations.
pub fn arm_from_name(cfg: &Config, name: &str) -> Result<Arm> {
    let base = &cfg.search;
    let mut arm = if let Some(v) = Variant::from_name(name) {
        Arm::variant(base, v)
    } else if name == "full_empty_vocabulary" {
        Arm::empty_vocabulary(base)
    } else if let Some(a) = Arm::dependency_ablations(base)
        .into_iter()
        .find(|a| a.label == name)
    {
        a
    } else {
        bail!("unknown arm `{name}`");
    };
    arm.text = cfg.text_source;
    Ok(arm)
}

fn manifest(cfg: &Config, command: &str, corpus: &LoadedCorpus) -> Manifest {
    Manifest::new(command, cfg, &corpus.raw)
}

fn cmd_play(cfg: &Config) -> Result<i32> {
    let corpus = load_corpus(cfg)?;
    let arm = Arm {
        label: cfg.search.variant.name().to_string(),
        cfg: cfg.search.clone(),
        text: cfg.text_source,
    };
    let run = run_one(&arm, cfg.seed, &corpus.corpus)?;
    let files = vec![
        ("runs.csv", runs_csv(&[run.row.clone()], cfg.record_seconds)),
        ("rollouts.csv", rollouts_csv(&run.record)),
        ("norms.csv", norms_csv(&run.record)),
    ];
    let paths = persist_run(&cfg.out_dir, &files, &manifest(cfg, "play", &corpus))?;
    println!(
        "{} seed {}: won={} steps={} utility={:.4}",
        run.row.variant, run.row.seed, run.row.won, run.row.steps, run.row.final_utility
    );
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn cmd_matrix(cfg: &Config) -> Result<i32> {
    let corpus = load_corpus(cfg)?;
    let arms = cfg
        .variants
        .iter()
        .map(|n| arm_from_name(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let spec = ExperimentSpec {
        arms,
        seeds: cfg.seeds.clone(),
    };
    let start = Instant::now();
    let result = run_matrix(&spec, &corpus.corpus, cfg.workers)?;
    let rows = result.rows();
    let mut files = vec![("runs.csv", runs_csv(&rows, cfg.record_seconds))];
    if !result.failures.is_empty() {
        let mut text = String::from("variant,seed,error\n");
        for f in &result.failures {
            text.push_str(&format!("{},{},{:?}\n", f.variant, f.seed, f.error));
        }
        files.push(("failures.csv", text));
    }
    persist_run(&cfg.out_dir, &files, &manifest(cfg, "matrix", &corpus))?;
    for (label, w) in summarize(&rows) {
        println!(
            "{label:<28} won {:>3}/{:<3} = {:5.1}% ± {:4.1}",
            w.wins,
            w.games,
            100.0 * w.rate,
            100.0 * w.std_err
        );
    }
    println!(
        "{} rows, {} failures, {:.1}s",
        rows.len(),
        result.failures.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(i32::from(!result.failures.is_empty()))
}

fn cmd_sweep(cfg: &Config) -> Result<i32> {
    let corpus = load_corpus(cfg)?;
    let values = if cfg.sweep_values.is_empty() {
        cfg.sweep_axis.default_values()
    } else {
        cfg.sweep_values.clone()
    };
    let (rows, failures) = sweep(
        cfg.sweep_axis,
        &values,
        &cfg.search,
        &cfg.seeds,
        &corpus.corpus,
        cfg.workers,
    )?;
    persist_run(
        &cfg.out_dir,
        &[("sweep.csv", sweep_csv(&rows))],
        &manifest(cfg, "sweep", &corpus),
    )?;
    for v in &values {
        let won: Vec<bool> = rows.iter().filter(|r| r.value == *v).map(|r| r.won).collect();
        let w = eval::win_rate(&won);
        println!(
            "{} = {v}: won {}/{} = {:.1}% ± {:.1}",
            cfg.sweep_axis.name(),
            w.wins,
            w.games,
            100.0 * w.rate,
            100.0 * w.std_err
        );
    }
    Ok(i32::from(!failures.is_empty()))
}

fn cmd_gradcheck(instances: u64, h: f64, tolerance: f64) -> Result<i32> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..instances {
        let (net, params, view, reward) = random_instance(seed);
        let r = grad_check(&net, &params, &view, reward, h)?;
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    let ok = worst <= tolerance;
    println!(
        "gradcheck: {instances} instances, {checked} coordinates, max relative error {worst:.3e} (tolerance {tolerance:e}), {:.2}s: {}",
        start.elapsed().as_secs_f64(),
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(i32::from(!ok))
}

fn corpus_file(cfg: &Config, file: &Option<PathBuf>) -> Result<Document> {
    match file {
        Some(p) => load_document(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(load_corpus(cfg)?.corpus.manual),
    }
}

fn cmd_corpus(cfg: &Config, action: &CorpusCommand) -> Result<i32> {
    match action {
        CorpusCommand::Validate { file } => {
            let doc = corpus_file(cfg, file)?;
            doc.validate()?;
            println!("ok: {} sentences", doc.len());
        }
        CorpusCommand::Randomize { file } => {
            let doc = corpus_file(cfg, file)?;
            print!("{}", serialize_document(&randomize_document(&doc, cfg.seed)));
        }
        CorpusCommand::Stats { file } => {
            let doc = corpus_file(cfg, file)?;
            let vocab = load_corpus(cfg)?.corpus.vocab;
            let gold = doc.sentences.iter().filter(|s| s.gold_labels.is_some()).count();
            let (types, tokens) = vocabulary_overlap_stats(&doc, &vocab);
            println!("sentences {}", doc.len());
            println!("tokens {}", doc.token_count());
            println!("gold_sentences {gold}");
            println!("vocabulary_type_overlap {types:.4}");
            println!("vocabulary_token_overlap {tokens:.4}");
        }
    }
    Ok(0)
}

fn cmd_report(cfg: &Config, action: &ReportCommand) -> Result<i32> {
    let ReportCommand::Associations { words, top_k } = action;
    let corpus = load_corpus(cfg)?;
    let search = textstrat_core::search::SearchConfig {
        variant: Variant::Full,
        ..cfg.search.clone()
    };
    let (params, agent) = eval::train_for_report(&search, &corpus.corpus, cfg.seed)?;
    let words: Vec<&str> = words.split(',').map(str::trim).filter(|w| !w.is_empty()).collect();
    for (w, assoc) in eval::report_associations(&params, &agent.space, &words, *top_k) {
        println!("{w}:");
        if assoc.is_empty() {
            println!("  (no weights)");
        }
        for (feature, x) in assoc {
            println!("  {x:+.6}  {feature}");
        }
    }
    Ok(0)
}

/// Parses `argv` (including the program name) and runs the command. Returns the exit
/// status.
pub fn run(argv: Vec<OsString>) -> i32 {
    use clap::FromArgMatches;
    let parsed = command()
        .try_get_matches_from(expand_key_flags(argv))
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = load_config(&cli.global).and_then(|cfg| match &cli.command {
        Command::Play => cmd_play(&cfg),
        Command::Matrix => cmd_matrix(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Gradcheck {
            instances,
            step,
            tolerance,
        } => cmd_gradcheck(*instances, *step, *tolerance),
        Command::Corpus { action } => cmd_corpus(&cfg, action),
        Command::Report { action } => cmd_report(&cfg, action),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn command() -> clap::Command {
    use clap::CommandFactory;
    Cli::command().after_help(keys_help())
}
