//! Experiment matrix, sweeps, text-analysis accuracy and CSV emission.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{
    build_relevance_eval_document, subsample_document, CorpusError, Document, Label,
    SeedVocabulary, Source,
};
use crate::features::{FeatureSpace, PsiMask};
use crate::model::Params;
use crate::search::{
    play_game, play_game_with_params, Agent, GameRecord, SearchConfig, SearchError, Variant,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("experiment needs at least one seed")]
    NoSeeds,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Which text the agent reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextSource {
    Manual,
    /// Manual plus an equal number of distractors, shuffled per seed.
    RelevanceEval,
    /// A per-seed random subset of the manual's sentences.
    Subsample(f64),
}

/// The manual, distractor pool and vocabulary every experiment draws on.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manual: Document,
    pub distractors: Document,
    pub vocab: SeedVocabulary,
}

impl Corpus {
    pub fn bundled() -> Corpus {
        Corpus {
            manual: Document::bundled_manual(),
            distractors: Document::bundled_distractors(),
            vocab: SeedVocabulary::bundled(),
        }
    }

    pub fn document(&self, source: TextSource, seed: u64) -> Result<Document, EvalError> {
        Ok(match source {
            TextSource::Manual => self.manual.clone(),
            TextSource::RelevanceEval => {
                build_relevance_eval_document(&self.manual, &self.distractors, seed)?
            }
            TextSource::Subsample(f) => subsample_document(&self.manual, f, seed),
        })
    }
}

/// One configured arm of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub cfg: SearchConfig,
    pub text: TextSource,
}

impl Arm {
    pub fn variant(base: &SearchConfig, variant: Variant) -> Arm {
        Arm {
            label: variant.name().to_string(),
            cfg: SearchConfig {
                variant,
                ..base.clone()
            },
            text: TextSource::Manual,
        }
    }

    /// Full model with some predicate templates switched off.
    pub fn psi_ablation(base: &SearchConfig, name: &str, mask: PsiMask) -> Arm {
        Arm {
            label: format!("full_{name}"),
            cfg: SearchConfig {
                variant: Variant::Full,
                psi_mask: mask,
                ..base.clone()
            },
            text: TextSource::Manual,
        }
    }

    /// The four dependency ablations of the predicate layer.
    pub fn dependency_ablations(base: &SearchConfig) -> Vec<Arm> {
        [
            ("no_dependency_info", PsiMask::NO_DEPENDENCY_INFO),
            ("no_dependency_label", PsiMask::NO_DEPENDENCY_LABEL),
            ("no_parent_pos", PsiMask::NO_PARENT_POS),
            ("no_parent_word", PsiMask::NO_PARENT_WORD),
        ]
        .into_iter()
        .map(|(n, m)| Arm::psi_ablation(base, n, m))
        .collect()
    }

    pub fn empty_vocabulary(base: &SearchConfig) -> Arm {
        Arm {
            label: "full_empty_vocabulary".into(),
            cfg: SearchConfig {
                variant: Variant::Full,
                seed_vocabulary: false,
                ..base.clone()
            },
            text: TextSource::Manual,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub variant: String,
    pub seed: u64,
    pub won: bool,
    pub steps: usize,
    pub final_utility: f64,
    pub relevance_overall: Option<f64>,
    pub relevance_q1: Option<f64>,
    /// Labeling accuracy over first-quarter steps.
    pub label3: Option<f64>,
    pub label2: Option<f64>,
    pub seconds: f64,
}

/// Everything one game produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Position of the arm in the experiment.
    pub arm: usize,
    pub row: MetricsRow,
    pub record: GameRecord,
    pub document: Document,
}

/// Whether game step `t` of `game_steps` lies in the first quarter.
pub fn in_first_quarter(t: usize, game_steps: usize) -> bool {
    t * 4 < game_steps
}

/// Fraction of primary-network picks whose sentence is tagged manual, over all steps and
/// over the first quarter. `None` where no pick was made.
pub fn relevance_accuracy(
    record: &GameRecord,
    doc: &Document,
    game_steps: usize,
) -> (Option<f64>, Option<f64>) {
    let (mut all, mut all_hit, mut q1, mut q1_hit) = (0usize, 0usize, 0usize, 0usize);
    for s in &record.steps {
        for p in s.picks.iter().filter(|p| p.primary) {
            let Some(i) = p.sentence else { continue };
            let hit = doc.sentences[i].source == Source::Manual;
            all += 1;
            all_hit += usize::from(hit);
            if in_first_quarter(s.game_step, game_steps) {
                q1 += 1;
                q1_hit += usize::from(hit);
            }
        }
    }
    let frac = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    (frac(all_hit, all), frac(q1_hit, q1))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelingAccuracy {
    pub three_way: Option<f64>,
    pub two_way: Option<f64>,
    pub tokens_three_way: usize,
    pub tokens_two_way: usize,
    /// Picks of sentences that carry gold labels, and picks skipped for lacking them.
    pub scored_picks: usize,
    pub skipped_picks: usize,
}

/// Per-token accuracy of the argmax labeling of picked sentences against gold. The
/// two-way score covers tokens whose gold label is A or S and predicts whichever of A
/// and S has the higher probability.
pub fn labeling_accuracy(
    record: &GameRecord,
    doc: &Document,
    game_steps: usize,
    first_quarter_only: bool,
) -> LabelingAccuracy {
    let mut acc = LabelingAccuracy::default();
    let (mut hit3, mut hit2) = (0usize, 0usize);
    for s in &record.steps {
        if first_quarter_only && !in_first_quarter(s.game_step, game_steps) {
            continue;
        }
        for p in s.picks.iter().filter(|p| p.primary && !p.labeling.is_empty()) {
            let Some(gold) = p.sentence.and_then(|i| doc.sentences[i].gold_labels.as_ref()) else {
                acc.skipped_picks += 1;
                continue;
            };
            acc.scored_picks += 1;
            for (j, g) in gold.iter().enumerate() {
                acc.tokens_three_way += 1;
                hit3 += usize::from(p.labeling[j] == *g);
                if *g != Label::Background {
                    acc.tokens_two_way += 1;
                    let probs = p.label_probs[j];
                    let guess = if probs[Label::Action.index()] >= probs[Label::State.index()] {
                        Label::Action
                    } else {
                        Label::State
                    };
                    hit2 += usize::from(guess == *g);
                }
            }
        }
    }
    let frac = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    acc.three_way = frac(hit3, acc.tokens_three_way);
    acc.two_way = frac(hit2, acc.tokens_two_way);
    acc
}

/// Plays one (arm, seed) game and scores it.
pub fn run_one(arm: &Arm, seed: u64, corpus: &Corpus) -> Result<RunOutput, EvalError> {
    let start = Instant::now();
    let document = corpus.document(arm.text, seed)?;
    let agent = Agent::new(arm.cfg.clone(), &document, &corpus.vocab, seed)?;
    let record = play_game(&agent, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(score_run(arm, 0, seed, record, document, seconds))
}

fn score_run(arm: &Arm, index: usize, seed: u64, record: GameRecord, document: Document, seconds: f64) -> RunOutput {
    let steps = arm.cfg.game_steps;
    let reads_text = arm.cfg.variant.uses_text();
    let (relevance_overall, relevance_q1) = if reads_text && arm.text == TextSource::RelevanceEval
    {
        relevance_accuracy(&record, &document, steps)
    } else {
        (None, None)
    };
    let labeling = if reads_text {
        labeling_accuracy(&record, &document, steps, true)
    } else {
        LabelingAccuracy::default()
    };
    let row = MetricsRow {
        variant: arm.label.clone(),
        seed,
        won: record.won,
        steps: record.steps_played(),
        final_utility: record.final_utility,
        relevance_overall,
        relevance_q1,
        label3: labeling.three_way,
        label2: labeling.two_way,
        seconds,
    };
    RunOutput {
        arm: index,
        row,
        record,
        document,
    }
}

/// Failure of one matrix cell; the rest of the matrix still runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub variant: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub runs: Vec<RunOutput>,
    pub failures: Vec<RunFailure>,
}

impl MatrixResult {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }
}

/// Plays every (arm, seed) pair, arm-major, on `workers` threads. Each game is
/// deterministic on its own, so the result does not depend on the worker count.
pub fn run_matrix(
    spec: &ExperimentSpec,
    corpus: &Corpus,
    workers: usize,
) -> Result<MatrixResult, EvalError> {
    if spec.seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let jobs: Vec<(usize, &Arm, u64)> = spec
        .arms
        .iter()
        .enumerate()
        .flat_map(|(i, a)| spec.seeds.iter().map(move |s| (i, a, *s)))
        .collect();
    let run = |(i, arm, seed): &(usize, &Arm, u64)| {
        let out = run_one(arm, *seed, corpus).map(|mut r| {
            r.arm = *i;
            r
        });
        (arm.label.clone(), *seed, out)
    };
    let outcomes: Vec<_> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect())
    };
    let mut result = MatrixResult {
        runs: Vec::new(),
        failures: Vec::new(),
    };
    for (variant, seed, out) in outcomes {
        match out {
            Ok(r) => result.runs.push(r),
            Err(e) => {
                log::error!("{variant} seed {seed} failed: {e}");
                result.failures.push(RunFailure {
                    variant,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TextFraction,
    RolloutBudget,
    TextCutoff,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TextFraction => "text_fraction",
            SweepAxis::RolloutBudget => "rollout_budget",
            SweepAxis::TextCutoff => "text_cutoff",
        }
    }

    pub fn from_name(s: &str) -> Option<SweepAxis> {
        [
            SweepAxis::TextFraction,
            SweepAxis::RolloutBudget,
            SweepAxis::TextCutoff,
        ]
        .into_iter()
        .find(|a| a.name() == s)
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::TextFraction => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            SweepAxis::RolloutBudget => vec![16.0, 32.0, 64.0],
            SweepAxis::TextCutoff => vec![0.0, 0.25, 0.5, 1.0],
        }
    }

    /// The arm for one sweep value. A text fraction of zero leaves no sentence to read,
    /// so it runs the randomized-text model on the whole manual, the no-usable-text
    /// anchor of the curve. Cutoff values are fractions of the game length.
    pub fn arm(self, base: &SearchConfig, value: f64) -> Arm {
        let mut arm = Arm::variant(base, Variant::Full);
        match self {
            SweepAxis::TextFraction if value <= 0.0 => {
                arm = Arm::variant(base, Variant::RandomizedText);
            }
            SweepAxis::TextFraction => arm.text = TextSource::Subsample(value),
            SweepAxis::RolloutBudget => arm.cfg.rollouts_per_step = value as usize,
            SweepAxis::TextCutoff => {
                arm.cfg.text_cutoff_step = Some((value * base.game_steps as f64).round() as usize);
            }
        }
        arm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub variant: String,
    pub seed: u64,
    pub won: bool,
    pub final_utility: f64,
    pub seconds: f64,
}

pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    base: &SearchConfig,
    seeds: &[u64],
    corpus: &Corpus,
    workers: usize,
) -> Result<(Vec<SweepRow>, Vec<RunFailure>), EvalError> {
    let arms: Vec<Arm> = values.iter().map(|v| axis.arm(base, *v)).collect();
    let spec = ExperimentSpec {
        arms,
        seeds: seeds.to_vec(),
    };
    let result = run_matrix(&spec, corpus, workers)?;
    let arms = &spec.arms;
    let rows = result
        .runs
        .iter()
        .map(|r| SweepRow {
            axis,
            value: values[r.arm],
            variant: arms[r.arm].cfg.variant.name().to_string(),
            seed: r.row.seed,
            won: r.row.won,
            final_utility: r.row.final_utility,
            seconds: r.row.seconds,
        })
        .collect();
    Ok((rows, result.failures))
}

/// Win count, game count, rate and binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinRate {
    pub wins: usize,
    pub games: usize,
    pub rate: f64,
    pub std_err: f64,
}

pub fn win_rate<'a>(won: impl IntoIterator<Item = &'a bool>) -> WinRate {
    let (mut wins, mut games) = (0, 0);
    for w in won {
        games += 1;
        wins += usize::from(*w);
    }
    let rate = if games == 0 { 0.0 } else { wins as f64 / games as f64 };
    let std_err = if games == 0 {
        0.0
    } else {
        (rate * (1.0 - rate) / games as f64).sqrt()
    };
    WinRate {
        wins,
        games,
        rate,
        std_err,
    }
}

/// Per-label win rates in first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<(String, WinRate)> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.variant.as_str()) {
            labels.push(&r.variant);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let won: Vec<bool> = rows.iter().filter(|r| r.variant == l).map(|r| r.won).collect();
            (l.to_string(), win_rate(&won))
        })
        .collect()
}

/// For each query word, the `top_k` heaviest output weights on text features that
/// mention it, as (feature description, weight), heaviest first.
pub fn report_associations(
    params: &Params,
    space: &FeatureSpace,
    words: &[&str],
    top_k: usize,
) -> Vec<(String, Vec<(String, f64)>)> {
    words
        .iter()
        .map(|w| {
            let mut found = Vec::new();
            if let Some(wid) = space.word_id(w) {
                for (id, x) in params.nonzero(crate::features::Family::Value) {
                    if space.text_feature_word(id) == Some(wid) {
                        found.push((space.describe(id), x));
                    }
                }
            }
            found.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            found.truncate(top_k);
            (w.to_string(), found)
        })
        .collect()
}

/// Trains the full model for one game and returns its final-step parameters with the
/// feature space they index.
pub fn train_for_report(
    cfg: &SearchConfig,
    corpus: &Corpus,
    seed: u64,
) -> Result<(Params, Agent), EvalError> {
    let agent = Agent::new(cfg.clone(), &corpus.manual, &corpus.vocab, seed)?;
    let (_, params) = play_game_with_params(&agent, seed)?;
    Ok((params, agent))
}

pub const RUNS_HEADER: &str =
    "variant,seed,won,steps,final_utility,relevance_overall,relevance_q1,label3,label2,seconds";
pub const ROLLOUTS_HEADER: &str = "game_step,rollout,utility";
pub const SWEEP_HEADER: &str = "axis,value,variant,seed,won";
pub const NORMS_HEADER: &str = "game_step,text_norm,game_norm";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `seconds` is written only when `with_seconds`; otherwise the column holds 0 so that
/// reruns produce byte-identical files.
pub fn runs_csv(rows: &[MetricsRow], with_seconds: bool) -> String {
    let mut out = format!("{RUNS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            u8::from(r.won),
            r.steps,
            r.final_utility,
            opt(r.relevance_overall),
            opt(r.relevance_q1),
            opt(r.label3),
            opt(r.label2),
            if with_seconds { r.seconds } else { 0.0 }
        );
    }
    out
}

pub fn rollouts_csv(record: &GameRecord) -> String {
    let mut out = format!("{ROLLOUTS_HEADER}\n");
    for s in &record.steps {
        for (i, u) in s.rollout_utilities.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", s.game_step, i, u);
        }
    }
    out
}

pub fn norms_csv(record: &GameRecord) -> String {
    let mut out = format!("{NORMS_HEADER}\n");
    for s in &record.steps {
        let _ = writeln!(out, "{},{},{}", s.game_step, s.text_norm, s.game_norm);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.axis.name(),
            r.value,
            r.variant,
            r.seed,
            u8::from(r.won)
        );
    }
    out
}
