//! Monte-Carlo search: per-state roll-outs under an ε-greedy simulation policy, one
//! online update pass after each roll-out, and per-unit aggregation of first-step
//! utilities into the executed joint action.

mod scorer;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{latent_document, randomize_document, Document, Label, SeedVocabulary};
use crate::features::{ActorContext, AttributeView, FeatureSpace, NationSummary, PsiMask};
use crate::model::{
    update, ForwardMode, ForwardTrace, ModelError, Network, Params, TextMode, UpdateConfig,
};
use crate::simulator::{
    legal_actions, new_game, restore, snapshot, step, utility, Actor, GameConfig, GameState,
    JointAction, Outcome, SimError, Snapshot, UnitAction, Verb, AGENT,
};

use scorer::{CachedScorer, ReferenceScorer, Scorer};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no roll-out records to aggregate")]
    NoRecords,
    #[error("game step {step}: {source}")]
    AtStep {
        step: usize,
        source: Box<SearchError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    SentenceRelevanceOnly,
    LatentVariable,
    GameOnlyLinear,
    RandomizedText,
    RandomPolicy,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::SentenceRelevanceOnly,
        Variant::LatentVariable,
        Variant::GameOnlyLinear,
        Variant::RandomizedText,
        Variant::RandomPolicy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SentenceRelevanceOnly => "sentence_relevance_only",
            Variant::LatentVariable => "latent_variable",
            Variant::GameOnlyLinear => "game_only_linear",
            Variant::RandomizedText => "randomized_text",
            Variant::RandomPolicy => "random_policy",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Whether the variant reads the manual at all.
    pub fn uses_text(self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::SentenceRelevanceOnly | Variant::RandomizedText
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub rollouts_per_step: usize,
    pub rollout_depth: usize,
    pub epsilon: f64,
    pub game_steps: usize,
    pub alpha: UpdateConfig,
    pub variant: Variant,
    /// From this game step on, the text network is replaced by the latent-variable one.
    pub text_cutoff_step: Option<usize>,
    pub psi_mask: PsiMask,
    /// Disabling the seed vocabulary removes every overlap and name-match feature.
    pub seed_vocabulary: bool,
    pub game: GameConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rollouts_per_step: 64,
            rollout_depth: 10,
            epsilon: 0.1,
            game_steps: 30,
            alpha: UpdateConfig::default(),
            variant: Variant::Full,
            text_cutoff_step: None,
            psi_mask: PsiMask::ALL,
            seed_vocabulary: true,
            game: GameConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.rollouts_per_step == 0 || self.game_steps == 0 {
            return Err(SearchError::Config(
                "rollouts_per_step and game_steps must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SearchError::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        self.alpha.validate()?;
        Ok(())
    }

    fn effective_epsilon(&self) -> f64 {
        if self.variant == Variant::RandomPolicy {
            1.0
        } else {
            self.epsilon
        }
    }
}

/// Mixes a master seed with coordinates into an independent stream seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master;
    for x in [a, b] {
        z = splitmix(z ^ splitmix(x.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const POLICY_STREAM: u64 = 0x5eed_0f_90_11c7;
const RANDOMIZE_STREAM: u64 = u64::MAX - 1;
const RANDOM_PLAY_STREAM: u64 = u64::MAX - 2;

/// The networks and feature space for one game of one variant.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: SearchConfig,
    pub space: Arc<FeatureSpace>,
    /// The document the primary network reads, after the variant's transform.
    pub document: Arc<Document>,
    pub primary: Network,
    pub after_cutoff: Option<Network>,
}

impl Agent {
    /// Builds the variant's networks over `manual`. `seed` drives the randomized-text
    /// permutation.
    pub fn new(
        cfg: SearchConfig,
        manual: &Document,
        vocab: &SeedVocabulary,
        seed: u64,
    ) -> Result<Agent, SearchError> {
        cfg.validate()?;
        let vocab = if cfg.seed_vocabulary {
            vocab.clone()
        } else {
            SeedVocabulary::empty()
        };
        let (document, text) = match cfg.variant {
            Variant::Full => (manual.clone(), TextMode::Labeled),
            Variant::SentenceRelevanceOnly => (manual.clone(), TextMode::RelevanceOnly),
            Variant::RandomizedText => (
                randomize_document(manual, derive_seed(seed, RANDOMIZE_STREAM, 0)),
                TextMode::Labeled,
            ),
            Variant::LatentVariable => (latent_document(manual.len()), TextMode::RelevanceOnly),
            Variant::GameOnlyLinear | Variant::RandomPolicy => (Document::default(), TextMode::None),
        };
        if text != TextMode::None && document.is_empty() {
            return Err(SearchError::Config(format!(
                "variant {} needs a non-empty manual",
                cfg.variant
            )));
        }
        let latent = cfg
            .text_cutoff_step
            .filter(|_| cfg.variant.uses_text())
            .map(|_| latent_document(manual.len()));
        let mut docs = vec![&document];
        docs.extend(latent.as_ref());
        let space = Arc::new(FeatureSpace::build(&docs, &vocab));
        let encode = |d: &Document| -> Result<_, SearchError> {
            Ok(Arc::new(space.encode_document(d).map_err(ModelError::from)?))
        };
        let primary = Network::new(space.clone(), encode(&document)?, text, cfg.psi_mask);
        let after_cutoff = match &latent {
            Some(l) => Some(Network::new(
                space.clone(),
                encode(l)?,
                TextMode::RelevanceOnly,
                cfg.psi_mask,
            )),
            None => None,
        };
        Ok(Agent {
            cfg,
            space,
            document: Arc::new(document),
            primary,
            after_cutoff,
        })
    }

    /// Network in force at `game_step`, and whether it is the primary one.
    pub fn network_at(&self, game_step: usize) -> (&Network, bool) {
        match (&self.after_cutoff, self.cfg.text_cutoff_step) {
            (Some(net), Some(cut)) if game_step >= cut => (net, false),
            _ => (&self.primary, true),
        }
    }
}

/// One simulated game from a root state.
#[derive(Debug, Clone, PartialEq)]
pub struct RollOutRecord {
    pub first_actions: Vec<UnitAction>,
    pub traces: Vec<ForwardTrace>,
    pub utility: f64,
    pub steps: usize,
}

fn views(state: &GameState, actor: Actor, nation: &NationSummary) -> Option<ActorContext> {
    ActorContext::new(state, AGENT, nation, actor)
}

/// ε-greedy choice for one actor. Draw order: one uniform for the ε test, then either a
/// uniform index (exploration) or one sample-mode forward pass per legal action in
/// ordinal order. Returns no trace when `learn` is off and the move was exploratory.
fn select_with<S: Scorer>(
    scorer: &mut S,
    ctx: &ActorContext,
    legal: &[UnitAction],
    epsilon: f64,
    learn: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(UnitAction, Option<ForwardTrace>), ModelError> {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        let a = legal[rng.gen_range(0..legal.len())];
        if !learn {
            return Ok((a, None));
        }
        let view = ctx.view(a.verb);
        let t = scorer.score(&view, rng)?;
        return Ok((a, Some(scorer.complete(&view, t))));
    }
    let mut best: Option<(usize, ForwardTrace)> = None;
    for (k, a) in legal.iter().enumerate() {
        let t = scorer.score(&ctx.view(a.verb), rng)?;
        if best.as_ref().map_or(true, |(_, b)| t.q > b.q) {
            best = Some((k, t));
        }
    }
    let (k, t) = best.expect("skip is always legal");
    let view = ctx.view(legal[k].verb);
    Ok((legal[k], Some(scorer.complete(&view, t))))
}

/// Public single-decision form of the simulation policy, on the reference forward pass.
pub fn select_rollout_action(
    net: &Network,
    params: &Params,
    state: &GameState,
    actor: Actor,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(UnitAction, ForwardTrace), SearchError> {
    let nation = NationSummary::new(state, AGENT);
    let ctx = views(state, actor, &nation).ok_or(SimError::UnknownActor(actor))?;
    let legal = legal_actions(state, actor)?;
    let mut scorer = ReferenceScorer { net, params };
    let (a, t) = select_with(&mut scorer, &ctx, &legal, epsilon, true, rng)?;
    Ok((a, t.expect("learning selection always yields a trace")))
}

/// Plays `cfg.rollout_depth` rounds from `root`, then applies one update per recorded
/// decision, in order, against the utility at the truncation state.
pub fn simulate_rollout(
    net: &Network,
    params: &mut Params,
    root: &Snapshot,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<RollOutRecord, SearchError> {
    rollout_impl(net, params, root, cfg, seed, true)
}

fn rollout_impl(
    net: &Network,
    params: &mut Params,
    root: &Snapshot,
    cfg: &SearchConfig,
    seed: u64,
    cached: bool,
) -> Result<RollOutRecord, SearchError> {
    let mut state = restore(root)?;
    state.reseed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM);
    let learn = cfg.variant != Variant::RandomPolicy;
    let epsilon = cfg.effective_epsilon();
    let mut record = RollOutRecord {
        first_actions: Vec::new(),
        traces: Vec::new(),
        utility: 0.0,
        steps: 0,
    };
    {
        let mut cached_scorer;
        let mut reference;
        let scorer: &mut dyn DynScorer = if cached {
            cached_scorer = CachedScorer::new(net, params);
            &mut cached_scorer
        } else {
            reference = ReferenceScorer { net, params };
            &mut reference
        };
        for d in 0..cfg.rollout_depth {
            if state.is_terminal() {
                break;
            }
            let nation = NationSummary::new(&state, AGENT);
            let mut joint = JointAction::default();
            for actor in state.actors_of(AGENT) {
                let ctx = views(&state, actor, &nation).ok_or(SimError::UnknownActor(actor))?;
                let legal = legal_actions(&state, actor)?;
                let (a, t) = scorer.select(&ctx, &legal, epsilon, learn, &mut rng)?;
                joint.entries.push(a);
                record.traces.extend(t);
            }
            if d == 0 {
                record.first_actions = joint.entries.clone();
            }
            state = step(&state, &joint)?.state;
            record.steps += 1;
        }
    }
    record.utility = utility(&state, AGENT);
    if learn {
        for t in &record.traces {
            update(params, t, record.utility, &cfg.alpha)?;
        }
    }
    Ok(record)
}

/// Object-safe wrapper so one loop serves both scorers.
trait DynScorer {
    fn select(
        &mut self,
        ctx: &ActorContext,
        legal: &[UnitAction],
        epsilon: f64,
        learn: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(UnitAction, Option<ForwardTrace>), ModelError>;
}

impl<S: Scorer> DynScorer for S {
    fn select(
        &mut self,
        ctx: &ActorContext,
        legal: &[UnitAction],
        epsilon: f64,
        learn: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(UnitAction, Option<ForwardTrace>), ModelError> {
        select_with(self, ctx, legal, epsilon, learn, rng)
    }
}

/// Per actor, the first-step action with the highest mean roll-out utility. Utilities
/// are summed in sorted order so the result does not depend on record order; ties go to
/// the lowest ordinal; an actor with no sampled action falls back to argmax Q.
pub fn choose_game_action(
    records: &[RollOutRecord],
    net: &Network,
    params: &Params,
    state: &GameState,
) -> Result<JointAction, SearchError> {
    if records.is_empty() {
        return Err(SearchError::NoRecords);
    }
    let nation = NationSummary::new(state, AGENT);
    let mut joint = JointAction::default();
    for actor in state.actors_of(AGENT) {
        let legal = legal_actions(state, actor)?;
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); Verb::COUNT];
        for r in records {
            if let Some(a) = r.first_actions.iter().find(|a| a.actor == actor) {
                samples[a.verb.ordinal()].push(r.utility);
            }
        }
        let mut best: Option<(f64, UnitAction)> = None;
        for a in &legal {
            let s = &mut samples[a.verb.ordinal()];
            if s.is_empty() {
                continue;
            }
            s.sort_by(f64::total_cmp);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            if best.map_or(true, |(m, _)| mean > m) {
                best = Some((mean, *a));
            }
        }
        let chosen = match best {
            Some((_, a)) => a,
            None => {
                let ctx = views(state, actor, &nation).ok_or(SimError::UnknownActor(actor))?;
                argmax_q(net, params, &ctx, &legal)?
            }
        };
        joint.entries.push(chosen);
    }
    Ok(joint)
}

fn argmax_q(
    net: &Network,
    params: &Params,
    ctx: &ActorContext,
    legal: &[UnitAction],
) -> Result<UnitAction, SearchError> {
    let mut best: Option<(f64, UnitAction)> = None;
    for a in legal {
        let q = net.forward(params, &ctx.view(a.verb), ForwardMode::Argmax)?.q;
        if best.map_or(true, |(b, _)| q > b) {
            best = Some((q, *a));
        }
    }
    Ok(best.expect("skip is always legal").1)
}

/// Argmax-mode reading of the text for one executed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pick {
    pub actor: Actor,
    pub verb: Verb,
    pub sentence: Option<usize>,
    pub labeling: Vec<Label>,
    /// Per-token distribution over {A, S, B} for the picked sentence.
    pub label_probs: Vec<[f64; 3]>,
    /// False once the text cutoff has switched to the latent-variable network.
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub game_step: usize,
    pub rollout_utilities: Vec<f64>,
    pub action: JointAction,
    pub picks: Vec<Pick>,
    pub text_norm: f64,
    pub game_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub variant: Variant,
    pub master_seed: u64,
    pub steps: Vec<StepLog>,
    pub outcome: Outcome,
    pub won: bool,
    pub final_utility: f64,
}

impl GameRecord {
    pub fn steps_played(&self) -> usize {
        self.steps.len()
    }
}

/// Plays one game: at every actual step the parameters restart from zero and are
/// relearned from that step's roll-outs.
pub fn play_game(agent: &Agent, master_seed: u64) -> Result<GameRecord, SearchError> {
    play_impl(agent, master_seed, true).map(|(g, _)| g)
}

/// [`play_game`], also returning the parameters learned at the last executed step.
pub fn play_game_with_params(
    agent: &Agent,
    master_seed: u64,
) -> Result<(GameRecord, Params), SearchError> {
    play_impl(agent, master_seed, true)
}

/// Same game on the uncached reference forward pass; for equivalence tests.
pub fn play_game_reference(agent: &Agent, master_seed: u64) -> Result<GameRecord, SearchError> {
    play_impl(agent, master_seed, false).map(|(g, _)| g)
}

fn play_impl(
    agent: &Agent,
    master_seed: u64,
    cached: bool,
) -> Result<(GameRecord, Params), SearchError> {
    let cfg = &agent.cfg;
    let mut state = new_game(master_seed, &cfg.game)?;
    let mut params = Params::zeros(&agent.space);
    let mut steps = Vec::new();
    for t in 0..cfg.game_steps {
        if state.is_terminal() {
            break;
        }
        let at = |e: SearchError| SearchError::AtStep {
            step: t,
            source: Box::new(e),
        };
        let log = if cfg.variant == Variant::RandomPolicy {
            random_step(&state, master_seed, t).map_err(at)?
        } else {
            search_step(agent, &mut params, &state, master_seed, t, cached).map_err(at)?
        };
        state = step(&state, &log.action)
            .map_err(|e| at(e.into()))?
            .state;
        steps.push(log);
    }
    let outcome = state.outcome();
    let record = GameRecord {
        variant: cfg.variant,
        master_seed,
        steps,
        outcome,
        won: outcome == Outcome::Won(AGENT),
        final_utility: utility(&state, AGENT),
    };
    Ok((record, params))
}

fn random_step(state: &GameState, master_seed: u64, t: usize) -> Result<StepLog, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, t as u64, RANDOM_PLAY_STREAM));
    let mut action = JointAction::default();
    for actor in state.actors_of(AGENT) {
        let legal = legal_actions(state, actor)?;
        action.entries.push(legal[rng.gen_range(0..legal.len())]);
    }
    Ok(StepLog {
        game_step: t,
        rollout_utilities: Vec::new(),
        action,
        picks: Vec::new(),
        text_norm: 0.0,
        game_norm: 0.0,
    })
}

fn search_step(
    agent: &Agent,
    params: &mut Params,
    state: &GameState,
    master_seed: u64,
    t: usize,
    cached: bool,
) -> Result<StepLog, SearchError> {
    let cfg = &agent.cfg;
    let (net, primary) = agent.network_at(t);
    params.reset();
    let root = snapshot(state);
    let mut records = Vec::with_capacity(cfg.rollouts_per_step);
    for r in 0..cfg.rollouts_per_step {
        let seed = derive_seed(master_seed, t as u64, r as u64);
        match rollout_impl(net, params, &root, cfg, seed, cached) {
            Ok(rec) => records.push(rec),
            Err(SearchError::Sim(e)) => log::warn!("step {t} roll-out {r} discarded: {e}"),
            Err(e) => return Err(e),
        }
    }
    let rollout_utilities = records.iter().map(|r| r.utility).collect();
    let action = choose_game_action(&records, net, params, state)?;
    let nation = NationSummary::new(state, AGENT);
    let mut picks = Vec::new();
    if net.text != TextMode::None {
        for a in &action.entries {
            let ctx = views(state, a.actor, &nation).ok_or(SimError::UnknownActor(a.actor))?;
            let view: AttributeView = ctx.view(a.verb);
            let tr = net.forward(params, &view, ForwardMode::Argmax)?;
            let label_probs = match tr.chosen_sentence {
                Some(i) if net.text == TextMode::Labeled => {
                    let s = &net.doc.sentences[i];
                    (0..s.len())
                        .map(|j| net.label_distribution(params, s, j))
                        .collect()
                }
                _ => Vec::new(),
            };
            picks.push(Pick {
                actor: a.actor,
                verb: a.verb,
                sentence: tr.chosen_sentence,
                labeling: tr.labeling,
                label_probs,
                primary,
            });
        }
    }
    let (text_norm, game_norm) = params.output_norms(&agent.space);
    Ok(StepLog {
        game_step: t,
        rollout_utilities,
        action,
        picks,
        text_norm,
        game_norm,
    })
}
