//! Four-layer value network: sentence relevance softmax, per-word predicate labeling
//! softmax, deterministic feature layer and linear output.
//!
//! Relevance: `p(y_i) ∝ exp(u·φ(y_i, view))`. Labeling of the chosen sentence, token by
//! token: `p(e_j) ∝ exp(v·ψ(e_j, j))`. Output: `Q = w·f(view, y_i, z_i)`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Document, Label, SeedVocabulary, Sentence, Source, Token};
use crate::features::{
    ActorKind, Attr, AttrSet, AttributeView, EncodedDocument, EncodedSentence, Family,
    FeatureError, FeatureId, FeatureSpace, PsiMask, SparseVector,
};
use crate::simulator::Verb;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("params parse error: {0}")]
    Parse(String),
}

const PARAMS_HEADER: &str = "textstrat-params v1";

/// Dense weight vectors for the relevance (u), predicate (v) and output (w) layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    weights: [Vec<f64>; 3],
    bases: [u32; 3],
}

impl Params {
    pub fn zeros(space: &FeatureSpace) -> Params {
        let mut weights: [Vec<f64>; 3] = Default::default();
        let mut bases = [0u32; 3];
        for fam in Family::ALL {
            let (a, b) = space.family_range(fam);
            weights[fam.index()] = vec![0.0; (b - a) as usize];
            bases[fam.index()] = a;
        }
        Params { weights, bases }
    }

    #[inline]
    fn slot(&self, id: FeatureId) -> (usize, usize) {
        let k = if id.0 >= self.bases[2] {
            2
        } else if id.0 >= self.bases[1] {
            1
        } else {
            0
        };
        (k, (id.0 - self.bases[k]) as usize)
    }

    #[inline]
    pub fn get(&self, id: FeatureId) -> f64 {
        let (k, i) = self.slot(id);
        self.weights[k][i]
    }

    #[inline]
    pub fn add(&mut self, id: FeatureId, delta: f64) {
        let (k, i) = self.slot(id);
        self.weights[k][i] += delta;
    }

    pub fn set(&mut self, id: FeatureId, value: f64) {
        let (k, i) = self.slot(id);
        self.weights[k][i] = value;
    }

    #[inline]
    pub fn dot(&self, v: &SparseVector) -> f64 {
        v.iter().map(|(id, x)| self.get(id) * x).sum()
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().flatten().all(|x| *x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|x| x.is_finite())
    }

    /// Non-zero entries of one family, in id order.
    pub fn nonzero(&self, fam: Family) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        let k = fam.index();
        let base = self.bases[k];
        self.weights[k]
            .iter()
            .enumerate()
            .filter(|(_, x)| x.to_bits() != 0)
            .map(move |(i, x)| (FeatureId(base + i as u32), *x))
    }

    /// Euclidean norms of the output weights on text-combination and game-only features.
    pub fn output_norms(&self, space: &FeatureSpace) -> (f64, f64) {
        let (mut text, mut game) = (0.0, 0.0);
        for (id, x) in self.nonzero(Family::Value) {
            if space.is_text_feature(id) {
                text += x * x;
            } else {
                game += x * x;
            }
        }
        (text.sqrt(), game.sqrt())
    }

    /// Versioned text form: sizes, then `id value` for every non-zero weight in id order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{PARAMS_HEADER}");
        let _ = writeln!(
            out,
            "layout {} {} {} {} {} {}",
            self.bases[0],
            self.weights[0].len(),
            self.bases[1],
            self.weights[1].len(),
            self.bases[2],
            self.weights[2].len()
        );
        for fam in Family::ALL {
            for (id, x) in self.nonzero(fam) {
                let _ = writeln!(out, "{} {:?}", id.0, x);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Params, ModelError> {
        let bad = |m: &str| ModelError::Parse(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(PARAMS_HEADER) {
            return Err(bad("missing header"));
        }
        let layout: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("layout "))
            .ok_or_else(|| bad("missing layout"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad layout")))
            .collect::<Result<_, _>>()?;
        if layout.len() != 6 {
            return Err(bad("bad layout"));
        }
        let mut p = Params {
            weights: [
                vec![0.0; layout[1]],
                vec![0.0; layout[3]],
                vec![0.0; layout[5]],
            ],
            bases: [layout[0] as u32, layout[2] as u32, layout[4] as u32],
        };
        let total = layout[4] + layout[5];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (id, x) = line.split_once(' ').ok_or_else(|| bad(line))?;
            let id: u32 = id.parse().map_err(|_| bad(line))?;
            let x: f64 = x.parse().map_err(|_| bad(line))?;
            if id as usize >= total || !x.is_finite() {
                return Err(bad(line));
            }
            p.set(FeatureId(id), x);
        }
        Ok(p)
    }
}

/// Which latent layers the network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextMode {
    /// Relevance and predicate labeling.
    Labeled,
    /// Relevance only; no label-conditioned features.
    RelevanceOnly,
    /// Game features only, `Q = w·f(s, a)`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignMode {
    Descent,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub alpha_w: f64,
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub sign_mode: SignMode,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            alpha_w: 1e-4,
            alpha_u: 1e-4,
            alpha_v: 1e-4,
            sign_mode: SignMode::Descent,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, a) in [
            ("alpha_w", self.alpha_w),
            ("alpha_u", self.alpha_u),
            ("alpha_v", self.alpha_v),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(ModelError::Config(format!("{name} must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

pub enum ForwardMode<'a> {
    Sample(&'a mut ChaCha8Rng),
    Argmax,
    /// `Q = Σ_i p(y_i)·w·f(y_i, ẑ_i)` with `ẑ_i` the per-token argmax labeling; the rest
    /// of the trace describes the most relevant sentence.
    Expectation,
}

/// Everything one forward pass chose and computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub chosen_sentence: Option<usize>,
    pub relevance_prob: f64,
    pub relevance: Vec<f64>,
    pub phi: SparseVector,
    pub labeling: Vec<Label>,
    pub label_probs: Vec<f64>,
    pub psi: Vec<SparseVector>,
    pub f: SparseVector,
    pub q: f64,
    pub q_hat: f64,
}

/// Softmax of `scores` into `out`; stable under large scores.
pub fn softmax_into(scores: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.extend(scores.iter().map(|s| (s - max).exp()));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(scores.len());
    softmax_into(scores, &mut out);
    out
}

/// Index drawn from `probs` with one uniform draw.
pub fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// First index of the maximum.
pub fn argmax_index(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// A value network over one encoded document.
#[derive(Debug, Clone)]
pub struct Network {
    pub space: Arc<FeatureSpace>,
    pub doc: Arc<EncodedDocument>,
    pub text: TextMode,
    pub mask: PsiMask,
}

impl Network {
    pub fn new(
        space: Arc<FeatureSpace>,
        doc: Arc<EncodedDocument>,
        text: TextMode,
        mask: PsiMask,
    ) -> Network {
        Network {
            space,
            doc,
            text,
            mask,
        }
    }

    pub fn relevance_distribution(&self, params: &Params, view: &AttributeView) -> Vec<f64> {
        let scores: Vec<f64> = self
            .doc
            .sentences
            .iter()
            .map(|s| params.dot(&self.space.phi_relevance(s, view)))
            .collect();
        softmax(&scores)
    }

    /// Distribution over {A, S, B} for token `j`, in label order.
    pub fn label_distribution(&self, params: &Params, s: &EncodedSentence, j: usize) -> [f64; 3] {
        let mut scores = [0.0; 3];
        for l in Label::ALL {
            let psi = self
                .space
                .psi_predicate(l, j, s, self.mask)
                .expect("token index in range");
            scores[l.index()] = params.dot(&psi);
        }
        let p = softmax(&scores);
        [p[0], p[1], p[2]]
    }

    pub fn argmax_labeling(&self, params: &Params, s: &EncodedSentence) -> Vec<Label> {
        (0..s.len())
            .map(|j| Label::ALL[argmax_index(&self.label_distribution(params, s, j))])
            .collect()
    }

    pub fn forward(
        &self,
        params: &Params,
        view: &AttributeView,
        mode: ForwardMode<'_>,
    ) -> Result<ForwardTrace, ModelError> {
        if self.text == TextMode::None {
            let f = self.space.f_action_value(view, None)?;
            let q = params.dot(&f);
            return Ok(ForwardTrace {
                chosen_sentence: None,
                relevance_prob: 1.0,
                relevance: Vec::new(),
                phi: SparseVector::new(),
                labeling: Vec::new(),
                label_probs: Vec::new(),
                psi: Vec::new(),
                f,
                q,
                q_hat: q,
            });
        }
        if self.doc.is_empty() {
            return Err(ModelError::Config(
                "text-aware network needs a non-empty document".into(),
            ));
        }
        let relevance = self.relevance_distribution(params, view);
        let (mut rng, expectation) = match mode {
            ForwardMode::Sample(r) => (Some(r), false),
            ForwardMode::Argmax => (None, false),
            ForwardMode::Expectation => (None, true),
        };
        let i = match rng.as_deref_mut() {
            Some(r) => sample_index(&relevance, r),
            None => argmax_index(&relevance),
        };
        let s = &self.doc.sentences[i];
        let phi = self.space.phi_relevance(s, view);
        let (labeling, label_probs, psi) = self.label(params, s, rng)?;
        let f = self.features(view, s, &labeling)?;
        let q_chosen = params.dot(&f);
        let q = if expectation {
            self.expected_q(params, view, &relevance)?
        } else {
            q_chosen
        };
        Ok(ForwardTrace {
            chosen_sentence: Some(i),
            relevance_prob: relevance[i],
            relevance: relevance.clone(),
            phi,
            labeling,
            label_probs,
            psi,
            f,
            q,
            q_hat: q_chosen * relevance[i],
        })
    }

    fn label(
        &self,
        params: &Params,
        s: &EncodedSentence,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<Label>, Vec<f64>, Vec<SparseVector>), ModelError> {
        if self.text != TextMode::Labeled {
            return Ok((Vec::new(), Vec::new(), Vec::new()));
        }
        let mut labeling = Vec::with_capacity(s.len());
        let mut probs = Vec::with_capacity(s.len());
        let mut psi = Vec::with_capacity(s.len());
        for j in 0..s.len() {
            let dist = self.label_distribution(params, s, j);
            let e = match rng.as_deref_mut() {
                Some(r) => sample_index(&dist, r),
                None => argmax_index(&dist),
            };
            labeling.push(Label::ALL[e]);
            probs.push(dist[e]);
            psi.push(self.space.psi_predicate(Label::ALL[e], j, s, self.mask)?);
        }
        Ok((labeling, probs, psi))
    }

    pub(crate) fn features(
        &self,
        view: &AttributeView,
        s: &EncodedSentence,
        labeling: &[Label],
    ) -> Result<SparseVector, ModelError> {
        let labels = (self.text == TextMode::Labeled).then_some(labeling);
        Ok(self.space.f_action_value(view, Some((s, labels)))?)
    }

    /// Per-sentence output features under the argmax labeling.
    fn expectation_features(
        &self,
        params: &Params,
        view: &AttributeView,
    ) -> Result<Vec<SparseVector>, ModelError> {
        self.doc
            .sentences
            .iter()
            .map(|s| {
                let z = if self.text == TextMode::Labeled {
                    self.argmax_labeling(params, s)
                } else {
                    Vec::new()
                };
                self.features(view, s, &z)
            })
            .collect()
    }

    fn expected_q(
        &self,
        params: &Params,
        view: &AttributeView,
        relevance: &[f64],
    ) -> Result<f64, ModelError> {
        let fs = self.expectation_features(params, view)?;
        Ok(relevance
            .iter()
            .zip(&fs)
            .map(|(p, f)| p * params.dot(f))
            .sum())
    }
}

/// Sparse dot product `w·f`.
pub fn q_value(params: &Params, f: &SparseVector) -> f64 {
    params.dot(f)
}

/// One online update from a trace and the observed utility. Descent mode moves every
/// touched weight against the squared-error gradient; paper-literal mode flips the sign.
pub fn update(
    params: &mut Params,
    trace: &ForwardTrace,
    reward: f64,
    cfg: &UpdateConfig,
) -> Result<(), ModelError> {
    if !reward.is_finite() {
        return Err(ModelError::NonFiniteReward(reward));
    }
    let sign = match cfg.sign_mode {
        SignMode::Descent => -1.0,
        SignMode::PaperLiteral => 1.0,
    };
    let err = trace.q - reward;
    if err == 0.0 {
        return Ok(());
    }
    let gw = sign * cfg.alpha_w * err;
    for (id, x) in trace.f.iter() {
        params.add(id, gw * x);
    }
    if trace.chosen_sentence.is_some() {
        let gu = sign * cfg.alpha_u * err * trace.q_hat * (1.0 - trace.relevance_prob);
        for (id, x) in trace.phi.iter() {
            params.add(id, gu * x);
        }
        for (psi, p) in trace.psi.iter().zip(&trace.label_probs) {
            let gv = sign * cfg.alpha_v * err * trace.q_hat * (1.0 - p);
            for (id, x) in psi.iter() {
                params.add(id, gv * x);
            }
        }
    }
    Ok(())
}

/// Exact gradient of `½(Q − R)²` for the expectation-mode output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationGradient {
    pub error: f64,
    pub q: f64,
    pub u: Vec<(FeatureId, f64)>,
    pub w: Vec<(FeatureId, f64)>,
}

fn accumulate(acc: &mut Vec<(FeatureId, f64)>, id: FeatureId, x: f64) {
    match acc.iter_mut().find(|(i, _)| *i == id) {
        Some((_, v)) => *v += x,
        None => acc.push((id, x)),
    }
}

pub fn expectation_objective(
    net: &Network,
    params: &Params,
    view: &AttributeView,
    reward: f64,
) -> Result<f64, ModelError> {
    let relevance = net.relevance_distribution(params, view);
    let q = net.expected_q(params, view, &relevance)?;
    Ok(0.5 * (q - reward).powi(2))
}

/// `∂e/∂w = (Q−R)·Σ_i p_i f_i` and `∂e/∂u = (Q−R)·Σ_i p_i Q_i (φ_i − Σ_k p_k φ_k)`.
pub fn expectation_gradient(
    net: &Network,
    params: &Params,
    view: &AttributeView,
    reward: f64,
) -> Result<ExpectationGradient, ModelError> {
    let relevance = net.relevance_distribution(params, view);
    let fs = net.expectation_features(params, view)?;
    let phis: Vec<SparseVector> = net
        .doc
        .sentences
        .iter()
        .map(|s| net.space.phi_relevance(s, view))
        .collect();
    let qs: Vec<f64> = fs.iter().map(|f| params.dot(f)).collect();
    let q: f64 = relevance.iter().zip(&qs).map(|(p, q)| p * q).sum();
    let err = q - reward;
    let mut w = Vec::new();
    for (p, f) in relevance.iter().zip(&fs) {
        for (id, x) in f.iter() {
            accumulate(&mut w, id, err * p * x);
        }
    }
    let mut mean_phi = Vec::new();
    for (p, phi) in relevance.iter().zip(&phis) {
        for (id, x) in phi.iter() {
            accumulate(&mut mean_phi, id, p * x);
        }
    }
    let mut u: Vec<(FeatureId, f64)> = mean_phi.iter().map(|(id, _)| (*id, 0.0)).collect();
    for ((p, phi), qi) in relevance.iter().zip(&phis).zip(&qs) {
        for (id, m) in &mean_phi {
            let g = err * p * qi * (phi.get(*id) - m);
            accumulate(&mut u, *id, g);
        }
    }
    Ok(ExpectationGradient {
        error: 0.5 * err * err,
        q,
        u,
        w,
    })
}

/// `Q_z = (w·f(y, z))·∏_j p(z_j)` for a fixed sentence and labeling.
fn frozen_labeling_q(
    net: &Network,
    params: &Params,
    view: &AttributeView,
    sentence: usize,
    z: &[Label],
) -> Result<f64, ModelError> {
    let s = &net.doc.sentences[sentence];
    let f = net.features(view, s, z)?;
    let mut prob = 1.0;
    for (j, l) in z.iter().enumerate() {
        prob *= net.label_distribution(params, s, j)[l.index()];
    }
    Ok(params.dot(&f) * prob)
}

/// `∂Q_z/∂v = Q_z·Σ_j [ψ(z_j, j) − Σ_e p(e|j) ψ(e, j)]`.
fn frozen_labeling_gradient(
    net: &Network,
    params: &Params,
    view: &AttributeView,
    sentence: usize,
    z: &[Label],
    reward: f64,
) -> Result<Vec<(FeatureId, f64)>, ModelError> {
    let s = &net.doc.sentences[sentence];
    let qz = frozen_labeling_q(net, params, view, sentence, z)?;
    let err = qz - reward;
    let mut g = Vec::new();
    for (j, zl) in z.iter().enumerate() {
        let dist = net.label_distribution(params, s, j);
        for l in Label::ALL {
            let coef = f64::from(u8::from(l == *zl)) - dist[l.index()];
            for (id, x) in net.space.psi_predicate(l, j, s, net.mask)?.iter() {
                accumulate(&mut g, id, err * qz * coef * x);
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameter with the largest error: (id, analytic, numeric).
    pub worst: Option<(FeatureId, f64, f64)>,
}

/// Floor of the relative-error denominator, so vanishing gradients compare absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares the exact gradient against central differences with step `h` over every
/// touched parameter: u and w on the expectation objective, v on the frozen-labeling
/// objective of the most relevant sentence.
pub fn grad_check(
    net: &Network,
    params: &Params,
    view: &AttributeView,
    reward: f64,
    h: f64,
) -> Result<GradCheckReport, ModelError> {
    let grad = expectation_gradient(net, params, view, reward)?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut p = params.clone();
    let mut check = |report: &mut GradCheckReport,
                     id: FeatureId,
                     analytic: f64,
                     objective: &dyn Fn(&Params) -> Result<f64, ModelError>|
     -> Result<(), ModelError> {
        let orig = p.get(id);
        p.set(id, orig + h);
        let plus = objective(&p)?;
        p.set(id, orig - h);
        let minus = objective(&p)?;
        p.set(id, orig);
        let numeric = (plus - minus) / (2.0 * h);
        let e = relative_error(analytic, numeric);
        report.checked += 1;
        if e >= report.max_relative_error {
            report.max_relative_error = e;
            report.worst = Some((id, analytic, numeric));
        }
        Ok(())
    };
    let expectation = |q: &Params| expectation_objective(net, q, view, reward);
    for (id, g) in grad.u.iter().chain(&grad.w) {
        check(&mut report, *id, *g, &expectation)?;
    }
    if net.text == TextMode::Labeled && !net.doc.is_empty() {
        let relevance = net.relevance_distribution(params, view);
        let i = argmax_index(&relevance);
        let z = net.argmax_labeling(params, &net.doc.sentences[i]);
        let gv = frozen_labeling_gradient(net, params, view, i, &z, reward)?;
        let frozen = |q: &Params| -> Result<f64, ModelError> {
            let qz = frozen_labeling_q(net, q, view, i, &z)?;
            Ok(0.5 * (qz - reward).powi(2))
        };
        for (id, g) in &gv {
            check(&mut report, *id, *g, &frozen)?;
        }
    }
    Ok(report)
}

/// Most active features allowed per family in a random grad-check instance.
pub const GRAD_CHECK_MAX_FEATURES: usize = 50;

/// A small random network, parameter vector, view and reward for gradient checking:
/// at most five sentences of at most three words, and at most
/// [`GRAD_CHECK_MAX_FEATURES`] active features in each family.
pub fn random_instance(seed: u64) -> (Network, Params, AttributeView, f64) {
    const WORDS: [&str; 10] = [
        "build", "city", "river", "settlers", "near", "the", "attack", "hills", "gold", "bank",
    ];
    const TAGS: [&str; 4] = ["VB", "NN", "DT", "IN"];
    const DEPS: [&str; 3] = ["dobj", "prep", "det"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(1..=5);
        let sentences: Vec<Sentence> = (0..n)
            .map(|id| {
                let len = rng.gen_range(1..=3);
                let tokens = (0..len)
                    .map(|j| {
                        Token::new(
                            WORDS[rng.gen_range(0..WORDS.len())],
                            TAGS[rng.gen_range(0..TAGS.len())],
                            j as i32 - 1,
                            if j == 0 {
                                "root"
                            } else {
                                DEPS[rng.gen_range(0..DEPS.len())]
                            },
                        )
                    })
                    .collect();
                Sentence {
                    id,
                    source: Source::Manual,
                    tokens,
                    gold_labels: None,
                }
            })
            .collect();
        let doc = Document::new(sentences);
        let space = Arc::new(FeatureSpace::build(&[&doc], &SeedVocabulary::bundled()));
        let enc = Arc::new(space.encode_document(&doc).expect("symbols interned"));
        let pick_attr = |rng: &mut ChaCha8Rng| Attr::ALL[rng.gen_range(0..Attr::COUNT)];
        let tile = AttrSet::of(&[pick_attr(&mut rng)]);
        let neighborhood = AttrSet(tile.0 | AttrSet::of(&[pick_attr(&mut rng)]).0);
        let view = AttributeView::bare(
            ActorKind::ALL[rng.gen_range(0..ActorKind::COUNT)],
            Verb::ALL[rng.gen_range(0..Verb::COUNT)],
            tile,
            neighborhood,
        );
        let net = Network::new(space.clone(), enc.clone(), TextMode::Labeled, PsiMask::ALL);
        let mut active: [Vec<FeatureId>; 3] = Default::default();
        for s in &enc.sentences {
            active[0].extend(space.phi_relevance(s, &view).ids());
            for j in 0..s.len() {
                for l in Label::ALL {
                    active[1].extend(space.psi_predicate(l, j, s, PsiMask::ALL).unwrap().ids());
                }
            }
            for l in Label::ALL {
                let z = vec![l; s.len()];
                active[2].extend(space.f_action_value(&view, Some((s, Some(&z)))).unwrap().ids());
            }
        }
        for a in &mut active {
            a.sort_unstable();
            a.dedup();
        }
        if active.iter().any(|a| a.len() > GRAD_CHECK_MAX_FEATURES) {
            continue;
        }
        let mut params = Params::zeros(&space);
        for id in active.iter().flatten() {
            params.set(*id, rng.gen_range(-0.5..0.5));
        }
        let reward = rng.gen_range(0.0..3.0);
        return (net, params, view, reward);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(words: &[&[&str]], text: TextMode) -> (Network, Params) {
        let sentences = words
            .iter()
            .enumerate()
            .map(|(id, ws)| Sentence {
                id,
                source: Source::Manual,
                tokens: ws
                    .iter()
                    .enumerate()
                    .map(|(j, w)| Token::new(w, "NN", j as i32 - 1, if j == 0 { "root" } else { "dep" }))
                    .collect(),
                gold_labels: None,
            })
            .collect();
        let doc = Document::new(sentences);
        let space = Arc::new(FeatureSpace::build(&[&doc], &SeedVocabulary::bundled()));
        let enc = Arc::new(space.encode_document(&doc).unwrap());
        let params = Params::zeros(&space);
        (Network::new(space, enc, text, PsiMask::ALL), params)
    }

    fn view() -> AttributeView {
        AttributeView::bare(
            ActorKind::Settler,
            Verb::BuildCity,
            AttrSet::of(&[Attr::River]),
            AttrSet::of(&[Attr::River, Attr::Grassland]),
        )
    }

    #[test]
    fn zero_u_gives_uniform_relevance() {
        let (net, params) = tiny_net(&[&["build"], &["city"], &["river"], &["bank"]], TextMode::Labeled);
        let p = net.relevance_distribution(&params, &view());
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_sentence_has_probability_one() {
        let (net, mut params) = tiny_net(&[&["build", "city"]], TextMode::Labeled);
        let w = net.space.word_id("build").unwrap();
        params.set(net.space.rel_word_id(w), 3.7);
        let t = net.forward(&params, &view(), ForwardMode::Argmax).unwrap();
        assert_eq!(t.relevance_prob, 1.0);
    }

    #[test]
    fn ln3_score_gap_gives_three_to_one() {
        let (net, mut params) = tiny_net(&[&["gold"], &["bank"]], TextMode::Labeled);
        let w = net.space.word_id("gold").unwrap();
        params.set(net.space.rel_word_id(w), 3f64.ln());
        let p = net.relevance_distribution(&params, &view());
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn q_value_examples() {
        let (net, mut params) = tiny_net(&[&["gold"]], TextMode::None);
        let a = net.space.game_action_id(ActorKind::Settler, Verb::BuildCity);
        let b = net.space.game_action_id(ActorKind::Worker, Verb::Mine);
        let c = net.space.game_action_id(ActorKind::City, Verb::Skip);
        let f: SparseVector = [(a, 3.0), (b, 1.0), (c, 9.0)].into_iter().collect();
        assert_eq!(q_value(&params, &f), 0.0);
        params.set(a, 2.5);
        let one: SparseVector = [(a, 1.0)].into_iter().collect();
        assert_eq!(q_value(&params, &one), 2.5);
        params.set(a, 1.0);
        params.set(b, -2.0);
        assert_eq!(q_value(&params, &f), 1.0);
    }

    #[test]
    fn update_is_noop_when_q_equals_reward() {
        let (net, params) = tiny_net(&[&["build", "city"], &["bank"]], TextMode::Labeled);
        let t = net.forward(&params, &view(), ForwardMode::Argmax).unwrap();
        let mut p = params.clone();
        update(&mut p, &t, t.q, &UpdateConfig::default()).unwrap();
        assert_eq!(p, params);
    }

    #[test]
    fn w_update_magnitude_and_sparsity() {
        let (net, params) = tiny_net(&[&["build", "city"], &["bank"]], TextMode::Labeled);
        let t = net.forward(&params, &view(), ForwardMode::Argmax).unwrap();
        let mut p = params.clone();
        let cfg = UpdateConfig {
            alpha_w: 0.01,
            ..UpdateConfig::default()
        };
        update(&mut p, &t, 2.0, &cfg).unwrap();
        for (id, x) in t.f.iter() {
            assert!((p.get(id) - 0.01 * 2.0 * x).abs() < 1e-15);
        }
        let touched: Vec<FeatureId> = Family::ALL.iter().flat_map(|f| p.nonzero(*f)).map(|(i, _)| i).collect();
        assert!(touched.iter().all(|id| t.f.get(*id) != 0.0 || t.phi.get(*id) != 0.0
            || t.psi.iter().any(|v| v.get(*id) != 0.0)));
    }

    #[test]
    fn non_finite_reward_rejected() {
        let (net, params) = tiny_net(&[&["bank"]], TextMode::Labeled);
        let t = net.forward(&params, &view(), ForwardMode::Argmax).unwrap();
        let mut p = params.clone();
        assert!(matches!(
            update(&mut p, &t, f64::INFINITY, &UpdateConfig::default()),
            Err(ModelError::NonFiniteReward(_))
        ));
    }

    #[test]
    fn empty_document_is_a_config_error() {
        let (net, params) = tiny_net(&[], TextMode::Labeled);
        assert!(matches!(
            net.forward(&params, &view(), ForwardMode::Argmax),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn symmetric_two_sentence_u_gradient_is_opposite() {
        let (net, mut params) = tiny_net(&[&["gold"], &["bank"]], TextMode::Labeled);
        let g = net.space.word_id("gold").unwrap();
        let b = net.space.word_id("bank").unwrap();
        // make the two sentences score differently under w only
        let v = view();
        let s0 = net.space.f_action_value(&v, Some((&net.doc.sentences[0], Some(&[Label::Action])))).unwrap();
        for (id, _) in s0.iter() {
            if net.space.text_feature_word(id) == Some(g) {
                params.set(id, 0.3);
            }
        }
        let grad = expectation_gradient(&net, &params, &v, 1.0).unwrap();
        let gu = |id| grad.u.iter().find(|(i, _)| *i == id).unwrap().1;
        let (a, c) = (gu(net.space.rel_word_id(g)), gu(net.space.rel_word_id(b)));
        assert!(a != 0.0);
        assert!((a + c).abs() < 1e-15);
    }

    #[test]
    fn w_gradient_is_error_times_expected_features() {
        let (net, params, view, reward) = random_instance(11);
        let grad = expectation_gradient(&net, &params, &view, reward).unwrap();
        let rel = net.relevance_distribution(&params, &view);
        let fs = net.expectation_features(&params, &view).unwrap();
        for (id, g) in &grad.w {
            let ef: f64 = rel.iter().zip(&fs).map(|(p, f)| p * f.get(*id)).sum();
            assert!((g - (grad.q - reward) * ef).abs() <= 1e-15 * g.abs().max(1.0));
        }
    }

    #[test]
    fn grad_check_passes_on_random_instances() {
        for seed in 0..20 {
            let (net, params, view, reward) = random_instance(seed);
            let r = grad_check(&net, &params, &view, reward, 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "seed {seed}: {r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn params_round_trip_bit_exactly() {
        let (_, params, _, _) = random_instance(3);
        let text = params.serialize();
        let back = Params::parse(&text).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.serialize(), text);
        assert!(Params::parse("nope").is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let (net, params, view, _) = random_instance(5);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            net.forward(&params, &view, ForwardMode::Sample(&mut rng)).unwrap()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn expectation_mode_averages_sentence_values() {
        let (net, params, view, _) = random_instance(8);
        let t = net.forward(&params, &view, ForwardMode::Expectation).unwrap();
        let rel = net.relevance_distribution(&params, &view);
        assert!((t.q - net.expected_q(&params, &view, &rel).unwrap()).abs() < 1e-15);
    }
}
