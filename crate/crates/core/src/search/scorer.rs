//! Forward passes for roll-outs.
//!
//! Parameters are fixed for the whole of a roll-out (updates run after truncation), so
//! the cached scorer memoizes everything that depends only on the parameters: per-sentence
//! partial relevance scores split by how they depend on the view, whole relevance
//! distributions per view key, and per-token label distributions. Random draws are made
//! in the same order as [`Network::forward`], so both scorers choose the same sentences
//! and labelings from the same generator.

use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::corpus::Label;
use crate::features::{ActorKind, Attr, AttrSet, AttributeView, SparseVector};
use crate::model::{
    sample_index, softmax_into, ForwardMode, ForwardTrace, ModelError, Network, Params,
    TextMode,
};
use crate::simulator::Verb;

/// Sample-mode forward pass. `score` may leave `phi`, `psi` and `relevance` empty;
/// `complete` fills them for the candidate that is actually taken.
pub(crate) trait Scorer {
    fn score(
        &mut self,
        view: &AttributeView,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace, ModelError>;

    fn complete(&mut self, view: &AttributeView, trace: ForwardTrace) -> ForwardTrace;
}

/// Straight calls to [`Network::forward`].
pub(crate) struct ReferenceScorer<'a> {
    pub net: &'a Network,
    pub params: &'a Params,
}

impl Scorer for ReferenceScorer<'_> {
    fn score(
        &mut self,
        view: &AttributeView,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace, ModelError> {
        self.net.forward(self.params, view, ForwardMode::Sample(rng))
    }

    fn complete(&mut self, _: &AttributeView, trace: ForwardTrace) -> ForwardTrace {
        trace
    }
}

type RelevanceKey = (ActorKind, Verb, AttrSet, AttrSet);

pub(crate) struct CachedScorer<'a> {
    net: &'a Network,
    params: &'a Params,
    /// Per sentence: word weights plus the unit×word weights for every actor kind.
    base: Vec<f64>,
    unit: Vec<[f64; ActorKind::COUNT]>,
    action: Vec<Option<Vec<f64>>>,
    tile: FxHashMap<(Verb, Attr), Vec<f64>>,
    overlap_weight: f64,
    relevance: FxHashMap<RelevanceKey, Vec<f64>>,
    labels: Vec<Option<Vec<[f64; 3]>>>,
    scores: Vec<f64>,
}

impl<'a> CachedScorer<'a> {
    pub fn new(net: &'a Network, params: &'a Params) -> CachedScorer<'a> {
        let space = &net.space;
        let mut base = Vec::new();
        let mut unit = Vec::new();
        if net.text != TextMode::None {
            for s in &net.doc.sentences {
                base.push(s.distinct.iter().map(|&w| params.get(space.rel_word_id(w))).sum());
                let mut u = [0.0; ActorKind::COUNT];
                for a in ActorKind::ALL {
                    u[a.index()] = s
                        .distinct
                        .iter()
                        .map(|&w| params.get(space.rel_unit_word_id(a, w)))
                        .sum();
                }
                unit.push(u);
            }
        }
        CachedScorer {
            net,
            params,
            base,
            unit,
            action: vec![None; Verb::COUNT],
            tile: FxHashMap::default(),
            overlap_weight: if space.vocab_enabled() {
                params.get(space.rel_overlap_id())
            } else {
                0.0
            },
            relevance: FxHashMap::default(),
            labels: vec![None; net.doc.len()],
            scores: Vec::new(),
        }
    }

    fn per_sentence(&self, f: impl Fn(u32) -> f64) -> Vec<f64> {
        self.net
            .doc
            .sentences
            .iter()
            .map(|s| s.distinct.iter().map(|&w| f(w)).sum())
            .collect()
    }

    fn relevance(&mut self, view: &AttributeView) -> &[f64] {
        let key = view.relevance_key();
        if !self.relevance.contains_key(&key) {
            let (space, params) = (&self.net.space, self.params);
            let v = view.verb;
            if self.action[v.ordinal()].is_none() {
                self.action[v.ordinal()] =
                    Some(self.per_sentence(|w| params.get(space.rel_action_word_id(v, w))));
            }
            for t in view.tile.iter() {
                if !self.tile.contains_key(&(v, t)) {
                    let row = self.per_sentence(|w| {
                        params.get(space.rel_action_tile_word_id(v, t, w))
                    });
                    self.tile.insert((v, t), row);
                }
            }
            let mask = space.view_label_mask(view);
            let action = self.action[v.ordinal()].as_ref().unwrap();
            self.scores.clear();
            for (i, s) in self.net.doc.sentences.iter().enumerate() {
                let mut x = self.base[i] + self.unit[i][view.actor.index()] + action[i];
                for t in view.tile.iter() {
                    x += self.tile[&(v, t)][i];
                }
                if self.overlap_weight != 0.0 {
                    x += self.overlap_weight * s.overlap(mask) as f64;
                }
                self.scores.push(x);
            }
            let mut dist = Vec::with_capacity(self.scores.len());
            softmax_into(&self.scores, &mut dist);
            self.relevance.insert(key, dist);
        }
        &self.relevance[&key]
    }

    fn label_dists(&mut self, i: usize) -> &[[f64; 3]] {
        if self.labels[i].is_none() {
            let s = &self.net.doc.sentences[i];
            self.labels[i] = Some(
                (0..s.len())
                    .map(|j| self.net.label_distribution(self.params, s, j))
                    .collect(),
            );
        }
        self.labels[i].as_deref().unwrap()
    }
}

impl Scorer for CachedScorer<'_> {
    fn score(
        &mut self,
        view: &AttributeView,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace, ModelError> {
        let net = self.net;
        if net.text == TextMode::None {
            let f = net.space.f_action_value(view, None)?;
            let q = self.params.dot(&f);
            return Ok(game_only_trace(f, q));
        }
        if net.doc.is_empty() {
            return Err(ModelError::Config(
                "text-aware network needs a non-empty document".into(),
            ));
        }
        let rel = self.relevance(view);
        let i = sample_index(rel, rng);
        let relevance_prob = rel[i];
        let (mut labeling, mut label_probs) = (Vec::new(), Vec::new());
        if net.text == TextMode::Labeled {
            for dist in self.label_dists(i) {
                let e = sample_index(dist, rng);
                labeling.push(Label::ALL[e]);
                label_probs.push(dist[e]);
            }
        }
        let f = net.features(view, &net.doc.sentences[i], &labeling)?;
        let q = self.params.dot(&f);
        Ok(ForwardTrace {
            chosen_sentence: Some(i),
            relevance_prob,
            relevance: Vec::new(),
            phi: SparseVector::new(),
            labeling,
            label_probs,
            psi: Vec::new(),
            f,
            q,
            q_hat: q * relevance_prob,
        })
    }

    fn complete(&mut self, view: &AttributeView, mut t: ForwardTrace) -> ForwardTrace {
        let Some(i) = t.chosen_sentence else {
            return t;
        };
        let net = self.net;
        let s = &net.doc.sentences[i];
        t.phi = net.space.phi_relevance(s, view);
        t.psi = t
            .labeling
            .iter()
            .enumerate()
            .map(|(j, l)| {
                net.space
                    .psi_predicate(*l, j, s, net.mask)
                    .expect("token index in range")
            })
            .collect();
        t.relevance = self.relevance(view).to_vec();
        t
    }
}

fn game_only_trace(f: SparseVector, q: f64) -> ForwardTrace {
    ForwardTrace {
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
    }
}
