use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use textstrat_core::corpus::{Document, SeedVocabulary, Sentence, Source, Token};
use textstrat_core::features::{
    ActorKind, Attr, AttrSet, AttributeView, Family, FeatureId, FeatureSpace, PsiMask,
};
use textstrat_core::model::{
    random_instance, sample_index, softmax, update, ForwardMode, Network, Params, SignMode,
    TextMode, UpdateConfig,
};
use textstrat_core::simulator::Verb;

const NORM_TOL: f64 = 1e-12;

fn scaled_output(params: &Params, c: f64) -> Params {
    let mut p = params.clone();
    let ids: Vec<(FeatureId, f64)> = params.nonzero(Family::Value).collect();
    for (id, x) in ids {
        p.set(id, c * x);
    }
    p
}

/// A document whose sentences all contain the word "the", so a relevance weight on
/// that word is shared by every sentence.
fn shared_word_network(words: &[Vec<usize>]) -> (Network, FeatureSpace) {
    const POOL: [&str; 6] = ["build", "city", "river", "attack", "hills", "road"];
    let sentences = words
        .iter()
        .enumerate()
        .map(|(id, ws)| {
            let mut tokens = vec![Token::new("the", "DT", -1, "root")];
            tokens.extend(ws.iter().map(|w| Token::new(POOL[*w], "NN", 0, "dep")));
            Sentence {
                id,
                source: Source::Manual,
                tokens,
                gold_labels: None,
            }
        })
        .collect();
    let doc = Document::new(sentences);
    let space = FeatureSpace::build(&[&doc], &SeedVocabulary::bundled());
    let enc = Arc::new(space.encode_document(&doc).unwrap());
    let shared = Arc::new(space.clone());
    (
        Network::new(shared, enc, TextMode::Labeled, PsiMask::ALL),
        space,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_normalizes(scores in prop::collection::vec(-700.0f64..700.0, 1..40)) {
        let p = softmax(&scores);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() <= NORM_TOL, "sum {}", total);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn network_distributions_normalize(seed in any::<u64>()) {
        let (net, params, view, _) = random_instance(seed);
        let rel = net.relevance_distribution(&params, &view);
        prop_assert!((rel.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL);
        for s in &net.doc.sentences {
            for j in 0..s.len() {
                let d = net.label_distribution(&params, s, j);
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL);
            }
        }
    }

    #[test]
    fn positive_output_scaling_keeps_argmax_choices(seed in any::<u64>(), c in 0.01f64..100.0) {
        let (net, params, view, _) = random_instance(seed);
        let scaled = scaled_output(&params, c);
        let best = |p: &Params| {
            let mut qs = Vec::new();
            let mut choices = Vec::new();
            for verb in Verb::ALL {
                let v = AttributeView { verb, ..view.clone() };
                let t = net.forward(p, &v, ForwardMode::Argmax).unwrap();
                qs.push(t.q);
                choices.push((t.chosen_sentence, t.labeling));
            }
            (qs, choices)
        };
        let (q1, c1) = best(&params);
        let (q2, c2) = best(&scaled);
        prop_assert_eq!(c1, c2);
        // Every clearly separated pair keeps its order; scaling is exact up to rounding.
        for i in 0..q1.len() {
            for j in 0..q1.len() {
                if q1[i] - q1[j] > 1e-9 * q1[i].abs().max(1.0) {
                    prop_assert!(q2[i] > q2[j]);
                }
            }
        }
    }

    #[test]
    fn shared_relevance_shift_leaves_distribution(
        words in prop::collection::vec(prop::collection::vec(0usize..6, 0..3), 1..6),
        shift in -5.0f64..5.0,
        weights in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let (net, space) = shared_word_network(&words);
        let view = AttributeView::bare(
            ActorKind::Settler,
            Verb::BuildCity,
            AttrSet::of(&[Attr::ALL[0]]),
            AttrSet::default(),
        );
        let mut params = Params::zeros(&space);
        for (i, w) in ["build", "city", "river", "attack", "hills", "road"].iter().enumerate() {
            if let Some(id) = space.word_id(w) {
                params.set(space.rel_word_id(id), weights[i]);
            }
        }
        let before = net.relevance_distribution(&params, &view);
        let the = space.word_id("the").unwrap();
        params.add(space.rel_word_id(the), shift);
        let after = net.relevance_distribution(&params, &view);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn update_touches_only_active_features(seed in any::<u64>(), reward in -5.0f64..5.0, draw in any::<u64>()) {
        let (net, params, view, _) = random_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let trace = net.forward(&params, &view, ForwardMode::Sample(&mut rng)).unwrap();
        let mut next = params.clone();
        let cfg = UpdateConfig { alpha_w: 0.1, alpha_u: 0.1, alpha_v: 0.1, sign_mode: SignMode::Descent };
        update(&mut next, &trace, reward, &cfg).unwrap();
        let mut active: Vec<FeatureId> = trace.f.ids().chain(trace.phi.ids()).collect();
        for psi in &trace.psi {
            active.extend(psi.ids());
        }
        for fam in Family::ALL {
            for (id, _) in next.nonzero(fam).chain(params.nonzero(fam)) {
                if next.get(id).to_bits() != params.get(id).to_bits() {
                    prop_assert!(active.contains(&id), "feature {:?} changed but inactive", id);
                }
            }
        }
    }
}

/// Empirical sentence frequencies of sample-mode forward passes over 10^5 draws stay
/// within three binomial standard deviations of the relevance distribution.
#[test]
fn sampled_sentences_follow_relevance_distribution() {
    const DRAWS: usize = 100_000;
    let mut checked = 0;
    for seed in 0..200u64 {
        let (net, params, view, _) = random_instance(seed);
        let p = net.relevance_distribution(&params, &view);
        if p.len() < 3 {
            continue;
        }
        let mut counts = vec![0usize; p.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..DRAWS {
            let t = net
                .forward(&params, &view, ForwardMode::Sample(&mut rng))
                .unwrap();
            counts[t.chosen_sentence.unwrap()] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let mean = DRAWS as f64 * p[i];
            let sd = (DRAWS as f64 * p[i] * (1.0 - p[i])).sqrt();
            assert!(
                (*c as f64 - mean).abs() <= 3.0 * sd,
                "instance {seed} sentence {i}: {c} vs {mean:.1} ± {sd:.1}"
            );
        }
        checked += 1;
        if checked == 3 {
            break;
        }
    }
    assert_eq!(checked, 3);
}

#[test]
fn sample_index_frequencies_within_three_sigma() {
    const DRAWS: usize = 100_000;
    let p = [0.05, 0.15, 0.3, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0usize; 4];
    for _ in 0..DRAWS {
        counts[sample_index(&p, &mut rng)] += 1;
    }
    for i in 0..4 {
        let mean = DRAWS as f64 * p[i];
        let sd = (mean * (1.0 - p[i])).sqrt();
        assert!((counts[i] as f64 - mean).abs() <= 3.0 * sd, "{i}: {}", counts[i]);
    }
}
