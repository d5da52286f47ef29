use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use textstrat_core::corpus::{
    parse_document, randomize_document, serialize_document, subsample_document, Document, Label,
    SeedVocabulary,
};
use textstrat_core::features::{ActorContext, FeatureSpace, NationSummary, PsiMask, SparseVector};
use textstrat_core::simulator::{legal_actions, new_game, step, GameConfig, GameState, JointAction, AGENT};

fn word_counts(doc: &Document) -> FxHashMap<String, usize> {
    let mut m = FxHashMap::default();
    for w in doc.sentences.iter().flat_map(|s| s.words()) {
        *m.entry(w.to_string()).or_insert(0) += 1;
    }
    m
}

fn played(seed: u64, steps: usize) -> GameState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = new_game(seed, &GameConfig::default()).unwrap();
    for _ in 0..steps {
        if s.is_terminal() {
            break;
        }
        let entries = s
            .actors_of(AGENT)
            .into_iter()
            .map(|a| {
                let l = legal_actions(&s, a).unwrap();
                l[rng.gen_range(0..l.len())]
            })
            .collect();
        s = step(&s, &JointAction { entries }).unwrap().state;
    }
    s
}

/// Values must be 0/1, except overlap counts (non-negative integers) and the scaled
/// numeric game features.
fn check_values(space: &FeatureSpace, v: &SparseVector) -> Result<(), String> {
    for (id, x) in v.iter() {
        let d = space.describe(id);
        let ok = if d.starts_with("g.numeric") {
            x.is_finite()
        } else if d.starts_with("rel.overlap") {
            x >= 0.0 && x.fract() == 0.0
        } else {
            x == 1.0
        };
        if !ok {
            return Err(format!("{d} = {x}"));
        }
    }
    Ok(())
}

#[test]
fn bundled_gold_lengths_match_tokens() {
    for doc in [Document::bundled_manual(), Document::bundled_distractors()] {
        for s in &doc.sentences {
            if let Some(g) = &s.gold_labels {
                assert_eq!(g.len(), s.tokens.len(), "sentence {}", s.id);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn randomize_preserves_lengths_and_word_multiset(seed in any::<u64>()) {
        let doc = Document::bundled_manual();
        let r = randomize_document(&doc, seed);
        prop_assert_eq!(r.len(), doc.len());
        for (a, b) in doc.sentences.iter().zip(&r.sentences) {
            prop_assert_eq!(a.tokens.len(), b.tokens.len());
        }
        prop_assert_eq!(word_counts(&r), word_counts(&doc));
    }

    #[test]
    fn load_serialize_load_is_a_fixed_point(seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let doc = subsample_document(&randomize_document(&Document::bundled_manual(), seed), frac, seed);
        let text = serialize_document(&doc);
        let back = parse_document(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_document(&back), text);
    }

    #[test]
    fn feature_values_are_binary_or_counts(seed in 0u64..500, n in 0usize..20, vocab in any::<bool>()) {
        let doc = Document::bundled_manual();
        let v = if vocab { SeedVocabulary::bundled() } else { SeedVocabulary::empty() };
        let space = FeatureSpace::build(&[&doc], &v);
        let enc = space.encode_document(&doc).unwrap();
        let state = played(seed, n);
        prop_assume!(!state.is_terminal());
        let nation = NationSummary::new(&state, AGENT);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actors = state.actors_of(AGENT);
        let actor = actors[rng.gen_range(0..actors.len())];
        let ctx = ActorContext::new(&state, AGENT, &nation, actor).unwrap();
        let legal = legal_actions(&state, actor).unwrap();
        let view = ctx.view(legal[rng.gen_range(0..legal.len())].verb);
        let s = &enc.sentences[rng.gen_range(0..enc.len())];

        let phi = space.phi_relevance(s, &view);
        prop_assert_eq!(&phi, &space.phi_relevance(s, &view));
        check_values(&space, &phi).map_err(TestCaseError::fail)?;
        let labels: Vec<Label> = (0..s.len()).map(|_| Label::ALL[rng.gen_range(0..3)]).collect();
        for (j, l) in labels.iter().enumerate() {
            let psi = space.psi_predicate(*l, j, s, PsiMask::ALL).unwrap();
            prop_assert_eq!(&psi, &space.psi_predicate(*l, j, s, PsiMask::ALL).unwrap());
            check_values(&space, &psi).map_err(TestCaseError::fail)?;
            if !vocab {
                prop_assert!(psi.ids().all(|id| !space.describe(id).contains("matches")));
            }
        }
        let f = space.f_action_value(&view, Some((s, Some(&labels)))).unwrap();
        prop_assert_eq!(&f, &space.f_action_value(&view, Some((s, Some(&labels)))).unwrap());
        check_values(&space, &f).map_err(TestCaseError::fail)?;
        prop_assert!(!f.has_duplicate_ids() && !phi.has_duplicate_ids());
        if !vocab {
            prop_assert!(phi.ids().all(|id| !space.describe(id).starts_with("rel.overlap")));
        }
    }
}
