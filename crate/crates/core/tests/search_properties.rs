use proptest::prelude::*;

use textstrat_core::corpus::{Document, SeedVocabulary};
use textstrat_core::search::{derive_seed, play_game, Agent, SearchConfig, Variant};

fn desk(variant: Variant) -> SearchConfig {
    let mut cfg = SearchConfig {
        variant,
        ..SearchConfig::default()
    };
    cfg.alpha.alpha_w = 3e-3;
    cfg.alpha.alpha_u = 1.0;
    cfg.alpha.alpha_v = 1.0;
    cfg
}

fn agent(cfg: SearchConfig, seed: u64) -> Agent {
    Agent::new(
        cfg,
        &Document::bundled_manual(),
        &SeedVocabulary::bundled(),
        seed,
    )
    .unwrap()
}

/// Learning within one actual step pays off: averaged over games, the last quarter of
/// the step's roll-outs scores at least as well as the first quarter. Checked at the
/// default learning rates.
#[test]
fn later_rollouts_score_no_worse_than_early_ones() {
    const SEEDS: u64 = 20;
    let cfg = SearchConfig {
        game_steps: 1,
        ..SearchConfig::default()
    };
    assert_eq!(cfg.variant, Variant::Full);
    let (mut first, mut last) = (0.0, 0.0);
    for seed in 1..=SEEDS {
        let rec = play_game(&agent(cfg.clone(), seed), seed).unwrap();
        let u = &rec.steps[0].rollout_utilities;
        assert_eq!(u.len(), cfg.rollouts_per_step);
        let q = u.len() / 4;
        first += u[..q].iter().sum::<f64>() / q as f64;
        last += u[u.len() - q..].iter().sum::<f64>() / q as f64;
    }
    println!("first quarter mean {:.3}, last quarter mean {:.3}", first / SEEDS as f64, last / SEEDS as f64);
    assert!(last >= first, "last {last} < first {first}");
}

fn tiny(variant: Variant) -> SearchConfig {
    SearchConfig {
        rollouts_per_step: 3,
        rollout_depth: 3,
        game_steps: 2,
        ..desk(variant)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn games_are_deterministic_per_seed(seed in any::<u64>(), v in 0usize..3) {
        let variant = [Variant::Full, Variant::LatentVariable, Variant::GameOnlyLinear][v];
        let a = agent(tiny(variant), seed);
        let x = play_game(&a, seed).unwrap();
        let y = play_game(&a, seed).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn records_respect_budgets(seed in any::<u64>()) {
        let cfg = tiny(Variant::Full);
        let rec = play_game(&agent(cfg.clone(), seed), seed).unwrap();
        prop_assert!(rec.steps_played() <= cfg.game_steps);
        for s in &rec.steps {
            prop_assert_eq!(s.rollout_utilities.len(), cfg.rollouts_per_step);
            prop_assert!(s.rollout_utilities.iter().all(|u| u.is_finite() && *u >= 0.0));
        }
    }

    #[test]
    fn derived_seeds_separate_rollouts(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assert_eq!(derive_seed(master, a, b), derive_seed(master, a, b));
        prop_assert_ne!(derive_seed(master, a, b), derive_seed(master, a, b + 1));
        prop_assert_ne!(derive_seed(master, a, b), derive_seed(master, a + 1, b));
    }
}
