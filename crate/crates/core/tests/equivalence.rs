//! Randomized prompt-equivalence trials on linear GNNs.

use leap_core::theorem::{necessity_trial, sufficiency_trial, TrialKind, TrialSpace, MAX_TRIAL_CONDITION};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tolerance(kind: TrialKind) -> f64 {
    match kind {
        TrialKind::FeatureMod => 1e-12,
        TrialKind::StructureMod => 1e-8,
        TrialKind::ComponentAdd => 1e-6,
        TrialKind::Necessity => 1e-9,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_manipulation_has_an_equivalent_prompt(seed in any::<u64>(), layers in 1usize..=3) {
        let space = TrialSpace { max_layers: layers, ..TrialSpace::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in [TrialKind::FeatureMod, TrialKind::StructureMod, TrialKind::ComponentAdd] {
            let r = sufficiency_trial(&mut rng, &space, kind).unwrap();
            prop_assert!(r.solvable, "{:?}", r);
            prop_assert!(r.residual <= tolerance(kind), "{:?}", r);
            prop_assert!((space.min_nodes..=space.max_nodes).contains(&r.nodes));
            prop_assert!((1..=layers).contains(&r.layers));
            if kind == TrialKind::StructureMod {
                prop_assert!(r.condition.unwrap() <= MAX_TRIAL_CONDITION);
            } else {
                prop_assert!(r.condition.is_none());
            }
        }
    }

    #[test]
    fn only_the_forced_prompt_reproduces_the_edit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = necessity_trial(&mut rng, &TrialSpace::default()).unwrap();
        prop_assert!(t.residual_at_forced <= tolerance(TrialKind::Necessity), "{:?}", t);
        prop_assert!(t.perturbation >= 0.1);
        prop_assert!(t.residual_perturbed > 1e-3, "{:?}", t);
        prop_assert!(!t.perturbed_consistent);
    }
}

#[test]
fn necessity_is_not_a_sufficiency_trial() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sufficiency_trial(&mut rng, &TrialSpace::default(), TrialKind::Necessity).is_err());
}

#[test]
fn invalid_space_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let space = TrialSpace {
        min_nodes: 9,
        max_nodes: 4,
        ..TrialSpace::default()
    };
    assert!(sufficiency_trial(&mut rng, &space, TrialKind::FeatureMod).is_err());
    assert!(necessity_trial(&mut rng, &space).is_err());
}
