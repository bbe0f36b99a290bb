mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use viewplan::belief::{self, Belief, BeliefError, Observation};
use viewplan::model::{self, Scenario};
use viewplan::scenarios::{make_random_instance, make_random_instance_with, RandomSpec};

fn small_instance(seed: u64, alpha: f64, arity: usize) -> Scenario {
    let mut r = rng(seed);
    let n = r.gen_range(2..=5);
    let k = r.gen_range(1..=5);
    let m = r.gen_range(1..=k);
    make_random_instance_with(&RandomSpec {
        arity,
        ..RandomSpec::new(n, k, m, alpha, seed)
    })
    .unwrap()
}

fn random_observations(s: &Scenario, r: &mut impl Rng) -> Vec<Observation> {
    let mut fs: Vec<usize> = (0..s.n_features()).collect();
    fs.shuffle(r);
    let take = r.gen_range(1..=fs.len());
    fs[..take]
        .iter()
        .map(|&f| Observation::new(f, r.gen_range(0..s.features[f].values.len())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sequential_update_matches_joint_table(seed in 0u64..1_000_000, alpha in 0.02f64..0.5, arity in 2usize..4) {
        let s = small_instance(seed, alpha, arity);
        let mut r = rng(seed ^ 0xabc);
        let probs = random_simplex(&mut r, s.n_hypotheses(), 0.1);
        let obs = random_observations(&s, &mut r);
        let mut b = Belief::from_probs(probs.clone());
        for o in &obs {
            b = belief::update(&s, &b, &[*o]).unwrap();
        }
        let want = joint_posterior(&s, &probs, &obs);
        for (x, y) in b.probs().iter().zip(&want) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
        prop_assert!((b.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(b.history(), &obs[..]);
    }

    #[test]
    fn update_is_order_invariant(seed in 0u64..1_000_000) {
        let s = small_instance(seed, 0.15, 2);
        let mut r = rng(seed ^ 0x5eed);
        let probs = random_simplex(&mut r, s.n_hypotheses(), 0.1);
        let obs = random_observations(&s, &mut r);
        let start = Belief::from_probs(probs);
        let joint = belief::update(&s, &start, &obs).unwrap();
        let mut shuffled = obs.clone();
        shuffled.shuffle(&mut r);
        let mut seq = start.clone();
        for o in &shuffled {
            seq = belief::update(&s, &seq, &[*o]).unwrap();
        }
        for (x, y) in joint.probs().iter().zip(seq.probs()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn information_gain_matches_mutual_information(seed in 0u64..1_000_000, alpha in 0.0f64..0.5) {
        let s = small_instance(seed, alpha, 2);
        let mut r = rng(seed ^ 7);
        let probs = random_simplex(&mut r, s.n_hypotheses(), 0.1);
        let b = Belief::from_probs(probs.clone());
        for l in 0..s.n_locations() {
            let ig = belief::expected_information_gain(&s, &b, l);
            let want = mutual_information(&s, &probs, &s.locations[l].features);
            prop_assert!(ig >= -1e-12);
            prop_assert!((ig - want).abs() <= 1e-9, "{ig} vs {want}");
            let single = belief::expected_information_gain_set(&s, &b, &[l]).unwrap();
            prop_assert!((single - ig).abs() <= 1e-12);
        }
    }

    #[test]
    fn risk_contracts_in_expectation(seed in 0u64..1_000_000) {
        let s = small_instance(seed, 0.2, 3);
        let mut r = rng(seed ^ 99);
        let probs = random_simplex(&mut r, s.n_hypotheses(), 0.0);
        let l = r.gen_range(0..s.n_locations());
        let f = &s.locations[l].features;
        let after = belief::expected_posterior_risk(&s, &probs, f).unwrap();
        prop_assert!((after - expected_risk_after(&s, &probs, f)).abs() <= 1e-12);
        prop_assert!(after <= belief::risk_of(&s, &probs) + 1e-12);
    }

    #[test]
    fn version_space_never_grows(seed in 0u64..1_000_000) {
        let s = make_random_instance(5, 5, 5, 0.0, seed).unwrap();
        let mut r = rng(seed);
        let truth = r.gen_range(0..5);
        let mut history = Vec::new();
        let mut last = belief::version_space_count(&s, &history).unwrap();
        prop_assert_eq!(last, 5);
        for f in 0..5 {
            let v = s.features[f].cpt[truth].iter().position(|&p| p == 1.0).unwrap();
            history.push(Observation::new(f, v));
            let now = belief::version_space_count(&s, &history).unwrap();
            prop_assert!(now <= last && now >= 1);
            last = now;
        }
    }

    #[test]
    fn save_load_round_trip(seed in 0u64..1_000_000, alpha in 0.0f64..0.5) {
        let s = small_instance(seed, alpha, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        model::save_scenario(&s, &path).unwrap();
        prop_assert_eq!(model::load_scenario(&path).unwrap(), s);
    }
}

#[test]
fn uninformative_feature_leaves_belief_unchanged() {
    let s = make_random_instance(4, 3, 3, 0.5, 1).unwrap();
    let b = Belief::from_probs(vec![0.1, 0.2, 0.3, 0.4]);
    let after = belief::update(&s, &b, &[Observation::new(0, 1)]).unwrap();
    for (x, y) in after.probs().iter().zip(b.probs()) {
        assert!((x - y).abs() <= 1e-15);
    }
    for l in 0..3 {
        assert!(belief::expected_information_gain(&s, &b, l).abs() <= 1e-12);
    }
}

#[test]
fn impossible_and_duplicate_evidence() {
    let s = make_random_instance(3, 2, 2, 0.0, 4).unwrap();
    let b = Belief::from_probs(vec![1.0, 0.0, 0.0]);
    let wrong = 1 - s.features[0].cpt[0].iter().position(|&p| p == 1.0).unwrap();
    assert_eq!(
        belief::update(&s, &b, &[Observation::new(0, wrong)]),
        Err(BeliefError::ImpossibleEvidence)
    );
    let b = Belief::prior(&s);
    let once = belief::update(&s, &b, &[Observation::new(0, 0)]);
    let b = match once {
        Ok(b) => b,
        Err(_) => belief::update(&s, &b, &[Observation::new(0, 1)]).unwrap(),
    };
    assert!(matches!(
        belief::update(&s, &b, &[Observation::new(0, 0)]),
        Err(BeliefError::DuplicateFeature { feature: 0 })
    ));
}

#[test]
fn realized_features_add_no_information() {
    let s = make_random_instance(4, 4, 4, 0.1, 12).unwrap();
    let f = s.locations[2].features.clone();
    let obs: Vec<Observation> = f.iter().map(|&x| Observation::new(x, 0)).collect();
    let b = belief::update(&s, &Belief::prior(&s), &obs).unwrap();
    assert_eq!(belief::expected_information_gain(&s, &b, 2), 0.0);
    assert_eq!(belief::expected_information_gain_set(&s, &b, &[]).unwrap(), 0.0);
}

#[test]
fn sampled_gain_tracks_exact_gain() {
    let s = make_random_instance(4, 6, 1, 0.1, 3).unwrap();
    let probs = s.prior.clone();
    let f: Vec<usize> = (0..6).collect();
    let exact = mutual_information(&s, &probs, &f);
    let sampled = belief::information_gain_sampled(&s, &probs, &f, 20_000, 5);
    assert!((exact - sampled).abs() < 0.05, "{exact} vs {sampled}");
}
