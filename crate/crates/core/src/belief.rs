//! Exact Bayesian inference over the hypothesis set.
//!
//! Features are conditionally independent given the class, so a batch of
//! observations updates the belief by
//!
//! ```text
//! b'(h) = eta * b(h) * prod_{(f, v) in batch} P(F_f = v | h)
//! ```
//!
//! Entropies are in bits. Expected information gain enumerates the joint
//! outcome space of the features a location would newly reveal; above
//! [`OUTCOME_ENUM_CAP`] joint outcomes the one-step gain is estimated from
//! [`MC_OUTCOME_SAMPLES`] seeded samples instead.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Scenario;
use crate::seed;

/// Largest joint outcome space enumerated exactly.
pub const OUTCOME_ENUM_CAP: usize = 4096;

/// Outcome samples for the one-step gain past the enumeration cap.
pub const MC_OUTCOME_SAMPLES: usize = 2048;

/// Unnormalized posterior mass below this is treated as impossible evidence.
pub const MIN_EVIDENCE_MASS: f64 = 1e-300;

/// Two risks closer than this are a tie for decision purposes.
pub const RISK_TIE_TOL: f64 = 1e-12;

const SAMPLED_IG_SEED: u64 = 0x1b5e_ed00_d1a5_0001;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeliefError {
    #[error("impossible evidence: every hypothesis gives the observations probability 0")]
    ImpossibleEvidence,
    #[error("feature {feature} has already been realized")]
    DuplicateFeature { feature: usize },
    #[error("observation out of range: feature {feature}, value {value}")]
    InvalidObservation { feature: usize, value: usize },
    #[error("joint outcome space of {size} exceeds the enumeration cap {cap}")]
    OutcomeSpaceTooLarge { size: usize, cap: usize },
    #[error("scenario is not noiseless")]
    NotNoiseless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub feature: usize,
    pub value: usize,
}

impl Observation {
    pub fn new(feature: usize, value: usize) -> Self {
        Self { feature, value }
    }
}

/// Posterior over hypotheses together with the realizations that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
    history: Vec<Observation>,
}

impl Belief {
    pub fn prior(scenario: &Scenario) -> Self {
        Self {
            probs: scenario.prior.clone(),
            history: Vec::new(),
        }
    }

    /// A belief with no history. `probs` is taken as given.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self {
            probs,
            history: Vec::new(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn is_realized(&self, feature: usize) -> bool {
        self.history.iter().any(|o| o.feature == feature)
    }
}

fn check_observation(s: &Scenario, o: &Observation) -> Result<(), BeliefError> {
    if o.feature >= s.n_features() || o.value >= s.features[o.feature].arity() {
        return Err(BeliefError::InvalidObservation {
            feature: o.feature,
            value: o.value,
        });
    }
    Ok(())
}

/// Multiply `probs` by the likelihood of `observations` and normalize.
pub fn posterior(
    s: &Scenario,
    probs: &[f64],
    observations: &[Observation],
) -> Result<Vec<f64>, BeliefError> {
    let mut w = probs.to_vec();
    for o in observations {
        check_observation(s, o)?;
        let feature = &s.features[o.feature];
        for (h, wh) in w.iter_mut().enumerate() {
            *wh *= feature.likelihood(h, o.value);
        }
    }
    normalize(w)
}

fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>, BeliefError> {
    let mass: f64 = w.iter().sum();
    if mass.is_nan() || mass < MIN_EVIDENCE_MASS {
        return Err(BeliefError::ImpossibleEvidence);
    }
    w.iter_mut().for_each(|x| *x /= mass);
    Ok(w)
}

/// Bayes update with newly realized features. A feature may be realized once.
pub fn update(
    s: &Scenario,
    belief: &Belief,
    observations: &[Observation],
) -> Result<Belief, BeliefError> {
    for (i, o) in observations.iter().enumerate() {
        if belief.is_realized(o.feature) || observations[..i].iter().any(|p| p.feature == o.feature)
        {
            return Err(BeliefError::DuplicateFeature { feature: o.feature });
        }
    }
    update_repeated(s, belief, observations)
}

/// Bayes update that accepts fresh, independent realizations of features
/// already present in the history (revisit mode).
pub fn update_repeated(
    s: &Scenario,
    belief: &Belief,
    observations: &[Observation],
) -> Result<Belief, BeliefError> {
    let probs = posterior(s, &belief.probs, observations)?;
    let mut history = belief.history.clone();
    history.extend_from_slice(observations);
    Ok(Belief { probs, history })
}

pub fn entropy_bits(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

pub fn entropy(belief: &Belief) -> f64 {
    entropy_bits(&belief.probs)
}

/// One branch of a joint outcome enumeration.
#[derive(Debug, Clone)]
pub struct OutcomeBranch {
    /// Realized value per feature, aligned with the enumerated feature list.
    pub values: Vec<usize>,
    pub probability: f64,
    pub posterior: Vec<f64>,
}

impl OutcomeBranch {
    pub fn observations(&self, features: &[usize]) -> Vec<Observation> {
        features
            .iter()
            .zip(&self.values)
            .map(|(&f, &v)| Observation::new(f, v))
            .collect()
    }
}

pub fn outcome_space_size(s: &Scenario, features: &[usize]) -> usize {
    features
        .iter()
        .try_fold(1usize, |acc, &f| acc.checked_mul(s.features[f].arity()))
        .unwrap_or(usize::MAX)
}

/// Enumerate every joint outcome of `features` with positive probability
/// under `probs`, in lexicographic value order.
pub fn enumerate_outcomes(
    s: &Scenario,
    probs: &[f64],
    features: &[usize],
    cap: usize,
) -> Result<Vec<OutcomeBranch>, BeliefError> {
    let size = outcome_space_size(s, features);
    if size > cap {
        return Err(BeliefError::OutcomeSpaceTooLarge { size, cap });
    }
    let mut out = Vec::new();
    let mut values = Vec::with_capacity(features.len());
    enumerate_rec(s, features, probs.to_vec(), &mut values, &mut out);
    Ok(out)
}

fn enumerate_rec(
    s: &Scenario,
    features: &[usize],
    weights: Vec<f64>,
    values: &mut Vec<usize>,
    out: &mut Vec<OutcomeBranch>,
) {
    let mass: f64 = weights.iter().sum();
    if mass < MIN_EVIDENCE_MASS {
        return;
    }
    let Some((&f, rest)) = features.split_first() else {
        let posterior = weights.iter().map(|w| w / mass).collect();
        out.push(OutcomeBranch {
            values: values.clone(),
            probability: mass,
            posterior,
        });
        return;
    };
    let feature = &s.features[f];
    for v in 0..feature.arity() {
        let next: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(h, w)| w * feature.likelihood(h, v))
            .collect();
        values.push(v);
        enumerate_rec(s, rest, next, values, out);
        values.pop();
    }
}

/// Features of `location` not yet present in the history.
pub fn unrealized_features(s: &Scenario, belief: &Belief, location: usize) -> Vec<usize> {
    s.locations[location]
        .features
        .iter()
        .copied()
        .filter(|&f| !belief.is_realized(f))
        .collect()
}

/// Exact expected information gain (bits) from observing `features`.
pub fn information_gain_exact(
    s: &Scenario,
    probs: &[f64],
    features: &[usize],
    cap: usize,
) -> Result<f64, BeliefError> {
    if features.is_empty() {
        return Ok(0.0);
    }
    let prior_h = entropy_bits(probs);
    let branches = enumerate_outcomes(s, probs, features, cap)?;
    let expected: f64 = branches
        .iter()
        .map(|b| b.probability * entropy_bits(&b.posterior))
        .sum();
    Ok((prior_h - expected).max(0.0))
}

/// Monte Carlo estimate of the information gain from observing `features`.
pub fn information_gain_sampled(
    s: &Scenario,
    probs: &[f64],
    features: &[usize],
    samples: usize,
    seed: u64,
) -> f64 {
    if features.is_empty() || samples == 0 {
        return 0.0;
    }
    let mut rng = seed::rng_for(seed, &[features.len() as u64]);
    let prior_h = entropy_bits(probs);
    let mut total = 0.0;
    for _ in 0..samples {
        let h = sample_index(&mut rng, probs);
        let mut w = probs.to_vec();
        for &f in features {
            let feature = &s.features[f];
            let v = sample_index(&mut rng, &feature.cpt[h]);
            for (g, wg) in w.iter_mut().enumerate() {
                *wg *= feature.likelihood(g, v);
            }
        }
        let mass: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= mass);
        total += entropy_bits(&w);
    }
    (prior_h - total / samples as f64).max(0.0)
}

/// Draw an index from a discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding at the top end: last index with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn history_seed(belief: &Belief, location: usize) -> u64 {
    let path: Vec<u64> = std::iter::once(location as u64)
        .chain(
            belief
                .history
                .iter()
                .flat_map(|o| [o.feature as u64, o.value as u64]),
        )
        .collect();
    seed::derive_seed(SAMPLED_IG_SEED, &path)
}

/// Expected information gain of the features in `features` under `belief`:
/// exact below the enumeration cap, seeded Monte Carlo above it.
pub fn information_gain_features(
    s: &Scenario,
    belief: &Belief,
    features: &[usize],
    seed_hint: usize,
) -> f64 {
    match information_gain_exact(s, &belief.probs, features, OUTCOME_ENUM_CAP) {
        Ok(ig) => ig,
        Err(_) => information_gain_sampled(
            s,
            &belief.probs,
            features,
            MC_OUTCOME_SAMPLES,
            history_seed(belief, seed_hint),
        ),
    }
}

/// One-step expected information gain of visiting `location`.
pub fn expected_information_gain(s: &Scenario, belief: &Belief, location: usize) -> f64 {
    let features = unrealized_features(s, belief, location);
    information_gain_features(s, belief, &features, location)
}

/// Unrealized features revealed by visiting every location in `locations`.
pub fn set_features(s: &Scenario, belief: &Belief, locations: &[usize]) -> Vec<usize> {
    let mut features: Vec<usize> = locations
        .iter()
        .flat_map(|&l| s.locations[l].features.iter().copied())
        .filter(|&f| !belief.is_realized(f))
        .collect();
    features.sort_unstable();
    features.dedup();
    features
}

/// Exact information gain of visiting a whole set of locations.
pub fn expected_information_gain_set(
    s: &Scenario,
    belief: &Belief,
    locations: &[usize],
) -> Result<f64, BeliefError> {
    let features = set_features(s, belief, locations);
    information_gain_exact(s, &belief.probs, &features, OUTCOME_ENUM_CAP)
}

/// Expected loss of each decision under `probs`.
pub fn decision_risks(s: &Scenario, probs: &[f64]) -> Vec<f64> {
    s.loss
        .iter()
        .map(|row| row.iter().zip(probs).map(|(l, p)| l * p).sum())
        .collect()
}

pub fn risk_of(s: &Scenario, probs: &[f64]) -> f64 {
    decision_risks(s, probs)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

pub fn bayes_risk(s: &Scenario, belief: &Belief) -> f64 {
    risk_of(s, &belief.probs)
}

/// Loss-weighted MAP decision over raw probabilities.
pub fn decide(s: &Scenario, probs: &[f64]) -> usize {
    let risks = decision_risks(s, probs);
    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
    risks
        .iter()
        .position(|&r| r <= best + RISK_TIE_TOL)
        .unwrap_or(0)
}

/// Decision minimizing expected loss; ties go to the lowest index.
pub fn map_decision(s: &Scenario, belief: &Belief) -> usize {
    decide(s, &belief.probs)
}

/// Expected Bayes risk after observing `features`, by exact enumeration.
pub fn expected_posterior_risk(
    s: &Scenario,
    probs: &[f64],
    features: &[usize],
) -> Result<f64, BeliefError> {
    if features.is_empty() {
        return Ok(risk_of(s, probs));
    }
    let branches = enumerate_outcomes(s, probs, features, OUTCOME_ENUM_CAP)?;
    Ok(branches
        .iter()
        .map(|b| b.probability * risk_of(s, &b.posterior))
        .sum())
}

/// Number of hypotheses consistent with every realized value in `history`.
pub fn version_space_count(s: &Scenario, history: &[Observation]) -> Result<usize, BeliefError> {
    if !s.is_noiseless() {
        return Err(BeliefError::NotNoiseless);
    }
    for o in history {
        check_observation(s, o)?;
    }
    Ok((0..s.n_hypotheses())
        .filter(|&h| {
            history
                .iter()
                .all(|o| s.features[o.feature].likelihood(h, o.value) == 1.0)
        })
        .count())
}
