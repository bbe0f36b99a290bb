//! Scenario generators: the binary-search adaptivity-gap construction,
//! seeded random instances, a synthetic polyhedra-style view catalogue and
//! a squared-exponential interpolator for informativeness at unvisited
//! coordinates.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Feature, Location, Scenario, ScenarioError, DEFAULT_TAU};
use crate::seed;

/// Count levels for polyhedra-style features: 0..=6 and a final "7+" bin.
pub const COUNT_LEVELS: usize = 8;

const DEFAULT_PROFILE_JSON: &str = include_str!("../profiles/platonic-default.json");

fn binary_values() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// The binary-search instance with `n` hypotheses (a power of two, at least
/// 4) and `n - 1` binary features arranged as a complete binary tree in heap
/// order. Feature `k` deterministically splits its node's interval of
/// hypotheses into left (value 1) and right (value 0) halves and is a fair
/// coin for every hypothesis outside that interval. Location `k` reveals
/// feature `k`; every observation costs `unit_cost`; 0/1 loss; `tau = 0`.
pub fn make_theorem1_instance(n: usize, unit_cost: f64) -> Result<Scenario, ScenarioError> {
    if n < 4 || !n.is_power_of_two() {
        return Err(ScenarioError::Parameter(format!(
            "n must be a power of two >= 4, got {n}"
        )));
    }
    if !unit_cost.is_finite() || unit_cost < 0.0 {
        return Err(ScenarioError::Parameter(format!(
            "unit cost must be finite and >= 0, got {unit_cost}"
        )));
    }
    let mut features = Vec::with_capacity(n - 1);
    for node in 1..n {
        let level = node.ilog2();
        let width = n >> level;
        let lo = (node - (1 << level)) * width;
        let mid = lo + width / 2;
        let hi = lo + width;
        let cpt = (0..n)
            .map(|h| {
                if (lo..mid).contains(&h) {
                    vec![0.0, 1.0]
                } else if (mid..hi).contains(&h) {
                    vec![1.0, 0.0]
                } else {
                    vec![0.5, 0.5]
                }
            })
            .collect();
        features.push(Feature {
            name: format!("F{node}"),
            values: binary_values(),
            cpt,
        });
    }
    let m = n - 1;
    Ok(Scenario {
        hypotheses: (1..=n).map(|h| format!("h{h}")).collect(),
        prior: vec![1.0 / n as f64; n],
        features,
        locations: (0..m)
            .map(|i| Location {
                name: format!("L{}", i + 1),
                features: vec![i],
                coords: None,
            })
            .collect(),
        travel_cost: vec![vec![unit_cost; m]; m],
        loss: Scenario::zero_one_loss(n),
        tau: 0.0,
    })
}

/// Parameters for [`make_random_instance_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// Noise level in [0, 0.5]: 0 is noiseless, 0.5 uninformative.
    pub alpha: f64,
    pub seed: u64,
    /// Values per feature.
    pub arity: usize,
    pub uniform_prior: bool,
    pub unit_costs: bool,
}

impl RandomSpec {
    pub fn new(n: usize, k: usize, m: usize, alpha: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            m,
            alpha,
            seed,
            arity: 2,
            uniform_prior: false,
            unit_costs: false,
        }
    }
}

pub fn make_random_instance(
    n: usize,
    k: usize,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    make_random_instance_with(&RandomSpec::new(n, k, m, alpha, seed))
}

/// Random instance. Each feature has a clean value per hypothesis; the CPT
/// row puts `1 - 2 alpha` extra mass on it over a uniform floor of
/// `2 alpha / arity`, so `alpha = 0` is noiseless and `alpha = 0.5` is
/// uninformative. Every feature is observable from at least one location.
pub fn make_random_instance_with(spec: &RandomSpec) -> Result<Scenario, ScenarioError> {
    let RandomSpec { n, k, m, alpha, .. } = *spec;
    if n < 2 || k < 1 || m < 1 {
        return Err(ScenarioError::Parameter(format!(
            "need n >= 2, k >= 1, m >= 1 (got n={n}, k={k}, m={m})"
        )));
    }
    if m > 63 {
        return Err(ScenarioError::Parameter(format!("m = {m} exceeds 63 locations")));
    }
    if !(0.0..=0.5).contains(&alpha) {
        return Err(ScenarioError::Parameter(format!("alpha {alpha} outside [0, 0.5]")));
    }
    if spec.arity < 2 {
        return Err(ScenarioError::Parameter("arity must be >= 2".into()));
    }
    let mut rng = seed::rng_for(spec.seed, &[n as u64, k as u64, m as u64]);
    let arity = spec.arity;

    let prior = if spec.uniform_prior {
        vec![1.0 / n as f64; n]
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    };

    let floor = 2.0 * alpha / arity as f64;
    let features = (0..k)
        .map(|f| {
            let cpt = (0..n)
                .map(|_| {
                    let clean = rng.gen_range(0..arity);
                    (0..arity)
                        .map(|v| if v == clean { 1.0 - 2.0 * alpha + floor } else { floor })
                        .collect()
                })
                .collect();
            Feature {
                name: format!("F{f}"),
                values: (0..arity).map(|v| v.to_string()).collect(),
                cpt,
            }
        })
        .collect();

    // Shuffle features over locations so each is reachable, then sprinkle
    // occasional extra features.
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut observed: Vec<Vec<usize>> = (0..m).map(|i| vec![order[i % k]]).collect();
    for &f in order.iter().skip(m) {
        observed[rng.gen_range(0..m)].push(f);
    }
    for obs in observed.iter_mut() {
        if k > 1 && rng.gen_bool(0.2) {
            let extra = rng.gen_range(0..k);
            if !obs.contains(&extra) {
                obs.push(extra);
            }
        }
        obs.sort_unstable();
    }

    let mut travel_cost = vec![vec![0.0; m]; m];
    for i in 0..m {
        travel_cost[i][i] = if spec.unit_costs { 1.0 } else { rng.gen_range(0.5..1.5) };
        for j in 0..i {
            let c = if spec.unit_costs { 1.0 } else { rng.gen_range(1.0..5.0) };
            travel_cost[i][j] = c;
            travel_cost[j][i] = c;
        }
    }

    Ok(Scenario {
        hypotheses: (0..n).map(|h| format!("h{h}")).collect(),
        prior,
        features,
        locations: observed
            .into_iter()
            .enumerate()
            .map(|(i, features)| Location {
                name: format!("L{i}"),
                features,
                coords: None,
            })
            .collect(),
        travel_cost,
        loss: Scenario::zero_one_loss(n),
        tau: DEFAULT_TAU,
    })
}

/// Whether all features together can tell every pair of hypotheses apart
/// in a noiseless scenario (distinct clean feature vectors).
pub fn is_fully_separable(s: &Scenario) -> bool {
    let n = s.n_hypotheses();
    (0..n).all(|a| {
        (a + 1..n).all(|b| {
            s.features.iter().any(|f| {
                f.cpt[a]
                    .iter()
                    .zip(&f.cpt[b])
                    .any(|(x, y)| (x > &0.0) != (y > &0.0))
            })
        })
    })
}

/// Expected salient correspondence counts per class and view, plus a per
/// view false-correspondence rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceProfile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub classes: Vec<String>,
    pub false_rate: Vec<f64>,
    /// `salient[class][view]`.
    pub salient: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    correspondence_profile: CorrespondenceProfile,
}

impl CorrespondenceProfile {
    /// The embedded five-class, 24-view synthetic profile.
    pub fn platonic_default() -> Self {
        Self::parse(DEFAULT_PROFILE_JSON, "platonic-default").expect("embedded profile is valid")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let file: ProfileFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let p = file.correspondence_profile;
        p.check()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = crate::model::read_scenario_text(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn n_views(&self) -> usize {
        self.false_rate.len()
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let views = self.n_views();
        if self.classes.len() != self.salient.len() {
            return Err(ScenarioError::Parameter(
                "profile needs one salient row per class".into(),
            ));
        }
        let ok = self.salient.iter().all(|r| r.len() == views)
            && self
                .salient
                .iter()
                .flatten()
                .chain(&self.false_rate)
                .all(|x| x.is_finite() && *x >= 0.0);
        if !ok {
            return Err(ScenarioError::Parameter(
                "profile rows must have one finite, nonnegative entry per view".into(),
            ));
        }
        Ok(())
    }
}

/// Poisson(mean) over `COUNT_LEVELS` bins with the last bin holding the tail.
pub fn binned_poisson(mean: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(COUNT_LEVELS);
    let mut term = (-mean).exp();
    let mut acc = 0.0;
    for k in 0..COUNT_LEVELS - 1 {
        pmf.push(term);
        acc += term;
        term *= mean / (k + 1) as f64;
    }
    pmf.push((1.0 - acc).max(0.0));
    let total: f64 = pmf.iter().sum();
    pmf.iter().map(|p| p / total).collect()
}

/// Synthetic analogue of viewing a polyhedron from a ring of viewpoints:
/// each view reveals one binned correspondence count whose distribution
/// under class `c` is Poisson with mean `salient[c][v] + false_rate[v]`
/// plus a seeded per-view offset shared by all classes. Views whose
/// salient counts are equal across classes are uninformative.
pub fn make_polyhedra_like_instance(
    n_classes: usize,
    n_views: usize,
    profile: &CorrespondenceProfile,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    if n_classes < 2 || n_classes > profile.classes.len() {
        return Err(ScenarioError::Parameter(format!(
            "n_classes must be in 2..={} for profile {}",
            profile.classes.len(),
            profile.name
        )));
    }
    if n_views < 1 || n_views > profile.n_views() {
        return Err(ScenarioError::Parameter(format!(
            "n_views must be in 1..={} for profile {}",
            profile.n_views(),
            profile.name
        )));
    }
    let mut rng = seed::rng_for(seed, &[n_classes as u64, n_views as u64]);
    let offsets: Vec<f64> = (0..n_views).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let values: Vec<String> = (0..COUNT_LEVELS)
        .map(|k| {
            if k + 1 == COUNT_LEVELS {
                format!("{k}+")
            } else {
                k.to_string()
            }
        })
        .collect();
    let features = (0..n_views)
        .map(|v| Feature {
            name: format!("count{v:02}"),
            values: values.clone(),
            cpt: (0..n_classes)
                .map(|c| {
                    let mean = (profile.salient[c][v] + profile.false_rate[v] + offsets[v]).max(0.05);
                    binned_poisson(mean)
                })
                .collect(),
        })
        .collect();
    let locations = (0..n_views)
        .map(|v| {
            let angle = std::f64::consts::TAU * v as f64 / n_views as f64;
            Location {
                name: format!("view{v:02}"),
                features: vec![v],
                coords: Some(vec![angle.cos(), angle.sin()]),
            }
        })
        .collect();
    Ok(Scenario {
        hypotheses: profile.classes[..n_classes].to_vec(),
        prior: vec![1.0 / n_classes as f64; n_classes],
        features,
        locations,
        travel_cost: vec![vec![1.0; n_views]; n_views],
        loss: Scenario::zero_one_loss(n_classes),
        tau: DEFAULT_TAU,
    })
}

/// Squared-exponential weighted average of training informativeness values.
/// Weights are normalized in log space so tiny length scales stay finite.
pub fn interpolate_informativeness(
    train: &[(Vec<f64>, f64)],
    query: &[f64],
    length_scale: f64,
) -> Result<f64, ScenarioError> {
    if train.is_empty() {
        return Err(ScenarioError::Parameter("no training points".into()));
    }
    if !(length_scale > 0.0) {
        return Err(ScenarioError::Parameter("length scale must be > 0".into()));
    }
    let exponents: Vec<f64> = train
        .iter()
        .map(|(x, _)| {
            let d2: f64 = x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2 / (2.0 * length_scale * length_scale)
        })
        .collect();
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = exponents
        .iter()
        .zip(train)
        .fold((0.0, 0.0), |(num, den), (e, (_, value))| {
            let w = (e - top).exp();
            (num + w * value, den + w)
        });
    Ok(num / den)
}
