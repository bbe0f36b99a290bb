//! Independent reference computations used as test oracles. Nothing here
//! calls into the library's inference code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewplan::belief::Observation;
use viewplan::model::Scenario;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector with every entry at least `floor / n`.
pub fn random_simplex(rng: &mut impl Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor / n as f64 + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Every joint assignment of values to `features`, in lexicographic order.
pub fn assignments(s: &Scenario, features: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &f in features {
        let arity = s.features[f].values.len();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..arity).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Full joint table P(h, x) over hypotheses and every feature's value.
pub fn joint_table(s: &Scenario, probs: &[f64]) -> Vec<(usize, Vec<usize>, f64)> {
    let all: Vec<usize> = (0..s.features.len()).collect();
    let mut rows = Vec::new();
    for x in assignments(s, &all) {
        for (h, ph) in probs.iter().enumerate() {
            let mut p = *ph;
            for (f, &v) in x.iter().enumerate() {
                p *= s.features[f].cpt[h][v];
            }
            rows.push((h, x.clone(), p));
        }
    }
    rows
}

/// P(h | observations) by summing the full joint table over consistent rows.
pub fn joint_posterior(s: &Scenario, probs: &[f64], obs: &[Observation]) -> Vec<f64> {
    let mut w = vec![0.0; probs.len()];
    for (h, x, p) in joint_table(s, probs) {
        if obs.iter().all(|o| x[o.feature] == o.value) {
            w[h] += p;
        }
    }
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Mutual information I(H; F_S) in bits from the definition
/// sum P(h, x) log2(P(h, x) / (P(h) P(x))).
pub fn mutual_information(s: &Scenario, probs: &[f64], features: &[usize]) -> f64 {
    let mut mi = 0.0;
    for x in assignments(s, features) {
        let joint: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(h, ph)| {
                ph * features
                    .iter()
                    .zip(&x)
                    .map(|(&f, &v)| s.features[f].cpt[h][v])
                    .product::<f64>()
            })
            .collect();
        let px: f64 = joint.iter().sum();
        for (h, &phx) in joint.iter().enumerate() {
            if phx > 0.0 {
                mi += phx * (phx / (probs[h] * px)).log2();
            }
        }
    }
    mi
}

pub fn features_of(s: &Scenario, locations: &[usize]) -> Vec<usize> {
    let mut f: Vec<usize> = locations
        .iter()
        .flat_map(|&l| s.locations[l].features.iter().copied())
        .collect();
    f.sort_unstable();
    f.dedup();
    f
}

/// min over decisions of the expected loss.
pub fn risk(s: &Scenario, probs: &[f64]) -> f64 {
    (0..s.loss.len())
        .map(|d| (0..probs.len()).map(|h| s.loss[d][h] * probs[h]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Expected risk after observing `features`, from the joint table.
pub fn expected_risk_after(s: &Scenario, probs: &[f64], features: &[usize]) -> f64 {
    assignments(s, features)
        .into_iter()
        .map(|x| {
            let w: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(h, ph)| {
                    ph * features
                        .iter()
                        .zip(&x)
                        .map(|(&f, &v)| s.features[f].cpt[h][v])
                        .product::<f64>()
                })
                .collect();
            // Unnormalized: sum_x min_d sum_h l(d,h) P(h, x).
            risk(s, &w)
        })
        .sum()
}

/// Exact minimum expected cost to reach zero expected loss, by plain
/// recursion over (visited set, position, consistent hypotheses). Valid for
/// noiseless-or-half CPTs with tau = 0; exponential, tiny instances only.
pub fn optimal_zero_loss_cost(s: &Scenario) -> f64 {
    fn rec(s: &Scenario, w: &[f64], visited: u32, at: Option<usize>) -> f64 {
        let mass: f64 = w.iter().sum();
        if risk(s, w) <= 1e-12 * mass {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for l in 0..s.locations.len() {
            if visited & (1 << l) != 0 {
                continue;
            }
            let step = s.travel_cost[l][at.unwrap_or(0)];
            let feats: Vec<usize> = s.locations[l]
                .features
                .iter()
                .copied()
                .filter(|f| !(0..s.locations.len()).any(|j| visited & (1 << j) != 0 && s.locations[j].features.contains(f)))
                .collect();
            let mut total = step * mass;
            for x in assignments(s, &feats) {
                let next: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(h, wh)| {
                        wh * feats
                            .iter()
                            .zip(&x)
                            .map(|(&f, &v)| s.features[f].cpt[h][v])
                            .product::<f64>()
                    })
                    .collect();
                if next.iter().sum::<f64>() > 0.0 {
                    total += rec(s, &next, visited | (1 << l), Some(l));
                }
                if total >= best {
                    break;
                }
            }
            best = best.min(total);
        }
        best
    }
    rec(s, &s.prior, 0, None)
}

/// Every subset of `0..m` of size `k`, as index lists.
pub fn subsets_of_size(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << m))
        .filter(|x| x.count_ones() as usize == k)
        .map(|x| (0..m).filter(|i| x & (1 << i) != 0).collect())
        .collect()
}
