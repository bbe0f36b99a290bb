//! Episode execution and seeded Monte Carlo evaluation.
//!
//! An episode fixes a true hypothesis and a "world": the value every
//! feature takes on its j-th realization is drawn from its own stream
//! seeded by (episode seed, feature, j). Policies run on the same episode
//! seed therefore see the same world whatever order they visit in, which
//! makes policy comparisons paired.

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{self, entropy_bits, map_decision, sample_index, Observation};
use crate::model::Scenario;
use crate::planner::{
    ig_and_risk_choices, revealed_features, AgentState, PlanError, Policy, PolicyAction,
};
use crate::seed::{self, derive_seed};

const STREAM_TRUTH: u64 = 1;
const STREAM_WORLD: u64 = 2;
const STREAM_POLICY: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrueHypothesis {
    Fixed(usize),
    SampleFromPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub location: usize,
    pub observations: Vec<Observation>,
    pub entropy_after: f64,
    pub cumulative_cost: f64,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub scenario_id: String,
    pub policy: String,
    pub seed: u64,
    pub true_hypothesis: usize,
    pub prior_entropy: f64,
    pub steps: Vec<StepRecord>,
    pub decision: usize,
    pub loss: f64,
    pub correct: bool,
    pub final_entropy: f64,
}

impl EpisodeRecord {
    pub fn cost(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_cost)
    }

    fn posterior_at<'a>(&'a self, prior: &'a [f64], budget: usize) -> &'a [f64] {
        match budget.min(self.steps.len()) {
            0 => prior,
            b => &self.steps[b - 1].posterior,
        }
    }

    /// Decision the agent would make after at most `budget` views.
    pub fn decision_at(&self, s: &Scenario, budget: usize) -> usize {
        belief::decide(s, self.posterior_at(&s.prior, budget))
    }

    /// Entropy reduction (bits) after at most `budget` views.
    pub fn gain_at(&self, s: &Scenario, budget: usize) -> f64 {
        self.prior_entropy - entropy_bits(self.posterior_at(&s.prior, budget))
    }
}

/// The episode's world: fixed truth plus per-feature realization streams.
struct World {
    truth: usize,
    seed: u64,
    draws: Vec<u64>,
}

impl World {
    fn realize(&mut self, s: &Scenario, feature: usize) -> usize {
        let j = self.draws[feature];
        self.draws[feature] += 1;
        let mut rng = seed::rng_for(self.seed, &[STREAM_WORLD, feature as u64, j]);
        sample_index(&mut rng, &s.features[feature].cpt[self.truth])
    }
}

/// Run `policy` from location 0 until it stops or has made `max_steps` visits.
pub fn run_episode(
    s: &Scenario,
    policy: &dyn Policy,
    truth: TrueHypothesis,
    episode_seed: u64,
    max_steps: usize,
    scenario_id: &str,
) -> Result<EpisodeRecord, PlanError> {
    let true_h = match truth {
        TrueHypothesis::Fixed(h) => h,
        TrueHypothesis::SampleFromPrior => {
            let mut rng = seed::rng_for(episode_seed, &[STREAM_TRUTH]);
            sample_index(&mut rng, &s.prior)
        }
    };
    let mut world = World {
        truth: true_h,
        seed: episode_seed,
        draws: vec![0; s.n_features()],
    };
    let mut policy_rng = seed::rng_for(episode_seed, &[STREAM_POLICY]);
    let revisit = policy.allow_revisit();
    let mut state = AgentState::start(s);
    let mut steps = Vec::new();
    let mut cost = 0.0;
    let mut decision = None;
    while steps.len() < max_steps {
        match policy.act(s, &state, &mut policy_rng)? {
            PolicyAction::Stop(d) => {
                decision = Some(d);
                break;
            }
            PolicyAction::Visit(l) => {
                let features = revealed_features(s, &state.belief, l, revisit);
                let observations: Vec<Observation> = features
                    .iter()
                    .map(|&f| Observation::new(f, world.realize(s, f)))
                    .collect();
                cost += s.visit_cost(state.current, l);
                state = state.advance(s, l, &observations, revisit)?;
                steps.push(StepRecord {
                    location: l,
                    observations,
                    entropy_after: belief::entropy(&state.belief),
                    cumulative_cost: cost,
                    posterior: state.belief.probs().to_vec(),
                });
            }
        }
    }
    let decision = decision.unwrap_or_else(|| map_decision(s, &state.belief));
    Ok(EpisodeRecord {
        scenario_id: scenario_id.to_string(),
        policy: policy.name(),
        seed: episode_seed,
        true_hypothesis: true_h,
        prior_entropy: entropy_bits(&s.prior),
        steps,
        decision,
        loss: s.loss[decision][true_h],
        correct: decision == true_h,
        final_entropy: belief::entropy(&state.belief),
    })
}

/// Seed of episode `index` under `base_seed`.
pub fn episode_seed(base_seed: u64, index: usize) -> u64 {
    derive_seed(base_seed, &[index as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: String,
    pub episodes: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub mean_steps: f64,
    /// Mean entropy reduction after 1, 2, ... views.
    pub gain_curve: Vec<f64>,
    /// Fraction correct after 1, 2, ... views.
    pub accuracy_curve: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate records given in episode order.
pub fn summarize(s: &Scenario, policy: &str, records: &[EpisodeRecord], levels: usize) -> RunSummary {
    let costs: Vec<f64> = records.iter().map(EpisodeRecord::cost).collect();
    let (mean_cost, std_cost) = mean_std(&costs);
    let n = records.len() as f64;
    let curve = |f: &dyn Fn(&EpisodeRecord, usize) -> f64| -> Vec<f64> {
        (1..=levels)
            .map(|b| records.iter().map(|r| f(r, b)).sum::<f64>() / n)
            .collect()
    };
    RunSummary {
        policy: policy.to_string(),
        episodes: records.len(),
        mean_cost,
        std_cost,
        mean_loss: records.iter().map(|r| r.loss).sum::<f64>() / n,
        accuracy: records.iter().filter(|r| r.correct).count() as f64 / n,
        mean_steps: records.iter().map(|r| r.steps.len() as f64).sum::<f64>() / n,
        gain_curve: curve(&|r, b| r.gain_at(s, b)),
        accuracy_curve: curve(&|r, b| f64::from(u8::from(r.decision_at(s, b) == r.true_hypothesis))),
    }
}

/// Run `n_runs` independent episodes, in parallel on the current rayon
/// pool. Records come back in episode order.
pub fn run_episodes(
    s: &Scenario,
    policy: &dyn Policy,
    n_runs: usize,
    base_seed: u64,
    max_steps: usize,
    scenario_id: &str,
) -> Result<Vec<EpisodeRecord>, PlanError> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            run_episode(
                s,
                policy,
                TrueHypothesis::SampleFromPrior,
                episode_seed(base_seed, i),
                max_steps,
                scenario_id,
            )
        })
        .collect()
}

pub fn monte_carlo(
    s: &Scenario,
    policy: &dyn Policy,
    n_runs: usize,
    base_seed: u64,
    max_steps: usize,
) -> Result<(RunSummary, Vec<EpisodeRecord>), PlanError> {
    if n_runs == 0 {
        return Err(PlanError::InvalidConfig("n_runs must be >= 1".into()));
    }
    let records = run_episodes(s, policy, n_runs, base_seed, max_steps, "")?;
    Ok((summarize(s, &policy.name(), &records, max_steps), records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyColumn {
    pub name: String,
    pub accuracy: Vec<f64>,
    /// Mean entropy reduction in bits.
    pub metric_mean: Vec<f64>,
    pub metric_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub budgets: Vec<usize>,
    pub columns: Vec<PolicyColumn>,
    /// Per budget, the fraction of episodes (along the first policy's
    /// trajectory) where the one-step gain and one-step risk choices agree.
    pub ig_risk_agreement: Vec<Option<f64>>,
}

/// Paired comparison: every policy runs the same episode seeds, and each
/// trajectory is scored at every budget prefix.
pub fn compare_policies(
    s: &Scenario,
    policies: &[&dyn Policy],
    n_runs: usize,
    budgets: &[usize],
    base_seed: u64,
) -> Result<ComparisonTable, PlanError> {
    if n_runs == 0 {
        return Err(PlanError::InvalidConfig("n_runs must be >= 1".into()));
    }
    let max_budget = budgets.iter().copied().max().unwrap_or(0);
    let mut columns = Vec::with_capacity(policies.len());
    let mut first: Option<Vec<EpisodeRecord>> = None;
    for policy in policies {
        let records = run_episodes(s, *policy, n_runs, base_seed, max_budget, "")?;
        let mut column = PolicyColumn {
            name: policy.name(),
            accuracy: Vec::new(),
            metric_mean: Vec::new(),
            metric_std: Vec::new(),
        };
        for &b in budgets {
            let correct = records
                .iter()
                .filter(|r| r.decision_at(s, b) == r.true_hypothesis)
                .count();
            column.accuracy.push(correct as f64 / n_runs as f64);
            let gains: Vec<f64> = records.iter().map(|r| r.gain_at(s, b)).collect();
            let (mean, std) = mean_std(&gains);
            column.metric_mean.push(mean);
            column.metric_std.push(std);
        }
        columns.push(column);
        if first.is_none() {
            first = Some(records);
        }
    }
    let ig_risk_agreement = match (&first, policies.first()) {
        (Some(records), Some(policy)) => agreement(s, records, budgets, policy.allow_revisit())?,
        _ => vec![None; budgets.len()],
    };
    Ok(ComparisonTable {
        budgets: budgets.to_vec(),
        columns,
        ig_risk_agreement,
    })
}

fn agreement(
    s: &Scenario,
    records: &[EpisodeRecord],
    budgets: &[usize],
    revisit: bool,
) -> Result<Vec<Option<f64>>, PlanError> {
    // Per episode: agreement flag at the state before the b-th view.
    let per_episode: Vec<Vec<Option<bool>>> = records
        .par_iter()
        .map(|r| -> Result<Vec<Option<bool>>, PlanError> {
            let mut states = vec![AgentState::start(s)];
            for step in &r.steps {
                let next = states
                    .last()
                    .expect("nonempty")
                    .advance(s, step.location, &step.observations, revisit)?;
                states.push(next);
            }
            budgets
                .iter()
                .map(|&b| match b.checked_sub(1).and_then(|i| states.get(i)) {
                    Some(st) => Ok(ig_and_risk_choices(s, st, revisit)?.map(|(a, c)| a == c)),
                    None => Ok(None),
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok((0..budgets.len())
        .map(|i| {
            let flags: Vec<bool> = per_episode.iter().filter_map(|v| v[i]).collect();
            (!flags.is_empty())
                .then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
        })
        .collect())
}
