//! Viewing policies and the brute-force optimal policy oracle.
//!
//! A policy looks at the current belief, where the agent stands and which
//! locations it has already visited, and either visits another location or
//! stops and commits to a decision. All policies share one stopping rule:
//! stop as soon as the Bayes risk is at most `tau`, or when nothing is left
//! to visit.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{self, Belief, BeliefError, Observation, MC_OUTCOME_SAMPLES, RISK_TIE_TOL};
use crate::model::Scenario;

mod evaluate;
mod greedy;
mod oracle;

pub use evaluate::{evaluate_policy_exact, evaluate_tree, Evaluation};
pub use greedy::{
    adaptive_greedy_step, cost_weighted_greedy_step, nonadaptive_greedy_order,
    random_policy_step, receding_horizon_step, AdaptiveIg, CostWeightedIg, FixedOrder,
    RandomOrder, RecedingHorizon, COST_FLOOR,
};
pub use oracle::{
    brute_force_optimal, brute_force_optimal_nonadaptive, NonAdaptivePlan, PolicyTree,
    TreeBranch, TreePolicy, MAX_NONADAPTIVE_LOCATIONS, MAX_ORACLE_STATES,
};

/// Scores closer than this are ties; ties go to the lowest index.
pub const SCORE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("outcome space of {size} exceeds the cap {cap}; {hint}")]
    OutcomeSpaceTooLarge {
        size: usize,
        cap: usize,
        hint: String,
    },
    #[error("state space too large: {states} states exceeds the limit {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("infeasible: best achievable expected loss is {best_loss}")]
    Infeasible { best_loss: f64 },
    #[error("policy {0} is randomized and cannot be evaluated exactly")]
    NotDeterministic(String),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyAction {
    Visit(usize),
    Stop(usize),
}

/// Objective optimized by the receding-horizon lookahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HorizonObjective {
    /// Expected cumulative information gain over the horizon.
    #[default]
    InformationGain,
    /// Expected Bayes risk at the end of the horizon.
    TerminalRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Lookahead depth for the receding-horizon policy.
    pub horizon: usize,
    /// Locations costing more than this to reach are ignored by the
    /// cost-weighted policy, unless nothing is within reach.
    pub cost_horizon: f64,
    pub tau: f64,
    pub allow_revisit: bool,
    pub seed: u64,
    /// Samples used when a set gain exceeds the enumeration cap. Zero
    /// disables sampling.
    pub mc_samples: usize,
    pub objective: HorizonObjective,
}

impl PlannerConfig {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            horizon: 1,
            cost_horizon: f64::INFINITY,
            tau: s.tau,
            allow_revisit: false,
            seed: 0,
            mc_samples: MC_OUTCOME_SAMPLES,
            objective: HorizonObjective::InformationGain,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.horizon < 1 {
            return Err(PlanError::InvalidConfig("horizon must be >= 1".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(PlanError::InvalidConfig("tau must be >= 0".into()));
        }
        Ok(())
    }
}

/// What a policy sees when asked for its next action.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub belief: Belief,
    pub current: usize,
    pub visited: Vec<bool>,
    pub path: Vec<usize>,
}

impl AgentState {
    /// Prior belief, standing at location 0 without having observed from it.
    pub fn start(s: &Scenario) -> Self {
        Self {
            belief: Belief::prior(s),
            current: 0,
            visited: vec![false; s.n_locations()],
            path: Vec::new(),
        }
    }

    /// Move to `location` and fold in what was observed there.
    pub fn advance(
        &self,
        s: &Scenario,
        location: usize,
        observations: &[Observation],
        allow_revisit: bool,
    ) -> Result<AgentState, BeliefError> {
        let belief = if allow_revisit {
            belief::update_repeated(s, &self.belief, observations)?
        } else {
            belief::update(s, &self.belief, observations)?
        };
        let mut visited = self.visited.clone();
        visited[location] = true;
        let mut path = self.path.clone();
        path.push(location);
        Ok(AgentState {
            belief,
            current: location,
            visited,
            path,
        })
    }
}

/// Locations a policy may choose next.
pub fn candidates(visited: &[bool], allow_revisit: bool) -> Vec<usize> {
    (0..visited.len())
        .filter(|&l| allow_revisit || !visited[l])
        .collect()
}

/// Features whose values a visit to `location` would reveal. With revisits
/// enabled every visit draws fresh realizations of all the location's
/// features.
pub fn revealed_features(
    s: &Scenario,
    belief: &Belief,
    location: usize,
    allow_revisit: bool,
) -> Vec<usize> {
    if allow_revisit {
        s.locations[location].features.clone()
    } else {
        belief::unrealized_features(s, belief, location)
    }
}

/// One-step information gain of a visit under the revisit convention.
pub fn visit_gain(s: &Scenario, b: &Belief, location: usize, allow_revisit: bool) -> f64 {
    if allow_revisit {
        let features = revealed_features(s, b, location, true);
        belief::information_gain_features(s, b, &features, location)
    } else {
        belief::expected_information_gain(s, b, location)
    }
}

/// The shared stopping rule: `Some(Stop)` when the risk is within `tau`.
pub fn stop_if_resolved(s: &Scenario, b: &Belief, tau: f64) -> Option<PolicyAction> {
    (belief::bayes_risk(s, b) <= tau + RISK_TIE_TOL)
        .then(|| PolicyAction::Stop(belief::map_decision(s, b)))
}

/// Index with the highest score; near-ties go to the earliest candidate.
pub(crate) fn argmax_lowest(scored: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in scored {
        match best {
            Some((_, bv)) if v <= bv + SCORE_TIE_TOL => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn argmin_lowest(scored: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    argmax_lowest(scored.into_iter().map(|(i, v)| (i, -v)))
}

/// A decision rule over agent states.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    fn act(
        &self,
        s: &Scenario,
        state: &AgentState,
        rng: &mut dyn RngCore,
    ) -> Result<PolicyAction, PlanError>;

    /// Randomized policies cannot be unrolled into an exact tree.
    fn is_deterministic(&self) -> bool {
        true
    }

    fn allow_revisit(&self) -> bool {
        false
    }
}

/// One-step IG choice versus one-step risk-minimizing choice, both over
/// the same candidate set. Returns `None` when there is nothing to choose.
pub fn ig_and_risk_choices(
    s: &Scenario,
    state: &AgentState,
    allow_revisit: bool,
) -> Result<Option<(usize, usize)>, PlanError> {
    let cands = candidates(&state.visited, allow_revisit);
    if cands.is_empty() {
        return Ok(None);
    }
    let ig = argmax_lowest(
        cands
            .iter()
            .map(|&l| (l, visit_gain(s, &state.belief, l, allow_revisit))),
    );
    let mut risks = Vec::with_capacity(cands.len());
    for &l in &cands {
        let f = revealed_features(s, &state.belief, l, allow_revisit);
        risks.push((l, belief::expected_posterior_risk(s, state.belief.probs(), &f)?));
    }
    let risk = argmin_lowest(risks);
    Ok(ig.zip(risk))
}
