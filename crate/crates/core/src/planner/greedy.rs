//! Greedy information-gain policies: one-step adaptive, cost-weighted,
//! depth-T receding horizon, the fixed non-adaptive ordering and the
//! uniformly random baseline.

use rand::{Rng, RngCore};

use super::{
    argmax_lowest, argmin_lowest, candidates, revealed_features, stop_if_resolved, visit_gain,
    AgentState, HorizonObjective, PlanError, PlannerConfig, Policy, PolicyAction,
};
use crate::belief::{
    self, entropy_bits, enumerate_outcomes, outcome_space_size, sample_index, Belief,
    BeliefError, OUTCOME_ENUM_CAP,
};
use crate::model::Scenario;
use crate::seed;

/// Floor on the travel cost in the cost-weighted ratio.
pub const COST_FLOOR: f64 = 1e-9;

/// Node budget for one receding-horizon lookahead.
const HORIZON_NODE_LIMIT: usize = 2_000_000;

/// Visit the unvisited location with the largest one-step expected
/// information gain.
pub fn adaptive_greedy_step(
    s: &Scenario,
    b: &Belief,
    _current: usize,
    visited: &[bool],
    config: &PlannerConfig,
) -> PolicyAction {
    if let Some(stop) = stop_if_resolved(s, b, config.tau) {
        return stop;
    }
    let cands = candidates(visited, config.allow_revisit);
    argmax_lowest(
        cands
            .iter()
            .map(|&l| (l, visit_gain(s, b, l, config.allow_revisit))),
    )
    .map_or_else(
        || PolicyAction::Stop(belief::map_decision(s, b)),
        PolicyAction::Visit,
    )
}

/// Like [`adaptive_greedy_step`] but maximizes gain per unit travel cost.
pub fn cost_weighted_greedy_step(
    s: &Scenario,
    b: &Belief,
    current: usize,
    visited: &[bool],
    config: &PlannerConfig,
) -> PolicyAction {
    if let Some(stop) = stop_if_resolved(s, b, config.tau) {
        return stop;
    }
    let cands = candidates(visited, config.allow_revisit);
    let reachable: Vec<usize> = cands
        .iter()
        .copied()
        .filter(|&l| s.visit_cost(current, l) <= config.cost_horizon)
        .collect();
    let pool = if reachable.is_empty() { cands } else { reachable };
    argmax_lowest(pool.iter().map(|&l| {
        let cost = s.visit_cost(current, l).max(COST_FLOOR);
        (l, visit_gain(s, b, l, config.allow_revisit) / cost)
    }))
    .map_or_else(
        || PolicyAction::Stop(belief::map_decision(s, b)),
        PolicyAction::Visit,
    )
}

struct Lookahead<'a> {
    s: &'a Scenario,
    objective: HorizonObjective,
    allow_revisit: bool,
    nodes: usize,
}

impl Lookahead<'_> {
    fn branches(&mut self, b: &Belief, l: usize) -> Result<Vec<(f64, Belief)>, PlanError> {
        let features = revealed_features(self.s, b, l, self.allow_revisit);
        let outcomes = enumerate_outcomes(self.s, b.probs(), &features, OUTCOME_ENUM_CAP)
            .map_err(horizon_error)?;
        self.nodes += outcomes.len();
        if self.nodes > HORIZON_NODE_LIMIT {
            return Err(PlanError::OutcomeSpaceTooLarge {
                size: self.nodes,
                cap: HORIZON_NODE_LIMIT,
                hint: "lower the horizon T".into(),
            });
        }
        outcomes
            .into_iter()
            .map(|o| {
                let obs = o.observations(&features);
                let next = if self.allow_revisit {
                    belief::update_repeated(self.s, b, &obs)?
                } else {
                    belief::update(self.s, b, &obs)?
                };
                Ok((o.probability, next))
            })
            .collect()
    }

    /// Value of the best depth-`depth` subtree below `b`. For the gain
    /// objective this is the expected cumulative gain; for the risk objective
    /// the expected terminal Bayes risk.
    fn value(&mut self, b: &Belief, visited: &mut Vec<bool>, depth: usize) -> Result<f64, PlanError> {
        let terminal = match self.objective {
            HorizonObjective::InformationGain => 0.0,
            HorizonObjective::TerminalRisk => belief::bayes_risk(self.s, b),
        };
        if depth == 0 {
            return Ok(terminal);
        }
        let cands = candidates(visited, self.allow_revisit);
        if cands.is_empty() {
            return Ok(terminal);
        }
        let mut best: Option<f64> = None;
        for l in cands {
            let v = self.action_value(b, visited, l, depth)?;
            best = Some(match (best, self.objective) {
                (None, _) => v,
                (Some(x), HorizonObjective::InformationGain) => x.max(v),
                (Some(x), HorizonObjective::TerminalRisk) => x.min(v),
            });
        }
        Ok(best.unwrap_or(terminal))
    }

    fn action_value(
        &mut self,
        b: &Belief,
        visited: &mut Vec<bool>,
        l: usize,
        depth: usize,
    ) -> Result<f64, PlanError> {
        let was = visited[l];
        visited[l] = true;
        let prior_h = entropy_bits(b.probs());
        let mut expected_future = 0.0;
        let mut expected_entropy = 0.0;
        for (p, next) in self.branches(b, l)? {
            expected_entropy += p * entropy_bits(next.probs());
            expected_future += p * self.value(&next, visited, depth - 1)?;
        }
        visited[l] = was;
        Ok(match self.objective {
            HorizonObjective::InformationGain => {
                (prior_h - expected_entropy).max(0.0) + expected_future
            }
            HorizonObjective::TerminalRisk => expected_future,
        })
    }
}

fn horizon_error(e: BeliefError) -> PlanError {
    match e {
        BeliefError::OutcomeSpaceTooLarge { size, cap } => PlanError::OutcomeSpaceTooLarge {
            size,
            cap,
            hint: "lower the horizon T".into(),
        },
        other => PlanError::Belief(other),
    }
}

/// First action of the best depth-T lookahead tree. T = 1 with the gain
/// objective is exactly [`adaptive_greedy_step`].
pub fn receding_horizon_step(
    s: &Scenario,
    b: &Belief,
    current: usize,
    visited: &[bool],
    config: &PlannerConfig,
) -> Result<PolicyAction, PlanError> {
    config.validate()?;
    if config.horizon == 1 && config.objective == HorizonObjective::InformationGain {
        return Ok(adaptive_greedy_step(s, b, current, visited, config));
    }
    if let Some(stop) = stop_if_resolved(s, b, config.tau) {
        return Ok(stop);
    }
    let cands = candidates(visited, config.allow_revisit);
    let mut search = Lookahead {
        s,
        objective: config.objective,
        allow_revisit: config.allow_revisit,
        nodes: 0,
    };
    let mut visited = visited.to_vec();
    let mut scored = Vec::with_capacity(cands.len());
    for &l in &cands {
        scored.push((l, search.action_value(b, &mut visited, l, config.horizon)?));
    }
    let choice = match config.objective {
        HorizonObjective::InformationGain => argmax_lowest(scored),
        HorizonObjective::TerminalRisk => argmin_lowest(scored),
    };
    Ok(choice.map_or_else(
        || PolicyAction::Stop(belief::map_decision(s, b)),
        PolicyAction::Visit,
    ))
}

/// A uniformly random location among the allowed candidates.
pub fn random_policy_step(
    rng: &mut dyn RngCore,
    visited: &[bool],
    s: &Scenario,
    b: &Belief,
    config: &PlannerConfig,
) -> PolicyAction {
    if let Some(stop) = stop_if_resolved(s, b, config.tau) {
        return stop;
    }
    let cands = candidates(visited, config.allow_revisit);
    if cands.is_empty() {
        return PolicyAction::Stop(belief::map_decision(s, b));
    }
    PolicyAction::Visit(cands[rng.gen_range(0..cands.len())])
}

/// Common-random-number samples of (hypothesis, every feature's value)
/// drawn from the prior, used to score set gains past the enumeration cap.
struct SetGainSampler {
    /// Per sample, the unnormalized posterior given the chosen set so far.
    weights: Vec<Vec<f64>>,
    values: Vec<Vec<usize>>,
}

impl SetGainSampler {
    fn new(s: &Scenario, samples: usize, seed: u64) -> Self {
        let mut rng = seed::rng_for(seed, &[0x5e7]);
        let mut weights = Vec::with_capacity(samples);
        let mut values = Vec::with_capacity(samples);
        for _ in 0..samples {
            let h = sample_index(&mut rng, &s.prior);
            values.push(
                s.features
                    .iter()
                    .map(|f| sample_index(&mut rng, &f.cpt[h]))
                    .collect(),
            );
            weights.push(s.prior.clone());
        }
        Self { weights, values }
    }

    fn expected_entropy_with(&self, s: &Scenario, extra: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut w = Vec::new();
        for (base, vals) in self.weights.iter().zip(&self.values) {
            w.clone_from(base);
            for &f in extra {
                let feature = &s.features[f];
                for (h, wh) in w.iter_mut().enumerate() {
                    *wh *= feature.likelihood(h, vals[f]);
                }
            }
            let mass: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= mass);
            total += entropy_bits(&w);
        }
        total / self.weights.len() as f64
    }

    fn commit(&mut self, s: &Scenario, features: &[usize]) {
        for (w, vals) in self.weights.iter_mut().zip(&self.values) {
            for &f in features {
                let feature = &s.features[f];
                for (h, wh) in w.iter_mut().enumerate() {
                    *wh *= feature.likelihood(h, vals[f]);
                }
            }
            let mass: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= mass);
        }
    }
}

/// Fixed visiting order chosen before any observation: each step adds the
/// location with the largest marginal set gain under the prior.
pub fn nonadaptive_greedy_order(
    s: &Scenario,
    budget_steps: usize,
    config: &PlannerConfig,
) -> Result<Vec<usize>, PlanError> {
    let m = s.n_locations();
    if budget_steps > m {
        return Err(PlanError::InvalidConfig(format!(
            "budget {budget_steps} exceeds the {m} locations"
        )));
    }
    let prior = Belief::prior(s);
    let mut chosen: Vec<usize> = Vec::with_capacity(budget_steps);
    let mut in_set = vec![false; m];
    let mut sampler: Option<SetGainSampler> = None;
    while chosen.len() < budget_steps {
        let cands: Vec<usize> = (0..m).filter(|&l| !in_set[l]).collect();
        let with: Vec<Vec<usize>> = cands
            .iter()
            .map(|&l| {
                let mut set = chosen.clone();
                set.push(l);
                belief::set_features(s, &prior, &set)
            })
            .collect();
        let exact = with
            .iter()
            .all(|f| outcome_space_size(s, f) <= OUTCOME_ENUM_CAP);
        let scores: Vec<f64> = if exact && sampler.is_none() {
            with.iter()
                .map(|f| belief::information_gain_exact(s, prior.probs(), f, OUTCOME_ENUM_CAP))
                .collect::<Result<_, _>>()?
        } else {
            if config.mc_samples == 0 {
                let size = with.iter().map(|f| outcome_space_size(s, f)).max().unwrap_or(0);
                return Err(PlanError::OutcomeSpaceTooLarge {
                    size,
                    cap: OUTCOME_ENUM_CAP,
                    hint: "enable outcome sampling".into(),
                });
            }
            let sampler = sampler.get_or_insert_with(|| {
                let mut fresh = SetGainSampler::new(s, config.mc_samples, config.seed);
                fresh.commit(s, &belief::set_features(s, &prior, &chosen));
                fresh
            });
            let done = belief::set_features(s, &prior, &chosen);
            let h0 = entropy_bits(prior.probs());
            cands
                .iter()
                .map(|&l| {
                    let extra: Vec<usize> = s.locations[l]
                        .features
                        .iter()
                        .copied()
                        .filter(|f| !done.contains(f))
                        .collect();
                    h0 - sampler.expected_entropy_with(s, &extra)
                })
                .collect()
        };
        let pick = argmax_lowest(cands.iter().copied().zip(scores)).expect("candidates nonempty");
        if let Some(sampler) = sampler.as_mut() {
            let done = belief::set_features(s, &prior, &chosen);
            let extra: Vec<usize> = s.locations[pick]
                .features
                .iter()
                .copied()
                .filter(|f| !done.contains(f))
                .collect();
            sampler.commit(s, &extra);
        }
        in_set[pick] = true;
        chosen.push(pick);
    }
    Ok(chosen)
}

/// One-step adaptive information gain.
#[derive(Debug, Clone)]
pub struct AdaptiveIg {
    pub config: PlannerConfig,
}

impl Policy for AdaptiveIg {
    fn name(&self) -> String {
        "adaptive-ig".into()
    }

    fn act(&self, s: &Scenario, st: &AgentState, _: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        Ok(adaptive_greedy_step(s, &st.belief, st.current, &st.visited, &self.config))
    }

    fn allow_revisit(&self) -> bool {
        self.config.allow_revisit
    }
}

#[derive(Debug, Clone)]
pub struct CostWeightedIg {
    pub config: PlannerConfig,
}

impl Policy for CostWeightedIg {
    fn name(&self) -> String {
        "cost-ig".into()
    }

    fn act(&self, s: &Scenario, st: &AgentState, _: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        Ok(cost_weighted_greedy_step(s, &st.belief, st.current, &st.visited, &self.config))
    }

    fn allow_revisit(&self) -> bool {
        self.config.allow_revisit
    }
}

#[derive(Debug, Clone)]
pub struct RecedingHorizon {
    pub config: PlannerConfig,
}

impl Policy for RecedingHorizon {
    fn name(&self) -> String {
        format!("horizon:{}", self.config.horizon)
    }

    fn act(&self, s: &Scenario, st: &AgentState, _: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        receding_horizon_step(s, &st.belief, st.current, &st.visited, &self.config)
    }

    fn allow_revisit(&self) -> bool {
        self.config.allow_revisit
    }
}

#[derive(Debug, Clone)]
pub struct RandomOrder {
    pub config: PlannerConfig,
}

impl Policy for RandomOrder {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&self, s: &Scenario, st: &AgentState, rng: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        Ok(random_policy_step(rng, &st.visited, s, &st.belief, &self.config))
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn allow_revisit(&self) -> bool {
        self.config.allow_revisit
    }
}

/// Follows a precomputed ordering, stopping early only under the shared
/// stopping rule.
#[derive(Debug, Clone)]
pub struct FixedOrder {
    pub label: String,
    pub order: Vec<usize>,
    pub config: PlannerConfig,
}

impl FixedOrder {
    /// The non-adaptive greedy ordering over all locations.
    pub fn nonadaptive_ig(s: &Scenario, config: &PlannerConfig) -> Result<Self, PlanError> {
        Ok(Self {
            label: "nonadaptive-ig".into(),
            order: nonadaptive_greedy_order(s, s.n_locations(), config)?,
            config: config.clone(),
        })
    }
}

impl Policy for FixedOrder {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn act(&self, s: &Scenario, st: &AgentState, _: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        if let Some(stop) = stop_if_resolved(s, &st.belief, self.config.tau) {
            return Ok(stop);
        }
        Ok(self
            .order
            .get(st.path.len())
            .map_or_else(
                || PolicyAction::Stop(belief::map_decision(s, &st.belief)),
                |&l| PolicyAction::Visit(l),
            ))
    }
}
