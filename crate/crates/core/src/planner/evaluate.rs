//! Exact expected cost and loss of a policy, by summing over every
//! hypothesis and observation branch.

use serde::Serialize;

use super::{revealed_features, AgentState, PlanError, Policy, PolicyAction, PolicyTree};
use crate::belief::{self, enumerate_outcomes, Belief, BeliefError, OUTCOME_ENUM_CAP};
use crate::model::Scenario;
use crate::seed;

use super::oracle::MAX_ORACLE_STATES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub expected_cost: f64,
    pub expected_loss: f64,
}

fn decision_loss(s: &Scenario, probs: &[f64], decision: usize) -> f64 {
    s.loss[decision].iter().zip(probs).map(|(l, p)| l * p).sum()
}

struct Unroller<'a> {
    s: &'a Scenario,
    policy: &'a dyn Policy,
    nodes: usize,
}

impl Unroller<'_> {
    fn eval(&mut self, st: &AgentState, steps_left: usize) -> Result<Evaluation, PlanError> {
        self.nodes += 1;
        if self.nodes > MAX_ORACLE_STATES {
            return Err(PlanError::StateSpaceTooLarge {
                states: self.nodes,
                limit: MAX_ORACLE_STATES,
            });
        }
        let action = if steps_left == 0 {
            PolicyAction::Stop(belief::map_decision(self.s, &st.belief))
        } else {
            // Deterministic policies ignore the generator.
            let mut rng = seed::rng_for(0, &[]);
            self.policy.act(self.s, st, &mut rng)?
        };
        match action {
            PolicyAction::Stop(d) => Ok(Evaluation {
                expected_cost: 0.0,
                expected_loss: decision_loss(self.s, st.belief.probs(), d),
            }),
            PolicyAction::Visit(l) => {
                let revisit = self.policy.allow_revisit();
                let features = revealed_features(self.s, &st.belief, l, revisit);
                let branches = enumerate_outcomes(self.s, st.belief.probs(), &features, OUTCOME_ENUM_CAP)
                    .map_err(|e| match e {
                        BeliefError::OutcomeSpaceTooLarge { size, cap } => {
                            PlanError::StateSpaceTooLarge { states: size, limit: cap }
                        }
                        other => PlanError::Belief(other),
                    })?;
                let mut out = Evaluation {
                    expected_cost: self.s.visit_cost(st.current, l),
                    expected_loss: 0.0,
                };
                for b in branches {
                    let obs = b.observations(&features);
                    let next = st.advance(self.s, l, &obs, revisit)?;
                    let sub = self.eval(&next, steps_left - 1)?;
                    out.expected_cost += b.probability * sub.expected_cost;
                    out.expected_loss += b.probability * sub.expected_loss;
                }
                Ok(out)
            }
        }
    }
}

/// Unroll a deterministic policy against every outcome branch. The policy
/// is forced to decide after `max_steps` visits.
pub fn evaluate_policy_exact(
    s: &Scenario,
    policy: &dyn Policy,
    max_steps: usize,
) -> Result<Evaluation, PlanError> {
    if !policy.is_deterministic() {
        return Err(PlanError::NotDeterministic(policy.name()));
    }
    let mut unroller = Unroller {
        s,
        policy,
        nodes: 0,
    };
    unroller.eval(&AgentState::start(s), max_steps)
}

/// Recompute a tree's expected cost and loss from the scenario alone,
/// ignoring its stored annotations and branch probabilities.
pub fn evaluate_tree(s: &Scenario, tree: &PolicyTree) -> Result<Evaluation, PlanError> {
    fn rec(s: &Scenario, node: &PolicyTree, b: &Belief, current: usize) -> Result<Evaluation, PlanError> {
        match node.action {
            PolicyAction::Stop(d) => Ok(Evaluation {
                expected_cost: 0.0,
                expected_loss: decision_loss(s, b.probs(), d),
            }),
            PolicyAction::Visit(l) => {
                let mut out = Evaluation {
                    expected_cost: s.visit_cost(current, l),
                    expected_loss: 0.0,
                };
                for c in &node.children {
                    // P(observations | belief) = sum_h b(h) prod P(v | h).
                    let p: f64 = b
                        .probs()
                        .iter()
                        .enumerate()
                        .map(|(h, bh)| {
                            bh * c
                                .observations
                                .iter()
                                .map(|o| s.features[o.feature].likelihood(h, o.value))
                                .product::<f64>()
                        })
                        .sum();
                    if p == 0.0 {
                        continue;
                    }
                    let next = belief::update_repeated(s, b, &c.observations)?;
                    let sub = rec(s, &c.subtree, &next, l)?;
                    out.expected_cost += p * sub.expected_cost;
                    out.expected_loss += p * sub.expected_loss;
                }
                Ok(out)
            }
        }
    }
    rec(s, tree, &Belief::prior(s), 0)
}
