//! Brute-force optimal policies for the constrained problem
//!
//! ```text
//! minimize  E_H[c(pi, h)]   subject to   E_H[l(d, h) | pi] <= tau
//! ```
//!
//! Adaptive policies are searched over (position, visited set, realized
//! history) states. With `tau = 0` the constraint forces zero loss on every
//! reachable leaf, so the problem is a scalar AND/OR search; it is solved by
//! a memoized branch-and-bound with an information-theoretic lower bound.
//! With `tau > 0` the constraint only binds in expectation, so each state
//! keeps its Pareto frontier of (expected cost, expected loss) plans and the
//! root picks the cheapest feasible one.
//!
//! Non-adaptive policies are a fixed ordering with a fixed prefix length.
//! Expected loss of a prefix only depends on its set, and is monotone in the
//! set, so feasible sets are enumerated top-down from the full set and the
//! cheapest ordering of each comes from a Held-Karp path DP.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::rc::Rc;

use rand::RngCore;
use serde::Serialize;

use super::{AgentState, PlanError, PlannerConfig, Policy, PolicyAction};
use crate::belief::{
    self, entropy_bits, enumerate_outcomes, outcome_space_size, BeliefError, Observation,
    MIN_EVIDENCE_MASS, OUTCOME_ENUM_CAP,
};
use crate::model::Scenario;

/// Largest number of memoized search states before the oracle gives up.
pub const MAX_ORACLE_STATES: usize = 1_000_000;

/// Largest location count accepted by the non-adaptive oracle.
pub const MAX_NONADAPTIVE_LOCATIONS: usize = 16;

/// Leaves enumerated when computing the expected loss of a feature set.
const MAX_LOSS_LEAVES: usize = 20_000_000;

/// Largest Pareto frontier kept at a single state.
const MAX_FRONTIER: usize = 20_000;

/// Risks at or below this count as zero; expected losses may exceed
/// `tau` by at most this much.
const LOSS_TOL: f64 = 1e-12;

/// Costs closer than this are ties.
const COST_TIE: f64 = 1e-12;

const UNREALIZED: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeBranch {
    pub observations: Vec<Observation>,
    /// Probability of this branch given that its parent was reached.
    pub probability: f64,
    pub subtree: PolicyTree,
}

/// An explicit adaptive plan. Annotations are conditional on reaching the
/// node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTree {
    pub action: PolicyAction,
    pub expected_cost: f64,
    pub expected_loss: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeBranch>,
}

impl PolicyTree {
    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.subtree.depth())
            .max()
            .unwrap_or(0)
            .max(usize::from(matches!(self.action, PolicyAction::Visit(_))))
    }

    pub fn is_stop(&self) -> bool {
        matches!(self.action, PolicyAction::Stop(_))
    }

    /// Every root-to-leaf path as its list of visited locations.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        match self.action {
            PolicyAction::Stop(_) => vec![Vec::new()],
            PolicyAction::Visit(l) => {
                let mut out = Vec::new();
                for c in &self.children {
                    for mut p in c.subtree.paths() {
                        p.insert(0, l);
                        out.push(p);
                    }
                }
                if out.is_empty() {
                    out.push(vec![l]);
                }
                out
            }
        }
    }

    /// Indented text rendering keyed by observed values.
    pub fn render(&self, s: &Scenario) -> String {
        let mut out = String::new();
        self.render_into(s, 0, &mut out);
        out
    }

    fn render_into(&self, s: &Scenario, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self.action {
            PolicyAction::Stop(d) => {
                let _ = writeln!(
                    out,
                    "{pad}stop -> {} (loss {})",
                    s.hypotheses[d], self.expected_loss
                );
            }
            PolicyAction::Visit(l) => {
                let _ = writeln!(
                    out,
                    "{pad}visit {} (cost {}, loss {})",
                    s.locations[l].name, self.expected_cost, self.expected_loss
                );
                for c in &self.children {
                    let label = if c.observations.is_empty() {
                        "(nothing new)".to_string()
                    } else {
                        c.observations
                            .iter()
                            .map(|o| {
                                let f = &s.features[o.feature];
                                format!("{}={}", f.name, f.values[o.value])
                            })
                            .collect::<Vec<_>>()
                            .join(", ")
                    };
                    let _ = writeln!(out, "{pad}  [{label}] p={}", c.probability);
                    c.subtree.render_into(s, indent + 2, out);
                }
            }
        }
    }
}

/// Internal plan representation shared between memoized states.
#[derive(Debug)]
struct Plan {
    cost: f64,
    loss: f64,
    depth: usize,
    kind: PlanKind,
}

#[derive(Debug)]
enum PlanKind {
    Stop(usize),
    Visit {
        location: usize,
        branches: Vec<(Vec<Observation>, f64, Rc<Plan>)>,
    },
}

impl Plan {
    fn stop(decision: usize, loss: f64) -> Rc<Plan> {
        Rc::new(Plan {
            cost: 0.0,
            loss,
            depth: 0,
            kind: PlanKind::Stop(decision),
        })
    }

    fn first_location(&self) -> Option<usize> {
        match self.kind {
            PlanKind::Stop(_) => None,
            PlanKind::Visit { location, .. } => Some(location),
        }
    }

    fn to_tree(&self) -> PolicyTree {
        match &self.kind {
            PlanKind::Stop(d) => PolicyTree {
                action: PolicyAction::Stop(*d),
                expected_cost: 0.0,
                expected_loss: self.loss,
                children: Vec::new(),
            },
            PlanKind::Visit { location, branches } => PolicyTree {
                action: PolicyAction::Visit(*location),
                expected_cost: self.cost,
                expected_loss: self.loss,
                children: branches
                    .iter()
                    .map(|(obs, p, child)| TreeBranch {
                        observations: obs.clone(),
                        probability: *p,
                        subtree: child.to_tree(),
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Clone)]
struct Node {
    probs: Vec<f64>,
    realized: Vec<u8>,
    current: usize,
    visited: u64,
}

type Key = (usize, u64, Vec<u8>);

struct Branch {
    observations: Vec<Observation>,
    probability: f64,
    child: Node,
}

struct Action {
    location: usize,
    cost: f64,
    gain: f64,
    branches: Vec<Branch>,
}

/// Search context shared by both adaptive solvers.
struct Space<'a> {
    s: &'a Scenario,
    /// Position matters for future costs.
    key_position: bool,
    /// Skip actions that cannot change the belief (valid only when costs do
    /// not depend on position).
    prune_useless: bool,
}

impl<'a> Space<'a> {
    fn new(s: &'a Scenario) -> Self {
        let independent = s.costs_independent_of_position();
        Self {
            s,
            key_position: !independent,
            prune_useless: independent,
        }
    }

    fn root(&self) -> Node {
        Node {
            probs: self.s.prior.clone(),
            realized: vec![UNREALIZED; self.s.n_features()],
            current: 0,
            visited: 0,
        }
    }

    fn key(&self, n: &Node) -> Key {
        let pos = if self.key_position { n.current } else { 0 };
        (pos, n.visited, n.realized.clone())
    }

    fn new_features(&self, n: &Node, l: usize) -> Vec<usize> {
        self.s.locations[l]
            .features
            .iter()
            .copied()
            .filter(|&f| n.realized[f] == UNREALIZED)
            .collect()
    }

    /// No positive-probability outcome of `features` can move the belief.
    fn is_useless(&self, probs: &[f64], features: &[usize]) -> bool {
        features.iter().all(|&f| {
            let feature = &self.s.features[f];
            (0..feature.arity()).all(|v| {
                let mut first: Option<f64> = None;
                probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .all(|(h, _)| {
                        let lik = feature.likelihood(h, v);
                        *first.get_or_insert(lik) == lik
                    })
            })
        })
    }

    fn actions(&self, n: &Node) -> Result<Vec<Action>, PlanError> {
        let mut out = Vec::new();
        for l in 0..self.s.n_locations() {
            if n.visited & (1 << l) != 0 {
                continue;
            }
            let features = self.new_features(n, l);
            if self.prune_useless && self.is_useless(&n.probs, &features) {
                continue;
            }
            let outcomes = enumerate_outcomes(self.s, &n.probs, &features, OUTCOME_ENUM_CAP)
                .map_err(oracle_error)?;
            let prior_h = entropy_bits(&n.probs);
            let mut expected_h = 0.0;
            let mut branches = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                let mut realized = n.realized.clone();
                for (&f, &v) in features.iter().zip(&o.values) {
                    realized[f] = v as u8;
                }
                expected_h += o.probability * entropy_bits(&o.posterior);
                branches.push(Branch {
                    observations: o.observations(&features),
                    probability: o.probability,
                    child: Node {
                        probs: o.posterior,
                        realized,
                        current: l,
                        visited: n.visited | (1 << l),
                    },
                });
            }
            out.push(Action {
                location: l,
                cost: self.s.visit_cost(n.current, l),
                gain: prior_h - expected_h,
                branches,
            });
        }
        Ok(out)
    }

    fn unvisited(&self, n: &Node) -> impl Iterator<Item = usize> + '_ {
        let visited = n.visited;
        (0..self.s.n_locations()).filter(move |&l| visited & (1 << l) == 0)
    }
}

fn oracle_error(e: BeliefError) -> PlanError {
    match e {
        BeliefError::OutcomeSpaceTooLarge { size, cap } => PlanError::OutcomeSpaceTooLarge {
            size,
            cap,
            hint: "a single location reveals too many joint outcomes".into(),
        },
        other => PlanError::Belief(other),
    }
}

enum Solve {
    Exact(Rc<Plan>),
    /// The optimum is at least this and exceeds the budget.
    Above(f64),
}

enum Memo {
    Exact(Rc<Plan>),
    Lower(f64),
}

/// Branch-and-bound for zero expected loss.
struct ZeroLossSearch<'a> {
    space: Space<'a>,
    memo: HashMap<Key, Memo>,
    /// log2 of the largest set of hypotheses a single decision has zero
    /// loss on; a zero-risk belief has at most this much entropy.
    log2_zero_set: f64,
}

impl<'a> ZeroLossSearch<'a> {
    fn new(s: &'a Scenario) -> Self {
        let widest = s
            .loss
            .iter()
            .map(|row| row.iter().filter(|&&l| l <= 0.0).count())
            .max()
            .unwrap_or(0)
            .max(1);
        Self {
            space: Space::new(s),
            memo: HashMap::new(),
            log2_zero_set: (widest as f64).log2(),
        }
    }

    /// Lower bound on the expected cost to zero risk from `n`. Each visit
    /// yields at most log2(#outcomes) bits, so the expected number of
    /// visits is at least the entropy still to remove divided by that.
    fn lower_bound(&self, n: &Node) -> f64 {
        let s = self.space.s;
        let mut cheapest = f64::INFINITY;
        let mut widest_bits: f64 = 0.0;
        for l in self.space.unvisited(n) {
            let features = self.space.new_features(n, l);
            if features.is_empty() {
                continue;
            }
            let bits = (outcome_space_size(s, &features) as f64).log2();
            widest_bits = widest_bits.max(bits);
            let row_min = s.travel_cost[l].iter().copied().fold(f64::INFINITY, f64::min);
            cheapest = cheapest.min(row_min);
        }
        if widest_bits <= 0.0 {
            return f64::INFINITY;
        }
        let to_remove = entropy_bits(&n.probs) - self.log2_zero_set - 1e-9;
        cheapest * (to_remove / widest_bits).max(1.0)
    }

    fn solve(&mut self, n: &Node, ub: f64) -> Result<Solve, PlanError> {
        let s = self.space.s;
        let risk = belief::risk_of(s, &n.probs);
        if risk <= LOSS_TOL {
            return Ok(Solve::Exact(Plan::stop(belief::decide(s, &n.probs), risk)));
        }
        let key = self.space.key(n);
        let known_lower = match self.memo.get(&key) {
            Some(Memo::Exact(p)) => return Ok(Solve::Exact(p.clone())),
            Some(Memo::Lower(lb)) if *lb > ub + COST_TIE => return Ok(Solve::Above(*lb)),
            Some(Memo::Lower(lb)) => *lb,
            None => 0.0,
        };
        let lb0 = self.lower_bound(n).max(known_lower);
        if lb0 > ub + COST_TIE {
            self.memo.insert(key, Memo::Lower(lb0));
            return Ok(Solve::Above(lb0));
        }
        if self.memo.len() >= MAX_ORACLE_STATES {
            return Err(PlanError::StateSpaceTooLarge {
                states: self.memo.len(),
                limit: MAX_ORACLE_STATES,
            });
        }

        let mut actions = self.space.actions(n)?;
        // Explore informative actions first; ties are settled explicitly.
        actions.sort_by(|a, b| b.gain.total_cmp(&a.gain));

        let mut best: Option<Rc<Plan>> = None;
        let mut bound = ub;
        let mut failed_lower = f64::INFINITY;
        for action in &actions {
            let child_lbs: Vec<f64> = action
                .branches
                .iter()
                .map(|b| self.cached_lower(&b.child))
                .collect();
            let mut remaining: f64 = action
                .branches
                .iter()
                .zip(&child_lbs)
                .map(|(b, lb)| b.probability * lb)
                .sum();
            let total_lb = action.cost + remaining;
            if total_lb > bound + COST_TIE {
                failed_lower = failed_lower.min(total_lb);
                continue;
            }
            let mut acc = action.cost;
            let mut plans = Vec::with_capacity(action.branches.len());
            let mut failed = false;
            for (b, lb) in action.branches.iter().zip(&child_lbs) {
                remaining -= b.probability * lb;
                let budget = (bound + COST_TIE - acc - remaining) / b.probability;
                match self.solve(&b.child, budget)? {
                    Solve::Exact(p) => {
                        acc += b.probability * p.cost;
                        plans.push(p);
                    }
                    Solve::Above(l) => {
                        failed_lower = failed_lower.min(acc + b.probability * l + remaining);
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            // Memoized children are returned exactly even past their budget.
            if acc > bound + COST_TIE {
                failed_lower = failed_lower.min(acc);
                continue;
            }
            let depth = 1 + plans.iter().map(|p| p.depth).max().unwrap_or(0);
            let better = match &best {
                None => true,
                Some(b) => {
                    acc < b.cost - COST_TIE
                        || (acc <= b.cost + COST_TIE
                            && (depth, action.location) < (b.depth, b.first_location().unwrap_or(0)))
                }
            };
            if better {
                let loss = action
                    .branches
                    .iter()
                    .zip(&plans)
                    .map(|(b, p)| b.probability * p.loss)
                    .sum();
                let branches = action
                    .branches
                    .iter()
                    .zip(plans)
                    .map(|(b, p)| (b.observations.clone(), b.probability, p))
                    .collect();
                best = Some(Rc::new(Plan {
                    cost: acc,
                    loss,
                    depth,
                    kind: PlanKind::Visit {
                        location: action.location,
                        branches,
                    },
                }));
                bound = bound.min(acc);
            }
        }
        match best {
            Some(p) => {
                self.memo.insert(key, Memo::Exact(p.clone()));
                Ok(Solve::Exact(p))
            }
            None => {
                let lb = failed_lower.max(lb0);
                self.memo.insert(key, Memo::Lower(lb));
                Ok(Solve::Above(lb))
            }
        }
    }

    fn cached_lower(&self, n: &Node) -> f64 {
        if belief::risk_of(self.space.s, &n.probs) <= LOSS_TOL {
            return 0.0;
        }
        match self.memo.get(&self.space.key(n)) {
            Some(Memo::Exact(p)) => p.cost,
            Some(Memo::Lower(lb)) => lb.max(self.lower_bound(n)),
            None => self.lower_bound(n),
        }
    }
}

#[derive(Clone)]
struct Point {
    cost: f64,
    loss: f64,
    depth: usize,
    plan: Rc<Plan>,
}

fn order_key(p: &Point) -> (f64, f64, usize, usize) {
    (
        p.cost,
        p.loss,
        p.depth,
        p.plan.first_location().map_or(0, |l| l + 1),
    )
}

/// Keep the (cost, loss) Pareto frontier; exact ties go to the shallower
/// plan, then to the lower first location.
fn pareto(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| {
        let (ka, kb) = (order_key(a), order_key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
    });
    let mut kept: Vec<Point> = Vec::new();
    for p in pts {
        let dominated = kept.iter().any(|q| {
            q.loss <= p.loss + LOSS_TOL
                && (q.cost < p.cost - COST_TIE || q.loss < p.loss - LOSS_TOL || q.depth <= p.depth)
        });
        if !dominated {
            kept.push(p);
        }
    }
    kept
}

/// Exact Pareto-frontier dynamic program for `tau > 0`.
struct FrontierSearch<'a> {
    space: Space<'a>,
    memo: HashMap<Key, Rc<Vec<Point>>>,
}

impl FrontierSearch<'_> {
    fn frontier(&mut self, n: &Node) -> Result<Rc<Vec<Point>>, PlanError> {
        let key = self.space.key(n);
        if let Some(f) = self.memo.get(&key) {
            return Ok(f.clone());
        }
        if self.memo.len() >= MAX_ORACLE_STATES {
            return Err(PlanError::StateSpaceTooLarge {
                states: self.memo.len(),
                limit: MAX_ORACLE_STATES,
            });
        }
        let s = self.space.s;
        let risk = belief::risk_of(s, &n.probs);
        let mut points = vec![Point {
            cost: 0.0,
            loss: risk,
            depth: 0,
            plan: Plan::stop(belief::decide(s, &n.probs), risk),
        }];
        if risk > LOSS_TOL {
            for action in self.space.actions(n)? {
                // Partial combinations: (cost, loss, depth, chosen child plans).
                let mut combos: Vec<(f64, f64, usize, Vec<Rc<Plan>>)> =
                    vec![(action.cost, 0.0, 0, Vec::new())];
                for b in &action.branches {
                    let child = self.frontier(&b.child)?;
                    let mut next = Vec::with_capacity(combos.len() * child.len());
                    for (c, l, d, plans) in &combos {
                        for q in child.iter() {
                            let mut plans = plans.clone();
                            plans.push(q.plan.clone());
                            next.push((
                                c + b.probability * q.cost,
                                l + b.probability * q.loss,
                                (*d).max(q.depth),
                                plans,
                            ));
                        }
                    }
                    combos = prune_combos(next);
                    if combos.len() > MAX_FRONTIER {
                        return Err(PlanError::StateSpaceTooLarge {
                            states: combos.len(),
                            limit: MAX_FRONTIER,
                        });
                    }
                }
                for (cost, loss, depth, plans) in combos {
                    let branches = action
                        .branches
                        .iter()
                        .zip(plans)
                        .map(|(b, p)| (b.observations.clone(), b.probability, p))
                        .collect();
                    points.push(Point {
                        cost,
                        loss,
                        depth: depth + 1,
                        plan: Rc::new(Plan {
                            cost,
                            loss,
                            depth: depth + 1,
                            kind: PlanKind::Visit {
                                location: action.location,
                                branches,
                            },
                        }),
                    });
                }
            }
        }
        let points = pareto(points);
        if points.len() > MAX_FRONTIER {
            return Err(PlanError::StateSpaceTooLarge {
                states: points.len(),
                limit: MAX_FRONTIER,
            });
        }
        let f = Rc::new(points);
        self.memo.insert(key, f.clone());
        Ok(f)
    }
}

type Combo = (f64, f64, usize, Vec<Rc<Plan>>);

fn prune_combos(mut v: Vec<Combo>) -> Vec<Combo> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut kept: Vec<Combo> = Vec::new();
    for p in v {
        let dominated = kept.iter().any(|q| {
            q.1 <= p.1 + LOSS_TOL && (q.0 < p.0 - COST_TIE || q.1 < p.1 - LOSS_TOL || q.2 <= p.2)
        });
        if !dominated {
            kept.push(p);
        }
    }
    kept
}

/// Upper bound on the (position, visited, history) states of the frontier DP.
fn projected_states(s: &Scenario) -> f64 {
    let per_location: f64 = s
        .locations
        .iter()
        .map(|l| 1.0 + outcome_space_size(s, &l.features) as f64)
        .product();
    if s.costs_independent_of_position() {
        per_location
    } else {
        per_location * s.n_locations() as f64
    }
}

/// Expected Bayes risk after observing every feature in `features`,
/// enumerating only positive-probability outcomes.
pub(crate) fn expected_loss_of_features(
    s: &Scenario,
    probs: &[f64],
    features: &[usize],
) -> Result<f64, PlanError> {
    fn rec(
        s: &Scenario,
        features: &[usize],
        w: &[f64],
        leaves: &mut usize,
    ) -> Result<f64, PlanError> {
        let mass: f64 = w.iter().sum();
        if mass < MIN_EVIDENCE_MASS {
            return Ok(0.0);
        }
        let Some((&f, rest)) = features.split_first() else {
            *leaves += 1;
            if *leaves > MAX_LOSS_LEAVES {
                return Err(PlanError::StateSpaceTooLarge {
                    states: *leaves,
                    limit: MAX_LOSS_LEAVES,
                });
            }
            // Unnormalized weights: the risk is already scaled by the mass.
            return Ok(belief::risk_of(s, w));
        };
        let feature = &s.features[f];
        let mut total = 0.0;
        let mut next = vec![0.0; w.len()];
        for v in 0..feature.arity() {
            for (h, x) in next.iter_mut().enumerate() {
                *x = w[h] * feature.likelihood(h, v);
            }
            total += rec(s, rest, &next, leaves)?;
        }
        Ok(total)
    }
    let mut leaves = 0;
    rec(s, features, probs, &mut leaves)
}

fn all_features(s: &Scenario, locations: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut f: Vec<usize> = locations
        .into_iter()
        .flat_map(|l| s.locations[l].features.iter().copied())
        .collect();
    f.sort_unstable();
    f.dedup();
    f
}

/// Exact minimum-expected-cost adaptive policy tree with expected loss at
/// most `config.tau`. Starts at location 0 with nothing visited.
pub fn brute_force_optimal(s: &Scenario, config: &PlannerConfig) -> Result<PolicyTree, PlanError> {
    config.validate()?;
    if s.n_locations() > 63 {
        return Err(PlanError::StateSpaceTooLarge {
            states: s.n_locations(),
            limit: 63,
        });
    }
    let tau = config.tau;
    let prior_risk = belief::risk_of(s, &s.prior);
    if prior_risk <= tau + LOSS_TOL {
        return Ok(Plan::stop(belief::decide(s, &s.prior), prior_risk).to_tree());
    }
    let best_loss = expected_loss_of_features(s, &s.prior, &all_features(s, 0..s.n_locations()))?;
    if best_loss > tau + LOSS_TOL {
        return Err(PlanError::Infeasible { best_loss });
    }
    if tau <= LOSS_TOL {
        let mut search = ZeroLossSearch::new(s);
        let root = search.space.root();
        return match search.solve(&root, f64::INFINITY)? {
            Solve::Exact(p) => Ok(p.to_tree()),
            Solve::Above(_) => Err(PlanError::Infeasible { best_loss }),
        };
    }
    let projected = projected_states(s);
    if projected > MAX_ORACLE_STATES as f64 {
        return Err(PlanError::StateSpaceTooLarge {
            states: projected.min(usize::MAX as f64) as usize,
            limit: MAX_ORACLE_STATES,
        });
    }
    let mut search = FrontierSearch {
        space: Space::new(s),
        memo: HashMap::new(),
    };
    let root = search.space.root();
    let frontier = search.frontier(&root)?;
    frontier
        .iter()
        .filter(|p| p.loss <= tau + LOSS_TOL)
        .min_by(|a, b| {
            if (a.cost - b.cost).abs() <= COST_TIE {
                (a.depth, a.plan.first_location()).cmp(&(b.depth, b.plan.first_location()))
            } else {
                a.cost.total_cmp(&b.cost)
            }
        })
        .map(|p| p.plan.to_tree())
        .ok_or(PlanError::Infeasible { best_loss })
}

/// The optimal fixed ordering with a fixed prefix length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonAdaptivePlan {
    pub order: Vec<usize>,
    pub expected_cost: f64,
    pub expected_loss: f64,
}

/// Cheapest fixed ordering whose prefix reaches expected loss at most `tau`.
pub fn brute_force_optimal_nonadaptive(s: &Scenario, tau: f64) -> Result<NonAdaptivePlan, PlanError> {
    let m = s.n_locations();
    if m > MAX_NONADAPTIVE_LOCATIONS {
        return Err(PlanError::StateSpaceTooLarge {
            states: m,
            limit: MAX_NONADAPTIVE_LOCATIONS,
        });
    }
    let loss_of = |set: u32| -> Result<f64, PlanError> {
        expected_loss_of_features(s, &s.prior, &all_features(s, (0..m).filter(|l| set & (1 << l) != 0)))
    };
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let full_loss = loss_of(full)?;
    if full_loss > tau + LOSS_TOL {
        return Err(PlanError::Infeasible {
            best_loss: full_loss,
        });
    }

    // Feasible sets form an up-closed family: a set is only evaluated when
    // every one-larger superset is feasible.
    let mut feasible: HashMap<u32, f64> = HashMap::from([(full, full_loss)]);
    let mut seen: HashSet<u32> = HashSet::from([full]);
    let mut level = vec![full];
    while !level.is_empty() {
        let mut next = Vec::new();
        for &t in &level {
            for x in 0..m {
                if t & (1 << x) == 0 {
                    continue;
                }
                let set = t & !(1 << x);
                if !seen.insert(set) {
                    continue;
                }
                let supersets_ok = (0..m)
                    .filter(|y| set & (1 << y) == 0)
                    .all(|y| feasible.contains_key(&(set | (1 << y))));
                if !supersets_ok {
                    continue;
                }
                let loss = loss_of(set)?;
                if loss <= tau + LOSS_TOL {
                    feasible.insert(set, loss);
                    next.push(set);
                }
            }
        }
        next.sort_unstable();
        level = next;
    }

    // Held-Karp on suffixes: cheapest way to visit all of `set` starting
    // from `cur`. Forward reconstruction then yields the lexicographically
    // smallest cheapest order.
    let size = 1usize << m;
    let mut g = vec![0.0; size * m.max(1)];
    for set in 1..size {
        for cur in 0..m {
            let mut best = f64::INFINITY;
            for l in (0..m).filter(|&l| set & (1 << l) != 0) {
                best = best.min(s.visit_cost(cur, l) + g[(set & !(1 << l)) * m + l]);
            }
            g[set * m + cur] = best;
        }
    }
    let order_of = |set: usize| -> (f64, Vec<usize>) {
        let cost = if set == 0 { 0.0 } else { g[set * m] };
        let mut order = Vec::new();
        let mut rest = set;
        let mut cur = 0;
        while rest != 0 {
            let target = g[rest * m + cur];
            let next = (0..m)
                .filter(|&l| rest & (1 << l) != 0)
                .find(|&l| {
                    let c = s.visit_cost(cur, l) + g[(rest & !(1 << l)) * m + l];
                    (c - target).abs() <= 1e-9 * target.abs().max(1.0)
                })
                .expect("Held-Karp reconstruction");
            order.push(next);
            rest &= !(1 << next);
            cur = next;
        }
        (cost, order)
    };

    let mut best: Option<NonAdaptivePlan> = None;
    let mut sets: Vec<u32> = feasible.keys().copied().collect();
    sets.sort_unstable();
    for set in sets {
        let (cost, order) = order_of(set as usize);
        let candidate = NonAdaptivePlan {
            order,
            expected_cost: cost,
            expected_loss: feasible[&set],
        };
        let better = match &best {
            None => true,
            Some(b) => {
                candidate.expected_cost < b.expected_cost - COST_TIE
                    || (candidate.expected_cost <= b.expected_cost + COST_TIE
                        && (candidate.order.len(), &candidate.order) < (b.order.len(), &b.order))
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("full set is feasible"))
}

/// Executes an explicit policy tree, following the branch that matches the
/// realized observations.
#[derive(Debug, Clone)]
pub struct TreePolicy {
    pub tree: PolicyTree,
}

impl Policy for TreePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn act(&self, s: &Scenario, st: &AgentState, _: &mut dyn RngCore) -> Result<PolicyAction, PlanError> {
        let history = st.belief.history();
        let mut node = &self.tree;
        for &l in &st.path {
            if node.action != PolicyAction::Visit(l) {
                return Ok(PolicyAction::Stop(belief::map_decision(s, &st.belief)));
            }
            let next = node
                .children
                .iter()
                .find(|c| c.observations.iter().all(|o| history.contains(o)));
            match next {
                Some(c) => node = &c.subtree,
                None => return Ok(PolicyAction::Stop(belief::map_decision(s, &st.belief))),
            }
        }
        Ok(node.action)
    }
}
