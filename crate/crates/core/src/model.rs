//! Problem instances: hypotheses with a prior, class-conditional features,
//! viewing locations that reveal those features, travel costs, a decision
//! loss matrix and the acceptable expected-loss threshold.
//!
//! Scenarios are stored as JSON. Probabilities are kept in linear space as
//! written, so a scenario file can be audited by hand.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on probability normalization.
pub const PROB_TOL: f64 = 1e-9;

/// Default expected-loss threshold when a file omits `tau`.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One failed invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// A discrete class-conditional feature. `cpt[h][v]` is P(F = v | H = h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

impl Feature {
    pub fn arity(&self) -> usize {
        self.values.len()
    }

    pub fn likelihood(&self, hypothesis: usize, value: usize) -> f64 {
        self.cpt[hypothesis][value]
    }

    /// Every entry is exactly 0 or 1.
    pub fn is_noiseless(&self) -> bool {
        self.cpt
            .iter()
            .flatten()
            .all(|&p| p == 0.0 || p == 1.0)
    }
}

/// A viewpoint. Visiting it reveals the features listed in `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    pub features: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub hypotheses: Vec<String>,
    pub prior: Vec<f64>,
    pub features: Vec<Feature>,
    pub locations: Vec<Location>,
    /// `travel_cost[i][j]` is the cost of observing from location `i` while
    /// standing at location `j`. The diagonal is the cost of looking again
    /// from where the agent already is.
    pub travel_cost: Vec<Vec<f64>>,
    /// `loss[d][h]`: loss of deciding `d` when `h` is true.
    pub loss: Vec<Vec<f64>>,
    pub tau: f64,
}

impl Scenario {
    pub fn n_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    /// Cost of visiting `to` while standing at `from`.
    pub fn visit_cost(&self, from: usize, to: usize) -> f64 {
        self.travel_cost[to][from]
    }

    /// True when visiting any location costs the same wherever the agent stands.
    pub fn costs_independent_of_position(&self) -> bool {
        self.travel_cost
            .iter()
            .all(|row| row.iter().all(|&c| c == row[0]))
    }

    pub fn is_noiseless(&self) -> bool {
        is_noiseless(self)
    }

    /// Smallest prior probability, the `p_min` of the adaptive cost bound.
    pub fn p_min(&self) -> f64 {
        self.prior.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// A 0/1 loss over `n` hypotheses.
    pub fn zero_one_loss(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|d| (0..n).map(|h| if d == h { 0.0 } else { 1.0 }).collect())
            .collect()
    }

    /// A copy with every travel cost set to `cost`.
    pub fn with_uniform_costs(&self, cost: f64) -> Scenario {
        let m = self.n_locations();
        Scenario {
            travel_cost: vec![vec![cost; m]; m],
            ..self.clone()
        }
    }

    pub fn with_tau(&self, tau: f64) -> Scenario {
        Scenario {
            tau,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// Every CPT entry of every feature is 0 or 1.
pub fn is_noiseless(scenario: &Scenario) -> bool {
    scenario.features.iter().all(Feature::is_noiseless)
}

fn check_unique(names: &[String], field: &str, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            out.push(Violation::new(field, format!("duplicate name {name:?}")));
        }
    }
}

fn check_matrix(
    m: &[Vec<f64>],
    rows: usize,
    cols: usize,
    field: &str,
    out: &mut Vec<Violation>,
) {
    if m.len() != rows {
        out.push(Violation::new(
            field,
            format!("expected {rows} rows, found {}", m.len()),
        ));
        return;
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            out.push(Violation::new(
                format!("{field}[{i}]"),
                format!("expected {cols} columns, found {}", row.len()),
            ));
            continue;
        }
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                out.push(Violation::new(
                    format!("{field}[{i}][{j}]"),
                    format!("entry {x} must be finite and >= 0"),
                ));
            }
        }
    }
}

/// Report every violated invariant. An empty list means the scenario is valid.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = s.hypotheses.len();
    let m = s.locations.len();

    if n < 2 {
        out.push(Violation::new("hypotheses", format!("need at least 2, found {n}")));
    }
    check_unique(&s.hypotheses, "hypotheses", &mut out);

    if s.prior.len() != n {
        out.push(Violation::new(
            "prior",
            format!("length {} does not match {n} hypotheses", s.prior.len()),
        ));
    }
    let mut prior_ok = true;
    for (i, &p) in s.prior.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            prior_ok = false;
            out.push(Violation::new(
                format!("prior[{i}]"),
                format!("probability {p} must be finite and >= 0"),
            ));
        }
    }
    if prior_ok {
        let sum: f64 = s.prior.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::new("prior", format!("prior sum {sum} != 1")));
        }
    }

    if s.features.is_empty() {
        out.push(Violation::new("features", "need at least 1 feature"));
    }
    let feature_names: Vec<String> = s.features.iter().map(|f| f.name.clone()).collect();
    check_unique(&feature_names, "features", &mut out);
    for (k, f) in s.features.iter().enumerate() {
        let field = format!("features[{k}]");
        if f.values.len() < 2 {
            out.push(Violation::new(
                format!("{field}.values"),
                format!("need at least 2 values, found {}", f.values.len()),
            ));
        }
        check_unique(&f.values, &format!("{field}.values"), &mut out);
        if f.cpt.len() != n {
            out.push(Violation::new(
                format!("{field}.cpt"),
                format!("expected {n} rows (one per hypothesis), found {}", f.cpt.len()),
            ));
            continue;
        }
        for (h, row) in f.cpt.iter().enumerate() {
            let rf = format!("{field}.cpt[{h}]");
            if row.len() != f.values.len() {
                out.push(Violation::new(
                    rf,
                    format!("expected {} entries, found {}", f.values.len(), row.len()),
                ));
                continue;
            }
            if row.iter().any(|&p| !p.is_finite() || !(0.0..=1.0).contains(&p)) {
                out.push(Violation::new(rf, "entries must lie in [0, 1]"));
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                out.push(Violation::new(rf, format!("row sum {sum} != 1")));
            }
        }
    }

    if m < 1 {
        out.push(Violation::new("locations", "need at least 1 location"));
    }
    let location_names: Vec<String> = s.locations.iter().map(|l| l.name.clone()).collect();
    check_unique(&location_names, "locations", &mut out);
    for (i, loc) in s.locations.iter().enumerate() {
        let field = format!("locations[{i}]");
        if loc.features.is_empty() {
            out.push(Violation::new(
                format!("{field}.features"),
                "must observe at least one feature",
            ));
        }
        let mut seen = HashSet::new();
        for &f in &loc.features {
            if f >= s.features.len() {
                out.push(Violation::new(
                    format!("{field}.features"),
                    format!("feature index {f} out of range"),
                ));
            } else if !seen.insert(f) {
                out.push(Violation::new(
                    format!("{field}.features"),
                    format!("feature index {f} listed twice"),
                ));
            }
        }
        if let Some(c) = &loc.coords {
            if !(2..=3).contains(&c.len()) || c.iter().any(|x| !x.is_finite()) {
                out.push(Violation::new(
                    format!("{field}.coords"),
                    "coords must be 2 or 3 finite numbers",
                ));
            }
        }
    }

    check_matrix(&s.travel_cost, m, m, "travel_cost", &mut out);
    check_matrix(&s.loss, n, n, "loss", &mut out);

    if !s.tau.is_finite() || s.tau < 0.0 {
        out.push(Violation::new("tau", format!("threshold {} must be finite and >= 0", s.tau)));
    }
    out
}

// On-disk layout. Hypotheses carry their prior inline.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypothesisEntry {
    name: String,
    prior: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    hypotheses: Vec<HypothesisEntry>,
    features: Vec<Feature>,
    locations: Vec<Location>,
    travel_cost: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_tau")]
    tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            hypotheses: s
                .hypotheses
                .iter()
                .zip(&s.prior)
                .map(|(name, &prior)| HypothesisEntry {
                    name: name.clone(),
                    prior,
                })
                .collect(),
            features: s.features.clone(),
            locations: s.locations.clone(),
            travel_cost: s.travel_cost.clone(),
            loss: Some(s.loss.clone()),
            tau: s.tau,
        }
    }
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        let n = f.hypotheses.len();
        let (hypotheses, prior) = f.hypotheses.into_iter().map(|h| (h.name, h.prior)).unzip();
        Scenario {
            hypotheses,
            prior,
            features: f.features,
            locations: f.locations,
            travel_cost: f.travel_cost,
            loss: f.loss.unwrap_or_else(|| Scenario::zero_one_loss(n)),
            tau: f.tau,
        }
    }
}

/// Parse and validate a scenario from JSON text. `origin` labels errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let scenario = Scenario::from(file);
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

/// Parse without validating, for reporting tools that want every violation.
pub fn parse_scenario_unchecked(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(Scenario::from(file))
}

pub fn scenario_to_json(s: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(&ScenarioFile::from(s))
        .expect("scenario serialization cannot fail");
    text.push('\n');
    text
}

pub fn read_scenario_text(path: impl AsRef<Path>) -> Result<String, ScenarioError> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = read_scenario_text(path)?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario_to_json(s)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}
