//! Command-line front end: scenario generation and checking, simulation,
//! the exact oracle, and paired policy comparison.
//!
//! Exit codes: 0 ok, 2 input or validation error, 3 resource guard tripped,
//! 4 infeasible.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::model::{self, Scenario, ScenarioError};
use crate::planner::{
    brute_force_optimal, brute_force_optimal_nonadaptive, AdaptiveIg, CostWeightedIg, FixedOrder,
    PlanError, PlannerConfig, Policy, PolicyTree, RandomOrder, RecedingHorizon,
};
use crate::scenarios::{self, CorrespondenceProfile, RandomSpec};
use crate::sim::{self, ComparisonTable, EpisodeRecord};

pub const POLICY_NAMES: &str = "adaptive-ig, nonadaptive-ig, cost-ig, horizon:T, random";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Guard(String),
    #[error("infeasible: best achievable expected loss is {best_loss}")]
    Infeasible { best_loss: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Infeasible { .. } => 4,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::StateSpaceTooLarge { .. } | PlanError::OutcomeSpaceTooLarge { .. } => {
                CliError::Guard(e.to_string())
            }
            PlanError::Infeasible { best_loss } => CliError::Infeasible { best_loss },
            other => CliError::Input(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "viewplan", version, about = "Active classification view planner")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario file.
    Generate(GenerateArgs),
    /// Validate a scenario file.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run Monte Carlo episodes of one policy and write per-episode rows.
    Simulate(SimulateArgs),
    /// Compute the exact optimal policy.
    Oracle(OracleArgs),
    /// Paired comparison of policies across viewing budgets.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorType {
    Theorem1,
    Random,
    Polyhedra,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long = "type", value_enum)]
    kind: GeneratorType,
    /// Hypotheses (theorem1, random).
    #[arg(long)]
    n: Option<usize>,
    /// Features (random).
    #[arg(long)]
    k: Option<usize>,
    /// Locations (random).
    #[arg(long)]
    m: Option<usize>,
    /// Noise level in [0, 0.5] (random).
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classes (polyhedra).
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Views (polyhedra).
    #[arg(long, default_value_t = 24)]
    views: usize,
    /// Correspondence profile file (polyhedra); defaults to the built-in one.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Per-visit cost (theorem1).
    #[arg(long, default_value_t = 1.0)]
    unit_cost: f64,
    /// Uniform prior (random).
    #[arg(long)]
    uniform_prior: bool,
    /// Unit travel costs (random).
    #[arg(long)]
    unit_costs: bool,
    /// Values per feature (random).
    #[arg(long, default_value_t = 2)]
    arity: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// Overrides the scenario's risk threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Maximum visits per episode; defaults to the number of locations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMode {
    Adaptive,
    Nonadaptive,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's risk threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = OracleMode::Adaptive)]
    mode: OracleMode,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated policy names, at least two.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    policies: Vec<String>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// Risk threshold for the compared policies.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Parse `args` (including the program name) and run the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Check { scenario } => cmd_check(&scenario, out),
        Command::Simulate(a) => {
            let csv = with_threads(a.threads, || cmd_simulate(&a))?;
            emit(&a.out, &csv, out)
        }
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::Compare(a) => {
            let csv = with_threads(a.threads, || cmd_compare(&a))?;
            emit(&a.out, &csv, out)
        }
    }
}

fn with_threads<R, F>(threads: Option<usize>, f: F) -> Result<R, CliError>
where
    R: Send,
    F: FnOnce() -> Result<R, CliError> + Send,
{
    match threads {
        None => f(),
        Some(0) => Err(CliError::Input("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(e.to_string()))?
            .install(f),
    }
}

fn summary_line(s: &Scenario) -> String {
    format!(
        "N={} K={} M={} noiseless={}",
        s.n_hypotheses(),
        s.n_features(),
        s.n_locations(),
        s.is_noiseless()
    )
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| CliError::Input(format!("--{flag} is required for this generator")))
    };
    let s = match a.kind {
        GeneratorType::Theorem1 => scenarios::make_theorem1_instance(need(a.n, "n")?, a.unit_cost)?,
        GeneratorType::Random => {
            let n = need(a.n, "n")?;
            let k = a.k.unwrap_or(n);
            let m = a.m.unwrap_or(k);
            scenarios::make_random_instance_with(&RandomSpec {
                arity: a.arity,
                uniform_prior: a.uniform_prior,
                unit_costs: a.unit_costs,
                ..RandomSpec::new(n, k, m, a.alpha, a.seed)
            })?
        }
        GeneratorType::Polyhedra => {
            let profile = match &a.profile {
                Some(p) => CorrespondenceProfile::load(p)?,
                None => CorrespondenceProfile::platonic_default(),
            };
            scenarios::make_polyhedra_like_instance(a.classes, a.views, &profile, a.seed)?
        }
    };
    let violations = s.validate();
    if !violations.is_empty() {
        return Err(ScenarioError::Invalid(violations).into());
    }
    match &a.out {
        Some(path) => {
            model::save_scenario(&s, path)?;
            writeln!(out, "{}", summary_line(&s)).map_err(|e| io_error(Path::new("stdout"), e))?;
        }
        None => {
            out.write_all(model::scenario_to_json(&s).as_bytes())
                .map_err(|e| io_error(Path::new("stdout"), e))?;
        }
    }
    Ok(())
}

fn cmd_check(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = model::read_scenario_text(path)?;
    let s = model::parse_scenario_unchecked(&text, &path.display().to_string())?;
    let violations = s.validate();
    let stdout = |e| io_error(Path::new("stdout"), e);
    if violations.is_empty() {
        writeln!(out, "ok: {}", summary_line(&s)).map_err(stdout)?;
        return Ok(());
    }
    for v in &violations {
        writeln!(out, "{v}").map_err(stdout)?;
    }
    Err(CliError::Input(format!(
        "{} violation(s) in {}",
        violations.len(),
        path.display()
    )))
}

/// Build a policy from its command-line name.
pub fn build_policy(s: &Scenario, name: &str, config: &PlannerConfig) -> Result<Box<dyn Policy>, CliError> {
    let config = config.clone();
    let policy: Box<dyn Policy> = match name {
        "adaptive-ig" => Box::new(AdaptiveIg { config }),
        "nonadaptive-ig" => Box::new(FixedOrder::nonadaptive_ig(s, &config)?),
        "cost-ig" => Box::new(CostWeightedIg { config }),
        "random" => Box::new(RandomOrder { config }),
        _ => match name.strip_prefix("horizon:").map(str::parse::<usize>) {
            Some(Ok(t)) if t >= 1 => Box::new(RecedingHorizon {
                config: config.with_horizon(t),
            }),
            _ => {
                return Err(CliError::Input(format!(
                    "unknown policy {name:?}; allowed: {POLICY_NAMES}"
                )))
            }
        },
    };
    Ok(policy)
}

fn emit(path: &Option<PathBuf>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_error(p, e)),
        None => out.write_all(bytes).map_err(|e| io_error(Path::new("stdout"), e)),
    }
}

#[derive(Serialize)]
struct ResultRow<'a> {
    run_id: usize,
    policy: &'a str,
    true_hypothesis: &'a str,
    steps: usize,
    cost: f64,
    decision: &'a str,
    loss: f64,
    correct: u8,
    final_entropy_bits: f64,
}

/// Results CSV for a batch of episodes.
pub fn write_results_csv(s: &Scenario, records: &[EpisodeRecord], w: impl Write) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for (i, r) in records.iter().enumerate() {
        writer.serialize(ResultRow {
            run_id: i,
            policy: &r.policy,
            true_hypothesis: &s.hypotheses[r.true_hypothesis],
            steps: r.steps.len(),
            cost: r.cost(),
            decision: &s.hypotheses[r.decision],
            loss: r.loss,
            correct: u8::from(r.correct),
            final_entropy_bits: r.final_entropy,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Comparison CSV: one row per budget, one column group per policy.
pub fn write_comparison_csv(table: &ComparisonTable, w: impl Write) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let mut header = vec!["budget".to_string()];
    for c in &table.columns {
        header.push(format!("{}_accuracy", c.name));
        header.push(format!("{}_metric_mean", c.name));
        header.push(format!("{}_metric_std", c.name));
    }
    header.push("ig_risk_agreement".into());
    writer.write_record(&header)?;
    for (i, b) in table.budgets.iter().enumerate() {
        let mut row = vec![b.to_string()];
        for c in &table.columns {
            row.push(c.accuracy[i].to_string());
            row.push(c.metric_mean[i].to_string());
            row.push(c.metric_std[i].to_string());
        }
        row.push(table.ig_risk_agreement[i].map_or(String::new(), |x| x.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Input(format!("cannot format CSV: {e}")))?;
    Ok(buf)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Vec<u8>, CliError> {
    let s = model::load_scenario(&a.scenario)?;
    if a.runs == 0 {
        return Err(CliError::Input("--runs must be >= 1".into()));
    }
    let mut config = PlannerConfig::for_scenario(&s);
    if let Some(tau) = a.tau {
        config = config.with_tau(tau);
    }
    config.seed = a.seed;
    config.validate()?;
    let policy = build_policy(&s, &a.policy, &config)?;
    let budget = a.budget.unwrap_or(s.n_locations());
    let id = a.scenario.display().to_string();
    let records = sim::run_episodes(&s, policy.as_ref(), a.runs, a.seed, budget, &id)?;
    csv_bytes(|buf| write_results_csv(&s, &records, buf))
}

fn cmd_compare(a: &CompareArgs) -> Result<Vec<u8>, CliError> {
    let s = model::load_scenario(&a.scenario)?;
    if a.policies.len() < 2 {
        return Err(CliError::Input("--policies needs at least two names".into()));
    }
    if a.runs == 0 {
        return Err(CliError::Input("--runs must be >= 1".into()));
    }
    let mut config = PlannerConfig::for_scenario(&s).with_tau(a.tau);
    config.seed = a.seed;
    config.validate()?;
    let policies = a
        .policies
        .iter()
        .map(|p| build_policy(&s, p.trim(), &config))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&dyn Policy> = policies.iter().map(|p| p.as_ref()).collect();
    let budgets: Vec<usize> = (1..=s.n_locations()).collect();
    let table = sim::compare_policies(&s, &refs, a.runs, &budgets, a.seed)?;
    csv_bytes(|buf| write_comparison_csv(&table, buf))
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
enum OracleReport<'a> {
    Adaptive {
        expected_cost: f64,
        expected_loss: f64,
        tree: &'a PolicyTree,
    },
    Nonadaptive {
        expected_cost: f64,
        expected_loss: f64,
        order: Vec<String>,
    },
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = model::load_scenario(&a.scenario)?;
    let tau = a.tau.unwrap_or(s.tau);
    let config = PlannerConfig::for_scenario(&s).with_tau(tau);
    config.validate()?;
    let stdout = |e| io_error(Path::new("stdout"), e);
    match a.mode {
        OracleMode::Adaptive => {
            let tree = brute_force_optimal(&s, &config)?;
            if a.json {
                let report = OracleReport::Adaptive {
                    expected_cost: tree.expected_cost,
                    expected_loss: tree.expected_loss,
                    tree: &tree,
                };
                writeln!(out, "{}", to_json(&report)).map_err(stdout)?;
            } else {
                writeln!(out, "expected_cost: {}", tree.expected_cost).map_err(stdout)?;
                writeln!(out, "expected_loss: {}", tree.expected_loss).map_err(stdout)?;
                write!(out, "{}", tree.render(&s)).map_err(stdout)?;
            }
        }
        OracleMode::Nonadaptive => {
            let plan = brute_force_optimal_nonadaptive(&s, tau)?;
            let order: Vec<String> = plan.order.iter().map(|&l| s.locations[l].name.clone()).collect();
            if a.json {
                let report = OracleReport::Nonadaptive {
                    expected_cost: plan.expected_cost,
                    expected_loss: plan.expected_loss,
                    order,
                };
                writeln!(out, "{}", to_json(&report)).map_err(stdout)?;
            } else {
                writeln!(out, "expected_cost: {}", plan.expected_cost).map_err(stdout)?;
                writeln!(out, "expected_loss: {}", plan.expected_loss).map_err(stdout)?;
                writeln!(out, "order: {}", order.join(" ")).map_err(stdout)?;
            }
        }
    }
    Ok(())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Entry point used by the binary.
pub fn main_with_std() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
