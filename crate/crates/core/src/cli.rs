//! Command-line front end: solve threshold policies, run idealized and
//! trace-replay experiments, fit hyperparameters, and emit plot-ready CSV.
//!
//! Exit codes: 0 success, 2 configuration error, 3 resource error,
//! 4 parse/data error. Diagnostics go to stderr; stdout carries data
//! summaries only.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp_solver::{
    effective_discount, CategoryModel, SolverError, ThresholdTable, ValueTable,
};
use crate::estimation::{self, EstimationError};
use crate::policies::{PolicyError, PolicySpec};
use crate::simulator::{self, CategoryArm, SimConfig, SimError, SimResult};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_PARSE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::ResourceLimit { .. } | SolverError::DepthCap { .. } => {
                CliError::Resource(e.to_string())
            }
            SolverError::ThresholdCsv { .. } => CliError::Parse(e.to_string()),
            SolverError::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Solver(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solver(inner) => inner.into(),
            SimError::Policy(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::TraceParse { .. }
            | EstimationError::DegenerateSample { .. }
            | EstimationError::TooFewRates { .. }
            | EstimationError::EmptyCounts
            | EstimationError::NoEligibleUsers { .. } => CliError::Parse(e.to_string()),
            EstimationError::Category { category, source } => match *source {
                EstimationError::DegenerateSample { .. }
                | EstimationError::TooFewRates { .. }
                | EstimationError::EmptyCounts => {
                    CliError::Parse(format!("category `{category}`: {source}"))
                }
                other => CliError::Config(format!("category `{category}`: {other}")),
            },
            EstimationError::InvalidFraction(_) | EstimationError::PriorMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            EstimationError::Policy(inner) => inner.into(),
            EstimationError::Solver(inner) => inner.into(),
            EstimationError::Io(m) => CliError::Io(m),
        }
    }
}

const SCHEMA_VERSION: u32 = 1;

fn default_epsilon() -> f64 {
    crate::dp_solver::DEFAULT_EPSILON_POLICY
}

fn default_window() -> usize {
    simulator::DEFAULT_MARGINAL_WINDOW
}

fn default_rho_grid() -> Vec<f64> {
    vec![0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99]
}

/// One category of the experiment: prior hyperparameters and arrival share.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub alpha0: f64,
    pub beta0: f64,
    pub p_x: f64,
    /// Optional pre-solved threshold table for the optimal policy; only
    /// valid for single-cost, single-gamma runs.
    #[serde(default)]
    pub thresholds_csv: Option<PathBuf>,
}

impl ArmConfig {
    fn label_or(&self, index: usize) -> String {
        self.label.clone().unwrap_or_else(|| format!("arm{index}"))
    }
}

/// Policy selection in the experiment config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Optimal,
    Exploit,
    Ucb {
        rho: f64,
    },
    /// UCB with `rho` picked per cell by grid search on a tuning run with
    /// common random numbers.
    TunedUcb {
        #[serde(default = "default_rho_grid")]
        rho_grid: Vec<f64>,
        #[serde(default)]
        tune_users: Option<u64>,
    },
    Thompson,
}

/// Schema-versioned experiment configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Per-step user survival probability.
    pub gamma: f64,
    /// Optional gamma sweep; overrides `gamma` when present.
    #[serde(default)]
    pub gamma_grid: Option<Vec<f64>>,
    pub arms: Vec<ArmConfig>,
    /// Unit forwarding cost grid.
    pub costs: Vec<f64>,
    pub policies: Vec<PolicyConfig>,
    pub n_users: u64,
    /// Master seed; `--seed` overrides. Randomized commands require one of
    /// the two.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon_policy: f64,
    /// Usable solve depth for optimal policies (default: ten expected
    /// lifetimes, capped).
    #[serde(default)]
    pub m_use: Option<usize>,
    #[serde(default)]
    pub step_cap: Option<u64>,
    #[serde(default = "default_window")]
    pub marginal_window: usize,
    /// Emit a per-step marginal CSV per (policy, cost, gamma) cell.
    #[serde(default)]
    pub emit_marginals: bool,
    /// Also dump full value tables when solving (memory-budgeted).
    #[serde(default)]
    pub dump_values: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: String| Err(CliError::Config(format!("{name}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if self.arms.is_empty() {
            return field("arms", "must be non-empty".to_string());
        }
        for gamma in self.gammas() {
            if !(gamma > 0.0 && gamma < 1.0) {
                return field(
                    "gamma",
                    format!("must lie strictly inside (0, 1), got {gamma}"),
                );
            }
        }
        if self.gamma_grid.as_ref().is_some_and(|g| g.is_empty()) {
            return field("gamma_grid", "must be non-empty when present".to_string());
        }
        let share_sum: f64 = self.arms.iter().map(|a| a.p_x).sum();
        if (share_sum - 1.0).abs() > 1e-12 {
            return field(
                "arms.p_x",
                format!("must sum to 1 within 1e-12, got {share_sum}"),
            );
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if !arm.p_x.is_finite() || arm.p_x <= 0.0 {
                return field("arms.p_x", format!("arm {i} must have positive share"));
            }
            if !(arm.alpha0 > 0.0 && arm.beta0 > 0.0) {
                return field(
                    "arms",
                    format!(
                        "arm {i} hyperparameters must be positive, got ({}, {})",
                        arm.alpha0, arm.beta0
                    ),
                );
            }
            if arm.thresholds_csv.is_some() && (self.costs.len() != 1 || self.gammas().len() != 1) {
                return field(
                    "arms.thresholds_csv",
                    "a pre-solved table only covers one (cost, gamma) cell; \
                     use a single-entry cost grid and gamma"
                        .to_string(),
                );
            }
        }
        if self.costs.is_empty() {
            return field("costs", "must be non-empty".to_string());
        }
        for &c in &self.costs {
            if !(0.0..=1.0).contains(&c) {
                return field("costs", format!("must lie in [0, 1], got {c}"));
            }
        }
        if self.policies.is_empty() {
            return field("policies", "must be non-empty".to_string());
        }
        for p in &self.policies {
            match p {
                PolicyConfig::Ucb { rho } if !(*rho > 0.0 && *rho < 1.0) => {
                    return field(
                        "policies.rho",
                        format!("must lie strictly inside (0, 1), got {rho}"),
                    );
                }
                PolicyConfig::TunedUcb { rho_grid, .. } if rho_grid.is_empty() => {
                    return field("policies.rho_grid", "must be non-empty".to_string());
                }
                _ => {}
            }
        }
        if self.n_users == 0 {
            return field("n_users", "must be at least 1".to_string());
        }
        if !(self.epsilon_policy > 0.0 && self.epsilon_policy.is_finite()) {
            return field(
                "epsilon_policy",
                format!("must be positive, got {}", self.epsilon_policy),
            );
        }
        if self.step_cap == Some(0) {
            return field("step_cap", "must be at least 1".to_string());
        }
        Ok(())
    }

    fn gammas(&self) -> Vec<f64> {
        self.gamma_grid.clone().unwrap_or_else(|| vec![self.gamma])
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "infofilter",
    version,
    about = "Bayesian information filtering: optimal forwarding policies, simulations, and trace replay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve per-arm threshold policies and export them as CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Target policy precision; overrides the config's epsilon_policy.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Worker thread cap (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run idealized Monte Carlo experiments over the (policy, cost, gamma)
    /// grid and write a results CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Master seed (required here or in the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit per-category hyperparameters from a presentation/click trace.
    Estimate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the train/test user split.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        /// Drop users with fewer presentations than this.
        #[arg(long, default_value_t = 30)]
        min_visits: u64,
        /// Drop users with more presentations than this (likely robots).
        #[arg(long, default_value_t = 510)]
        max_visits: u64,
    },
    /// Replay a trace's test users against policies built from a fit report.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Fit report JSON from `estimate`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the train/test split and Thompson draws; must match the
        /// `estimate` run to replay the complementary test users.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        /// Policies to replay (optimal, exploit, ucb, thompson).
        #[arg(long, value_delimiter = ',', default_values_t = ["optimal".to_string(), "exploit".to_string()])]
        policy: Vec<String>,
        /// Forwarding cost grid.
        #[arg(long, value_delimiter = ',', default_values_t = [0.05])]
        costs: Vec<f64>,
        /// Quantile level for the ucb policy.
        #[arg(long, default_value_t = 0.75)]
        rho: f64,
        /// Target policy precision for optimal tables.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 30)]
        min_visits: u64,
        #[arg(long, default_value_t = 510)]
        max_visits: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Parse the process arguments, execute, and report errors on stderr.
/// Returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// [`run`] over explicit arguments, for tests.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Execute a parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            config,
            out,
            epsilon,
            threads,
        } => with_pool(threads, || {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(eps) = epsilon {
                cfg.epsilon_policy = eps;
                cfg.validate()?;
            }
            cmd_solve(&cfg, &out)
        }),
        Command::Simulate {
            config,
            seed,
            out,
            threads,
        } => with_pool(threads, || {
            let cfg = ExperimentConfig::from_path(&config)?;
            let seed = require_seed(seed.or(cfg.seed))?;
            cmd_simulate(&cfg, seed, &out)
        }),
        Command::Estimate {
            trace,
            out,
            seed,
            train_fraction,
            min_visits,
            max_visits,
        } => {
            let seed = require_seed(seed)?;
            cmd_estimate(&trace, &out, seed, train_fraction, min_visits, max_visits)
        }
        Command::Replay {
            trace,
            fit,
            out,
            seed,
            train_fraction,
            policy,
            costs,
            rho,
            epsilon,
            min_visits,
            max_visits,
            threads,
        } => with_pool(threads, || {
            let seed = require_seed(seed)?;
            cmd_replay(ReplayArgs {
                trace: &trace,
                fit: &fit,
                out: &out,
                seed,
                train_fraction,
                policy: &policy,
                costs: &costs,
                rho,
                epsilon: epsilon.unwrap_or_else(default_epsilon),
                min_visits,
                max_visits,
            })
        }),
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| {
        CliError::Config("seed: randomized commands require an explicit --seed".to_string())
    })
}

/// Run `body` inside a rayon pool capped at `threads` workers (default: all
/// cores). Results are independent of the cap by the substream contract.
fn with_pool<F>(threads: Option<usize>, body: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    match threads {
        None => body(),
        Some(n) => {
            if n == 0 {
                return Err(CliError::Config("threads: must be at least 1".to_string()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Resource(format!("thread pool: {e}")))?;
            pool.install(body)
        }
    }
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("output dir {}: {e}", out.display())))
}

fn number_token(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

fn arm_model(arm: &ArmConfig, gamma: f64, cost: f64) -> Result<CategoryModel, CliError> {
    let gamma_x = effective_discount(arm.p_x, gamma)?;
    Ok(CategoryModel::new(arm.alpha0, arm.beta0, gamma_x, cost)?)
}

fn solve_usable_depth(cfg: &ExperimentConfig, model: &CategoryModel) -> usize {
    cfg.m_use.unwrap_or_else(|| model.default_usable_depth())
}

fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    create_out_dir(out)?;
    let stdout = std::io::stdout();
    let mut lines = stdout.lock();
    for &gamma in &cfg.gammas() {
        for (i, arm) in cfg.arms.iter().enumerate() {
            for &cost in &cfg.costs {
                let model = arm_model(arm, gamma, cost)?;
                let m_use = solve_usable_depth(cfg, &model);
                let table = ThresholdTable::solve(&model, cfg.epsilon_policy, m_use)?;
                let name = format!(
                    "thresholds_{}_g{}_c{}.csv",
                    arm.label_or(i),
                    number_token(gamma),
                    number_token(cost)
                );
                let path = out.join(&name);
                let mut w = BufWriter::new(fs::File::create(&path)?);
                table.write_csv(&mut w)?;
                w.flush()?;
                writeln!(
                    lines,
                    "wrote {} (epsilon_policy={}, m_use={}, M={})",
                    path.display(),
                    table.epsilon_policy(),
                    table.usable_depth(),
                    table.truncation_depth()
                )?;
                if cfg.dump_values {
                    let vt = ValueTable::solve_to_epsilon(&model, cfg.epsilon_policy, m_use)?;
                    let vname = format!(
                        "values_{}_g{}_c{}.csv",
                        arm.label_or(i),
                        number_token(gamma),
                        number_token(cost)
                    );
                    let vpath = out.join(&vname);
                    let mut w = BufWriter::new(fs::File::create(&vpath)?);
                    vt.write_csv(&mut w)?;
                    w.flush()?;
                    writeln!(lines, "wrote {}", vpath.display())?;
                }
            }
        }
    }
    Ok(())
}

/// Policies for every arm of one (cost, gamma) cell, plus a display label.
fn build_cell_specs(
    cfg: &ExperimentConfig,
    policy: &PolicyConfig,
    models: &[CategoryModel],
    sim: &SimConfig,
    seed: u64,
) -> Result<(String, Vec<PolicySpec>), CliError> {
    let cost = models[0].cost();
    match policy {
        PolicyConfig::Exploit => Ok((
            "exploit".to_string(),
            vec![PolicySpec::Exploit { cost }; models.len()],
        )),
        PolicyConfig::Thompson => Ok((
            "thompson".to_string(),
            vec![PolicySpec::Thompson { cost }; models.len()],
        )),
        PolicyConfig::Ucb { rho } => Ok((
            format!("ucb[rho={rho}]"),
            vec![PolicySpec::Ucb { cost, rho: *rho }; models.len()],
        )),
        PolicyConfig::TunedUcb {
            rho_grid,
            tune_users,
        } => {
            let tune_n = tune_users.unwrap_or_else(|| (cfg.n_users / 5).clamp(1_000, cfg.n_users));
            let rho = tune_rho_mixture(sim, rho_grid, tune_n, seed)?;
            Ok((
                format!("tuned_ucb[rho={rho}]"),
                vec![PolicySpec::Ucb { cost, rho }; models.len()],
            ))
        }
        PolicyConfig::Optimal => {
            let mut specs = Vec::with_capacity(models.len());
            for (arm, model) in cfg.arms.iter().zip(models) {
                let table = match &arm.thresholds_csv {
                    Some(path) => {
                        let file = fs::File::open(path).map_err(|e| {
                            CliError::Config(format!("thresholds_csv {}: {e}", path.display()))
                        })?;
                        ThresholdTable::read_csv(BufReader::new(file), model, cfg.epsilon_policy)?
                    }
                    None => ThresholdTable::solve(
                        model,
                        cfg.epsilon_policy,
                        solve_usable_depth(cfg, model),
                    )?,
                };
                specs.push(PolicySpec::Optimal {
                    table: Arc::new(table),
                });
            }
            Ok(("optimal".to_string(), specs))
        }
    }
}

/// Grid-search `rho` on a tuning run of the same mixture with common random
/// numbers; ties break toward the smallest `rho`.
fn tune_rho_mixture(
    sim: &SimConfig,
    rho_grid: &[f64],
    tune_users: u64,
    seed: u64,
) -> Result<f64, CliError> {
    let tune_cfg = SimConfig::new(sim.arms().to_vec(), sim.gamma(), tune_users, seed)?
        .with_step_cap(sim.step_cap())?
        .with_marginal_window(0);
    let mut best_rho = f64::NAN;
    let mut best_mean = f64::NEG_INFINITY;
    for &rho in rho_grid {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(CliError::Config(format!(
                "policies.rho_grid: must lie strictly inside (0, 1), got {rho}"
            )));
        }
        let specs: Vec<PolicySpec> = tune_cfg
            .arms()
            .iter()
            .map(|a| PolicySpec::Ucb {
                cost: a.model().cost(),
                rho,
            })
            .collect();
        let result = simulator::simulate_multi(&tune_cfg, &specs)?;
        if result.total_mean() > best_mean || (result.total_mean() == best_mean && rho < best_rho) {
            best_mean = result.total_mean();
            best_rho = rho;
        }
    }
    Ok(best_rho)
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    create_out_dir(out)?;
    let results_path = out.join("results.csv");
    let mut results = BufWriter::new(fs::File::create(&results_path)?);
    writeln!(results, "{}", SimResult::summary_header())?;
    let stdout = std::io::stdout();
    let mut lines = stdout.lock();
    for &gamma in &cfg.gammas() {
        for &cost in &cfg.costs {
            let models: Vec<CategoryModel> = cfg
                .arms
                .iter()
                .map(|arm| arm_model(arm, gamma, cost))
                .collect::<Result<_, _>>()?;
            let arms: Vec<CategoryArm> = models
                .iter()
                .zip(&cfg.arms)
                .map(|(m, a)| CategoryArm::new(*m, a.p_x))
                .collect::<Result<_, _>>()?;
            let mut sim = SimConfig::new(arms, gamma, cfg.n_users, seed)?
                .with_marginal_window(cfg.marginal_window);
            if let Some(cap) = cfg.step_cap {
                sim = sim.with_step_cap(cap)?;
            }
            // Single-arm cells report the arm's effective discount, mixtures
            // the global survival probability.
            let gamma_col = if models.len() == 1 {
                models[0].gamma_x()
            } else {
                gamma
            };
            for policy in &cfg.policies {
                let (label, specs) = build_cell_specs(cfg, policy, &models, &sim, seed)?;
                let result = simulator::simulate_multi(&sim, &specs)?;
                writeln!(results, "{}", result.summary_row(&label, cost, gamma_col))?;
                writeln!(
                    lines,
                    "{} c={} gamma={}: total {:.6} +/- {:.6} ({} users, {} truncated)",
                    label,
                    cost,
                    gamma_col,
                    result.total_mean(),
                    result.total_ci_half_width(),
                    result.n_users_effective(),
                    result.truncation_count()
                )?;
                if cfg.emit_marginals {
                    let name = format!(
                        "marginals_{}_g{}_c{}.csv",
                        sanitize_label(&label),
                        number_token(gamma),
                        number_token(cost)
                    );
                    let mut w = BufWriter::new(fs::File::create(out.join(&name))?);
                    result.write_marginals_csv(&mut w)?;
                    w.flush()?;
                }
            }
        }
    }
    results.flush()?;
    writeln!(lines, "wrote {}", results_path.display())?;
    Ok(())
}

fn load_traces(path: &Path) -> Result<Vec<estimation::TraceEvent>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Config(format!("trace {}: {e}", path.display())))?;
    Ok(estimation::read_trace_csv(BufReader::new(file))?)
}

fn eligible_split(
    events: &[estimation::TraceEvent],
    min_visits: u64,
    max_visits: u64,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), CliError> {
    let eligible = estimation::filter_users_by_visits(events, min_visits, max_visits);
    if eligible.is_empty() {
        return Err(EstimationError::NoEligibleUsers {
            min: min_visits,
            max: max_visits,
        }
        .into());
    }
    Ok(estimation::split_users(&eligible, fraction, seed)?)
}

fn cmd_estimate(
    trace: &Path,
    out: &Path,
    seed: u64,
    train_fraction: f64,
    min_visits: u64,
    max_visits: u64,
) -> Result<(), CliError> {
    create_out_dir(out)?;
    let events = load_traces(trace)?;
    let (train, test) = eligible_split(&events, min_visits, max_visits, train_fraction, seed)?;
    let report = estimation::fit_categories(&events, &train)?;
    let path = out.join("fit.json");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    report.write_json(&mut w)?;
    w.flush()?;
    let stdout = std::io::stdout();
    let mut lines = stdout.lock();
    writeln!(
        lines,
        "train users: {}, test users: {}",
        train.len(),
        test.len()
    )?;
    for (cat, fit) in &report.0 {
        writeln!(
            lines,
            "{}: alpha0={:.6} beta0={:.6} gamma_x={:.6} (n_train_users={})",
            cat, fit.alpha0, fit.beta0, fit.gamma_x, fit.n_train_users
        )?;
    }
    writeln!(lines, "wrote {}", path.display())?;
    Ok(())
}

struct ReplayArgs<'a> {
    trace: &'a Path,
    fit: &'a Path,
    out: &'a Path,
    seed: u64,
    train_fraction: f64,
    policy: &'a [String],
    costs: &'a [f64],
    rho: f64,
    epsilon: f64,
    min_visits: u64,
    max_visits: u64,
}

fn cmd_replay(args: ReplayArgs<'_>) -> Result<(), CliError> {
    create_out_dir(args.out)?;
    if args.costs.is_empty() {
        return Err(CliError::Config("costs: must be non-empty".to_string()));
    }
    let events = load_traces(args.trace)?;
    let fit_file = fs::File::open(args.fit)
        .map_err(|e| CliError::Config(format!("fit {}: {e}", args.fit.display())))?;
    let report = estimation::FitReport::read_json(BufReader::new(fit_file))?;
    let (_, test) = eligible_split(
        &events,
        args.min_visits,
        args.max_visits,
        args.train_fraction,
        args.seed,
    )?;

    let results_path = args.out.join("replay_results.csv");
    let mut results = BufWriter::new(fs::File::create(&results_path)?);
    writeln!(results, "{}", SimResult::summary_header())?;
    let stdout = std::io::stdout();
    let mut lines = stdout.lock();
    // The gamma_x column reports the mean fitted discount across categories.
    let gamma_col =
        report.0.values().map(|f| f.gamma_x).sum::<f64>() / report.0.len().max(1) as f64;
    for &cost in args.costs {
        let models = report.models(cost)?;
        for name in args.policy {
            let mut specs: BTreeMap<String, PolicySpec> = BTreeMap::new();
            for (cat, model) in &models {
                let spec = match name.as_str() {
                    "exploit" => PolicySpec::Exploit { cost },
                    "thompson" => PolicySpec::Thompson { cost },
                    "ucb" => PolicySpec::Ucb {
                        cost,
                        rho: args.rho,
                    },
                    "optimal" => {
                        let table = ThresholdTable::solve(
                            model,
                            args.epsilon,
                            model.default_usable_depth(),
                        )?;
                        PolicySpec::Optimal {
                            table: Arc::new(table),
                        }
                    }
                    other => {
                        return Err(CliError::Config(format!(
                            "policy: unknown policy `{other}` \
                             (expected optimal, exploit, ucb, thompson)"
                        )))
                    }
                };
                specs.insert(cat.clone(), spec);
            }
            let outcome = estimation::replay(&events, &test, &report, &specs, args.seed)?;
            let label = if name == "ucb" {
                format!("ucb[rho={}]", args.rho)
            } else {
                name.clone()
            };
            writeln!(
                results,
                "{}",
                outcome.result.summary_row(&label, cost, gamma_col)
            )?;
            writeln!(
                lines,
                "{} c={}: total {:.6} +/- {:.6} ({} test users, {} forwards, {} unknown-category events)",
                label,
                cost,
                outcome.result.total_mean(),
                outcome.result.total_ci_half_width(),
                outcome.result.n_users_effective(),
                outcome.forwards,
                outcome.unknown_category_events
            )?;
        }
    }
    results.flush()?;
    writeln!(lines, "wrote {}", results_path.display())?;
    Ok(())
}
