//! Uniform decision interface over the benchmark forwarding strategies:
//! the optimal threshold policy, pure exploitation, UCB, and Thompson
//! sampling.
//!
//! Every policy maps a posterior state to a forward-or-discard decision.
//! Pure exploitation forwards when the posterior mean covers the cost; UCB
//! forwards when the posterior `rho`-quantile does; Thompson sampling draws
//! from the posterior and forwards when the draw does; the optimal policy
//! compares the mean against its level's solved threshold.

use std::sync::Arc;

use rand::Rng;

use crate::dp_solver::{CategoryModel, Decision, SolverError, ThresholdTable};
use crate::posterior::BetaState;
use crate::simulator;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("ucb quantile level must lie strictly inside (0, 1), got {0}")]
    InvalidRho(f64),

    #[error("rho grid must be non-empty")]
    EmptyRhoGrid,

    #[error("tuning needs at least one simulated user")]
    NoUsers,

    #[error("simulation failed while tuning rho: {0}")]
    Tuning(String),

    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A fully specified decision policy. Immutable and cheap to clone; the
/// optimal variant shares its solved threshold table.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Solved threshold policy.
    Optimal { table: Arc<ThresholdTable> },
    /// Forward when the posterior mean is at least the cost (ties forward).
    Exploit { cost: f64 },
    /// Forward when the posterior `rho`-quantile is at least the cost.
    Ucb { cost: f64, rho: f64 },
    /// Forward when a posterior draw is at least the cost.
    Thompson { cost: f64 },
}

impl PolicySpec {
    /// Optimal policy for `model`, solved at the default usable depth.
    pub fn optimal_for(model: &CategoryModel, epsilon_policy: f64) -> Result<Self, PolicyError> {
        let table = ThresholdTable::solve(model, epsilon_policy, model.default_usable_depth())?;
        Ok(PolicySpec::Optimal {
            table: Arc::new(table),
        })
    }

    pub fn cost(&self) -> f64 {
        match self {
            PolicySpec::Optimal { table } => table.model().cost(),
            PolicySpec::Exploit { cost }
            | PolicySpec::Ucb { cost, .. }
            | PolicySpec::Thompson { cost } => *cost,
        }
    }

    /// Whether decisions are a pure function of the state. A deterministic
    /// policy that discards leaves the posterior untouched and therefore
    /// discards every later item of the category too.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, PolicySpec::Thompson { .. })
    }

    /// Short label for result rows.
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Optimal { .. } => "optimal".to_string(),
            PolicySpec::Exploit { .. } => "exploit".to_string(),
            PolicySpec::Ucb { rho, .. } => format!("ucb[rho={rho}]"),
            PolicySpec::Thompson { .. } => "thompson".to_string(),
        }
    }
}

/// Pure exploitation: forward exactly when the posterior mean is at least
/// the cost. Ignores the value of the feedback a forward would produce.
pub fn exploit_decide(state: &BetaState, cost: f64) -> Decision {
    if state.mean() >= cost {
        Decision::Forward
    } else {
        Decision::Discard
    }
}

/// UCB: forward exactly when the posterior `rho`-quantile is at least the
/// cost. Larger `rho` explores more.
///
/// Decided through the CDF: for a continuous strictly increasing posterior,
/// `quantile(rho) >= c` exactly when `CDF(c) <= rho`, which needs one
/// incomplete-beta evaluation instead of a full inversion per item.
pub fn ucb_decide(state: &BetaState, cost: f64, rho: f64) -> Result<Decision, PolicyError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(PolicyError::InvalidRho(rho));
    }
    Ok(if state.cdf(cost) <= rho {
        Decision::Forward
    } else {
        Decision::Discard
    })
}

/// Thompson sampling: draw from the posterior and forward exactly when the
/// draw is at least the cost.
pub fn thompson_decide<R: Rng + ?Sized>(state: &BetaState, cost: f64, rng: &mut R) -> Decision {
    if state.sample(rng) >= cost {
        Decision::Forward
    } else {
        Decision::Discard
    }
}

/// Dispatch to the matching decision rule. Deterministic for every kind but
/// Thompson, which draws from the caller-owned stream.
pub fn policy_decide<R: Rng + ?Sized>(
    spec: &PolicySpec,
    state: &BetaState,
    rng: &mut R,
) -> Result<Decision, PolicyError> {
    match spec {
        PolicySpec::Optimal { table } => Ok(table.decide(state)?),
        PolicySpec::Exploit { cost } => Ok(exploit_decide(state, *cost)),
        PolicySpec::Ucb { cost, rho } => ucb_decide(state, *cost, *rho),
        PolicySpec::Thompson { cost } => Ok(thompson_decide(state, *cost, rng)),
    }
}

/// Pick the UCB quantile level from `rho_grid` that maximizes estimated
/// expected total reward on `n_users` simulated users. Every grid point is
/// evaluated under the same master seed (common random numbers), and ties
/// break toward the smallest `rho`.
pub fn tune_ucb(
    model: &CategoryModel,
    rho_grid: &[f64],
    n_users: u64,
    seed: u64,
) -> Result<f64, PolicyError> {
    if rho_grid.is_empty() {
        return Err(PolicyError::EmptyRhoGrid);
    }
    if n_users == 0 {
        return Err(PolicyError::NoUsers);
    }
    for &rho in rho_grid {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(PolicyError::InvalidRho(rho));
        }
    }
    let mut best_rho = f64::NAN;
    let mut best_mean = f64::NEG_INFINITY;
    for &rho in rho_grid {
        let spec = PolicySpec::Ucb {
            cost: model.cost(),
            rho,
        };
        let result = simulator::simulate_single(model, &spec, n_users, seed)
            .map_err(|e| PolicyError::Tuning(e.to_string()))?;
        let better =
            result.total_mean() > best_mean || (result.total_mean() == best_mean && rho < best_rho);
        if better {
            best_mean = result.total_mean();
            best_rho = rho;
        }
    }
    Ok(best_rho)
}
