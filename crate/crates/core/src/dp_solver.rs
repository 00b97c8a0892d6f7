//! Single-category solver: certified value bounds and the threshold policy.
//!
//! Each category is a discounted two-armed bandit with one unknown Bernoulli
//! arm (forward, net reward `Y - c`) and one known arm (discard, reward 0).
//! The value function satisfies `V(a, b) = max{0, Q(a, b)}` with
//!
//! ```text
//! Q(a, b) = mu - c + gamma * [ mu * V(a+1, b) + (1 - mu) * V(a, b+1) ],
//! mu = a / (a + b),
//! ```
//!
//! and cannot be computed exactly on the countable state space. The solver
//! truncates at depth `M`, seeding level `M` with the always-forward lower
//! bound `max{0, mu - c} / (1 - gamma)` for `vL` and the full-information
//! upper bound `1 / (1 - gamma)` for `vU`, then fills levels `M-1 .. 0` by the
//! backward recursion. The two arrays sandwich the true value, and the gap at
//! level `l` is at most `gamma^(M-l) / (1 - gamma)`, so any target precision
//! can be certified a priori by solving deep enough.
//!
//! Because the optimal rule is a threshold in the posterior mean at each
//! effective sample size, the deliverable policy is a one-dimensional
//! [`ThresholdTable`]; [`ValueTable`] retains the full triangle for
//! inspection, Q-factors, and the value-of-information decomposition.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::posterior::BetaState;

/// Rows at least this wide are filled in parallel chunks.
const PAR_ROW_MIN: usize = 8192;
const PAR_CHUNK: usize = 4096;

/// Default byte budget for a retained [`ValueTable`] triangle.
pub const DEFAULT_VALUE_TABLE_BUDGET: usize = 1 << 30;

/// Hard cap on any truncation depth; keeps mis-sized requests from hanging.
pub const MAX_TRUNCATION_DEPTH: usize = 400_000;

/// Default target precision for policy extraction.
pub const DEFAULT_EPSILON_POLICY: f64 = 1e-6;

/// Usable-depth default: ten expected item lifetimes, capped.
pub const DEFAULT_USABLE_DEPTH_CAP: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid category model ({field}): {message}")]
    InvalidModel {
        field: &'static str,
        message: String,
    },

    #[error("effective discount requires 0 < p_x <= 1, got p_x={p_x}")]
    InvalidArrivalShare { p_x: f64 },

    #[error("effective discount requires 0 < gamma < 1, got gamma={gamma}")]
    InvalidGamma { gamma: f64 },

    #[error("truncation depth must be at least 1")]
    DepthTooSmall,

    #[error(
        "value table at depth M={m} needs {required} bytes, exceeding the {budget}-byte budget"
    )]
    ResourceLimit {
        m: usize,
        required: usize,
        budget: usize,
    },

    #[error("truncation depth {m} exceeds the hard cap {cap}")]
    DepthCap { m: usize, cap: usize },

    #[error("epsilon_policy must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error(
        "epsilon_policy={epsilon} needs {tail} tail levels but the table only has M={m}; \
         re-solve with a deeper truncation"
    )]
    UsableDepthUnavailable { epsilon: f64, tail: usize, m: usize },

    #[error("level {level} is out of range for a table with truncation depth {m}")]
    LevelOutOfRange { level: usize, m: usize },

    #[error("success index {index} exceeds level {level}")]
    IndexOutOfRange { index: usize, level: usize },

    #[error(
        "state (alpha={alpha}, beta={beta}) is not on the lattice reachable from the prior \
         ({alpha0}, {beta0})"
    )]
    OffLattice {
        alpha: f64,
        beta: f64,
        alpha0: f64,
        beta0: f64,
    },

    #[error(
        "state at depth {level} is past the usable depth {usable}; \
         re-solve with a larger truncation depth"
    )]
    DepthExceeded { level: usize, usable: usize },

    #[error("threshold csv, line {line}: {message}")]
    ThresholdCsv { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SolverError {
    fn from(e: std::io::Error) -> Self {
        SolverError::Io(e.to_string())
    }
}

/// Forward-or-discard action for one arriving item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Forward,
    Discard,
}

/// Which of the two value-bound arrays to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

/// Effective per-category discount: the count of category items a user sees
/// is geometric with survival `p_x * gamma / (p_x * gamma + 1 - gamma)`.
pub fn effective_discount(p_x: f64, gamma: f64) -> Result<f64, SolverError> {
    if !(p_x > 0.0 && p_x <= 1.0) {
        return Err(SolverError::InvalidArrivalShare { p_x });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SolverError::InvalidGamma { gamma });
    }
    Ok(p_x * gamma / (p_x * gamma + 1.0 - gamma))
}

/// Prior hyperparameters, forwarding cost, and effective discount defining
/// one single-category subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryModel {
    alpha0: f64,
    beta0: f64,
    gamma_x: f64,
    cost: f64,
}

impl CategoryModel {
    pub fn new(alpha0: f64, beta0: f64, gamma_x: f64, cost: f64) -> Result<Self, SolverError> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(SolverError::InvalidModel {
                field: "alpha0",
                message: format!("must be positive and finite, got {alpha0}"),
            });
        }
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(SolverError::InvalidModel {
                field: "beta0",
                message: format!("must be positive and finite, got {beta0}"),
            });
        }
        if !(gamma_x > 0.0 && gamma_x < 1.0) {
            return Err(SolverError::InvalidModel {
                field: "gamma_x",
                message: format!("must lie strictly inside (0, 1), got {gamma_x}"),
            });
        }
        if !(0.0..=1.0).contains(&cost) {
            return Err(SolverError::InvalidModel {
                field: "cost",
                message: format!("must lie in [0, 1], got {cost}"),
            });
        }
        Ok(Self {
            alpha0,
            beta0,
            gamma_x,
            cost,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Prior belief state `(alpha0, beta0)`.
    pub fn prior(&self) -> BetaState {
        BetaState::new(self.alpha0, self.beta0).expect("model validated at construction")
    }

    /// Posterior mean at lattice point `(level, i)`.
    pub fn state_mean(&self, level: usize, i: usize) -> f64 {
        let alpha = self.alpha0 + i as f64;
        let beta = self.beta0 + (level - i) as f64;
        alpha / (alpha + beta)
    }

    /// Map an off-the-shelf belief state onto this model's reachable lattice,
    /// returning `(level, successes)`.
    pub fn locate(&self, state: &BetaState) -> Result<(usize, usize), SolverError> {
        const TOL: f64 = 1e-9;
        let off = || SolverError::OffLattice {
            alpha: state.alpha(),
            beta: state.beta(),
            alpha0: self.alpha0,
            beta0: self.beta0,
        };
        let di = state.alpha() - self.alpha0;
        let dj = state.beta() - self.beta0;
        let i = di.round();
        let j = dj.round();
        if i < 0.0 || j < 0.0 || (di - i).abs() > TOL || (dj - j).abs() > TOL {
            return Err(off());
        }
        Ok(((i + j) as usize, i as usize))
    }

    /// Tail length from the gap bound: the smallest `t` with
    /// `gamma^t / (1 - gamma) <= epsilon`, never less than 1.
    pub fn tail_depth(&self, epsilon: f64) -> Result<usize, SolverError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SolverError::InvalidEpsilon(epsilon));
        }
        let t = ((epsilon * (1.0 - self.gamma_x)).ln() / self.gamma_x.ln()).ceil();
        Ok(if t.is_finite() && t > 1.0 {
            t as usize
        } else {
            1
        })
    }

    /// Default usable depth: ten expected lifetimes `10 / (1 - gamma_x)`,
    /// capped at [`DEFAULT_USABLE_DEPTH_CAP`].
    pub fn default_usable_depth(&self) -> usize {
        let d = (10.0 / (1.0 - self.gamma_x)).ceil() as usize;
        d.clamp(1, DEFAULT_USABLE_DEPTH_CAP)
    }
}

/// Terminal row at level `m`: always-forward value for the lower bound.
fn terminal_row_lower(model: &CategoryModel, m: usize, out: &mut [f64]) {
    let scale = 1.0 / (1.0 - model.gamma_x);
    for (i, slot) in out.iter_mut().enumerate().take(m + 1) {
        let mu = model.state_mean(m, i);
        *slot = (mu - model.cost).max(0.0) * scale;
    }
}

/// Terminal row at level `m`: reward-ceiling value for the upper bound.
fn terminal_row_upper(model: &CategoryModel, m: usize, out: &mut [f64]) {
    let v = 1.0 / (1.0 - model.gamma_x);
    for slot in out.iter_mut().take(m + 1) {
        *slot = v;
    }
}

/// One backward step: fill the row at `level` from the row at `level + 1`.
/// The same kernel backs the retained, scanning, and threshold-only solvers
/// so they produce bit-identical rows.
fn step_row(model: &CategoryModel, level: usize, next: &[f64], out: &mut [f64]) {
    let alpha0 = model.alpha0;
    let beta0 = model.beta0;
    let gamma = model.gamma_x;
    let cost = model.cost;
    let entry = move |i: usize, up: f64, down: f64| -> f64 {
        let alpha = alpha0 + i as f64;
        let beta = beta0 + (level - i) as f64;
        let mu = alpha / (alpha + beta);
        let q = mu - cost + gamma * (mu * up + (1.0 - mu) * down);
        q.max(0.0)
    };
    let width = level + 1;
    if width >= PAR_ROW_MIN {
        out[..width]
            .par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let base = ci * PAR_CHUNK;
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let i = base + k;
                    *slot = entry(i, next[i + 1], next[i]);
                }
            });
    } else {
        for (i, slot) in out.iter_mut().enumerate().take(width) {
            *slot = entry(i, next[i + 1], next[i]);
        }
    }
}

fn check_depth(m: usize) -> Result<(), SolverError> {
    if m < 1 {
        return Err(SolverError::DepthTooSmall);
    }
    if m > MAX_TRUNCATION_DEPTH {
        return Err(SolverError::DepthCap {
            m,
            cap: MAX_TRUNCATION_DEPTH,
        });
    }
    Ok(())
}

/// Run the backward recursion at depth `m` without retaining the triangle,
/// handing each `(level, lower_row, upper_row)` to `visit` from the terminal
/// level `m` down to the root.
pub fn solve_scan<F>(model: &CategoryModel, m: usize, mut visit: F) -> Result<(), SolverError>
where
    F: FnMut(usize, &[f64], &[f64]),
{
    check_depth(m)?;
    let mut lower = vec![0.0; m + 1];
    let mut upper = vec![0.0; m + 1];
    let mut lower_next = vec![0.0; m + 1];
    let mut upper_next = vec![0.0; m + 1];
    terminal_row_lower(model, m, &mut lower);
    terminal_row_upper(model, m, &mut upper);
    visit(m, &lower[..m + 1], &upper[..m + 1]);
    for level in (0..m).rev() {
        step_row(model, level, &lower, &mut lower_next);
        step_row(model, level, &upper, &mut upper_next);
        std::mem::swap(&mut lower, &mut lower_next);
        std::mem::swap(&mut upper, &mut upper_next);
        visit(level, &lower[..level + 1], &upper[..level + 1]);
    }
    Ok(())
}

/// Triangular arrays of lower and upper value bounds from the truncated
/// backward recursion, indexed by `(level, successes)` with
/// `alpha = alpha0 + successes`, `beta = beta0 + level - successes`.
#[derive(Debug, Clone)]
pub struct ValueTable {
    model: CategoryModel,
    m: usize,
    v_lower: Vec<Vec<f64>>,
    v_upper: Vec<Vec<f64>>,
}

impl ValueTable {
    /// Solve at truncation depth `m` under the default memory budget.
    pub fn solve(model: &CategoryModel, m: usize) -> Result<Self, SolverError> {
        Self::solve_with_budget(model, m, DEFAULT_VALUE_TABLE_BUDGET)
    }

    /// Solve at truncation depth `m`, retaining the full triangle; errors if
    /// the triangle would exceed `budget` bytes.
    pub fn solve_with_budget(
        model: &CategoryModel,
        m: usize,
        budget: usize,
    ) -> Result<Self, SolverError> {
        check_depth(m)?;
        let entries = (m + 1) * (m + 2) / 2;
        let required = entries * 2 * std::mem::size_of::<f64>();
        if required > budget {
            return Err(SolverError::ResourceLimit {
                m,
                required,
                budget,
            });
        }
        let mut v_lower: Vec<Vec<f64>> = (0..=m).map(|l| vec![0.0; l + 1]).collect();
        let mut v_upper: Vec<Vec<f64>> = (0..=m).map(|l| vec![0.0; l + 1]).collect();
        terminal_row_lower(model, m, &mut v_lower[m]);
        terminal_row_upper(model, m, &mut v_upper[m]);
        for level in (0..m).rev() {
            let (head, tail) = v_lower.split_at_mut(level + 1);
            step_row(model, level, &tail[0], &mut head[level]);
            let (head, tail) = v_upper.split_at_mut(level + 1);
            step_row(model, level, &tail[0], &mut head[level]);
        }
        Ok(Self {
            model: *model,
            m,
            v_lower,
            v_upper,
        })
    }

    /// Solve deep enough that every level up to `m_use` carries a certified
    /// gap of at most `epsilon_policy`.
    pub fn solve_to_epsilon(
        model: &CategoryModel,
        epsilon_policy: f64,
        m_use: usize,
    ) -> Result<Self, SolverError> {
        let tail = model.tail_depth(epsilon_policy)?;
        Self::solve(model, m_use + tail)
    }

    pub fn model(&self) -> &CategoryModel {
        &self.model
    }

    /// Truncation depth `M`.
    pub fn truncation_depth(&self) -> usize {
        self.m
    }

    fn check_point(&self, level: usize, i: usize) -> Result<(), SolverError> {
        if level > self.m {
            return Err(SolverError::LevelOutOfRange { level, m: self.m });
        }
        if i > level {
            return Err(SolverError::IndexOutOfRange { index: i, level });
        }
        Ok(())
    }

    /// Value bound at lattice point `(level, i)`.
    pub fn value(&self, level: usize, i: usize, bound: Bound) -> Result<f64, SolverError> {
        self.check_point(level, i)?;
        Ok(match bound {
            Bound::Lower => self.v_lower[level][i],
            Bound::Upper => self.v_upper[level][i],
        })
    }

    fn rows(&self, bound: Bound) -> &[Vec<f64>] {
        match bound {
            Bound::Lower => &self.v_lower,
            Bound::Upper => &self.v_upper,
        }
    }

    /// One-step-forward Q-value at `(level, i)` computed from the selected
    /// bound array. Successors live at `level + 1`, so `level` must be
    /// strictly below the truncation depth.
    pub fn q_forward(&self, level: usize, i: usize, bound: Bound) -> Result<f64, SolverError> {
        if level >= self.m {
            return Err(SolverError::LevelOutOfRange { level, m: self.m });
        }
        self.check_point(level, i)?;
        let rows = self.rows(bound);
        let mu = self.model.state_mean(level, i);
        let up = rows[level + 1][i + 1];
        let down = rows[level + 1][i];
        Ok(mu - self.model.cost + self.model.gamma_x * (mu * up + (1.0 - mu) * down))
    }

    /// Value of information at `(level, i)`: the expected discounted gain in
    /// continuation value from observing feedback on a forwarded item,
    /// `gamma * [mu V(a+1, b) + (1-mu) V(a, b+1) - V(a, b)]` on the selected
    /// bound array. Satisfies `q_forward = (mu - c) + gamma * V + voi`.
    pub fn voi(&self, level: usize, i: usize, bound: Bound) -> Result<f64, SolverError> {
        if level >= self.m {
            return Err(SolverError::LevelOutOfRange { level, m: self.m });
        }
        self.check_point(level, i)?;
        let rows = self.rows(bound);
        let mu = self.model.state_mean(level, i);
        let up = rows[level + 1][i + 1];
        let down = rows[level + 1][i];
        let here = rows[level][i];
        Ok(self.model.gamma_x * (mu * up + (1.0 - mu) * down - here))
    }

    /// Largest usable depth with certified gap at most `epsilon_policy`.
    pub fn usable_depth(&self, epsilon_policy: f64) -> Result<usize, SolverError> {
        let tail = self.model.tail_depth(epsilon_policy)?;
        if tail >= self.m {
            return Err(SolverError::UsableDepthUnavailable {
                epsilon: epsilon_policy,
                tail,
                m: self.m,
            });
        }
        Ok(self.m - tail)
    }

    /// Extract the per-level forwarding thresholds over the usable depth.
    pub fn thresholds(&self, epsilon_policy: f64) -> Result<ThresholdTable, SolverError> {
        let m_use = self.usable_depth(epsilon_policy)?;
        let mu_star = (0..=m_use)
            .map(|level| threshold_at_level(&self.model, level, &self.v_lower[level]))
            .collect();
        Ok(ThresholdTable {
            model: self.model,
            m: self.m,
            m_use,
            epsilon_policy,
            mu_star,
        })
    }

    /// Epsilon-optimal decision at a reachable state: forward exactly when
    /// the lower-bound Q-value is strictly positive. States whose true
    /// Q-value straddles zero inside the bound gap resolve to discard.
    pub fn decide_optimal(
        &self,
        state: &BetaState,
        epsilon_policy: f64,
    ) -> Result<Decision, SolverError> {
        let m_use = self.usable_depth(epsilon_policy)?;
        let (level, i) = self.model.locate(state)?;
        if level > m_use {
            return Err(SolverError::DepthExceeded {
                level,
                usable: m_use,
            });
        }
        // vL = max{0, qL}, so qL > 0 exactly when vL > 0.
        Ok(if self.v_lower[level][i] > 0.0 {
            Decision::Forward
        } else {
            Decision::Discard
        })
    }

    /// Dump the triangle as CSV rows `level,i,alpha,beta,vL,vU`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SolverError> {
        writeln!(w, "level,i,alpha,beta,vL,vU")?;
        for level in 0..=self.m {
            for i in 0..=level {
                let alpha = self.model.alpha0 + i as f64;
                let beta = self.model.beta0 + (level - i) as f64;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    level, i, alpha, beta, self.v_lower[level][i], self.v_upper[level][i]
                )?;
            }
        }
        Ok(())
    }
}

/// Smallest forwarding posterior mean at one level: the minimum mean among
/// reachable states whose lower-bound Q-value is strictly positive, or
/// `+inf` when the level has none. `row` is the solved lower-bound row.
fn threshold_at_level(model: &CategoryModel, level: usize, row: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &v) in row.iter().enumerate().take(level + 1) {
        if v > 0.0 {
            let mu = model.state_mean(level, i);
            if mu < best {
                best = mu;
            }
        }
    }
    best
}

/// Per-level forwarding thresholds `mu_star`: forward a level-`n` state
/// exactly when its posterior mean is at or above `mu_star[n]`. An entry of
/// `+inf` means no state at that level warrants forwarding.
///
/// One float per level is all the optimal policy needs at decision time; on a
/// coarse reachable lattice the entries may oscillate rather than increase,
/// and a level's smallest forwarding mean can sit above the cost when every
/// reachable mean at that level does.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    model: CategoryModel,
    m: usize,
    m_use: usize,
    epsilon_policy: f64,
    mu_star: Vec<f64>,
}

impl ThresholdTable {
    /// Solve the backward recursion with rolling rows (no retained triangle)
    /// and extract thresholds for levels `0 ..= m_use`. Produces entries
    /// bit-identical to [`ValueTable::thresholds`] on the same model.
    pub fn solve(
        model: &CategoryModel,
        epsilon_policy: f64,
        m_use: usize,
    ) -> Result<Self, SolverError> {
        let tail = model.tail_depth(epsilon_policy)?;
        let m = m_use + tail;
        check_depth(m)?;
        let mut row = vec![0.0; m + 1];
        let mut next = vec![0.0; m + 1];
        terminal_row_lower(model, m, &mut row);
        let mut mu_star = vec![f64::INFINITY; m_use + 1];
        for level in (0..m).rev() {
            step_row(model, level, &row, &mut next);
            std::mem::swap(&mut row, &mut next);
            if level <= m_use {
                mu_star[level] = threshold_at_level(model, level, &row[..level + 1]);
            }
        }
        Ok(Self {
            model: *model,
            m,
            m_use,
            epsilon_policy,
            mu_star,
        })
    }

    pub fn model(&self) -> &CategoryModel {
        &self.model
    }

    pub fn truncation_depth(&self) -> usize {
        self.m
    }

    /// Deepest level the table can decide.
    pub fn usable_depth(&self) -> usize {
        self.m_use
    }

    pub fn epsilon_policy(&self) -> f64 {
        self.epsilon_policy
    }

    /// Threshold at `level`, `+inf` meaning never forward.
    pub fn mu_star(&self, level: usize) -> Result<f64, SolverError> {
        self.mu_star
            .get(level)
            .copied()
            .ok_or(SolverError::DepthExceeded {
                level,
                usable: self.m_use,
            })
    }

    /// Threshold decision: forward exactly when the state's posterior mean
    /// reaches its level's threshold (ties forward).
    pub fn decide(&self, state: &BetaState) -> Result<Decision, SolverError> {
        let (level, _) = self.model.locate(state)?;
        if level > self.m_use {
            return Err(SolverError::DepthExceeded {
                level,
                usable: self.m_use,
            });
        }
        Ok(if state.mean() >= self.mu_star[level] {
            Decision::Forward
        } else {
            Decision::Discard
        })
    }

    /// Write CSV rows `level,m,mu_star`, where `m = alpha0 + beta0 + level`
    /// and a never-forward level is written as the literal `inf`. Floats are
    /// shortest-round-trip formatted, so reading the file back reproduces the
    /// table exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SolverError> {
        writeln!(w, "level,m,mu_star")?;
        let base = self.model.alpha0 + self.model.beta0;
        for (level, mu) in self.mu_star.iter().enumerate() {
            writeln!(w, "{},{},{}", level, base + level as f64, mu)?;
        }
        Ok(())
    }

    /// Read a table written by [`ThresholdTable::write_csv`]. The model and
    /// policy epsilon are not stored in the CSV and must be re-supplied; the
    /// `m` column is cross-checked against the model.
    pub fn read_csv<R: BufRead>(
        r: R,
        model: &CategoryModel,
        epsilon_policy: f64,
    ) -> Result<Self, SolverError> {
        if !(epsilon_policy > 0.0 && epsilon_policy.is_finite()) {
            return Err(SolverError::InvalidEpsilon(epsilon_policy));
        }
        let mut mu_star = Vec::new();
        let base = model.alpha0 + model.beta0;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != "level,m,mu_star" {
                    return Err(SolverError::ThresholdCsv {
                        line: lineno,
                        message: format!("expected header `level,m,mu_star`, got `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let level: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!("bad level: {e}"),
                })?;
            if level != mu_star.len() {
                return Err(SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!("levels must be dense from 0, got {level}"),
                });
            }
            let m_col: f64 = fields[1]
                .trim()
                .parse()
                .map_err(|e| SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!("bad m: {e}"),
                })?;
            if (m_col - (base + level as f64)).abs() > 1e-9 {
                return Err(SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!(
                        "m={m_col} does not match alpha0+beta0+level={}",
                        base + level as f64
                    ),
                });
            }
            let mu: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| SolverError::ThresholdCsv {
                    line: lineno,
                    message: format!("bad mu_star: {e}"),
                })?;
            mu_star.push(mu);
        }
        if mu_star.is_empty() {
            return Err(SolverError::ThresholdCsv {
                line: 1,
                message: "no threshold rows".to_string(),
            });
        }
        let m_use = mu_star.len() - 1;
        let m = m_use + model.tail_depth(epsilon_policy)?;
        Ok(Self {
            model: *model,
            m,
            m_use,
            epsilon_policy,
            mu_star,
        })
    }
}
