//! Idealized Monte Carlo evaluation of forwarding policies.
//!
//! Users are generated from the assumed model: a latent relevance probability
//! per category drawn from the prior, a geometric lifetime, and an i.i.d.
//! category for each arriving item. Each user is simulated on its own random
//! substream keyed by `(seed, user index)`, so results are bit-identical at
//! any thread count; partial sums are combined by fixed-order pairwise
//! reduction to keep floating-point totals deterministic as well.

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dp_solver::{effective_discount, CategoryModel, Decision, SolverError, ThresholdTable};
use crate::policies::{policy_decide, PolicyError, PolicySpec};
use crate::posterior::Feedback;
use crate::rng::{substream, user_env_stream, user_policy_stream, RandomStream};

/// Steps of the per-step marginal reward window.
pub const DEFAULT_MARGINAL_WINDOW: usize = 500;

/// Users per work chunk. Chunk boundaries are fixed by user index, so the
/// parallel reduction is independent of scheduling.
const CHUNK_USERS: u64 = 256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation needs at least one arm")]
    NoArms,

    #[error("arm {index} has non-positive arrival share p_x={p_x}")]
    NonPositiveShare { index: usize, p_x: f64 },

    #[error("arrival shares must sum to 1 within 1e-12, got {sum}")]
    UnnormalizedShares { sum: f64 },

    #[error("gamma must lie strictly inside (0, 1), got {0}")]
    InvalidGamma(f64),

    #[error("simulation needs at least one user")]
    NoUsers,

    #[error("step cap must be at least 1")]
    ZeroStepCap,

    #[error("got {policies} policies for {arms} arms")]
    PolicyArmMismatch { arms: usize, policies: usize },

    #[error("policy reported depth-exceeded but is not re-solvable")]
    UndeepenablePolicy,

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One category of a multi-category stream: its subproblem model plus its
/// share of item arrivals.
#[derive(Debug, Clone)]
pub struct CategoryArm {
    model: CategoryModel,
    p_x: f64,
}

impl CategoryArm {
    pub fn new(model: CategoryModel, p_x: f64) -> Result<Self, SimError> {
        if !(p_x > 0.0 && p_x <= 1.0) {
            return Err(SimError::NonPositiveShare { index: 0, p_x });
        }
        Ok(Self { model, p_x })
    }

    pub fn model(&self) -> &CategoryModel {
        &self.model
    }

    pub fn p_x(&self) -> f64 {
        self.p_x
    }
}

/// Configuration of one multi-category simulation run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    arms: Vec<CategoryArm>,
    gamma: f64,
    n_users: u64,
    seed: u64,
    step_cap: u64,
    marginal_window: usize,
}

impl SimConfig {
    /// Validate and build a config. The step cap defaults to one hundred
    /// expected lifetimes, the marginal window to
    /// [`DEFAULT_MARGINAL_WINDOW`].
    pub fn new(
        arms: Vec<CategoryArm>,
        gamma: f64,
        n_users: u64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if arms.is_empty() {
            return Err(SimError::NoArms);
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(SimError::InvalidGamma(gamma));
        }
        if n_users == 0 {
            return Err(SimError::NoUsers);
        }
        for (index, arm) in arms.iter().enumerate() {
            if !arm.p_x.is_finite() || arm.p_x <= 0.0 {
                return Err(SimError::NonPositiveShare {
                    index,
                    p_x: arm.p_x,
                });
            }
        }
        let sum: f64 = arms.iter().map(|a| a.p_x).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SimError::UnnormalizedShares { sum });
        }
        let step_cap = default_step_cap(gamma);
        Ok(Self {
            arms,
            gamma,
            n_users,
            seed,
            step_cap,
            marginal_window: DEFAULT_MARGINAL_WINDOW,
        })
    }

    pub fn with_step_cap(mut self, step_cap: u64) -> Result<Self, SimError> {
        if step_cap == 0 {
            return Err(SimError::ZeroStepCap);
        }
        self.step_cap = step_cap;
        Ok(self)
    }

    pub fn with_marginal_window(mut self, window: usize) -> Self {
        self.marginal_window = window;
        self
    }

    pub fn arms(&self) -> &[CategoryArm] {
        &self.arms
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_users(&self) -> u64 {
        self.n_users
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_cap(&self) -> u64 {
        self.step_cap
    }
}

/// Default safety horizon: one hundred expected lifetimes.
pub fn default_step_cap(gamma: f64) -> u64 {
    (100.0 / (1.0 - gamma)).ceil() as u64
}

/// Latent per-user draw from the model: one relevance probability per
/// category and a geometric lifetime.
#[derive(Debug, Clone)]
pub struct UserDraw {
    pub theta: Vec<f64>,
    pub lifetime: u64,
}

/// Draw a user's latents in the canonical stream order (thetas by arm index,
/// then the lifetime).
pub fn draw_user(config: &SimConfig, rng: &mut RandomStream) -> UserDraw {
    let theta: Vec<f64> = config
        .arms
        .iter()
        .map(|a| a.model.prior().sample(rng))
        .collect();
    let lifetime = sample_geometric(rng, config.gamma);
    UserDraw { theta, lifetime }
}

/// Geometric draw on `{0, 1, 2, ...}` with survival `gamma`
/// (`P(N >= n) = gamma^n`), by inverse transform.
fn sample_geometric(rng: &mut RandomStream, gamma: f64) -> u64 {
    let u: f64 = rng.random();
    let x = (1.0 - u).ln() / gamma.ln();
    if !x.is_finite() {
        return u64::MAX;
    }
    x.floor() as u64
}

/// Mean rewards, per-step marginals, and 95% confidence-interval half-widths
/// over the simulated users.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    total_mean: f64,
    total_ci_half_width: f64,
    marginal_means: Vec<f64>,
    marginal_ci_half_widths: Vec<f64>,
    n_users_effective: u64,
    truncation_count: u64,
}

impl SimResult {
    /// Estimated expected total reward per user.
    pub fn total_mean(&self) -> f64 {
        self.total_mean
    }

    /// 95% half-width `1.96 * sample std / sqrt(n)`.
    pub fn total_ci_half_width(&self) -> f64 {
        self.total_ci_half_width
    }

    /// Per-step expected marginal reward over the window, averaging in zeros
    /// for discarded items and for steps past a user's lifetime.
    pub fn marginal_means(&self) -> &[f64] {
        &self.marginal_means
    }

    pub fn marginal_ci_half_widths(&self) -> &[f64] {
        &self.marginal_ci_half_widths
    }

    pub fn n_users_effective(&self) -> u64 {
        self.n_users_effective
    }

    /// Number of users whose drawn lifetime was cut at the step cap; a
    /// nonzero count means the total-reward estimate carries truncation bias.
    pub fn truncation_count(&self) -> u64 {
        self.truncation_count
    }

    /// Whether two results' 95% confidence intervals overlap.
    pub fn ci_overlaps(&self, other: &SimResult) -> bool {
        (self.total_mean - other.total_mean).abs()
            <= self.total_ci_half_width + other.total_ci_half_width
    }

    pub fn summary_header() -> &'static str {
        "policy,c,gamma_x,total_mean,ci_half,n_users"
    }

    /// One summary CSV row in the `policy,c,gamma_x,total_mean,ci_half,n_users`
    /// layout.
    pub fn summary_row(&self, policy: &str, c: f64, gamma_x: f64) -> String {
        format!(
            "{},{},{},{},{},{}",
            policy, c, gamma_x, self.total_mean, self.total_ci_half_width, self.n_users_effective
        )
    }

    /// Summary statistics over externally computed per-user totals (the
    /// trace-replay path); no per-step marginals.
    pub(crate) fn from_user_totals(totals: &[f64]) -> SimResult {
        let mut acc = Accum::new(0);
        for &t in totals {
            acc.add_user(t, false, &[]);
        }
        finalize(acc)
    }

    /// Per-step marginal CSV (`step,marginal_mean,ci_half`), steps 1-based.
    pub fn write_marginals_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,marginal_mean,ci_half")?;
        for (i, (m, ci)) in self
            .marginal_means
            .iter()
            .zip(&self.marginal_ci_half_widths)
            .enumerate()
        {
            writeln!(w, "{},{},{}", i + 1, m, ci)?;
        }
        Ok(())
    }
}

/// Fixed-shape partial sums for one chunk of users.
#[derive(Clone)]
struct Accum {
    n: u64,
    sum: f64,
    sum_sq: f64,
    marg: Vec<f64>,
    marg_sq: Vec<f64>,
    truncations: u64,
}

impl Accum {
    fn new(window: usize) -> Self {
        Self {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
            marg: vec![0.0; window],
            marg_sq: vec![0.0; window],
            truncations: 0,
        }
    }

    fn add_user(&mut self, total: f64, truncated: bool, steps: &[(u32, f64)]) {
        self.n += 1;
        self.sum += total;
        self.sum_sq += total * total;
        if truncated {
            self.truncations += 1;
        }
        for &(step, r) in steps {
            let w = step as usize - 1;
            self.marg[w] += r;
            self.marg_sq[w] += r * r;
        }
    }

    fn merge(mut self, other: &Accum) -> Accum {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.truncations += other.truncations;
        for (a, b) in self.marg.iter_mut().zip(&other.marg) {
            *a += b;
        }
        for (a, b) in self.marg_sq.iter_mut().zip(&other.marg_sq) {
            *a += b;
        }
        self
    }
}

/// Pairwise (tree) reduction in fixed order.
fn pairwise_merge(mut parts: Vec<Accum>, window: usize) -> Accum {
    if parts.is_empty() {
        return Accum::new(window);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut iter = parts.into_iter();
        while let Some(a) = iter.next() {
            match iter.next() {
                Some(b) => next.push(a.merge(&b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

fn finalize(acc: Accum) -> SimResult {
    let n = acc.n as f64;
    let ci = |sum: f64, sum_sq: f64| -> f64 {
        if acc.n < 2 {
            return 0.0;
        }
        let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
        1.96 * var.sqrt() / n.sqrt()
    };
    let total_ci = ci(acc.sum, acc.sum_sq);
    let marginal_means = acc.marg.iter().map(|s| s / n).collect();
    let marginal_ci_half_widths = acc
        .marg
        .iter()
        .zip(&acc.marg_sq)
        .map(|(&s, &sq)| ci(s, sq))
        .collect();
    SimResult {
        total_mean: acc.sum / n,
        total_ci_half_width: total_ci,
        marginal_means,
        marginal_ci_half_widths,
        n_users_effective: acc.n,
        truncation_count: acc.truncations,
    }
}

/// Per-chunk partial sums plus the users that outran an optimal table.
type ChunkOutcome = (Accum, Vec<(u64, usize)>);

/// Outcome of simulating one user.
enum UserRun {
    Done {
        total: f64,
        truncated: bool,
    },
    /// An optimal policy hit a state past its table's usable depth; the arm
    /// index says which table to re-solve deeper.
    DepthExceeded {
        arm: usize,
    },
}

fn depth_exceeded(err: &PolicyError) -> bool {
    matches!(err, PolicyError::Solver(SolverError::DepthExceeded { .. }))
}

/// Simulate one user on one category. Rewards for steps inside the marginal
/// window are pushed to `steps`; nothing is recorded for a run that returns
/// `DepthExceeded`, so a retry starts clean.
fn run_user_single(
    model: &CategoryModel,
    spec: &PolicySpec,
    step_cap: u64,
    window: usize,
    env: &mut RandomStream,
    pol: &mut RandomStream,
    steps: &mut Vec<(u32, f64)>,
) -> Result<UserRun, SimError> {
    steps.clear();
    let theta = model.prior().sample(env);
    let lifetime = sample_geometric(env, model.gamma_x());
    let truncated = lifetime > step_cap;
    let n_eff = lifetime.min(step_cap);
    let cost = model.cost();
    let deterministic = spec.is_deterministic();
    let mut state = model.prior();
    let mut total = 0.0;
    for n in 1..=n_eff {
        let relevant = env.random_bool(theta);
        let decision = match policy_decide(spec, &state, pol) {
            Ok(d) => d,
            Err(e) if depth_exceeded(&e) => return Ok(UserRun::DepthExceeded { arm: 0 }),
            Err(e) => return Err(e.into()),
        };
        match decision {
            Decision::Forward => {
                let r = if relevant { 1.0 - cost } else { -cost };
                total += r;
                if n as usize <= window && r != 0.0 {
                    steps.push((n as u32, r));
                }
                state = state.update(Feedback::new(relevant));
            }
            Decision::Discard => {
                // A deterministic policy that discards leaves the state
                // frozen, so every later decision repeats; the remaining
                // rewards are zero.
                if deterministic {
                    break;
                }
            }
        }
    }
    Ok(UserRun::Done { total, truncated })
}

/// Simulate one user across all arms of a multi-category stream.
fn run_user_multi(
    config: &SimConfig,
    specs: &[PolicySpec],
    cum_p: &[f64],
    env: &mut RandomStream,
    pol: &mut RandomStream,
    steps: &mut Vec<(u32, f64)>,
) -> Result<UserRun, SimError> {
    steps.clear();
    let draw = draw_user(config, env);
    let truncated = draw.lifetime > config.step_cap;
    let n_eff = draw.lifetime.min(config.step_cap);
    let window = config.marginal_window;
    let k = config.arms.len();
    let mut states: Vec<_> = config.arms.iter().map(|a| a.model.prior()).collect();
    let mut frozen = vec![false; k];
    let mut live_deterministic = specs.iter().filter(|s| s.is_deterministic()).count();
    let all_deterministic = live_deterministic == k;
    let mut total = 0.0;
    for n in 1..=n_eff {
        if all_deterministic && live_deterministic == 0 {
            break;
        }
        let u: f64 = env.random();
        let x = cum_p.iter().position(|&c| u < c).unwrap_or(k - 1);
        let relevant = env.random_bool(draw.theta[x]);
        if frozen[x] {
            continue;
        }
        let decision = match policy_decide(&specs[x], &states[x], pol) {
            Ok(d) => d,
            Err(e) if depth_exceeded(&e) => return Ok(UserRun::DepthExceeded { arm: x }),
            Err(e) => return Err(e.into()),
        };
        match decision {
            Decision::Forward => {
                let cost = config.arms[x].model.cost();
                let r = if relevant { 1.0 - cost } else { -cost };
                total += r;
                if n as usize <= window && r != 0.0 {
                    steps.push((n as u32, r));
                }
                states[x] = states[x].update(Feedback::new(relevant));
            }
            Decision::Discard => {
                if specs[x].is_deterministic() {
                    frozen[x] = true;
                    live_deterministic -= 1;
                }
            }
        }
    }
    Ok(UserRun::Done { total, truncated })
}

/// Re-solve an optimal policy's table with doubled usable depth (capped at
/// the step cap, beyond which no state can be reached).
fn deepen(spec: &PolicySpec, step_cap: u64) -> Result<PolicySpec, SimError> {
    match spec {
        PolicySpec::Optimal { table } => {
            let old = table.usable_depth();
            let target = (old.saturating_mul(2).max(old + 1) as u64).min(step_cap) as usize;
            let deeper = ThresholdTable::solve(table.model(), table.epsilon_policy(), target)?;
            Ok(PolicySpec::Optimal {
                table: std::sync::Arc::new(deeper),
            })
        }
        _ => Err(SimError::UndeepenablePolicy),
    }
}

/// Run every user through `run_one`, retrying users that outran an optimal
/// table with progressively deeper re-solves. Phase order and chunk
/// boundaries are fixed, so the result is identical at any thread count.
fn drive_users<F>(
    n_users: u64,
    window: usize,
    step_cap: u64,
    mut specs: Vec<PolicySpec>,
    run_one: F,
) -> Result<SimResult, SimError>
where
    F: Fn(u64, &[PolicySpec], &mut Vec<(u32, f64)>) -> Result<UserRun, SimError> + Sync,
{
    let n_chunks = n_users.div_ceil(CHUNK_USERS);
    let chunk_outcomes: Result<Vec<ChunkOutcome>, SimError> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK_USERS;
            let hi = ((chunk + 1) * CHUNK_USERS).min(n_users);
            let mut acc = Accum::new(window);
            let mut failed = Vec::new();
            let mut steps = Vec::new();
            for user in lo..hi {
                match run_one(user, &specs, &mut steps)? {
                    UserRun::Done { total, truncated } => acc.add_user(total, truncated, &steps),
                    UserRun::DepthExceeded { arm } => failed.push((user, arm)),
                }
            }
            Ok((acc, failed))
        })
        .collect();
    let chunk_outcomes = chunk_outcomes?;
    let mut failed: Vec<(u64, usize)> = Vec::new();
    let mut parts: Vec<Accum> = Vec::with_capacity(chunk_outcomes.len());
    for (acc, f) in chunk_outcomes {
        parts.push(acc);
        failed.extend(f);
    }
    let mut acc = pairwise_merge(parts, window);

    // Retry phases: rare users with lifetimes past the solved depth.
    let mut steps = Vec::new();
    while !failed.is_empty() {
        let mut arms_to_deepen: Vec<usize> = failed.iter().map(|&(_, arm)| arm).collect();
        arms_to_deepen.sort_unstable();
        arms_to_deepen.dedup();
        for arm in arms_to_deepen {
            specs[arm] = deepen(&specs[arm], step_cap)?;
        }
        let mut still_failed = Vec::new();
        for (user, _) in failed {
            match run_one(user, &specs, &mut steps)? {
                UserRun::Done { total, truncated } => acc.add_user(total, truncated, &steps),
                UserRun::DepthExceeded { arm } => still_failed.push((user, arm)),
            }
        }
        failed = still_failed;
    }
    Ok(finalize(acc))
}

/// Monte Carlo estimate of one policy's expected total reward on one
/// category: per user, draw the latent relevance and lifetime, run the
/// policy item by item with immediate feedback on forwards, and accumulate
/// the net rewards.
pub fn simulate_single(
    model: &CategoryModel,
    policy: &PolicySpec,
    n_users: u64,
    seed: u64,
) -> Result<SimResult, SimError> {
    simulate_single_with(
        model,
        policy,
        n_users,
        seed,
        default_step_cap(model.gamma_x()),
        DEFAULT_MARGINAL_WINDOW,
    )
}

/// [`simulate_single`] with explicit step cap and marginal window.
pub fn simulate_single_with(
    model: &CategoryModel,
    policy: &PolicySpec,
    n_users: u64,
    seed: u64,
    step_cap: u64,
    window: usize,
) -> Result<SimResult, SimError> {
    if n_users == 0 {
        return Err(SimError::NoUsers);
    }
    if step_cap == 0 {
        return Err(SimError::ZeroStepCap);
    }
    let specs = vec![policy.clone()];
    drive_users(n_users, window, step_cap, specs, |user, specs, steps| {
        let mut env = user_env_stream(seed, user);
        let mut pol = user_policy_stream(seed, user);
        run_user_single(
            model, &specs[0], step_cap, window, &mut env, &mut pol, steps,
        )
    })
}

/// Monte Carlo estimate over a category mixture: items arrive i.i.d. across
/// arms, each arm runs its own policy on its own posterior, and the reward
/// is summed across all forwards of the user.
pub fn simulate_multi(config: &SimConfig, policies: &[PolicySpec]) -> Result<SimResult, SimError> {
    if policies.len() != config.arms.len() {
        return Err(SimError::PolicyArmMismatch {
            arms: config.arms.len(),
            policies: policies.len(),
        });
    }
    let mut cum = 0.0;
    let cum_p: Vec<f64> = config
        .arms
        .iter()
        .map(|a| {
            cum += a.p_x;
            cum
        })
        .collect();
    let seed = config.seed;
    drive_users(
        config.n_users,
        config.marginal_window,
        config.step_cap,
        policies.to_vec(),
        |user, specs, steps| {
            let mut env = user_env_stream(seed, user);
            let mut pol = user_policy_stream(seed, user);
            run_user_multi(config, specs, &cum_p, &mut env, &mut pol, steps)
        },
    )
}

/// Replay the single-category simulation recording decisions, and count the
/// users whose decision path forwards after a discard. The optimal policy
/// stops forwarding once it discards, and so does any deterministic policy
/// (the posterior freezes after a discard), so both must audit to zero.
pub fn stopping_audit(
    model: &CategoryModel,
    policy: &PolicySpec,
    n_users: u64,
    seed: u64,
) -> Result<u64, SimError> {
    if n_users == 0 {
        return Err(SimError::NoUsers);
    }
    let step_cap = default_step_cap(model.gamma_x());
    let mut spec = policy.clone();
    // Size optimal tables up front: the audit must not break out early, so
    // walk the full lifetime of each user.
    loop {
        let violations: Result<Vec<u64>, SimError> = (0..n_users.div_ceil(CHUNK_USERS))
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * CHUNK_USERS;
                let hi = ((chunk + 1) * CHUNK_USERS).min(n_users);
                let mut count = 0u64;
                for user in lo..hi {
                    let mut env = user_env_stream(seed, user);
                    let mut pol = user_policy_stream(seed, user);
                    let theta = model.prior().sample(&mut env);
                    let lifetime = sample_geometric(&mut env, model.gamma_x()).min(step_cap);
                    let mut state = model.prior();
                    let mut discarded_before = false;
                    let mut violated = false;
                    for _ in 0..lifetime {
                        let relevant = env.random_bool(theta);
                        match policy_decide(&spec, &state, &mut pol) {
                            Ok(Decision::Forward) => {
                                violated |= discarded_before;
                                state = state.update(Feedback::new(relevant));
                            }
                            Ok(Decision::Discard) => discarded_before = true,
                            Err(e) if depth_exceeded(&e) => {
                                return Err(SimError::Solver(SolverError::DepthExceeded {
                                    level: 0,
                                    usable: 0,
                                }))
                            }
                            Err(e) => return Err(e.into()),
                        }
                    }
                    if violated {
                        count += 1;
                    }
                }
                Ok(count)
            })
            .collect();
        match violations {
            Ok(counts) => return Ok(counts.iter().sum()),
            Err(SimError::Solver(SolverError::DepthExceeded { .. })) => {
                spec = deepen(&spec, step_cap)?;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Goodness-of-fit report from [`lifetime_check`].
#[derive(Debug, Clone)]
pub struct LifetimeCheck {
    /// Pearson chi-square statistic of the per-category arrival counts
    /// against the geometric law with the effective discount.
    pub statistic: f64,
    /// Degrees of freedom (bins minus one; no parameters are fitted).
    pub dof: usize,
    /// 1% critical value of the matching chi-square distribution.
    pub critical_1pct: f64,
    /// Sample mean of the per-category counts.
    pub sample_mean: f64,
    /// The effective discount the counts were tested against.
    pub gamma_x: f64,
    pub n_samples: u64,
}

impl LifetimeCheck {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// Simulate the joint process (global geometric lifetime, per-item thinning
/// by `p_x`), count category-`x` arrivals per user, and test the counts
/// against the geometric law implied by the effective discount.
pub fn lifetime_check(
    gamma: f64,
    p_x: f64,
    n_samples: u64,
    seed: u64,
) -> Result<LifetimeCheck, SimError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SimError::InvalidGamma(gamma));
    }
    if n_samples == 0 {
        return Err(SimError::NoUsers);
    }
    let gamma_x = effective_discount(p_x, gamma)?;
    let chunks = n_samples.div_ceil(CHUNK_USERS);
    let (hist, total): (Vec<u64>, u128) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK_USERS;
            let hi = ((chunk + 1) * CHUNK_USERS).min(n_samples);
            let mut hist: Vec<u64> = Vec::new();
            let mut total: u128 = 0;
            for sample in lo..hi {
                let mut rng = substream(seed, sample);
                let n = sample_geometric(&mut rng, gamma);
                let mut count = 0u64;
                for _ in 0..n {
                    if rng.random_bool(p_x) {
                        count += 1;
                    }
                }
                total += count as u128;
                let idx = count as usize;
                if idx >= hist.len() {
                    hist.resize(idx + 1, 0);
                }
                hist[idx] += 1;
            }
            (hist, total)
        })
        .reduce(
            || (Vec::new(), 0),
            |(mut ha, ta), (hb, tb)| {
                if hb.len() > ha.len() {
                    ha.resize(hb.len(), 0);
                }
                for (a, b) in ha.iter_mut().zip(&hb) {
                    *a += b;
                }
                (ha, ta + tb)
            },
        );

    // Singleton bins 0..k-1 plus a merged tail, all with expected count >= 5.
    let n = n_samples as f64;
    let min_expected = 5.0;
    let mut k = 1usize;
    while k < 100_000 {
        let singleton = n * (1.0 - gamma_x) * gamma_x.powi(k as i32);
        let tail = n * gamma_x.powi((k + 1) as i32);
        if singleton < min_expected || tail < min_expected {
            break;
        }
        k += 1;
    }
    let mut statistic = 0.0;
    let mut observed_head = 0u64;
    for j in 0..k {
        let observed = hist.get(j).copied().unwrap_or(0);
        observed_head += observed;
        let expected = n * (1.0 - gamma_x) * gamma_x.powi(j as i32);
        let d = observed as f64 - expected;
        statistic += d * d / expected;
    }
    let tail_observed = (n_samples - observed_head) as f64;
    let tail_expected = n * gamma_x.powi(k as i32);
    let d = tail_observed - tail_expected;
    statistic += d * d / tail_expected;
    let dof = k; // k + 1 bins, minus one.
    let critical_1pct = ChiSquared::new(dof as f64)
        .expect("dof >= 1")
        .inverse_cdf(0.99);
    Ok(LifetimeCheck {
        statistic,
        dof,
        critical_1pct,
        sample_mean: total as f64 / n,
        gamma_x,
        n_samples,
    })
}
