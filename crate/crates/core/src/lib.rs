//! Bayesian information filtering: forward-or-discard decisions for a stream
//! of categorized items, learned per user from click feedback.
//!
//! The library decomposes the multi-category filtering problem into
//! independent single-category two-armed bandits (one unknown Bernoulli arm
//! versus a known outside option), solves each by backward induction with
//! certified value bounds, and extracts the optimal threshold policy. It also
//! ships the standard benchmark policies (pure exploitation, UCB, Thompson
//! sampling), a seeded Monte Carlo harness, trace-replay evaluation, and
//! hyperparameter fitting from historical logs.
//!
//! Modules:
//! - [`posterior`]: Beta-Bernoulli belief state (update, mean, quantile, sampling).
//! - [`dp_solver`]: value-bound solver, Q-factors, threshold extraction.
//! - [`policies`]: uniform decision interface over the benchmark strategies.
//! - [`simulator`]: idealized Monte Carlo evaluation with confidence intervals.
//! - [`estimation`]: prior/discount fitting and offline trace replay.
//! - [`cli`]: command-line front end (`solve`, `simulate`, `estimate`, `replay`).

pub mod cli;
pub mod dp_solver;
pub mod estimation;
pub mod policies;
pub mod posterior;
pub mod rng;
pub mod simulator;

pub use dp_solver::{CategoryModel, Decision, ThresholdTable, ValueTable};
pub use policies::PolicySpec;
pub use posterior::{BetaState, Feedback};
pub use simulator::{SimConfig, SimResult};
