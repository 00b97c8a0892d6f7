//! Independent brute-force oracle for the truncated single-category problem.
//!
//! A truncated deterministic policy assigns stop-or-forward to every lattice
//! state above the terminal level. Stopping ends the run with value 0;
//! forwarding pays `mu - c` and moves to the success/failure successors with
//! the posterior-predictive weights; surviving to the terminal level pays
//! the terminal reward. The oracle evaluates *every* such assignment on each
//! state's reachable sub-lattice and takes the maximum, sharing nothing with
//! the backward-recursion solver it checks.

use infofilter::dp_solver::CategoryModel;

/// Which terminal reward the truncated problem pays at the cut.
#[derive(Clone, Copy)]
pub enum TerminalKind {
    /// Value of forwarding everything under the frozen posterior mean:
    /// `max{0, mu - c} / (1 - gamma)`.
    AlwaysForward,
    /// Reward ceiling `1 / (1 - gamma)`.
    RewardCeiling,
}

fn terminal_row(model: &CategoryModel, m: usize, kind: TerminalKind) -> Vec<f64> {
    let scale = 1.0 / (1.0 - model.gamma_x());
    (0..=m)
        .map(|i| match kind {
            TerminalKind::AlwaysForward => (model.state_mean(m, i) - model.cost()).max(0.0) * scale,
            TerminalKind::RewardCeiling => scale,
        })
        .collect()
}

/// Optimal truncated value at every lattice point `(level, i)` for depth `m`
/// (requires `m <= 6`; the root alone enumerates `2^21` policies at `m = 6`).
pub fn enumerate_values(model: &CategoryModel, m: usize, kind: TerminalKind) -> Vec<Vec<f64>> {
    assert!((1..=6).contains(&m), "oracle depth must stay enumerable");
    let terminal = terminal_row(model, m, kind);
    (0..=m)
        .map(|level| {
            (0..=level)
                .map(|i| best_over_policies(model, m, &terminal, level, i))
                .collect()
        })
        .collect()
}

/// Max over all stop/forward assignments on the sub-lattice rooted at
/// `(level, i)`.
fn best_over_policies(
    model: &CategoryModel,
    m: usize,
    terminal: &[f64],
    level: usize,
    i: usize,
) -> f64 {
    let depth = m - level;
    if depth == 0 {
        return terminal[i];
    }
    let n_states = depth * (depth + 1) / 2;
    assert!(n_states <= 21);
    let mut best = f64::NEG_INFINITY;
    let mut next = vec![0.0f64; depth + 1];
    let mut row = vec![0.0f64; depth + 1];
    for mask in 0u32..(1u32 << n_states) {
        next[..depth + 1].copy_from_slice(&terminal[i..=i + depth]);
        for r in (0..depth).rev() {
            let bit_base = r * (r + 1) / 2;
            let global_level = level + r;
            for j in 0..=r {
                row[j] = if (mask >> (bit_base + j)) & 1 == 0 {
                    0.0
                } else {
                    let alpha = model.alpha0() + (i + j) as f64;
                    let beta = model.beta0() + (global_level - (i + j)) as f64;
                    let mu = alpha / (alpha + beta);
                    mu - model.cost() + model.gamma_x() * (mu * next[j + 1] + (1.0 - mu) * next[j])
                };
            }
            std::mem::swap(&mut row, &mut next);
        }
        if next[0] > best {
            best = next[0];
        }
    }
    best
}
