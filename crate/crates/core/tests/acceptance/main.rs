//! Acceptance suite: one test per numbered criterion, each printing a
//! PASS/FAIL line with the measured quantities (visible via
//! `cargo test --test acceptance -- --nocapture`; failing tests print their
//! output unconditionally).

use rand::Rng;

use infofilter::dp_solver::{
    effective_discount, solve_scan, Bound, CategoryModel, ThresholdTable, ValueTable,
};
use infofilter::estimation::{self, CategoryFit, FitReport};
use infofilter::policies::PolicySpec;
use infofilter::posterior::BetaState;
use infofilter::rng;
use infofilter::simulator::{
    lifetime_check, simulate_multi, simulate_single, stopping_audit, CategoryArm, SimConfig,
    SimResult,
};

mod oracle;

fn model(a0: f64, b0: f64, g: f64, c: f64) -> CategoryModel {
    CategoryModel::new(a0, b0, g, c).unwrap()
}

/// Random model in the acceptance distribution: hyperparameters in
/// [0.5, 25], discount from the named set, cost uniform on [0, 1].
fn random_model(r: &mut rng::RandomStream) -> CategoryModel {
    let a0 = 0.5 + 24.5 * r.random::<f64>();
    let b0 = 0.5 + 24.5 * r.random::<f64>();
    let gammas = [0.9, 0.99, 0.999];
    let g = gammas[(r.random::<u64>() % 3) as usize];
    let c = r.random::<f64>();
    model(a0, b0, g, c)
}

#[test]
fn criterion_01_gap_certificate() {
    let mut r = rng::substream(101, 0);
    let depth = 500;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..20 {
        let m = random_model(&mut r);
        let table = ValueTable::solve(&m, depth).unwrap();
        let g = m.gamma_x();
        for level in 0..=depth {
            let cap = g.powi((depth - level) as i32) / (1.0 - g) + 1e-12;
            for i in 0..=level {
                let gap = table.value(level, i, Bound::Upper).unwrap()
                    - table.value(level, i, Bound::Lower).unwrap();
                worst_excess = worst_excess.max(gap - cap);
                assert!(
                    gap <= cap,
                    "gap {gap} exceeds bound {cap} at level {level}, i {i} for model {m:?}"
                );
                assert!(gap >= 0.0);
            }
        }
    }
    println!(
        "criterion 01 gap certificate: PASS (20 models at M={depth}, worst gap-minus-bound {worst_excess:.3e})"
    );
}

#[test]
fn criterion_02_closed_form_corners() {
    // Checked on the usable region of a table sized for a certified gap
    // below the 1e-9 tolerance; the truncation tail itself always carries a
    // wide gap by construction.
    let m_use = 120;
    let mut worst_zero = 0.0_f64;
    for &(a0, b0) in &[(1.0, 19.0), (2.5, 7.5)] {
        for &g in &[0.9, 0.99, 0.999] {
            let zero = model(a0, b0, g, 0.0);
            let tail = zero.tail_depth(5e-10).unwrap();
            let scale = 1.0 / (1.0 - g);
            solve_scan(&zero, m_use + tail, |level, lower, upper| {
                if level > m_use {
                    return;
                }
                for i in 0..=level {
                    let mu = zero.state_mean(level, i);
                    let dl = (lower[i] - mu * scale).abs();
                    let du = (upper[i] - mu * scale).abs();
                    worst_zero = worst_zero.max(dl).max(du);
                    assert!(dl <= 1e-9, "c=0 vL off by {dl} at ({level},{i}), gamma {g}");
                    assert!(du <= 1e-9, "c=0 vU off by {du} at ({level},{i}), gamma {g}");
                }
            })
            .unwrap();

            let unit = model(a0, b0, g, 1.0);
            solve_scan(&unit, m_use + tail, |level, lower, upper| {
                if level > m_use {
                    return;
                }
                for i in 0..=level {
                    assert_eq!(lower[i], 0.0, "c=1 vL nonzero at ({level},{i}), gamma {g}");
                    assert_eq!(upper[i], 0.0, "c=1 vU nonzero at ({level},{i}), gamma {g}");
                }
            })
            .unwrap();
        }
    }
    println!(
        "criterion 02 closed-form corners: PASS (c=0 within {worst_zero:.3e} of mu/(1-gamma); c=1 exactly zero)"
    );
}

#[test]
fn criterion_03_brute_force_oracle() {
    let mut r = rng::substream(303, 0);
    let mut worst = 0.0_f64;
    // A small pinned instance plus random models across the distribution.
    let mut cases = vec![(model(1.0, 1.0, 0.5, 0.3), 4usize)];
    for trial in 0..10 {
        cases.push((random_model(&mut r), trial % 6 + 1));
    }
    for (m, depth) in cases {
        let table = ValueTable::solve(&m, depth).unwrap();
        let lower_oracle = oracle::enumerate_values(&m, depth, oracle::TerminalKind::AlwaysForward);
        let upper_oracle = oracle::enumerate_values(&m, depth, oracle::TerminalKind::RewardCeiling);
        for level in 0..=depth {
            for i in 0..=level {
                let dl =
                    (table.value(level, i, Bound::Lower).unwrap() - lower_oracle[level][i]).abs();
                let du =
                    (table.value(level, i, Bound::Upper).unwrap() - upper_oracle[level][i]).abs();
                worst = worst.max(dl).max(du);
                assert!(
                    dl <= 1e-12,
                    "vL != oracle at ({level},{i}), M={depth}, model {m:?}"
                );
                assert!(
                    du <= 1e-12,
                    "vU != oracle at ({level},{i}), M={depth}, model {m:?}"
                );
            }
        }
        // Root Q-factor vs enumeration: the best policy that must forward
        // the first item earns mu - c plus the discounted mix of the
        // subtree optima, which the verified oracle arrays supply.
        for (bound, arr) in [(Bound::Lower, &lower_oracle), (Bound::Upper, &upper_oracle)] {
            let mu = m.state_mean(0, 0);
            let q_oracle = mu - m.cost() + m.gamma_x() * (mu * arr[1][1] + (1.0 - mu) * arr[1][0]);
            let q = table.q_forward(0, 0, bound).unwrap();
            worst = worst.max((q - q_oracle).abs());
            assert!((q - q_oracle).abs() <= 1e-12, "root q mismatch for {m:?}");
        }
    }
    println!(
        "criterion 03 brute-force oracle: PASS (pinned + 10 random models, M in 1..=6, worst |diff| {worst:.3e})"
    );
}

#[test]
fn criterion_04_structural_suite() {
    // Lemma-style lattice shape on unrestricted random models.
    let mut r = rng::substream(404, 0);
    let depth = 300;
    for _ in 0..6 {
        let m = random_model(&mut r);
        let table = ValueTable::solve(&m, depth).unwrap();
        let scale = 1.0 / (1.0 - m.gamma_x());
        for bound in [Bound::Lower, Bound::Upper] {
            for level in 0..=depth {
                let row: Vec<f64> = (0..=level)
                    .map(|i| table.value(level, i, bound).unwrap())
                    .collect();
                for w in row.windows(2) {
                    assert!(w[1] >= w[0] - 1e-12, "monotonicity broken for {m:?}");
                }
                for w in row.windows(3) {
                    assert!(
                        w[2] - 2.0 * w[1] + w[0] >= -1e-9,
                        "convexity broken for {m:?} at level {level}"
                    );
                }
                for (i, &v) in row.iter().enumerate() {
                    let envelope = (m.state_mean(level, i) - m.cost()).max(0.0) * scale;
                    assert!(v >= envelope - 1e-12, "lower envelope broken for {m:?}");
                    assert!(v <= scale + 1e-12, "upper envelope broken for {m:?}");
                }
            }
        }
    }

    // Threshold bound: every finite entry at most cost + epsilon. Holds on
    // the reachable lattice in the exploration regime (prior mean at or
    // below cost, long horizons); a prior mean above the cost would pin the
    // shallow entries at the smallest reachable mean instead.
    let epsilon = 1e-6;
    let paper = model(1.0, 19.0, 0.999, 0.05);
    let thr = ThresholdTable::solve(&paper, epsilon, 10_000).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for level in 0..=thr.usable_depth() {
        let mu = thr.mu_star(level).unwrap();
        if mu.is_finite() {
            worst = worst.max(mu - paper.cost());
            assert!(
                mu <= paper.cost() + epsilon,
                "threshold {mu} above cost at level {level}"
            );
        }
    }
    let mut checked = 1;
    for _ in 0..6 {
        let a0 = 0.5 + 5.5 * r.random::<f64>();
        let b0 = a0.max(2.0) + (25.0 - a0.max(2.0)) * r.random::<f64>();
        let mu0 = a0 / (a0 + b0);
        let g = if r.random::<bool>() { 0.99 } else { 0.999 };
        let c = (mu0 + 0.4 * r.random::<f64>()).min(1.0);
        let m = model(a0, b0, g, c);
        let m_use = if g == 0.999 { 2_000 } else { 1_000 };
        let t = ThresholdTable::solve(&m, epsilon, m_use).unwrap();
        for level in 0..=t.usable_depth() {
            let mu = t.mu_star(level).unwrap();
            if mu.is_finite() {
                worst = worst.max(mu - c);
                assert!(
                    mu <= c + epsilon,
                    "threshold {mu} above cost {c} for {m:?} at {level}"
                );
            }
        }
        checked += 1;
    }

    // Limit behavior along lattice rays: at depth the value collapses onto
    // the known-relevance envelope max{0, mu - c}/(1 - gamma). Far from the
    // cost the collapse is immediate (within the truncation gap); the
    // exploration premium is visible along the ray pinned at the cost and
    // must shrink with depth.
    let ray_model = model(2.0, 3.0, 0.99, 0.3);
    let g = ray_model.gamma_x();
    let tail = ray_model.tail_depth(epsilon).unwrap();
    let depth_m = 2000 + tail;
    let checkpoints = [500usize, 1000, 2000];
    let mut above: Vec<(usize, f64)> = Vec::new();
    let mut at_cost: Vec<(usize, f64)> = Vec::new();
    let mut below: Vec<(usize, f64)> = Vec::new();
    let scale = 1.0 / (1.0 - g);
    solve_scan(&ray_model, depth_m, |level, lower, upper| {
        if checkpoints.contains(&level) {
            for (ray_mu, out) in [(0.55, &mut above), (0.3, &mut at_cost), (0.2, &mut below)] {
                let i = ((ray_mu * level as f64).round() as usize).min(level);
                let mu = ray_model.state_mean(level, i);
                let envelope = (mu - ray_model.cost()).max(0.0) * scale;
                let d = (lower[i] - envelope).abs().max((upper[i] - envelope).abs());
                out.push((level, d));
            }
        }
    })
    .unwrap();
    for &(level, d) in &above {
        let gap = g.powi((depth_m - level) as i32) * scale;
        assert!(
            d <= gap + 0.25 * scale / level as f64,
            "above-cost ray deviation {d} at depth {level} exceeds gap {gap} plus premium"
        );
    }
    // Visited deep-to-shallow: index 0 is depth 2000, last is depth 500.
    assert!(
        at_cost[0].1 < 0.5 * at_cost[2].1,
        "exploration premium at the cost did not shrink with depth: {at_cost:?}"
    );
    for &(level, d) in &below {
        assert!(
            d <= 1e-6,
            "below-cost ray should die out at depth {level}, got {d}"
        );
    }

    // Deep states with means clearly below cost are discarded once the
    // remaining information premium is small.
    let delta = 0.005;
    for level in thr.usable_depth() - 100..=thr.usable_depth() {
        let mu = thr.mu_star(level).unwrap();
        assert!(
            mu > paper.cost() - delta,
            "deep threshold {mu} at level {level} would forward means below cost - {delta}"
        );
    }

    // Stopping structure: forwarding never resumes after a discard.
    let audit_model = model(1.0, 19.0, 0.99, 0.05);
    let optimal = PolicySpec::optimal_for(&audit_model, epsilon).unwrap();
    let v_opt = stopping_audit(&audit_model, &optimal, 10_000, 7).unwrap();
    let v_exp =
        stopping_audit(&audit_model, &PolicySpec::Exploit { cost: 0.05 }, 10_000, 7).unwrap();
    assert_eq!(v_opt, 0, "optimal policy violated the stopping structure");
    assert_eq!(v_exp, 0, "exploit policy violated the stopping structure");

    println!(
        "criterion 04 structural suite: PASS ({checked} threshold models, worst finite threshold-minus-cost {worst:.3e}; at-cost ray premium {:.4} -> {:.4}; stopping audits 0/0)",
        at_cost[2].1, at_cost[0].1
    );
}

#[test]
fn criterion_05_wald_sanity() {
    let m = model(1.0, 19.0, 0.999, 0.0);
    let spec = PolicySpec::Exploit { cost: 0.0 };
    // E[N] * E[theta] = (0.999 / 0.001) * 0.05.
    let truth = 49.95;
    let mut covered = 0;
    let mut first_line = String::new();
    for seed in 0..100 {
        let r = simulate_single(&m, &spec, 100_000, seed).unwrap();
        let inside = (r.total_mean() - truth).abs() <= r.total_ci_half_width();
        if inside {
            covered += 1;
        }
        if seed == 0 {
            assert!(
                inside,
                "seed 0: mean {} +/- {} does not cover {truth}",
                r.total_mean(),
                r.total_ci_half_width()
            );
            first_line = format!(
                "seed 0 mean {:.4} +/- {:.4}",
                r.total_mean(),
                r.total_ci_half_width()
            );
        }
    }
    assert!(covered >= 90, "coverage {covered}/100 below 90");
    println!("criterion 05 wald sanity: PASS ({first_line}; coverage {covered}/100)");
}

struct Cell {
    label: String,
    result: SimResult,
}

fn interval(r: &SimResult) -> (f64, f64) {
    (
        r.total_mean() - r.total_ci_half_width(),
        r.total_mean() + r.total_ci_half_width(),
    )
}

#[test]
fn criterion_06_single_category_reproduction() {
    let seed = 20_260_810;
    let n_users = 100_000;
    let rho_grid = [0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99];
    let costs = [0.0, 0.025, 0.05, 0.075, 0.1, 0.15];
    let mut cells: Vec<(f64, Vec<Cell>)> = Vec::new();
    for &c in &costs {
        let m = model(1.0, 19.0, 0.999, c);
        let optimal = PolicySpec::optimal_for(&m, 1e-6).unwrap();
        let tuned_rho = infofilter::policies::tune_ucb(&m, &rho_grid, 5_000, seed).unwrap();
        let five = [
            ("optimal".to_string(), optimal),
            ("exploit".to_string(), PolicySpec::Exploit { cost: c }),
            (
                format!("tuned_ucb[rho={tuned_rho}]"),
                PolicySpec::Ucb {
                    cost: c,
                    rho: tuned_rho,
                },
            ),
            (
                "untuned_ucb".to_string(),
                PolicySpec::Ucb { cost: c, rho: 0.75 },
            ),
            ("thompson".to_string(), PolicySpec::Thompson { cost: c }),
        ];
        let mut row = Vec::new();
        for (label, spec) in five {
            let result = simulate_single(&m, &spec, n_users, seed).unwrap();
            row.push(Cell { label, result });
        }
        println!(
            "c={c}: {}",
            row.iter()
                .map(|cell| format!(
                    "{} {:.4}+/-{:.4}",
                    cell.label,
                    cell.result.total_mean(),
                    cell.result.total_ci_half_width()
                ))
                .collect::<Vec<_>>()
                .join(", ")
        );
        cells.push((c, row));
    }

    // Optimal at least matches exploitation at every cost.
    for (c, row) in &cells {
        let opt = row[0].result.total_mean();
        let exp = row[1].result.total_mean();
        assert!(
            opt >= exp - 1e-12,
            "optimal {opt} below exploit {exp} at c={c}"
        );
    }

    // Strict, CI-separated improvement at the ambiguous cost.
    let row = &cells.iter().find(|(c, _)| *c == 0.05).unwrap().1;
    let (opt_lo, _) = interval(&row[0].result);
    let (_, exp_hi) = interval(&row[1].result);
    assert!(
        opt_lo > exp_hi,
        "no CI separation at c=0.05: optimal low {opt_lo} vs exploit high {exp_hi}"
    );

    // All five policies statistically indistinguishable at the grid's two
    // extreme costs (pairwise overlapping 95% intervals).
    let mut failures = Vec::new();
    for &extreme in &[0.0, 0.15] {
        let row = &cells.iter().find(|(c, _)| *c == extreme).unwrap().1;
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                if !row[a].result.ci_overlaps(&row[b].result) {
                    failures.push(format!(
                        "c={extreme}: {} {:?} vs {} {:?}",
                        row[a].label,
                        interval(&row[a].result),
                        row[b].label,
                        interval(&row[b].result)
                    ));
                }
            }
        }
    }
    assert!(
        failures.is_empty(),
        "policies distinguishable at an extreme cost:\n{}",
        failures.join("\n")
    );
    println!("criterion 06 single-category reproduction: PASS");
}

#[test]
fn criterion_07_mixture_additivity() {
    let gamma = 0.99;
    let cost = 0.05;
    let shares = [0.5, 0.3, 0.2];
    let priors = [(1.0, 19.0), (2.0, 18.0), (1.0, 9.0)];
    let n_users = 100_000;
    let epsilon = 1e-6;

    let mut arms = Vec::new();
    let mut single_sum = 0.0;
    let mut single_var = 0.0;
    for (i, (&p, &(a0, b0))) in shares.iter().zip(&priors).enumerate() {
        let gamma_x = effective_discount(p, gamma).unwrap();
        let m = CategoryModel::new(a0, b0, gamma_x, cost).unwrap();
        let spec = PolicySpec::optimal_for(&m, epsilon).unwrap();
        let r = simulate_single(&m, &spec, n_users, 1_000 + i as u64).unwrap();
        single_sum += r.total_mean();
        single_var += r.total_ci_half_width() * r.total_ci_half_width();
        arms.push(CategoryArm::new(m, p).unwrap());
    }
    let config = SimConfig::new(arms.clone(), gamma, n_users, 77).unwrap();
    let specs: Vec<PolicySpec> = arms
        .iter()
        .map(|a| PolicySpec::optimal_for(a.model(), epsilon).unwrap())
        .collect();
    let multi = simulate_multi(&config, &specs).unwrap();
    let budget = multi.total_ci_half_width() + single_var.sqrt();
    let gap = (multi.total_mean() - single_sum).abs();
    assert!(
        gap <= budget,
        "additivity broken: multi {} vs sum of singles {single_sum} (budget {budget})",
        multi.total_mean()
    );
    println!(
        "criterion 07 mixture additivity: PASS (multi {:.4} vs singles {:.4}, |diff| {:.4} <= {:.4})",
        multi.total_mean(),
        single_sum,
        gap,
        budget
    );
}

#[test]
fn criterion_08_lifetime_distribution() {
    let mut lines = Vec::new();
    for (i, &(p_x, gamma)) in [(1.0, 0.999), (0.5, 0.999), (0.1, 0.99)].iter().enumerate() {
        let check = lifetime_check(gamma, p_x, 100_000, 800 + i as u64).unwrap();
        assert!(
            check.passes(),
            "chi-square {:.1} at or above 1% critical {:.1} for (p_x={p_x}, gamma={gamma})",
            check.statistic,
            check.critical_1pct
        );
        let expect_mean = check.gamma_x / (1.0 - check.gamma_x);
        let se = (check.gamma_x / (1.0 - check.gamma_x).powi(2) / 100_000.0).sqrt();
        assert!(
            (check.sample_mean - expect_mean).abs() <= 3.0 * se,
            "sample mean {} vs {} (se {se})",
            check.sample_mean,
            expect_mean
        );
        lines.push(format!(
            "(p={p_x}, g={gamma}): chi2 {:.1} < {:.1} (dof {})",
            check.statistic, check.critical_1pct, check.dof
        ));
    }
    println!(
        "criterion 08 lifetime distribution: PASS ({})",
        lines.join("; ")
    );
}

#[test]
fn criterion_09_estimation_recovery() {
    // Beta prior recovery by the method of moments, within 5% per parameter.
    let mut lines = Vec::new();
    for (i, &(a0, b0)) in [(1.0, 19.0), (2.0, 5.0), (5.0, 5.0)].iter().enumerate() {
        let prior = BetaState::new(a0, b0).unwrap();
        let mut r = rng::substream(900 + i as u64, 0);
        let rates: Vec<f64> = (0..100_000).map(|_| prior.sample(&mut r)).collect();
        let (a, b) = estimation::fit_beta(&rates).unwrap();
        assert!((a - a0).abs() / a0 < 0.05, "alpha {a} vs {a0}");
        assert!((b - b0).abs() / b0 < 0.05, "beta {b} vs {b0}");
        lines.push(format!("Beta({a0},{b0})->({a:.3},{b:.3})"));
    }

    // Geometric discount recovery within three standard errors.
    for (i, &g) in [0.9f64, 0.99, 0.999].iter().enumerate() {
        let mut r = rng::substream(950 + i as u64, 0);
        let n = 100_000;
        let counts: Vec<u64> = (0..n)
            .map(|_| {
                let u: f64 = r.random();
                ((1.0 - u).ln() / g.ln()).floor() as u64
            })
            .collect();
        let est = estimation::fit_geometric(&counts).unwrap();
        let se = (1.0 - g) * (g / n as f64).sqrt();
        assert!((est - g).abs() <= 3.0 * se, "gamma {est} vs {g} (se {se})");
        lines.push(format!("Geom({g})->{est:.6}"));
    }
    println!(
        "criterion 09 estimation recovery: PASS ({})",
        lines.join(", ")
    );
}

#[test]
fn criterion_10_replay_matches_idealized() {
    let gamma = 0.95;
    let cost = 0.05;
    let shares = [0.6, 0.4];
    let priors = [(1.0, 19.0), (2.0, 18.0)];
    let n_users = 40_000u64;
    let epsilon = 1e-6;
    let trace_seed = 123;

    let cats: Vec<(String, BetaState)> = priors
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| (format!("cat{i}"), BetaState::new(a, b).unwrap()))
        .collect();
    let traces = estimation::synthesize_traces(&cats, &shares, gamma, n_users, trace_seed);

    // "Fit" report carrying the generating parameters (matched parameters).
    let mut fit_map = std::collections::BTreeMap::new();
    let mut arms = Vec::new();
    for (i, (&p, &(a0, b0))) in shares.iter().zip(&priors).enumerate() {
        let gamma_x = effective_discount(p, gamma).unwrap();
        fit_map.insert(
            format!("cat{i}"),
            CategoryFit {
                alpha0: a0,
                beta0: b0,
                gamma_x,
                n_train_users: 0,
                diagnostics: None,
            },
        );
        arms.push(CategoryArm::new(CategoryModel::new(a0, b0, gamma_x, cost).unwrap(), p).unwrap());
    }
    let fit = FitReport(fit_map);

    // Every synthetic user is a test user, including zero-item users absent
    // from the trace, so means are comparable to the idealized run.
    let all_users: Vec<String> = (0..n_users).map(|u| format!("u{u:08}")).collect();

    for policy_name in ["optimal", "exploit"] {
        let mut policies = std::collections::BTreeMap::new();
        for arm in &arms {
            let spec = match policy_name {
                "optimal" => PolicySpec::optimal_for(arm.model(), epsilon).unwrap(),
                _ => PolicySpec::Exploit { cost },
            };
            let cat = fit
                .0
                .iter()
                .find(|(_, f)| (f.alpha0 - arm.model().alpha0()).abs() < 1e-12)
                .map(|(k, _)| k.clone())
                .unwrap();
            policies.insert(cat, spec);
        }
        let specs: Vec<PolicySpec> = arms
            .iter()
            .map(|arm| match policy_name {
                "optimal" => PolicySpec::optimal_for(arm.model(), epsilon).unwrap(),
                _ => PolicySpec::Exploit { cost },
            })
            .collect();

        let replayed =
            estimation::replay(&traces, &all_users, &fit, &policies, trace_seed).unwrap();

        // Same seed: the trace generator consumes the exact per-user streams
        // the simulator does, so the deterministic policies must agree to
        // rounding.
        let matched = SimConfig::new(arms.clone(), gamma, n_users, trace_seed).unwrap();
        let same = simulate_multi(&matched, &specs).unwrap();
        assert!(
            (replayed.result.total_mean() - same.total_mean()).abs() < 1e-9,
            "{policy_name}: replay {} vs matched-seed idealized {}",
            replayed.result.total_mean(),
            same.total_mean()
        );

        // Independent seed: agreement within combined confidence intervals.
        let fresh = SimConfig::new(arms.clone(), gamma, n_users, 987_654).unwrap();
        let ideal = simulate_multi(&fresh, &specs).unwrap();
        let gap = (replayed.result.total_mean() - ideal.total_mean()).abs();
        let budget = replayed.result.total_ci_half_width() + ideal.total_ci_half_width();
        assert!(
            gap <= budget,
            "{policy_name}: replay {} vs idealized {} (budget {budget})",
            replayed.result.total_mean(),
            ideal.total_mean()
        );
        println!(
            "criterion 10 replay vs idealized [{policy_name}]: replay {:.4} idealized {:.4} (budget {:.4})",
            replayed.result.total_mean(),
            ideal.total_mean(),
            budget
        );
        assert_eq!(replayed.forwards, replayed.posterior_updates);
    }
    println!("criterion 10 replay vs idealized: PASS");
}
