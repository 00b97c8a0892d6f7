//! Hyperparameter fitting from historical traces and offline policy replay.
//!
//! A trace records, per user, the presented items of each category in order
//! together with whether the user clicked. Training users yield per-category
//! click-through rates (fit to a beta prior by the method of moments) and
//! per-category item counts (fit to a geometric lifetime by maximum
//! likelihood). Test users are then replayed item by item against any
//! policy: a forwarded item scores `clicked - c` and reveals its feedback,
//! a discarded one scores nothing and reveals nothing.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp_solver::{CategoryModel, Decision, SolverError};
use crate::policies::{policy_decide, PolicyError, PolicySpec};
use crate::posterior::{BetaState, Feedback};
use crate::rng;
use crate::simulator::SimResult;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("trace file, line {line}: {message}")]
    TraceParse { line: u64, message: String },

    #[error("degenerate sample for beta fit: {condition}")]
    DegenerateSample { condition: String },

    #[error("beta fit needs at least two rates, got {n}")]
    TooFewRates { n: usize },

    #[error("geometric fit needs at least one count")]
    EmptyCounts,

    #[error("split fraction must lie strictly inside (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("no users pass the visit filter [{min}, {max}]")]
    NoEligibleUsers { min: u64, max: u64 },

    #[error("category `{category}`: {source}")]
    Category {
        category: String,
        source: Box<EstimationError>,
    },

    #[error("replay prior for category `{category}` does not match the policy's model")]
    PriorMismatch { category: String },

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EstimationError {
    fn from(e: std::io::Error) -> Self {
        EstimationError::Io(e.to_string())
    }
}

/// One presented item in a historical trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub user_id: String,
    /// Presentation order within the user's stream.
    pub seq: u64,
    pub category: String,
    pub clicked: bool,
}

/// Fitted hyperparameters for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryFit {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma_x: f64,
    /// Training users that contributed a click-through rate.
    pub n_train_users: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<FitDiagnostics>,
}

/// Sample moments behind a category's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Mean of the training users' click-through rates.
    pub theta_mean: f64,
    /// Sample variance of the training users' click-through rates.
    pub theta_variance: f64,
    /// Mean per-user item count over all training users.
    pub mean_item_count: f64,
}

/// Fit report keyed by category; serializes as a JSON object whose keys are
/// the category names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FitReport(pub BTreeMap<String, CategoryFit>);

impl FitReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<(), EstimationError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| EstimationError::Io(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, EstimationError> {
        serde_json::from_reader(r).map_err(|e| EstimationError::Io(e.to_string()))
    }

    /// Per-category subproblem models at forwarding cost `cost`.
    pub fn models(&self, cost: f64) -> Result<BTreeMap<String, CategoryModel>, EstimationError> {
        self.0
            .iter()
            .map(|(cat, fit)| {
                let model =
                    CategoryModel::new(fit.alpha0, fit.beta0, fit.gamma_x, cost).map_err(|e| {
                        EstimationError::Category {
                            category: cat.clone(),
                            source: Box::new(e.into()),
                        }
                    })?;
                Ok((cat.clone(), model))
            })
            .collect()
    }
}

/// Click-through rate of one user in one category: clicks over
/// presentations, or `None` when nothing was presented (the user is excluded
/// from that category's beta fit).
pub fn estimate_theta<'a, I>(events: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a TraceEvent>,
{
    let mut presented = 0u64;
    let mut clicked = 0u64;
    for e in events {
        presented += 1;
        if e.clicked {
            clicked += 1;
        }
    }
    if presented == 0 {
        None
    } else {
        Some(clicked as f64 / presented as f64)
    }
}

/// Method-of-moments beta fit: with sample mean `m` and sample variance `v`,
/// `t = m(1-m)/v - 1`, `alpha0 = m t`, `beta0 = (1-m) t`. Requires
/// `0 < v < m(1-m)`.
pub fn fit_beta(rates: &[f64]) -> Result<(f64, f64), EstimationError> {
    if rates.len() < 2 {
        return Err(EstimationError::TooFewRates { n: rates.len() });
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(EstimationError::DegenerateSample {
            condition: "sample variance is zero (all rates identical)".to_string(),
        });
    }
    let cap = mean * (1.0 - mean);
    if var >= cap {
        return Err(EstimationError::DegenerateSample {
            condition: format!("sample variance {var} >= mean*(1-mean) = {cap}"),
        });
    }
    let t = cap / var - 1.0;
    Ok((mean * t, (1.0 - mean) * t))
}

/// Maximum-likelihood geometric fit on support `{0, 1, ...}`:
/// `gamma_x = mean / (1 + mean)`.
pub fn fit_geometric(counts: &[u64]) -> Result<f64, EstimationError> {
    if counts.is_empty() {
        return Err(EstimationError::EmptyCounts);
    }
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    Ok(mean / (1.0 + mean))
}

/// Deterministic seeded partition of users into (train, test). The split is
/// a shuffle of the sorted unique ids, cut at `round(fraction * n)`.
pub fn split_users(
    user_ids: &[String],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), EstimationError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EstimationError::InvalidFraction(fraction));
    }
    let mut ids: Vec<String> = user_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut r = rng::substream(seed, 0);
    ids.shuffle(&mut r);
    let cut = ((ids.len() as f64) * fraction).round() as usize;
    let test = ids.split_off(cut.min(ids.len()));
    Ok((ids, test))
}

/// Users whose total presentation count lies in `[min_visits, max_visits]`,
/// sorted. Too few visits carry no signal; too many suggest a robot.
pub fn filter_users_by_visits(
    events: &[TraceEvent],
    min_visits: u64,
    max_visits: u64,
) -> Vec<String> {
    let mut visits: BTreeMap<&str, u64> = BTreeMap::new();
    for e in events {
        *visits.entry(e.user_id.as_str()).or_insert(0) += 1;
    }
    visits
        .into_iter()
        .filter(|&(_, v)| v >= min_visits && v <= max_visits)
        .map(|(u, _)| u.to_string())
        .collect()
}

/// Fit every category present in `events` on the given training users:
/// click-through rates from users with at least one presentation, item
/// counts (including zeros) from all training users.
pub fn fit_categories(
    events: &[TraceEvent],
    train_users: &[String],
) -> Result<FitReport, EstimationError> {
    let train: BTreeMap<&str, usize> = train_users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    // (category -> user -> (presented, clicked)); BTreeMap keeps the rate
    // vectors in a deterministic order.
    let mut per_cat: BTreeMap<&str, BTreeMap<&str, (u64, u64)>> = BTreeMap::new();
    for e in events {
        if !train.contains_key(e.user_id.as_str()) {
            continue;
        }
        let cell = per_cat
            .entry(e.category.as_str())
            .or_default()
            .entry(e.user_id.as_str())
            .or_insert((0, 0));
        cell.0 += 1;
        if e.clicked {
            cell.1 += 1;
        }
    }
    let mut report = BTreeMap::new();
    for (cat, users) in per_cat {
        let rates: Vec<f64> = users.values().map(|&(n, k)| k as f64 / n as f64).collect();
        let counts: Vec<u64> = train
            .keys()
            .map(|u| users.get(u).map_or(0, |&(n, _)| n))
            .collect();
        let wrap = |e: EstimationError| EstimationError::Category {
            category: cat.to_string(),
            source: Box::new(e),
        };
        let (alpha0, beta0) = fit_beta(&rates).map_err(wrap)?;
        let gamma_x = fit_geometric(&counts).map_err(wrap)?;
        let n = rates.len() as f64;
        let theta_mean = rates.iter().sum::<f64>() / n;
        let theta_variance = rates
            .iter()
            .map(|r| (r - theta_mean) * (r - theta_mean))
            .sum::<f64>()
            / (n - 1.0);
        let mean_item_count = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
        report.insert(
            cat.to_string(),
            CategoryFit {
                alpha0,
                beta0,
                gamma_x,
                n_train_users: rates.len() as u64,
                diagnostics: Some(FitDiagnostics {
                    theta_mean,
                    theta_variance,
                    mean_item_count,
                }),
            },
        );
    }
    Ok(FitReport(report))
}

/// Outcome of a trace replay: summary statistics plus the conservation
/// counters (every forward produces exactly one posterior update).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub result: SimResult,
    pub forwards: u64,
    pub posterior_updates: u64,
    /// Events skipped because their category has no policy/fit entry.
    pub unknown_category_events: u64,
}

/// Replay test users against per-category policies. Items are walked in
/// presentation order within each user's category stream; a forward scores
/// `clicked - c` and updates that category's posterior, a discard scores 0
/// and reveals nothing. Thompson draws come from a per-user substream of
/// `seed`.
pub fn replay(
    events: &[TraceEvent],
    test_users: &[String],
    fit: &FitReport,
    policies: &BTreeMap<String, PolicySpec>,
    seed: u64,
) -> Result<ReplayOutcome, EstimationError> {
    for (cat, spec) in policies {
        let Some(cat_fit) = fit.0.get(cat) else {
            return Err(EstimationError::Category {
                category: cat.clone(),
                source: Box::new(EstimationError::PriorMismatch {
                    category: cat.clone(),
                }),
            });
        };
        if let PolicySpec::Optimal { table } = spec {
            let m = table.model();
            if (m.alpha0() - cat_fit.alpha0).abs() > 1e-9
                || (m.beta0() - cat_fit.beta0).abs() > 1e-9
            {
                return Err(EstimationError::PriorMismatch {
                    category: cat.clone(),
                });
            }
        }
    }

    let mut test_sorted: Vec<&str> = test_users.iter().map(|u| u.as_str()).collect();
    test_sorted.sort_unstable();
    test_sorted.dedup();
    let user_index: BTreeMap<&str, usize> = test_sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i))
        .collect();

    // Sort an index over the events by (user, category, seq) so category
    // streams are contiguous and ordered.
    let mut order: Vec<usize> = (0..events.len())
        .filter(|&i| user_index.contains_key(events[i].user_id.as_str()))
        .collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&events[a], &events[b]);
        (&ea.user_id, &ea.category, ea.seq).cmp(&(&eb.user_id, &eb.category, eb.seq))
    });

    let mut totals = vec![0.0f64; test_sorted.len()];
    let mut forwards = 0u64;
    let mut updates = 0u64;
    let mut unknown = 0u64;

    let mut pos = 0;
    while pos < order.len() {
        let user = events[order[pos]].user_id.clone();
        let uidx = user_index[user.as_str()];
        let mut pol_stream = rng::user_policy_stream(seed, uidx as u64);
        while pos < order.len() && events[order[pos]].user_id == user {
            let category = events[order[pos]].category.clone();
            let known = policies.get(&category).zip(fit.0.get(&category));
            let mut state = match &known {
                Some((_, f)) => {
                    BetaState::new(f.alpha0, f.beta0).map_err(|_| EstimationError::Category {
                        category: category.clone(),
                        source: Box::new(EstimationError::PriorMismatch {
                            category: category.clone(),
                        }),
                    })?
                }
                None => BetaState::new(1.0, 1.0).unwrap(),
            };
            let mut frozen = false;
            while pos < order.len()
                && events[order[pos]].user_id == user
                && events[order[pos]].category == category
            {
                let event = &events[order[pos]];
                pos += 1;
                let Some((spec, _)) = known else {
                    unknown += 1;
                    continue;
                };
                if frozen {
                    continue;
                }
                match policy_decide(spec, &state, &mut pol_stream)? {
                    Decision::Forward => {
                        totals[uidx] += if event.clicked { 1.0 } else { 0.0 } - spec.cost();
                        forwards += 1;
                        updates += 1;
                        state = state.update(Feedback::new(event.clicked));
                    }
                    Decision::Discard => {
                        if spec.is_deterministic() {
                            frozen = true;
                        }
                    }
                }
            }
        }
    }

    Ok(ReplayOutcome {
        result: SimResult::from_user_totals(&totals),
        forwards,
        posterior_updates: updates,
        unknown_category_events: unknown,
    })
}

/// Generate traces from the assumed model: per user, a latent relevance per
/// category, a geometric lifetime with survival `gamma`, an i.i.d. category
/// per item, and a click flag drawn from the category's latent relevance.
/// Every arriving item is presented; `seq` numbers the user's stream from 0.
///
/// Draws follow the same per-user substream convention as the simulator, so
/// a replay on these traces sees the same users as an idealized run under
/// the same seed.
pub fn synthesize_traces(
    categories: &[(String, BetaState)],
    shares: &[f64],
    gamma: f64,
    n_users: u64,
    seed: u64,
) -> Vec<TraceEvent> {
    use rand::Rng;
    assert_eq!(categories.len(), shares.len());
    let mut cum = 0.0;
    let cum_p: Vec<f64> = shares
        .iter()
        .map(|p| {
            cum += p;
            cum
        })
        .collect();
    let cap = (100.0 / (1.0 - gamma)).ceil() as u64;
    let mut out = Vec::new();
    for user in 0..n_users {
        let mut env = rng::user_env_stream(seed, user);
        let theta: Vec<f64> = categories
            .iter()
            .map(|(_, prior)| prior.sample(&mut env))
            .collect();
        let u: f64 = env.random();
        let lifetime = {
            let x = (1.0 - u).ln() / gamma.ln();
            if x.is_finite() {
                (x.floor() as u64).min(cap)
            } else {
                cap
            }
        };
        let user_id = format!("u{user:08}");
        for n in 0..lifetime {
            let v: f64 = env.random();
            let x = cum_p.iter().position(|&c| v < c).unwrap_or(cum_p.len() - 1);
            let clicked = env.random_bool(theta[x]);
            out.push(TraceEvent {
                user_id: user_id.clone(),
                seq: n,
                category: categories[x].0.clone(),
                clicked,
            });
        }
    }
    out
}

/// Read a `user_id,seq,category,clicked` CSV (clicked in {0,1}).
pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceEvent>, EstimationError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    {
        let headers = reader.headers().map_err(|e| EstimationError::TraceParse {
            line: 1,
            message: e.to_string(),
        })?;
        let expect = ["user_id", "seq", "category", "clicked"];
        if headers.len() != 4 || headers.iter().zip(expect).any(|(h, e)| h != e) {
            return Err(EstimationError::TraceParse {
                line: 1,
                message: format!(
                    "expected header `user_id,seq,category,clicked`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EstimationError::TraceParse {
            line: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(EstimationError::TraceParse {
                line,
                message: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let seq: u64 = record[1]
            .trim()
            .parse()
            .map_err(|e| EstimationError::TraceParse {
                line,
                message: format!("bad seq `{}`: {e}", &record[1]),
            })?;
        let clicked = match record[3].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(EstimationError::TraceParse {
                    line,
                    message: format!("clicked must be 0 or 1, got `{other}`"),
                })
            }
        };
        events.push(TraceEvent {
            user_id: record[0].to_string(),
            seq,
            category: record[2].to_string(),
            clicked,
        });
    }
    if events.is_empty() {
        return Err(EstimationError::TraceParse {
            line: 1,
            message: "trace file has no data rows".to_string(),
        });
    }
    Ok(events)
}

/// Write events in the trace CSV layout.
pub fn write_trace_csv<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<(), EstimationError> {
    writeln!(w, "user_id,seq,category,clicked")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{}",
            e.user_id,
            e.seq,
            e.category,
            u8::from(e.clicked)
        )?;
    }
    Ok(())
}
