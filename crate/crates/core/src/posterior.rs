//! Beta-Bernoulli belief state for one user-category pair.
//!
//! The pair `(alpha, beta)` is a sufficient statistic for the full feedback
//! history: a `Beta(alpha, beta)` prior over the latent relevance probability
//! plus Bernoulli click feedback yields a `Beta` posterior with unit
//! increments. Only forwarded items produce feedback, so only forwarded items
//! update the state.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

/// Absolute tolerance, in CDF space, of the quantile inversion.
const QUANTILE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PosteriorError {
    #[error("beta shape parameters must be positive and finite, got alpha={alpha}, beta={beta}")]
    InvalidShape { alpha: f64, beta: f64 },

    #[error("quantile level must lie strictly inside (0, 1), got {0}")]
    QuantileOutOfRange(f64),
}

/// Click feedback on a forwarded item. Discarded items produce no feedback
/// and therefore never construct one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub relevant: bool,
}

impl Feedback {
    pub fn new(relevant: bool) -> Self {
        Self { relevant }
    }
}

/// Posterior `Beta(alpha, beta)` over a category's latent relevance
/// probability: `alpha` counts prior pseudo-successes plus observed relevant
/// forwards, `beta` prior pseudo-failures plus observed irrelevant forwards.
///
/// Immutable value type: [`BetaState::update`] returns the new state. All
/// operations are pure except [`BetaState::sample`], which mutates only the
/// caller-owned random stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaState {
    alpha: f64,
    beta: f64,
}

impl BetaState {
    /// Construct a state, validating `alpha > 0` and `beta > 0`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self, PosteriorError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(PosteriorError::InvalidShape { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Conjugate update for feedback on a forwarded item: relevant bumps
    /// `alpha`, irrelevant bumps `beta`.
    #[must_use]
    pub fn update(self, feedback: Feedback) -> Self {
        if feedback.relevant {
            Self {
                alpha: self.alpha + 1.0,
                beta: self.beta,
            }
        } else {
            Self {
                alpha: self.alpha,
                beta: self.beta + 1.0,
            }
        }
    }

    /// Posterior mean `alpha / (alpha + beta)`.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// The `rho`-quantile of the posterior, i.e. the `q` with
    /// `I_q(alpha, beta) = rho` where `I` is the regularized incomplete beta
    /// function, to absolute tolerance `1e-10` in CDF space.
    ///
    /// Inverted by a bracketed Newton iteration that falls back to bisection
    /// whenever a Newton step leaves the bracket; this stays robust in the
    /// small-shape regimes (`alpha < 1`) where the density is unbounded.
    pub fn quantile(&self, rho: f64) -> Result<f64, PosteriorError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(PosteriorError::QuantileOutOfRange(rho));
        }
        // Invert through the smaller tail: I_x(a, b) = 1 - I_{1-x}(b, a).
        // Near rho = 1 the CDF saturates at one ulp of 1.0, while the
        // mirrored problem keeps full relative precision.
        if rho > 0.5 {
            Ok(1.0 - invert_reg_beta(self.beta, self.alpha, 1.0 - rho))
        } else {
            Ok(invert_reg_beta(self.alpha, self.beta, rho))
        }
    }

    /// One posterior draw, as the ratio of two Gamma variates
    /// (`X / (X + Y)` with `X ~ Gamma(alpha, 1)`, `Y ~ Gamma(beta, 1)`),
    /// which is valid for all shape parameters including `alpha < 1`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ga = Gamma::new(self.alpha, 1.0).expect("alpha validated at construction");
        let gb = Gamma::new(self.beta, 1.0).expect("beta validated at construction");
        loop {
            let x: f64 = ga.sample(rng);
            let y: f64 = gb.sample(rng);
            let sum = x + y;
            if sum > 0.0 {
                return x / sum;
            }
        }
    }

    /// Posterior CDF at `x` (regularized incomplete beta function).
    pub fn cdf(&self, x: f64) -> f64 {
        Self::cdf_raw(self.alpha, self.beta, x)
    }

    fn cdf_raw(alpha: f64, beta: f64, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(alpha, beta, x)
        }
    }
}

/// Solve `I_x(a, b) = target` for `target` in `(0, 0.5]` by a bracketed
/// Newton iteration with bisection fallback, to [`QUANTILE_TOL`] in CDF
/// space; while the density is flat the iteration keeps going until the
/// abscissa settles too.
fn invert_reg_beta(a: f64, b: f64, target: f64) -> f64 {
    let ln_norm = ln_beta(a, b);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut x = (a / (a + b)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    for _ in 0..300 {
        let f = beta_reg(a, b, x) - target;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_norm;
        let step = f * (-ln_pdf).exp();
        if f.abs() <= QUANTILE_TOL && step.abs() <= 1e-11 {
            return x;
        }
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            next = 0.5 * (lo + hi);
        }
        if hi - lo <= f64::EPSILON * x.max(1e-300) {
            return x;
        }
        x = next;
    }
    x
}
