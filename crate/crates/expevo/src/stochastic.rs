//! Geometric Brownian motion machinery for experience trajectories.
//!
//! Each user's experience follows a GBM
//!
//! ```text
//! dX = mu X dt + sigma X dW,    X_0 = s0 > 0,
//! ```
//!
//! whose closed form is `X_t = s0 exp((mu - sigma^2/2) t + sigma W_t)`, so the
//! marginal at horizon `t` is log-normal with location
//! `(mu - sigma^2/2) t + ln s0` and scale `sigma sqrt(t)`. This module holds
//! the density, marginal sampling, exact path simulation, and the closed-form
//! parameter estimate used after each training iteration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine-timestamp floor in years (one day). A user's first review sits here
/// instead of at t = 0, where the log-normal marginal degenerates.
pub const EPS_T: f64 = 1.0 / 365.0;

/// Smallest admissible volatility. The MLE and the Metropolis-Hastings
/// proposal both degenerate at sigma = 0, so estimates are clamped here.
pub const SIGMA_MIN: f64 = 1e-3;

/// Variance floor applied wherever a Gaussian variance can reach zero.
pub const EPS_VAR: f64 = 1e-6;

/// Seconds in a Julian year; fine timestamps are expressed in these units.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// Per-user GBM parameters: drift per year, volatility per sqrt(year), and
/// the starting experience value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub s0: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64, s0: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && s0.is_finite()) {
            return Err(Error::InvalidArgument("GBM parameters must be finite".into()));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        if s0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("s0 must be > 0, got {s0}")));
        }
        Ok(Self { mu, sigma, s0 })
    }

    /// Neutral starting parameters: with `mu = sigma^2/2` the median
    /// trajectory stays flat at `s0`.
    pub fn neutral() -> Self {
        let sigma = 0.5;
        Self {
            mu: sigma * sigma / 2.0,
            sigma,
            s0: 1.0,
        }
    }

    /// The log-normal marginal of the trajectory at horizon `t_fine` years.
    pub fn marginal(&self, t_fine: f64) -> LogNormalSpec {
        LogNormalSpec {
            location: (self.mu - self.sigma * self.sigma / 2.0) * t_fine + self.s0.ln(),
            scale: self.sigma * t_fine.sqrt(),
        }
    }
}

/// Location/scale of a log-normal marginal: `ln X ~ N(location, scale^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalSpec {
    pub location: f64,
    pub scale: f64,
}

impl LogNormalSpec {
    /// Density at `x > 0`. A degenerate `scale = 0` is widened to the
    /// `EPS_VAR` floor so the density stays evaluable.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!(
                "log-normal density is defined on (0, inf), got {x}"
            )));
        }
        let scale = self.scale.max(EPS_VAR.sqrt());
        let z = (x.ln() - self.location) / scale;
        Ok((-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * scale * x))
    }

    /// Cumulative distribution at `x`, via the normal CDF of `ln x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let scale = self.scale.max(EPS_VAR.sqrt());
        normal_cdf((x.ln() - self.location) / scale)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.location + self.scale * z).exp()
    }
}

/// Standard normal CDF via an Abramowitz-Stegun rational approximation of
/// erf (7.1.26), absolute error below 1.5e-7. Used by tests and the
/// Kolmogorov-Smirnov helpers; nothing in training depends on it.
pub fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x < 0.0 { -erf } else { erf };
    0.5 * (1.0 + erf)
}

/// Log-normal density of the GBM marginal, the closed form behind
/// [`LogNormalSpec::pdf`].
pub fn lognormal_pdf(x: f64, spec: &LogNormalSpec) -> Result<f64> {
    spec.pdf(x)
}

/// Draw one experience value from the user's marginal at `t_fine` years.
pub fn sample_experience<R: Rng + ?Sized>(params: &GbmParams, t_fine: f64, rng: &mut R) -> f64 {
    params.marginal(t_fine).sample(rng)
}

/// Simulate a GBM path at the given strictly ascending times using exact
/// log-normal increments (no Euler error): over a gap `h`,
/// `X_{t+h} = X_t exp((mu - sigma^2/2) h + sigma sqrt(h) N(0,1))`.
pub fn simulate_gbm_path<R: Rng + ?Sized>(
    params: &GbmParams,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(format!(
                "times must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&first) = times.first() {
        if first < EPS_T {
            return Err(Error::InvalidArgument(format!(
                "first time must be >= {EPS_T}, got {first}"
            )));
        }
    }
    let drift = params.mu - params.sigma * params.sigma / 2.0;
    let mut out = Vec::with_capacity(times.len());
    let mut x = params.s0;
    let mut prev_t = 0.0;
    for &t in times {
        let h = t - prev_t;
        let z: f64 = StandardNormal.sample(rng);
        x *= (drift * h + params.sigma * h.sqrt() * z).exp();
        out.push(x);
        prev_t = t;
    }
    Ok(out)
}

/// A drift/volatility estimate produced by [`estimate_gbm_params`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmEstimate {
    pub mu: f64,
    pub sigma: f64,
}

/// Closed-form maximum-likelihood estimate of (mu, sigma) from a user's
/// experience values, treating each `ln e` as a draw at horizon `delta`
/// (the user's mean inter-review gap in years) from `s0`:
///
/// ```text
/// m     = mean(ln e)
/// s^2   = unbiased sample variance of ln e
/// sigma = s / sqrt(delta)
/// mu    = (m - ln s0) / delta + s^2 / (2 delta)
/// ```
///
/// Returns `None` with fewer than two observations (callers keep the previous
/// parameters). A zero sample variance yields `sigma = SIGMA_MIN`.
pub fn estimate_gbm_params(experiences: &[f64], s0: f64, delta: f64) -> Option<GbmEstimate> {
    if experiences.len() < 2 {
        return None;
    }
    debug_assert!(delta > 0.0 && s0 > 0.0);
    let logs: Vec<f64> = experiences.iter().map(|e| e.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0);
    let sigma = (var / delta).sqrt().max(SIGMA_MIN);
    let mu = (mean - s0.ln()) / delta + var / (2.0 * delta);
    Some(GbmEstimate { mu, sigma })
}
