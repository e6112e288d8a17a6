//! Metropolis-Hastings resampling of per-review experience values.
//!
//! The proposal for review `b` is the writing user's GBM marginal at the
//! review's fine timestamp; because the proposal equals the prior, its factor
//! cancels and the acceptance ratio is a product of Gaussian transition
//! densities of the fine-grained language-model chain over the two neighbor
//! pairs (a, b) and (b, c) in global timestamp order:
//!
//! ```text
//! Q = prod_{w,z} N(beta_b; beta_a, s|e_hat - e_a| + eps) / N(beta_b; beta_a, s|e_b - e_a| + eps)
//!              * N(beta_c; beta_b, s|e_c - e_hat| + eps) / N(beta_c; beta_b, s|e_c - e_b| + eps)
//! ```
//!
//! evaluated in log space. Within an epoch the fine-grained chain is
//! piecewise constant, so the residuals vanish and only the variance-ratio
//! terms remain. `beta` is frozen for the whole sweep.

use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::facet::FacetState;
use crate::langmodel::LanguageModel;
use crate::stochastic::{sample_experience, GbmParams, EPS_VAR};

/// Which (facet, word) pairs enter the acceptance product.
///
/// `Active` restricts to pairs with nonzero counts in the epochs of the
/// neighbor triple; `Full` multiplies over the whole `Z x (V-1)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhScope {
    Active,
    Full,
}

/// Per-review experience values (aligned with the corpus review order) and
/// the per-user GBM parameters behind the proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceState {
    pub e: Vec<f64>,
    pub gbm: Vec<GbmParams>,
}

impl ExperienceState {
    /// Every review starts at the shared starting experience `s0 = 1` and
    /// every user at the neutral GBM parameters.
    pub fn init(corpus: &Corpus) -> Self {
        Self {
            e: vec![1.0; corpus.n_reviews()],
            gbm: vec![GbmParams::neutral(); corpus.n_users()],
        }
    }
}

/// Draw a candidate experience from the user's GBM marginal at `t_fine`.
pub fn propose_experience<R: Rng + ?Sized>(params: &GbmParams, t_fine: f64, rng: &mut R) -> f64 {
    sample_experience(params, t_fine, rng)
}

/// The fine-grained language-model snapshot for a review: the epoch-level
/// `beta_{t,.,.}` block, piecewise constant within the epoch.
pub fn fine_grained_beta(lm: &LanguageModel, epoch: usize) -> Result<&[f64]> {
    if epoch >= lm.n_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} out of range ({} trained)",
            lm.n_epochs
        )));
    }
    let zv = lm.n_facets * lm.vocab_size;
    Ok(&lm.beta_raw()[epoch * zv..(epoch + 1) * zv])
}

#[inline]
fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// One neighbor of the review being updated.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub epoch: usize,
    pub experience: f64,
}

/// Log of the acceptance ratio for moving review `b` from `e_b` to `e_hat`.
/// Boundary reviews pass `None` for the missing neighbor, dropping that
/// factor. `pairs` lists the (facet, word) indices in the product.
pub fn acceptance_log_ratio(
    lm: &LanguageModel,
    pairs: &[(u32, u32)],
    prev: Option<Neighbor>,
    epoch_b: usize,
    e_b: f64,
    e_hat: f64,
    next: Option<Neighbor>,
) -> Result<f64> {
    let sigma = lm.sigma_lm;
    let mut log_q = 0.0;
    if let Some(a) = prev {
        let var_new = sigma * (e_hat - a.experience).abs() + EPS_VAR;
        let var_old = sigma * (e_b - a.experience).abs() + EPS_VAR;
        for &(z, w) in pairs {
            let beta_b = lm.beta(epoch_b, z as usize, w as usize);
            let beta_a = lm.beta(a.epoch, z as usize, w as usize);
            log_q += gaussian_log_density(beta_b, beta_a, var_new)
                - gaussian_log_density(beta_b, beta_a, var_old);
        }
    }
    if let Some(c) = next {
        let var_new = sigma * (c.experience - e_hat).abs() + EPS_VAR;
        let var_old = sigma * (c.experience - e_b).abs() + EPS_VAR;
        for &(z, w) in pairs {
            let beta_c = lm.beta(c.epoch, z as usize, w as usize);
            let beta_b = lm.beta(epoch_b, z as usize, w as usize);
            log_q += gaussian_log_density(beta_c, beta_b, var_new)
                - gaussian_log_density(beta_c, beta_b, var_old);
        }
    }
    // An infinite log ratio is a legitimate certain-accept/certain-reject;
    // only NaN signals broken inputs.
    if log_q.is_nan() {
        return Err(Error::Internal("NaN in MH log ratio".into()));
    }
    Ok(log_q)
}

/// The acceptance ratio `Q` itself; may overflow to infinity for extreme
/// ratios, which is harmless under `min(1, Q)`.
pub fn acceptance_ratio(
    lm: &LanguageModel,
    pairs: &[(u32, u32)],
    prev: Option<Neighbor>,
    epoch_b: usize,
    e_b: f64,
    e_hat: f64,
    next: Option<Neighbor>,
) -> Result<f64> {
    Ok(acceptance_log_ratio(lm, pairs, prev, epoch_b, e_b, e_hat, next)?.exp())
}

/// The (facet, word) product scope for a neighbor triple.
fn scope_pairs(
    scope: MhScope,
    facets: &FacetState,
    lm: &LanguageModel,
    occupied: &[Vec<(u32, u32)>],
    epochs: &[usize],
) -> Vec<(u32, u32)> {
    match scope {
        MhScope::Full => {
            let mut pairs = Vec::with_capacity(facets.n_facets * (lm.vocab_size - 1));
            for z in 0..facets.n_facets as u32 {
                for w in 0..lm.vocab_size as u32 {
                    if w as usize != lm.ref_word {
                        pairs.push((z, w));
                    }
                }
            }
            pairs
        }
        MhScope::Active => {
            let mut epochs_dedup: Vec<usize> = epochs.to_vec();
            epochs_dedup.sort_unstable();
            epochs_dedup.dedup();
            let mut pairs: Vec<(u32, u32)> = Vec::new();
            for &t in &epochs_dedup {
                pairs.extend(
                    occupied[t]
                        .iter()
                        .filter(|(_, w)| *w as usize != lm.ref_word),
                );
            }
            pairs.sort_unstable();
            pairs.dedup();
            pairs
        }
    }
}

/// Outcome of one MH sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl SweepStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Resample a uniformly random subset of `ceil(fraction * D)` reviews, in
/// timestamp order, accepting each candidate with probability `min(1, Q)`.
pub fn mh_sweep<R: Rng + ?Sized>(
    corpus: &Corpus,
    state: &mut ExperienceState,
    lm: &LanguageModel,
    facets: &FacetState,
    fraction: f64,
    scope: MhScope,
    rng: &mut R,
) -> Result<SweepStats> {
    if fraction.is_nan() || fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "mh_fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = corpus.n_reviews();
    let take = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut chosen = index_sample(rng, n, take).into_vec();
    chosen.sort_unstable();

    let occupied: Vec<Vec<(u32, u32)>> = (0..corpus.n_epochs as usize)
        .map(|t| facets.occupied_pairs(t))
        .collect();

    let mut accepted = 0;
    for &i in &chosen {
        let review = &corpus.reviews[i];
        let epoch_b = review.epoch as usize;
        let user = review.user as usize;
        let e_hat = propose_experience(&state.gbm[user], review.t_fine, rng);
        // A proposal that under- or overflowed the positive reals has zero
        // target density; reject it outright.
        if !(e_hat.is_finite() && e_hat > 0.0) {
            continue;
        }

        let prev = (i > 0).then(|| Neighbor {
            epoch: corpus.reviews[i - 1].epoch as usize,
            experience: state.e[i - 1],
        });
        let next = (i + 1 < n).then(|| Neighbor {
            epoch: corpus.reviews[i + 1].epoch as usize,
            experience: state.e[i + 1],
        });

        let mut epochs = vec![epoch_b];
        if let Some(a) = &prev {
            epochs.push(a.epoch);
        }
        if let Some(c) = &next {
            epochs.push(c.epoch);
        }
        let pairs = scope_pairs(scope, facets, lm, &occupied, &epochs);

        let log_q =
            acceptance_log_ratio(lm, &pairs, prev, epoch_b, state.e[i], e_hat, next)?;
        let u: f64 = rng.gen();
        if log_q >= 0.0 || u.ln() < log_q {
            state.e[i] = e_hat;
            accepted += 1;
        }
    }
    Ok(SweepStats {
        proposed: take,
        accepted,
    })
}
