//! The outer inference loop.
//!
//! Each iteration runs, in order: facet Gibbs sweep(s), Kalman filtering of
//! the language model over all epochs, a Metropolis-Hastings experience
//! sweep, the word-experience recompute, and the per-user GBM estimate. The
//! data log-likelihood is recorded after every iteration.
//!
//! All randomness flows from `seed`: iteration `k` draws from a ChaCha
//! stream keyed by `k`, so a run resumed from a checkpoint replays the
//! remaining iterations bit-identically.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::experience::{mh_sweep, ExperienceState, MhScope};
use crate::facet::{gibbs_sweep, FacetState};
use crate::langmodel::{word_experience, KalmanNoise, LanguageModel, WordExperience};
use crate::stochastic::{estimate_gbm_params, EPS_T};

/// Training configuration. `alpha` defaults to `50 / Z` and `gamma` to 0.01
/// when built through [`TrainConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_facets: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma_lm: f64,
    pub iterations: usize,
    pub gibbs_sweeps_per_iter: usize,
    pub mh_fraction: f64,
    pub mh_scope: MhScope,
    pub kalman_noise: KalmanNoise,
    pub seed: u64,
    /// Per-user holdout of the most recent reviews, excluded from training;
    /// 0 trains on everything.
    pub holdout_recent: usize,
    /// Iterations that must elapse before early stopping may trigger.
    pub burn_in: usize,
    /// Stop early when the LL range over the trailing window falls under
    /// `early_stop_rel * |LL|`.
    pub early_stop_rel: f64,
    pub early_stop_window: usize,
    pub threads: usize,
    /// Re-derive count matrices from assignments after every iteration and
    /// fail loudly on drift. Costly; for debugging.
    pub validate: bool,
}

impl TrainConfig {
    pub fn new(n_facets: usize) -> Self {
        Self {
            n_facets,
            alpha: 50.0 / n_facets as f64,
            gamma: 0.01,
            sigma_lm: 1.0,
            iterations: 200,
            gibbs_sweeps_per_iter: 1,
            mh_fraction: 0.2,
            mh_scope: MhScope::Active,
            kalman_noise: KalmanNoise::Literal,
            seed: 42,
            holdout_recent: 0,
            burn_in: 0,
            early_stop_rel: 1e-5,
            early_stop_window: 10,
            threads: 1,
            validate: false,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_facets < 1 {
            return Err(Error::InvalidArgument("n_facets must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("mh_fraction", self.mh_fraction),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.sigma_lm < 0.0 || !self.sigma_lm.is_finite() {
            return Err(Error::InvalidArgument("sigma_lm must be finite and >= 0".into()));
        }
        if self.mh_fraction > 1.0 {
            return Err(Error::InvalidArgument("mh_fraction must be <= 1".into()));
        }
        if self.gibbs_sweeps_per_iter < 1 {
            return Err(Error::InvalidArgument("gibbs_sweeps_per_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// The full mutable training state. [`crate::checkpoint`] persists it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub lm: LanguageModel,
    pub facets: FacetState,
    pub experience: ExperienceState,
    pub word_exp: WordExperience,
    /// Completed outer iterations.
    pub iteration: usize,
    /// One entry per completed iteration.
    pub ll_history: Vec<f64>,
    /// MH acceptance rate per completed iteration.
    pub acceptance_history: Vec<f64>,
}

impl TrainedModel {
    /// The last inferred experience per user, falling back to `s0 = 1` for
    /// users with no training reviews.
    pub fn final_experience_per_user(&self, corpus: &Corpus) -> Vec<f64> {
        let mut out = vec![1.0; corpus.n_users()];
        for (i, r) in corpus.reviews.iter().enumerate() {
            out[r.user as usize] = self.experience.e[i];
        }
        out
    }
}

/// Mark each user's `n` most recent reviews as held out. Users with at most
/// `n` reviews keep everything in training. Returns a `true = held out`
/// mask over corpus review indices.
pub fn holdout_most_recent(corpus: &Corpus, n: usize) -> Vec<bool> {
    let mut mask = vec![false; corpus.n_reviews()];
    if n == 0 {
        return mask;
    }
    for indices in corpus.reviews_by_user() {
        if indices.len() > n {
            for &i in &indices[indices.len() - n..] {
                mask[i] = true;
            }
        }
    }
    mask
}

/// Random facet assignments, unit experiences, neutral GBM parameters, and
/// a language model seeded from the initial counts (with unit filter error).
pub fn initialize(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    config.check()?;
    if corpus.n_reviews() == 0 {
        return Err(Error::InvalidArgument("corpus has no reviews".into()));
    }
    if corpus.vocab_size() == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(0);

    let facets = FacetState::init_random(corpus, config.n_facets, config.alpha, &mut rng)?;
    let experience = ExperienceState::init(corpus);
    let word_exp = compute_word_experience(corpus, &experience.e);

    let n_epochs = corpus.n_epochs as usize;
    let mut lm = LanguageModel::new(
        n_epochs,
        config.n_facets,
        corpus.vocab_size(),
        config.sigma_lm,
        config.gamma,
        config.kalman_noise,
    );
    for t in 0..n_epochs {
        for z in 0..config.n_facets {
            let row = crate::langmodel::infer_measurement(
                facets.facet_counts(t, z),
                config.gamma,
                lm.ref_word,
            )?;
            lm.set_beta_row(t, z, &row);
        }
    }

    Ok(TrainedModel {
        config: config.clone(),
        lm,
        facets,
        experience,
        word_exp,
        iteration: 0,
        ll_history: Vec::new(),
        acceptance_history: Vec::new(),
    })
}

/// The data log-likelihood `sum_d sum_j ln sum_z theta_dz pi(beta_{t,z,w})`.
pub fn log_likelihood(corpus: &Corpus, facets: &FacetState, lm: &LanguageModel) -> f64 {
    let mut ll = 0.0;
    for (d, review) in corpus.reviews.iter().enumerate() {
        if review.tokens.is_empty() {
            continue;
        }
        let theta = facets.estimate_theta(d);
        let t = review.epoch as usize;
        for &w in &review.tokens {
            let mut p = 0.0;
            for (z, th) in theta.iter().enumerate() {
                p += th * lm.pi(t, z, w as usize);
            }
            ll += p.ln();
        }
    }
    ll
}

/// Train from scratch: initialize on the training subset (after any
/// holdout) and run the configured number of iterations.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    config.check()?;
    let mask = holdout_most_recent(corpus, config.holdout_recent);
    let train_corpus = if config.holdout_recent > 0 {
        corpus.subset(&mask.iter().map(|m| !m).collect::<Vec<_>>())?
    } else {
        corpus.clone()
    };
    let mut model = initialize(&train_corpus, config)?;
    run_iterations(&mut model, &train_corpus, config.iterations)?;
    Ok(model)
}

/// Continue training for up to `max_iters` more iterations (early stop and
/// NaN aborts permitting). The corpus must be the same training subset the
/// model was initialized on.
pub fn run_iterations(
    model: &mut TrainedModel,
    corpus: &Corpus,
    max_iters: usize,
) -> Result<()> {
    for _ in 0..max_iters {
        let iter = model.iteration + 1;
        let mut rng = ChaCha12Rng::seed_from_u64(model.config.seed);
        rng.set_stream(iter as u64);

        // Facets.
        for _ in 0..model.config.gibbs_sweeps_per_iter {
            gibbs_sweep(corpus, &mut model.facets, &model.lm, &mut rng);
        }

        // Language model.
        for t in 0..corpus.n_epochs as usize {
            model.lm.smooth_epoch(
                t,
                model.facets.epoch_counts(t),
                &model.word_exp,
                model.config.threads,
            )?;
        }
        ensure_finite("kalman", model.lm.beta_raw().iter().copied())?;

        // Experience.
        let stats = mh_sweep(
            corpus,
            &mut model.experience,
            &model.lm,
            &model.facets,
            model.config.mh_fraction,
            model.config.mh_scope,
            &mut rng,
        )?;
        ensure_finite("metropolis", model.experience.e.iter().copied())?;

        // Word experience.
        model.word_exp = compute_word_experience(corpus, &model.experience.e);

        // Per-user GBM estimates.
        update_gbm_params(corpus, &mut model.experience)?;
        ensure_finite(
            "gbm-mle",
            model
                .experience
                .gbm
                .iter()
                .flat_map(|g| [g.mu, g.sigma, g.s0]),
        )?;

        let ll = log_likelihood(corpus, &model.facets, &model.lm);
        if !ll.is_finite() {
            return Err(Error::NonFinite {
                phase: "log-likelihood".into(),
                detail: format!("LL = {ll} at iteration {iter}"),
            });
        }
        model.ll_history.push(ll);
        model.acceptance_history.push(stats.acceptance_rate());
        model.iteration = iter;

        if model.config.validate {
            model.facets.validate_counts(corpus)?;
        }

        if early_stop(model) {
            break;
        }
    }
    Ok(())
}

fn early_stop(model: &TrainedModel) -> bool {
    let window = model.config.early_stop_window;
    if window == 0 || model.iteration < model.config.burn_in {
        return false;
    }
    let h = &model.ll_history;
    if h.len() < window {
        return false;
    }
    let tail = &h[h.len() - window..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let last = tail[tail.len() - 1].abs().max(1e-12);
    (max - min) / last < model.config.early_stop_rel
}

fn ensure_finite(phase: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                phase: phase.into(),
                detail: format!("encountered {v}"),
            });
        }
    }
    Ok(())
}

/// Build the per-epoch word-experience table from current experiences.
pub fn compute_word_experience(corpus: &Corpus, experiences: &[f64]) -> WordExperience {
    let by_epoch = corpus.reviews_by_epoch();
    let rows: Vec<Vec<f64>> = by_epoch
        .iter()
        .map(|indices| {
            let token_lists: Vec<&[u32]> = indices
                .iter()
                .map(|&i| corpus.reviews[i].tokens.as_slice())
                .collect();
            let exps: Vec<f64> = indices.iter().map(|&i| experiences[i]).collect();
            word_experience(&token_lists, &exps, corpus.vocab_size())
        })
        .collect();
    WordExperience::from_rows(rows, corpus.vocab_size())
}

/// Maximum-likelihood (mu, sigma) update per user; users with fewer than
/// two reviews keep their parameters. `delta` is the user's mean
/// inter-review gap in years, floored at `EPS_T`.
fn update_gbm_params(corpus: &Corpus, state: &mut ExperienceState) -> Result<()> {
    for (user, indices) in corpus.reviews_by_user().iter().enumerate() {
        if indices.len() < 2 {
            continue;
        }
        let exps: Vec<f64> = indices.iter().map(|&i| state.e[i]).collect();
        let first = corpus.reviews[indices[0]].t_fine;
        let last = corpus.reviews[indices[indices.len() - 1]].t_fine;
        let delta = ((last - first) / (indices.len() - 1) as f64).max(EPS_T);
        let s0 = state.gbm[user].s0;
        if let Some(est) = estimate_gbm_params(&exps, s0, delta) {
            state.gbm[user] = crate::stochastic::GbmParams {
                mu: est.mu,
                sigma: est.sigma,
                s0,
            };
        }
    }
    Ok(())
}
