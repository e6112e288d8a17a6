//! Synthetic corpora drawn from the full generative process, with recorded
//! ground truth for recovery testing.
//!
//! Per coarse epoch: each review draws its experience from the writing
//! user's GBM marginal at the review's fine timestamp, a facet mixture from
//! a symmetric Dirichlet, and per-token facets from that mixture. The
//! language model advances by a Gaussian step whose per-word variance is
//! `sigma_lm * |delta l|`; because `l` itself depends on the words, the
//! cycle is resolved with a provisional word draw from the previous epoch's
//! model, after which the epoch's words are redrawn from the finalized
//! parameters. Ratings come from a noisy linear function of log-experience
//! and the first facet share, giving the rating predictor a learnable
//! signal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{fine_years, Corpus, CorpusConfig, RawReview};
use crate::error::{Error, Result};
use crate::langmodel::{softmax_map, word_experience};
use crate::stochastic::GbmParams;

/// Deterministic per-epoch boost applied to one word's natural parameter,
/// used to build drifting-vocabulary fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub word: usize,
    pub per_epoch: f64,
}

/// Coefficients of the synthetic rating model
/// `clip(base + a ln(e) + b theta_1 + noise, 1, 5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingModel {
    pub base: f64,
    /// `a`, the weight on log-experience.
    pub experience_weight: f64,
    /// `b`, the weight on the first facet share.
    pub facet_weight: f64,
    /// Gaussian noise variance.
    pub noise_var: f64,
}

impl Default for RatingModel {
    fn default() -> Self {
        Self {
            base: 3.0,
            experience_weight: 0.8,
            facet_weight: 1.5,
            noise_var: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub reviews_per_user: usize,
    pub tokens_per_review: usize,
    pub n_facets: usize,
    pub vocab_size: usize,
    pub n_epochs: usize,
    pub epoch_width_secs: i64,
    pub n_items: usize,
    /// True GBM parameters, one per user.
    pub user_params: Vec<GbmParams>,
    /// Symmetric Dirichlet concentration for facet mixtures.
    pub alpha: f64,
    /// Language-model transition noise scale.
    pub sigma_lm: f64,
    pub seed: u64,
    /// Block-structured head start: facet `z` gets this much extra natural
    /// parameter on its own V/Z slice of the vocabulary.
    pub facet_sharpness: f64,
    pub drift: Option<DriftSpec>,
    pub rating: RatingModel,
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("n_users", self.n_users),
            ("reviews_per_user", self.reviews_per_user),
            ("tokens_per_review", self.tokens_per_review),
            ("n_facets", self.n_facets),
            ("n_epochs", self.n_epochs),
            ("n_items", self.n_items),
        ] {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument("vocab_size must be >= 2".into()));
        }
        if self.user_params.len() != self.n_users {
            return Err(Error::InvalidArgument(format!(
                "need {} user parameter sets, got {}",
                self.n_users,
                self.user_params.len()
            )));
        }
        if self.reviews_per_user < self.n_epochs {
            return Err(Error::InvalidArgument(
                "reviews_per_user must be >= n_epochs so every epoch is covered".into(),
            ));
        }
        if self.epoch_width_secs <= 0 {
            return Err(Error::InvalidArgument("epoch_width must be > 0".into()));
        }
        let alpha_ok = self.alpha.is_finite() && self.alpha > 0.0;
        let sigma_ok = self.sigma_lm.is_finite() && self.sigma_lm >= 0.0;
        if !alpha_ok || !sigma_ok {
            return Err(Error::InvalidArgument(
                "alpha must be > 0 and sigma_lm >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the generator knows that inference is asked to recover,
/// aligned with the emitted corpus (its review order, user indices, and
/// vocabulary indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_epochs: usize,
    pub n_facets: usize,
    pub vocab_size: usize,
    /// True experience per review.
    pub experiences: Vec<f64>,
    /// True facet per token.
    pub assignments: Vec<Vec<u32>>,
    /// True facet mixture per review.
    pub theta: Vec<Vec<f64>>,
    /// True natural parameters, flat `T x Z x V`.
    pub beta: Vec<f64>,
    /// The word-experience rows that drove the transitions, `T` rows of `V`.
    pub word_experience: Vec<Vec<f64>>,
    /// True per-user drift, by corpus user index.
    pub user_mu: Vec<f64>,
    /// True per-user volatility, by corpus user index.
    pub user_sigma: Vec<f64>,
}

impl GroundTruth {
    pub fn beta_at(&self, t: usize, z: usize, w: usize) -> f64 {
        self.beta[(t * self.n_facets + z) * self.vocab_size + w]
    }

    /// True simplex mass of word `w` in facet `z` at epoch `t`.
    pub fn pi_at(&self, t: usize, z: usize, w: usize) -> f64 {
        let start = (t * self.n_facets + z) * self.vocab_size;
        let row = &self.beta[start..start + self.vocab_size];
        softmax_map(row).expect("finite ground-truth parameters")[w]
    }
}

/// A generated dataset: the raw records (as ingestion would read them), the
/// already-built corpus, and the aligned ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub reviews: Vec<RawReview>,
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

struct PlannedReview {
    user: usize,
    item: usize,
    timestamp: i64,
    epoch: usize,
}

fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("valid gamma");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(1e-300)) .collect();
    let sum: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= sum;
    }
    draws
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut target = rng.gen::<f64>();
    for (i, p) in probs.iter().enumerate() {
        target -= p;
        if target <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Run the generative process.
pub fn generate(config: &SynthConfig) -> Result<SyntheticData> {
    config.check()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let t_count = config.n_epochs;
    let z_count = config.n_facets;
    let v = config.vocab_size;
    let ref_word = v - 1;
    let width = config.epoch_width_secs;

    // Plan timestamps: each user's reviews walk the epoch grid in order, and
    // the very first planned review anchors the grid at t = 0.
    let mut planned = Vec::with_capacity(config.n_users * config.reviews_per_user);
    let mut used: std::collections::HashSet<i64> = std::collections::HashSet::new();
    for user in 0..config.n_users {
        for j in 0..config.reviews_per_user {
            let epoch = (j * t_count) / config.reviews_per_user;
            let mut offset = if user == 0 && j == 0 {
                0
            } else {
                rng.gen_range(1..width)
            };
            // Collision probing wraps within the epoch so a bumped
            // timestamp can never cross the epoch boundary.
            while !used.insert(epoch as i64 * width + offset) {
                offset = 1 + (offset % (width - 1));
            }
            let timestamp = epoch as i64 * width + offset;
            let item = rng.gen_range(0..config.n_items);
            planned.push(PlannedReview {
                user,
                item,
                timestamp,
                epoch,
            });
        }
    }
    planned.sort_by_key(|p| p.timestamp);
    let mut first_ts = vec![i64::MAX; config.n_users];
    for p in &planned {
        first_ts[p.user] = first_ts[p.user].min(p.timestamp);
    }

    // Initial natural parameters: zero plus an optional block head start.
    let mut beta_prev = vec![0.0f64; z_count * v];
    if config.facet_sharpness != 0.0 {
        let block = v.div_ceil(z_count);
        for z in 0..z_count {
            for w in (z * block..((z + 1) * block).min(v)).filter(|w| *w != ref_word) {
                beta_prev[z * v + w] += config.facet_sharpness;
            }
        }
    }

    let mut beta_true = Vec::with_capacity(t_count * z_count * v);
    let mut l_rows: Vec<Vec<f64>> = Vec::with_capacity(t_count);
    let mut l_prev = vec![0.0f64; v];

    let mut experiences = Vec::with_capacity(planned.len());
    let mut thetas = Vec::with_capacity(planned.len());
    let mut assignments: Vec<Vec<u32>> = Vec::with_capacity(planned.len());
    let mut words: Vec<Vec<u32>> = Vec::with_capacity(planned.len());
    let mut ratings = Vec::with_capacity(planned.len());

    let mut cursor = 0usize;
    for t in 0..t_count {
        let epoch_range = {
            let start = cursor;
            while cursor < planned.len() && planned[cursor].epoch == t {
                cursor += 1;
            }
            start..cursor
        };

        // Experience, mixtures, facets.
        for idx in epoch_range.clone() {
            let p = &planned[idx];
            let t_fine = fine_years(p.timestamp, first_ts[p.user]);
            let e = config.user_params[p.user].marginal(t_fine).sample(&mut rng);
            let theta = sample_dirichlet(config.alpha, z_count, &mut rng);
            let z_tokens: Vec<u32> = (0..config.tokens_per_review)
                .map(|_| sample_categorical(&theta, &mut rng) as u32)
                .collect();
            experiences.push(e);
            thetas.push(theta);
            assignments.push(z_tokens);
        }

        // Provisional words from the propagated model, for the epoch's
        // word-experience row.
        let pi_prev: Vec<Vec<f64>> = (0..z_count)
            .map(|z| softmax_map(&beta_prev[z * v..(z + 1) * v]).expect("finite beta"))
            .collect();
        let provisional: Vec<Vec<u32>> = epoch_range
            .clone()
            .map(|idx| {
                assignments[idx]
                    .iter()
                    .map(|&z| sample_categorical(&pi_prev[z as usize], &mut rng) as u32)
                    .collect()
            })
            .collect();
        let prov_refs: Vec<&[u32]> = provisional.iter().map(|p| p.as_slice()).collect();
        let epoch_exps: Vec<f64> = epoch_range.clone().map(|idx| experiences[idx]).collect();
        let l_now = word_experience(&prov_refs, &epoch_exps, v);

        // Advance the language model.
        let mut beta_now = beta_prev.clone();
        for z in 0..z_count {
            for w in 0..v {
                if w == ref_word {
                    continue;
                }
                let var = config.sigma_lm * (l_now[w] - l_prev[w]).abs();
                if var > 0.0 {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    beta_now[z * v + w] += var.sqrt() * noise;
                }
                if let Some(drift) = &config.drift {
                    if w == drift.word {
                        beta_now[z * v + w] += drift.per_epoch;
                    }
                }
            }
        }

        // Final words from the finalized model, then ratings.
        let pi_now: Vec<Vec<f64>> = (0..z_count)
            .map(|z| softmax_map(&beta_now[z * v..(z + 1) * v]).expect("finite beta"))
            .collect();
        for idx in epoch_range.clone() {
            let tokens: Vec<u32> = assignments[idx]
                .iter()
                .map(|&z| sample_categorical(&pi_now[z as usize], &mut rng) as u32)
                .collect();
            words.push(tokens);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let rating = config.rating.base
                + config.rating.experience_weight * experiences[idx].ln()
                + config.rating.facet_weight * thetas[idx][0]
                + config.rating.noise_var.sqrt() * noise;
            ratings.push(rating.clamp(1.0, 5.0));
        }

        beta_true.extend_from_slice(&beta_now);
        l_rows.push(l_now.clone());
        l_prev = l_now;
        beta_prev = beta_now;
    }

    // Emit raw records exactly as ingestion reads them.
    let reviews: Vec<RawReview> = planned
        .iter()
        .enumerate()
        .map(|(idx, p)| RawReview {
            user_id: format!("u{:03}", p.user),
            item_id: format!("i{:02}", p.item),
            timestamp: p.timestamp,
            rating: ratings[idx],
            text: words[idx]
                .iter()
                .map(|w| format!("w{w:04}"))
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect();

    let corpus = Corpus::build(
        reviews.clone(),
        CorpusConfig {
            epoch_width_secs: width,
            min_df: 1,
            min_user_reviews: 0,
            min_token_len: 1,
            stopwords: Vec::new(),
        },
    )?;
    debug_assert_eq!(corpus.n_epochs as usize, t_count);

    // Remap ground truth onto the corpus's vocabulary and user indexing.
    let v_corpus = corpus.vocab_size();
    let synth_index: Vec<usize> = corpus
        .vocabulary
        .iter()
        .map(|name| name[1..].parse::<usize>().expect("synthetic word name"))
        .collect();
    let mut beta = Vec::with_capacity(t_count * z_count * v_corpus);
    for t in 0..t_count {
        for z in 0..z_count {
            for &sw in &synth_index {
                beta.push(beta_true[(t * z_count + z) * v + sw]);
            }
        }
    }
    let word_exp_rows: Vec<Vec<f64>> = l_rows
        .iter()
        .map(|row| synth_index.iter().map(|&sw| row[sw]).collect())
        .collect();
    let mut user_mu = vec![0.0; corpus.n_users()];
    let mut user_sigma = vec![0.0; corpus.n_users()];
    for u in 0..config.n_users {
        let idx = corpus
            .user_index(&format!("u{u:03}"))
            .expect("every user posted") as usize;
        user_mu[idx] = config.user_params[u].mu;
        user_sigma[idx] = config.user_params[u].sigma;
    }
    let remap_tokens: std::collections::HashMap<usize, u32> = synth_index
        .iter()
        .enumerate()
        .map(|(corpus_w, &synth_w)| (synth_w, corpus_w as u32))
        .collect();
    let _ = &remap_tokens; // corpus tokens were re-tokenized from the text

    let truth = GroundTruth {
        n_epochs: t_count,
        n_facets: z_count,
        vocab_size: v_corpus,
        experiences,
        assignments,
        theta: thetas,
        beta,
        word_experience: word_exp_rows,
        user_mu,
        user_sigma,
    };

    // The corpus sorts by timestamp; planning already emitted in sorted
    // order, so review-level truth lines up index for index.
    debug_assert_eq!(truth.experiences.len(), corpus.n_reviews());

    Ok(SyntheticData {
        reviews,
        corpus,
        truth,
    })
}

/// The fixed validation fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Two user groups with slow/fast experience drift.
    S1,
    /// Three sharply distinct facets.
    S2,
    /// One word whose probability mass drifts monotonically across epochs.
    S3,
}

impl Fixture {
    pub fn config(self) -> SynthConfig {
        let year = crate::corpus::DEFAULT_EPOCH_WIDTH_SECS;
        match self {
            Fixture::S1 => SynthConfig {
                n_users: 20,
                reviews_per_user: 30,
                tokens_per_review: 20,
                n_facets: 2,
                vocab_size: 100,
                n_epochs: 5,
                epoch_width_secs: year,
                n_items: 10,
                user_params: (0..20)
                    .map(|u| {
                        let mu = if u < 10 { 0.05 } else { 0.6 };
                        GbmParams { mu, sigma: 0.2, s0: 1.0 }
                    })
                    .collect(),
                alpha: 0.5,
                sigma_lm: 0.05,
                seed: 101,
                facet_sharpness: 2.0,
                drift: None,
                rating: RatingModel::default(),
            },
            Fixture::S2 => SynthConfig {
                n_users: 15,
                reviews_per_user: 40,
                tokens_per_review: 25,
                n_facets: 3,
                vocab_size: 200,
                n_epochs: 4,
                epoch_width_secs: year,
                n_items: 12,
                user_params: (0..15)
                    .map(|_| GbmParams { mu: 0.3, sigma: 0.25, s0: 1.0 })
                    .collect(),
                alpha: 0.7,
                sigma_lm: 0.2,
                seed: 202,
                facet_sharpness: 3.0,
                drift: None,
                rating: RatingModel::default(),
            },
            Fixture::S3 => SynthConfig {
                n_users: 8,
                reviews_per_user: 25,
                tokens_per_review: 15,
                n_facets: 1,
                vocab_size: 50,
                n_epochs: 5,
                epoch_width_secs: year,
                n_items: 6,
                user_params: (0..8)
                    .map(|_| GbmParams { mu: 0.4, sigma: 0.3, s0: 1.0 })
                    .collect(),
                alpha: 1.0,
                sigma_lm: 0.02,
                seed: 303,
                facet_sharpness: 0.0,
                drift: Some(DriftSpec { word: 0, per_epoch: 0.8 }),
                rating: RatingModel::default(),
            },
        }
    }

    pub fn generate(self) -> Result<SyntheticData> {
        generate(&self.config())
    }
}

/// All three fixtures, in order.
pub fn standard_suite() -> Result<Vec<SyntheticData>> {
    Ok(vec![
        Fixture::S1.generate()?,
        Fixture::S2.generate()?,
        Fixture::S3.generate()?,
    ])
}
