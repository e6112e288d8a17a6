//! Rating prediction and user-ranking evaluation on top of a trained model.
//!
//! The feature vector for a review is `[F_0 .. F_{V-1}, e, g_g, g_u, g_i]`:
//! a sparse word block `F_w = ln(max_z pi(beta_{t,z,w}))` over the words the
//! review contains, the writing user's last training-time experience, and
//! the community/user/item rating biases. A deterministic closed-form ridge
//! regressor maps features to ratings.

mod metrics;
mod regression;
pub mod reports;

pub use metrics::{dcg, kendall_tau_distance, mse, ndcg};
pub use regression::{fit_regressor, RidgeModel};

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelFile;
use crate::corpus::{Corpus, Review, BACKGROUND_USER_ID};
use crate::error::{Error, Result};
use crate::trainer::holdout_most_recent;

/// How the word block is filled.
///
/// `Pi` (default) applies the simplex mapping before the log, which keeps
/// the log defined. `Raw` takes `max_z beta` over the natural parameters
/// directly, logging only when positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Pi,
    Raw,
}

/// Global mean rating plus per-user and per-item offsets from it, computed
/// over training rows only. Unseen users/items read as offset 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Biases {
    pub global: f64,
    user: Vec<f64>,
    item: Vec<f64>,
}

impl Biases {
    pub fn compute(corpus: &Corpus, train_rows: &[bool]) -> Result<Self> {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut user_sum = vec![0.0; corpus.n_users()];
        let mut user_count = vec![0usize; corpus.n_users()];
        let mut item_sum = vec![0.0; corpus.n_items()];
        let mut item_count = vec![0usize; corpus.n_items()];
        for (review, keep) in corpus.reviews.iter().zip(train_rows) {
            if !keep {
                continue;
            }
            sum += review.rating;
            count += 1;
            user_sum[review.user as usize] += review.rating;
            user_count[review.user as usize] += 1;
            item_sum[review.item as usize] += review.rating;
            item_count[review.item as usize] += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no training ratings".into()));
        }
        let global = sum / count as f64;
        let offsets = |sums: Vec<f64>, counts: Vec<usize>| -> Vec<f64> {
            sums.iter()
                .zip(&counts)
                .map(|(s, c)| if *c == 0 { 0.0 } else { s / *c as f64 - global })
                .collect()
        };
        Ok(Self {
            global,
            user: offsets(user_sum, user_count),
            item: offsets(item_sum, item_count),
        })
    }

    pub fn user_offset(&self, user: usize) -> f64 {
        self.user.get(user).copied().unwrap_or(0.0)
    }

    pub fn item_offset(&self, item: usize) -> f64 {
        self.item.get(item).copied().unwrap_or(0.0)
    }

    /// The plain bias prediction `g_g + g_u + g_i`.
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.global + self.user_offset(user) + self.item_offset(item)
    }
}

/// Assembles feature rows for reviews against a trained model.
pub struct FeatureExtractor<'a> {
    model: &'a ModelFile,
    biases: &'a Biases,
    mode: FeatureMode,
    background: Option<usize>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        model: &'a ModelFile,
        corpus: &Corpus,
        biases: &'a Biases,
        mode: FeatureMode,
    ) -> Self {
        Self {
            model,
            biases,
            mode,
            background: corpus.user_index(BACKGROUND_USER_ID).map(|u| u as usize),
        }
    }

    pub fn n_features(&self) -> usize {
        self.model.lm.vocab_size + 4
    }

    /// The user whose experience and bias stand in for `user`: the user
    /// itself when it has training reviews, otherwise the background user.
    fn effective_user(&self, user: usize) -> usize {
        if self.model.users[user].n_reviews == 0 {
            self.background.unwrap_or(user)
        } else {
            user
        }
    }

    pub fn features(&self, review: &Review) -> Vec<f64> {
        let v = self.model.lm.vocab_size;
        let t = (review.epoch as usize).min(self.model.lm.n_epochs - 1);
        let mut row = vec![0.0; v + 4];
        for &w in &review.tokens {
            let w = w as usize;
            let mut best = f64::NEG_INFINITY;
            for z in 0..self.model.lm.n_facets {
                let val = match self.mode {
                    FeatureMode::Pi => self.model.lm.pi(t, z, w),
                    FeatureMode::Raw => self.model.lm.beta(t, z, w),
                };
                best = best.max(val);
            }
            row[w] = match self.mode {
                FeatureMode::Pi => best.ln(),
                FeatureMode::Raw => {
                    if best > 0.0 {
                        best.ln()
                    } else {
                        best
                    }
                }
            };
        }
        let user = self.effective_user(review.user as usize);
        row[v] = self.model.users[user].final_experience;
        row[v + 1] = self.biases.global;
        row[v + 2] = self.biases.user_offset(user);
        row[v + 3] = self.biases.item_offset(review.item as usize);
        row
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub review: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

/// Output of the rating-prediction protocol.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRow>,
    pub mse: f64,
    /// Same protocol with only the three bias features.
    pub bias_only_mse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Hold out each user's `n_holdout` most recent reviews, fit the ridge
/// regressor on the rest, and score the held-out rows. The model should
/// have been trained with the same holdout so the test rows never entered
/// inference.
pub fn rating_prediction(
    model: &ModelFile,
    corpus: &Corpus,
    n_holdout: usize,
    lambda: f64,
    mode: FeatureMode,
) -> Result<PredictionReport> {
    if n_holdout == 0 {
        return Err(Error::InvalidArgument(
            "prediction needs a positive holdout".into(),
        ));
    }
    let test_mask = holdout_most_recent(corpus, n_holdout);
    let train_mask: Vec<bool> = test_mask.iter().map(|m| !m).collect();
    let n_test = test_mask.iter().filter(|m| **m).count();
    if n_test == 0 {
        return Err(Error::InvalidArgument(
            "holdout selected no test reviews".into(),
        ));
    }
    let biases = Biases::compute(corpus, &train_mask)?;
    let extractor = FeatureExtractor::new(model, corpus, &biases, mode);

    let mut x_train = Vec::new();
    let mut y_train = Vec::new();
    let mut test_rows = Vec::new();
    for (i, review) in corpus.reviews.iter().enumerate() {
        if test_mask[i] {
            test_rows.push(i);
        } else {
            x_train.push(extractor.features(review));
            y_train.push(review.rating);
        }
    }
    let full = fit_regressor(&x_train, &y_train, lambda)?;

    // Bias-only baseline: same regressor over the three bias columns.
    let strip = |row: &[f64]| row[row.len() - 3..].to_vec();
    let x_bias: Vec<Vec<f64>> = x_train.iter().map(|r| strip(r)).collect();
    let bias_model = fit_regressor(&x_bias, &y_train, lambda)?;

    let mut rows = Vec::with_capacity(test_rows.len());
    let mut preds = Vec::new();
    let mut bias_preds = Vec::new();
    let mut truth = Vec::new();
    for i in test_rows {
        let review = &corpus.reviews[i];
        let feats = extractor.features(review);
        let y_pred = full.predict(&feats);
        rows.push(PredictionRow {
            review: i,
            y_true: review.rating,
            y_pred,
        });
        preds.push(y_pred);
        bias_preds.push(bias_model.predict(&strip(&feats)));
        truth.push(review.rating);
    }
    Ok(PredictionReport {
        mse: mse(&preds, &truth)?,
        bias_only_mse: mse(&bias_preds, &truth)?,
        n_train: y_train.len(),
        n_test: truth.len(),
        rows,
    })
}

/// Experience-ranking evaluation against binary relevance labels.
#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub ndcg: f64,
    pub kendall_tau_distance: f64,
    pub top_k: usize,
    pub n_labeled: usize,
}

/// Rank labeled users by the model's final experience (descending) and
/// score the top `top_k` by NDCG; the Kendall distance compares the full
/// model ordering of labeled users against the order they appear in
/// `labels`, which is taken as the reference ranking.
pub fn rank_users(model: &ModelFile, labels: &[(String, bool)], top_k: usize) -> Result<RankReport> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no ranking labels".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (id, _) in labels {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate label for {id}")));
        }
    }
    let mut ranked: Vec<(usize, &str, bool)> = Vec::new();
    for (pos, (id, rel)) in labels.iter().enumerate() {
        match model.user_index(id) {
            Some(u) => ranked.push((u, id.as_str(), *rel)),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "labeled user {id} is not in the model"
                )));
            }
        }
        let _ = pos;
    }
    // Model order: experience descending, user index as the deterministic
    // tie-break.
    let mut by_model = ranked.clone();
    by_model.sort_by(|a, b| {
        let ea = model.users[a.0].final_experience;
        let eb = model.users[b.0].final_experience;
        eb.partial_cmp(&ea).unwrap().then(a.0.cmp(&b.0))
    });

    let k = top_k.min(by_model.len());
    let ranked_rels: Vec<f64> = by_model[..k]
        .iter()
        .map(|(_, _, rel)| *rel as u8 as f64)
        .collect();
    let mut ideal: Vec<f64> = ranked
        .iter()
        .map(|(_, _, rel)| *rel as u8 as f64)
        .collect();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ideal.truncate(k);

    let model_order: Vec<&str> = by_model.iter().map(|(_, id, _)| *id).collect();
    let label_order: Vec<&str> = labels.iter().map(|(id, _)| id.as_str()).collect();

    Ok(RankReport {
        ndcg: ndcg(&ranked_rels, &ideal),
        kendall_tau_distance: kendall_tau_distance(&model_order, &label_order)?,
        top_k: k,
        n_labeled: labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusConfig, RawReview};
    use crate::trainer::{self, TrainConfig};

    fn corpus() -> Corpus {
        let texts = ["aa bb", "bb cc", "cc aa", "aa bb cc"];
        let raw: Vec<RawReview> = (0..24)
            .map(|i| RawReview {
                user_id: format!("u{}", i % 3),
                item_id: format!("i{}", i % 2),
                timestamp: i as i64 * 8_000_000,
                rating: [4.0, 2.0, 5.0, 3.0][i % 4],
                text: texts[i % 4].into(),
            })
            .collect();
        Corpus::build(
            raw,
            CorpusConfig {
                min_df: 1,
                min_user_reviews: 0,
                min_token_len: 1,
                ..CorpusConfig::default()
            },
        )
        .unwrap()
    }

    fn trained(corpus: &Corpus, holdout: usize) -> ModelFile {
        let mut config = TrainConfig::new(2);
        config.iterations = 3;
        config.holdout_recent = holdout;
        let model = trainer::train(corpus, &config).unwrap();
        let mask = holdout_most_recent(corpus, holdout);
        let train_corpus = if holdout > 0 {
            corpus
                .subset(&mask.iter().map(|m| !m).collect::<Vec<_>>())
                .unwrap()
        } else {
            corpus.clone()
        };
        ModelFile::from_model(&model, &train_corpus)
    }

    #[test]
    fn biases_hand_case() {
        // Ratings {u1: (4, 4), u2: (2)}: global 10/3, offsets 2/3 and -4/3.
        let raw = vec![
            RawReview {
                user_id: "u1".into(),
                item_id: "i1".into(),
                timestamp: 0,
                rating: 4.0,
                text: "aa".into(),
            },
            RawReview {
                user_id: "u1".into(),
                item_id: "i2".into(),
                timestamp: 1,
                rating: 4.0,
                text: "aa".into(),
            },
            RawReview {
                user_id: "u2".into(),
                item_id: "i1".into(),
                timestamp: 2,
                rating: 2.0,
                text: "aa".into(),
            },
        ];
        let corpus = Corpus::build(
            raw,
            CorpusConfig {
                min_df: 1,
                min_user_reviews: 0,
                min_token_len: 1,
                ..CorpusConfig::default()
            },
        )
        .unwrap();
        let biases = Biases::compute(&corpus, &[true, true, true]).unwrap();
        assert!((biases.global - 10.0 / 3.0).abs() < 1e-12);
        let u1 = corpus.user_index("u1").unwrap() as usize;
        let u2 = corpus.user_index("u2").unwrap() as usize;
        assert!((biases.user_offset(u1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((biases.user_offset(u2) + 4.0 / 3.0).abs() < 1e-12);
        // Unseen index falls back to zero offset.
        assert_eq!(biases.item_offset(99), 0.0);
    }

    #[test]
    fn constant_ratings_zero_offsets() {
        let mut c = corpus();
        for r in &mut c.reviews {
            r.rating = 3.0;
        }
        let biases = Biases::compute(&c, &vec![true; c.n_reviews()]).unwrap();
        assert!((biases.global - 3.0).abs() < 1e-12);
        for u in 0..c.n_users() {
            assert!(biases.user_offset(u).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_layout_and_determinism() {
        let c = corpus();
        let file = trained(&c, 0);
        let biases = Biases::compute(&c, &vec![true; c.n_reviews()]).unwrap();
        let extractor = FeatureExtractor::new(&file, &c, &biases, FeatureMode::Pi);
        let v = c.vocab_size();
        let review = &c.reviews[0];
        let f1 = extractor.features(review);
        let f2 = extractor.features(review);
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), v + 4);
        // Word block entries for present words are log-probabilities.
        for &w in &review.tokens {
            assert!(f1[w as usize] < 0.0);
        }
        // Biases sit in the last three slots.
        assert!((f1[v + 1] - biases.global).abs() < 1e-12);
    }

    #[test]
    fn feature_word_block_hand_case() {
        // Word 0 has pi (0.2, 0.4) across the two facets and word 1 has
        // (0.1, 0.3): the block takes the per-word max over facets, so
        // F = (ln 0.4, ln 0.3).
        let c = corpus();
        let mut file = trained(&c, 0);
        let v = file.lm.vocab_size;
        assert_eq!(v, 3);
        let p0 = vec![0.2, 0.1, 0.7];
        let p1 = vec![0.4, 0.3, 0.3];
        let row0 = crate::langmodel::inverse_map(&p0, v - 1).unwrap();
        let row1 = crate::langmodel::inverse_map(&p1, v - 1).unwrap();
        for t in 0..file.lm.n_epochs {
            file.lm.set_beta_row(t, 0, &row0);
            file.lm.set_beta_row(t, 1, &row1);
        }
        let biases = Biases::compute(&c, &vec![true; c.n_reviews()]).unwrap();
        let extractor = FeatureExtractor::new(&file, &c, &biases, FeatureMode::Pi);
        let review = Review {
            tokens: vec![0, 1],
            ..c.reviews[0].clone()
        };
        let f = extractor.features(&review);
        assert!((f[0] - 0.4f64.ln()).abs() < 1e-9);
        assert!((f[1] - 0.3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn empty_review_keeps_biases() {
        let c = corpus();
        let file = trained(&c, 0);
        let biases = Biases::compute(&c, &vec![true; c.n_reviews()]).unwrap();
        let extractor = FeatureExtractor::new(&file, &c, &biases, FeatureMode::Pi);
        let review = Review {
            tokens: vec![],
            ..c.reviews[0].clone()
        };
        let f = extractor.features(&review);
        let v = c.vocab_size();
        assert!(f[..v].iter().all(|x| *x == 0.0));
        assert!((f[v + 1] - biases.global).abs() < 1e-12);
    }

    #[test]
    fn prediction_pipeline_runs() {
        let c = corpus();
        let file = trained(&c, 3);
        let report = rating_prediction(&file, &c, 3, 1.0, FeatureMode::Pi).unwrap();
        assert_eq!(report.n_test, 9);
        assert_eq!(report.rows.len(), 9);
        assert!(report.mse.is_finite());
        assert!(report.bias_only_mse.is_finite());
    }

    #[test]
    fn rank_users_perfect_and_reversed() {
        let c = corpus();
        let mut file = trained(&c, 0);
        // Pin experiences: u0 > u1 > u2.
        for (i, u) in file.users.iter_mut().enumerate() {
            u.final_experience = 10.0 - i as f64;
        }
        let labels = vec![
            ("u0".to_string(), true),
            ("u1".to_string(), true),
            ("u2".to_string(), false),
        ];
        let report = rank_users(&file, &labels, 100).unwrap();
        assert!((report.ndcg - 1.0).abs() < 1e-12);
        assert_eq!(report.kendall_tau_distance, 0.0);

        let reversed = vec![
            ("u2".to_string(), false),
            ("u1".to_string(), true),
            ("u0".to_string(), true),
        ];
        let report = rank_users(&file, &reversed, 100).unwrap();
        assert_eq!(report.kendall_tau_distance, 1.0);

        let unknown = vec![("nobody".to_string(), true)];
        assert!(rank_users(&file, &unknown, 10).is_err());
    }
}
