//! Collapsed Gibbs sampling of token-level facet assignments.
//!
//! The per-review facet mixture is integrated out, so a token's conditional
//! is the usual count ratio times the language-model term:
//!
//! ```text
//! P(z = k | rest) prop. (n_-j(d,k) + alpha) / (n_-j(d,.) + Z alpha) * pi(beta_{t,k,w})
//! ```
//!
//! `beta` stays frozen during a sweep; it moves in the filtering phase.
//! Sweeps are sequential (document order, then token order) and mutate the
//! shared count matrices incrementally, so the state is single-threaded by
//! contract.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::langmodel::LanguageModel;

/// Token-level assignments plus the count matrices they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetState {
    pub n_facets: usize,
    pub alpha: f64,
    /// `assignments[d][j]` is the facet of token `j` of review `d`.
    pub assignments: Vec<Vec<u32>>,
    /// `n(d, z)`, row-major `D x Z`.
    doc_topic: Vec<u32>,
    /// `n(t, z, w)`, row-major `T x Z x V`.
    epoch_topic_word: Vec<u32>,
    n_epochs: usize,
    vocab_size: usize,
}

impl FacetState {
    /// Uniform random assignments with counts built to match.
    pub fn init_random<R: Rng + ?Sized>(
        corpus: &Corpus,
        n_facets: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_facets == 0 {
            return Err(Error::InvalidArgument("need at least one facet".into()));
        }
        if alpha <= 0.0 {
            return Err(Error::InvalidArgument("alpha must be > 0".into()));
        }
        let assignments: Vec<Vec<u32>> = corpus
            .reviews
            .iter()
            .map(|r| {
                r.tokens
                    .iter()
                    .map(|_| rng.gen_range(0..n_facets) as u32)
                    .collect()
            })
            .collect();
        Ok(Self::from_assignments(corpus, n_facets, alpha, assignments))
    }

    /// Rebuild a state from stored assignments (checkpoint reload).
    pub fn from_assignments(
        corpus: &Corpus,
        n_facets: usize,
        alpha: f64,
        assignments: Vec<Vec<u32>>,
    ) -> Self {
        let n_epochs = corpus.n_epochs as usize;
        let vocab_size = corpus.vocab_size();
        let mut state = Self {
            n_facets,
            alpha,
            assignments,
            doc_topic: vec![0; corpus.n_reviews() * n_facets],
            epoch_topic_word: vec![0; n_epochs * n_facets * vocab_size],
            n_epochs,
            vocab_size,
        };
        for (d, review) in corpus.reviews.iter().enumerate() {
            for (j, &w) in review.tokens.iter().enumerate() {
                let z = state.assignments[d][j] as usize;
                state.doc_topic[d * n_facets + z] += 1;
                let idx = state.etw_idx(review.epoch as usize, z, w as usize);
                state.epoch_topic_word[idx] += 1;
            }
        }
        state
    }

    #[inline]
    fn etw_idx(&self, t: usize, z: usize, w: usize) -> usize {
        (t * self.n_facets + z) * self.vocab_size + w
    }

    pub fn doc_topic(&self, d: usize, z: usize) -> u32 {
        self.doc_topic[d * self.n_facets + z]
    }

    pub fn count(&self, t: usize, z: usize, w: usize) -> u32 {
        self.epoch_topic_word[self.etw_idx(t, z, w)]
    }

    /// The `Z x V` count block for epoch `t`, facet-major.
    pub fn epoch_counts(&self, t: usize) -> &[u32] {
        let zv = self.n_facets * self.vocab_size;
        &self.epoch_topic_word[t * zv..(t + 1) * zv]
    }

    /// The `V` counts for one (epoch, facet) row.
    pub fn facet_counts(&self, t: usize, z: usize) -> &[u32] {
        let start = self.etw_idx(t, z, 0);
        &self.epoch_topic_word[start..start + self.vocab_size]
    }

    /// (facet, word) pairs with nonzero counts at epoch `t`, ascending.
    pub fn occupied_pairs(&self, t: usize) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for z in 0..self.n_facets {
            let row = self.facet_counts(t, z);
            for (w, c) in row.iter().enumerate() {
                if *c > 0 {
                    out.push((z as u32, w as u32));
                }
            }
        }
        out
    }

    /// Point estimate of the review's facet proportions,
    /// `(n(d,z) + alpha) / (n(d,.) + Z alpha)`.
    pub fn estimate_theta(&self, d: usize) -> Vec<f64> {
        let z_count = self.n_facets;
        let row = &self.doc_topic[d * z_count..(d + 1) * z_count];
        let total: f64 = row.iter().map(|c| *c as f64).sum();
        let denom = total + z_count as f64 * self.alpha;
        row.iter().map(|c| (*c as f64 + self.alpha) / denom).collect()
    }

    /// Unnormalized conditional for token `j` of review `d`, with that
    /// token's current assignment already removed from the counts.
    fn conditional_unnormalized(
        &self,
        d: usize,
        epoch: usize,
        word: usize,
        lm: &LanguageModel,
        out: &mut Vec<f64>,
    ) {
        let z_count = self.n_facets;
        let row = &self.doc_topic[d * z_count..(d + 1) * z_count];
        let total: f64 = row.iter().map(|c| *c as f64).sum();
        let denom = total + z_count as f64 * self.alpha;
        out.clear();
        for (z, count) in row.iter().enumerate() {
            let doc_term = (*count as f64 + self.alpha) / denom;
            out.push(doc_term * lm.pi(epoch, z, word));
        }
    }

    /// Re-derive both count matrices from the assignments; used by the debug
    /// validation pass and tests.
    pub fn validate_counts(&self, corpus: &Corpus) -> Result<()> {
        let rebuilt = Self::from_assignments(
            corpus,
            self.n_facets,
            self.alpha,
            self.assignments.clone(),
        );
        if rebuilt.doc_topic != self.doc_topic || rebuilt.epoch_topic_word != self.epoch_topic_word
        {
            return Err(Error::Internal(
                "facet counts are inconsistent with assignments".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized conditional distribution over facets for one token, excluding
/// that token's own assignment (the `-j` convention).
pub fn conditional_facet_distribution(
    corpus: &Corpus,
    state: &FacetState,
    lm: &LanguageModel,
    d: usize,
    j: usize,
) -> Result<Vec<f64>> {
    let review = &corpus.reviews[d];
    let word = review.tokens[j] as usize;
    let z_old = state.assignments[d][j] as usize;

    // Evaluate against a copy with token j removed.
    let mut probs = Vec::with_capacity(state.n_facets);
    let mut state_minus = state.clone();
    state_minus.doc_topic[d * state.n_facets + z_old] -= 1;
    let idx = state_minus.etw_idx(review.epoch as usize, z_old, word);
    state_minus.epoch_topic_word[idx] -= 1;
    state_minus.conditional_unnormalized(d, review.epoch as usize, word, lm, &mut probs);

    let total: f64 = probs.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Internal(
            "facet conditional has zero total mass".into(),
        ));
    }
    Ok(probs.into_iter().map(|p| p / total).collect())
}

/// One full sweep: every token resampled once from its conditional, counts
/// updated incrementally. Returns nothing; the state stays consistent.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    corpus: &Corpus,
    state: &mut FacetState,
    lm: &LanguageModel,
    rng: &mut R,
) {
    if state.n_facets == 1 {
        return;
    }
    let z_count = state.n_facets;
    let mut weights: Vec<f64> = Vec::with_capacity(z_count);
    for (d, review) in corpus.reviews.iter().enumerate() {
        let epoch = review.epoch as usize;
        for (j, &w) in review.tokens.iter().enumerate() {
            let w = w as usize;
            let z_old = state.assignments[d][j] as usize;
            state.doc_topic[d * z_count + z_old] -= 1;
            let idx = state.etw_idx(epoch, z_old, w);
            state.epoch_topic_word[idx] -= 1;

            state.conditional_unnormalized(d, epoch, w, lm, &mut weights);
            let total: f64 = weights.iter().sum();
            let mut target = rng.gen::<f64>() * total;
            let mut z_new = z_count - 1;
            for (z, wt) in weights.iter().enumerate() {
                target -= wt;
                if target <= 0.0 {
                    z_new = z;
                    break;
                }
            }

            state.assignments[d][j] = z_new as u32;
            state.doc_topic[d * z_count + z_new] += 1;
            let idx = state.etw_idx(epoch, z_new, w);
            state.epoch_topic_word[idx] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, CorpusConfig, RawReview};
    use crate::langmodel::KalmanNoise;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny_corpus(texts: &[&str]) -> Corpus {
        let raw: Vec<RawReview> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawReview {
                user_id: format!("u{i}"),
                item_id: "i".into(),
                timestamp: i as i64 * 1000,
                rating: 3.0,
                text: t.to_string(),
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

    #[test]
    fn single_facet_conditional_is_unit() {
        let corpus = tiny_corpus(&["aa bb aa"]);
        let lm = LanguageModel::new(1, 1, 2, 1.0, 0.01, KalmanNoise::Literal);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let state = FacetState::init_random(&corpus, 1, 0.5, &mut rng).unwrap();
        let p = conditional_facet_distribution(&corpus, &state, &lm, 0, 0).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn conditional_hand_case() {
        // Review with 5 tokens; token 0 excluded leaves counts (3, 1).
        // pi terms 0.2 and 0.1 give (0.14, 0.03) -> (14/17, 3/17).
        let corpus = tiny_corpus(&["aa aa aa aa bb"]);
        let mut lm = LanguageModel::new(1, 2, 2, 1.0, 0.01, KalmanNoise::Literal);
        // pi(z=0) = (0.2, 0.8), pi(z=1) = (0.1, 0.9); token word is "aa".
        lm.set_beta_row(0, 0, &[(0.2f64 / 0.8).ln(), 0.0]);
        lm.set_beta_row(0, 1, &[(0.1f64 / 0.9).ln(), 0.0]);
        let assignments = vec![vec![0, 0, 0, 0, 1]];
        let state = FacetState::from_assignments(&corpus, 2, 0.5, assignments);
        // Token 0 currently in facet 0, so minus-j counts are (3, 1).
        let p = conditional_facet_distribution(&corpus, &state, &lm, 0, 0).unwrap();
        assert!((p[0] - 14.0 / 17.0).abs() < 1e-12);
        assert!((p[1] - 3.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_hand_case_spec_numbers() {
        // Direct check of the count ratio against pi values 0.2 / 0.1:
        // (0.7 * 0.2, 0.3 * 0.1) normalizes to (0.8235..., 0.1764...).
        let u = [0.7 * 0.2, 0.3 * 0.1];
        let total: f64 = u[0] + u[1];
        assert!((u[0] / total - 14.0 / 17.0).abs() < 1e-12);
        assert!((u[1] / total - 3.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_beta_equal_counts_gives_uniform() {
        let corpus = tiny_corpus(&["aa bb aa bb aa"]);
        let lm = LanguageModel::new(1, 2, 2, 1.0, 0.01, KalmanNoise::Literal);
        // Removing token 4 (facet 0) leaves minus-j counts (2, 2).
        let assignments = vec![vec![0, 0, 1, 1, 0]];
        let state = FacetState::from_assignments(&corpus, 2, 0.5, assignments);
        let p = conditional_facet_distribution(&corpus, &state, &lm, 0, 4).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn theta_estimates() {
        let corpus = tiny_corpus(&["aa aa aa bb", ""]);
        let assignments = vec![vec![0, 0, 0, 1], vec![]];
        let state = FacetState::from_assignments(&corpus, 2, 0.5, assignments);
        let theta = state.estimate_theta(0);
        assert!((theta[0] - 0.7).abs() < 1e-12);
        assert!((theta[1] - 0.3).abs() < 1e-12);
        // Empty review: uniform.
        let theta = state.estimate_theta(1);
        assert!((theta[0] - 0.5).abs() < 1e-12);
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_facet_sweep_is_a_noop() {
        let corpus = tiny_corpus(&["aa bb", "bb aa aa"]);
        let lm = LanguageModel::new(1, 1, 2, 1.0, 0.01, KalmanNoise::Literal);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut state = FacetState::init_random(&corpus, 1, 0.5, &mut rng).unwrap();
        let before = state.clone();
        gibbs_sweep(&corpus, &mut state, &lm, &mut rng);
        assert_eq!(state, before);
    }

    #[test]
    fn sweep_conserves_counts() {
        let corpus = tiny_corpus(&["aa bb cc dd aa", "bb cc bb", "dd dd aa cc"]);
        let lm = LanguageModel::new(1, 3, 4, 1.0, 0.01, KalmanNoise::Literal);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut state = FacetState::init_random(&corpus, 3, 0.5, &mut rng).unwrap();
        for _ in 0..25 {
            gibbs_sweep(&corpus, &mut state, &lm, &mut rng);
        }
        state.validate_counts(&corpus).unwrap();
        for (d, review) in corpus.reviews.iter().enumerate() {
            let total: u32 = (0..3).map(|z| state.doc_topic(d, z)).sum();
            assert_eq!(total as usize, review.tokens.len());
        }
    }

    #[test]
    fn sweep_deterministic_under_seed() {
        let corpus = tiny_corpus(&["aa bb cc", "cc bb aa aa"]);
        let lm = LanguageModel::new(1, 2, 3, 1.0, 0.01, KalmanNoise::Literal);
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(33);
            let mut state = FacetState::init_random(&corpus, 2, 0.5, &mut rng).unwrap();
            for _ in 0..10 {
                gibbs_sweep(&corpus, &mut state, &lm, &mut rng);
            }
            state
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sharp_beta_attracts_tokens() {
        // Two facets with near-disjoint vocabularies; after a few sweeps
        // almost every token sits on its high-probability facet.
        let corpus = tiny_corpus(&["aa aa aa aa bb bb bb bb", "aa aa bb bb aa bb aa bb"]);
        let mut lm = LanguageModel::new(1, 2, 2, 1.0, 0.01, KalmanNoise::Literal);
        // Facet 0 strongly prefers "aa", facet 1 strongly prefers "bb".
        lm.set_beta_row(0, 0, &[8.0, 0.0]);
        lm.set_beta_row(0, 1, &[-8.0, 0.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut state = FacetState::init_random(&corpus, 2, 0.5, &mut rng).unwrap();
        for _ in 0..20 {
            gibbs_sweep(&corpus, &mut state, &lm, &mut rng);
        }
        let mut correct = 0;
        let mut total = 0;
        for (d, review) in corpus.reviews.iter().enumerate() {
            for (j, &w) in review.tokens.iter().enumerate() {
                let expect = if w == 0 { 0 } else { 1 };
                if state.assignments[d][j] == expect {
                    correct += 1;
                }
                total += 1;
            }
        }
        assert!(
            correct as f64 / total as f64 >= 0.95,
            "only {correct}/{total} on the preferred facet"
        );
    }

    #[test]
    fn occupied_pairs_match_counts() {
        let corpus = tiny_corpus(&["aa bb", "cc"]);
        let assignments = vec![vec![0, 1], vec![1]];
        let state = FacetState::from_assignments(&corpus, 2, 0.5, assignments);
        let pairs = state.occupied_pairs(0);
        assert_eq!(pairs, vec![(0, 0), (1, 1), (1, 2)]);
    }
}
