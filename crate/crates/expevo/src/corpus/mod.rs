//! Review ingestion: raw records in, an indexed, time-binned, immutable
//! [`Corpus`] out.
//!
//! Reviews are globally sorted by timestamp. Each review carries two clocks:
//! a coarse epoch index `t_coarse` (language-model granularity, from binning
//! the absolute timestamp) and a fine timestamp `t_fine` in fractional years
//! since the *user's* first review (experience granularity, floored at
//! [`EPS_T`]). Users below a review-count threshold are folded into one
//! shared background user.

mod io;
mod tokenizer;

pub use io::{read_jsonl, read_jsonl_lossy, CorpusStats};
pub use tokenizer::{tokenize, TokenizerConfig};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::{EPS_T, SECONDS_PER_YEAR};

/// Reserved display id for the merged background user.
pub const BACKGROUND_USER_ID: &str = "__background__";

/// Default epoch width: one Julian year, in seconds.
pub const DEFAULT_EPOCH_WIDTH_SECS: i64 = 31_557_600;

/// One raw input record, as parsed from JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReview {
    pub user_id: String,
    pub item_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub rating: f64,
    pub text: String,
}

/// One indexed review inside a [`Corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub user: u32,
    pub item: u32,
    /// Absolute timestamp, seconds since the Unix epoch.
    pub timestamp: i64,
    /// Years since the user's first review, floored at `EPS_T`.
    pub t_fine: f64,
    /// Coarse epoch index.
    pub epoch: u32,
    pub rating: f64,
    /// Vocabulary indices; out-of-vocabulary terms were dropped.
    pub tokens: Vec<u32>,
}

/// Ingestion knobs. `min_df` is a document-frequency threshold; terms under
/// it are dropped rather than replaced. `min_user_reviews` is the background
/// fold threshold (0 disables folding).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub epoch_width_secs: i64,
    pub min_df: usize,
    pub min_user_reviews: usize,
    pub min_token_len: usize,
    pub stopwords: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            epoch_width_secs: DEFAULT_EPOCH_WIDTH_SECS,
            min_df: 5,
            min_user_reviews: 50,
            min_token_len: 2,
            stopwords: Vec::new(),
        }
    }
}

impl CorpusConfig {
    fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            stopwords: self.stopwords.iter().cloned().collect(),
            min_len: self.min_token_len,
        }
    }
}

/// The immutable training corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    /// Sorted ascending by `timestamp` (stable w.r.t. input order on ties).
    pub reviews: Vec<Review>,
    /// Term strings, indexed by vocabulary id.
    pub vocabulary: Vec<String>,
    /// Display ids per user index; the background user, when present, is
    /// named [`BACKGROUND_USER_ID`].
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub n_epochs: u32,
    pub epoch_width_secs: i64,
    /// Timestamp of the earliest review; epoch 0 starts here.
    pub min_timestamp: i64,
    pub config: CorpusConfig,
}

impl Corpus {
    /// Build a corpus from raw records. Records may arrive in any order.
    pub fn build(mut raw: Vec<RawReview>, config: CorpusConfig) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("no input reviews".into()));
        }
        if config.epoch_width_secs <= 0 {
            return Err(Error::InvalidArgument("epoch_width must be > 0".into()));
        }
        if config.min_df < 1 {
            return Err(Error::InvalidArgument("min_df must be >= 1".into()));
        }
        raw.sort_by_key(|r| r.timestamp);

        let tok_cfg = config.tokenizer();
        let docs: Vec<Vec<String>> = raw.iter().map(|r| tokenize(&r.text, &tok_cfg)).collect();
        let (vocabulary, vocab_index) = build_vocabulary(&docs, config.min_df)?;

        // Fold rare users into the shared background user before indexing.
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for r in &raw {
            *per_user.entry(r.user_id.as_str()).or_insert(0) += 1;
        }
        let folded = |id: &str| per_user[id] < config.min_user_reviews;

        let mut user_index: HashMap<String, u32> = HashMap::new();
        let mut user_ids: Vec<String> = Vec::new();
        let mut item_index: HashMap<String, u32> = HashMap::new();
        let mut item_ids: Vec<String> = Vec::new();
        let mut user_first_ts: Vec<i64> = Vec::new();

        let min_timestamp = raw[0].timestamp;
        let mut reviews = Vec::with_capacity(raw.len());
        for (r, doc) in raw.iter().zip(docs.iter()) {
            let effective_id = if config.min_user_reviews > 0 && folded(&r.user_id) {
                BACKGROUND_USER_ID
            } else {
                r.user_id.as_str()
            };
            let user = *user_index.entry(effective_id.to_string()).or_insert_with(|| {
                user_ids.push(effective_id.to_string());
                user_first_ts.push(r.timestamp);
                (user_ids.len() - 1) as u32
            });
            let item = *item_index.entry(r.item_id.clone()).or_insert_with(|| {
                item_ids.push(r.item_id.clone());
                (item_ids.len() - 1) as u32
            });
            let t_fine = fine_years(r.timestamp, user_first_ts[user as usize]);
            let epoch = ((r.timestamp - min_timestamp) / config.epoch_width_secs) as u32;
            let tokens = doc
                .iter()
                .filter_map(|term| vocab_index.get(term).copied())
                .collect();
            reviews.push(Review {
                user,
                item,
                timestamp: r.timestamp,
                t_fine,
                epoch,
                rating: r.rating,
                tokens,
            });
        }
        let n_epochs = reviews.iter().map(|r| r.epoch).max().unwrap_or(0) + 1;
        Ok(Corpus {
            reviews,
            vocabulary,
            user_ids,
            item_ids,
            n_epochs,
            epoch_width_secs: config.epoch_width_secs,
            min_timestamp,
            config,
        })
    }

    pub fn n_reviews(&self) -> usize {
        self.reviews.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.reviews.iter().map(|r| r.tokens.len()).sum()
    }

    pub fn user_index(&self, user_id: &str) -> Option<u32> {
        self.user_ids.iter().position(|u| u == user_id).map(|i| i as u32)
    }

    /// Review indices grouped by epoch, in timestamp order.
    pub fn reviews_by_epoch(&self) -> Vec<Vec<usize>> {
        let mut by_epoch = vec![Vec::new(); self.n_epochs as usize];
        for (i, r) in self.reviews.iter().enumerate() {
            by_epoch[r.epoch as usize].push(i);
        }
        by_epoch
    }

    /// Review indices grouped by user, in timestamp order.
    pub fn reviews_by_user(&self) -> Vec<Vec<usize>> {
        let mut by_user = vec![Vec::new(); self.n_users()];
        for (i, r) in self.reviews.iter().enumerate() {
            by_user[r.user as usize].push(i);
        }
        by_user
    }

    /// A copy containing only the reviews selected by `keep`, preserving the
    /// vocabulary, user/item inventories, and epoch grid. Used for holdout
    /// protocols, so test reviews keep valid indices against the same model.
    pub fn subset(&self, keep: &[bool]) -> Result<Corpus> {
        if keep.len() != self.reviews.len() {
            return Err(Error::InvalidArgument(format!(
                "mask length {} != review count {}",
                keep.len(),
                self.reviews.len()
            )));
        }
        let reviews = self
            .reviews
            .iter()
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.clone())
            .collect::<Vec<_>>();
        if reviews.is_empty() {
            return Err(Error::InvalidArgument("subset removed every review".into()));
        }
        Ok(Corpus {
            reviews,
            ..self.clone()
        })
    }

    /// FNV-1a hash over the content that a trained model depends on. Stored
    /// in model checkpoints to detect corpus mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::util::Fnv1a::new();
        h.write_u64(self.vocabulary.len() as u64);
        for w in &self.vocabulary {
            h.write(w.as_bytes());
        }
        h.write_u64(self.user_ids.len() as u64);
        for u in &self.user_ids {
            h.write(u.as_bytes());
        }
        h.write_u64(self.n_epochs as u64);
        h.write_u64(self.epoch_width_secs as u64);
        h.write_u64(self.min_timestamp as u64);
        h.finish()
    }
}

/// Fine timestamp in years relative to `first_ts`, floored at `EPS_T`.
pub fn fine_years(timestamp: i64, first_ts: i64) -> f64 {
    (((timestamp - first_ts) as f64) / SECONDS_PER_YEAR).max(EPS_T)
}

/// Compute the vocabulary over tokenized documents: terms appearing in at
/// least `min_df` distinct documents, indexed in first-appearance order.
pub fn build_vocabulary(
    docs: &[Vec<String>],
    min_df: usize,
) -> Result<(Vec<String>, HashMap<String, u32>)> {
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut first_seen: Vec<&str> = Vec::new();
    for doc in docs {
        let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
        for term in doc {
            if seen.insert(term) {
                let count = df.entry(term).or_insert(0);
                if *count == 0 {
                    first_seen.push(term);
                }
                *count += 1;
            }
        }
    }
    let mut vocabulary = Vec::new();
    let mut index = HashMap::new();
    for term in first_seen {
        if df[term] >= min_df {
            index.insert(term.to_string(), vocabulary.len() as u32);
            vocabulary.push(term.to_string());
        }
    }
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok((vocabulary, index))
}
