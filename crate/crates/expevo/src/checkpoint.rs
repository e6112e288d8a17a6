//! Versioned on-disk artifacts.
//!
//! Both artifact kinds are self-describing JSON containers with a magic
//! string and a format version up front. Writes go through a temp-file
//! rename, and the payload carries no wall-clock state, so identical inputs
//! produce byte-identical files.
//!
//! The model checkpoint stores the full training state (enough to resume
//! bit-exactly against the same corpus) plus a denormalized summary layer
//! (vocabulary, per-user aggregates, per-epoch word frequencies) so that
//! reports and user ranking need no corpus at hand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::experience::ExperienceState;
use crate::facet::FacetState;
use crate::langmodel::{LanguageModel, WordExperience};
use crate::stochastic::GbmParams;
use crate::trainer::{TrainConfig, TrainedModel};
use crate::util::write_atomic;

pub const CORPUS_MAGIC: &str = "expevo.corpus";
pub const MODEL_MAGIC: &str = "expevo.model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    magic: String,
    version: u32,
    corpus: Corpus,
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = CorpusFile {
        magic: CORPUS_MAGIC.into(),
        version: FORMAT_VERSION,
        corpus: corpus.clone(),
    };
    write_atomic(path, &serde_json::to_vec(&file)?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    check_header(path, &bytes, CORPUS_MAGIC)?;
    let file: CorpusFile = serde_json::from_slice(&bytes)?;
    Ok(file.corpus)
}

/// Validate magic and version before attempting the full parse, so an
/// artifact of the wrong kind reports a mismatch instead of a JSON error.
fn check_header(path: &Path, bytes: &[u8], expected_magic: &str) -> Result<()> {
    #[derive(Deserialize)]
    struct Header {
        #[serde(default)]
        magic: String,
        #[serde(default)]
        version: u32,
    }
    let header: Header = serde_json::from_slice(bytes)?;
    if header.magic != expected_magic || header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.display().to_string(),
            expected: format!("{expected_magic} v{FORMAT_VERSION}"),
            found: format!("{} v{}", header.magic, header.version),
        });
    }
    Ok(())
}

/// Identity of the corpus a model was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSignature {
    pub fingerprint: u64,
    pub n_users: usize,
    pub vocab_size: usize,
    pub n_epochs: u32,
}

impl CorpusSignature {
    pub fn of(corpus: &Corpus) -> Self {
        Self {
            fingerprint: corpus.fingerprint(),
            n_users: corpus.n_users(),
            vocab_size: corpus.vocab_size(),
            n_epochs: corpus.n_epochs,
        }
    }
}

/// Per-user aggregates carried inside the model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    /// Experience at the user's last training review (s0 when untrained).
    pub final_experience: f64,
    pub n_reviews: usize,
    pub years_active: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// The serialized model artifact.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    magic: String,
    version: u32,
    pub config: TrainConfig,
    pub iteration: usize,
    pub ll_history: Vec<f64>,
    pub acceptance_history: Vec<f64>,
    pub corpus_sig: CorpusSignature,
    pub lm: LanguageModel,
    pub assignments: Vec<Vec<u32>>,
    pub experiences: Vec<f64>,
    pub gbm: Vec<GbmParams>,
    pub word_exp: WordExperience,
    // Summary layer for corpus-free reporting.
    pub vocabulary: Vec<String>,
    pub users: Vec<UserSummary>,
    /// `n(t, w)` word frequencies per epoch, row-major `T x V`.
    pub word_freq: Vec<Vec<u32>>,
    /// User index of each training review, aligned with `experiences`.
    pub review_users: Vec<u32>,
    /// Absolute timestamp of each training review.
    pub review_timestamps: Vec<i64>,
}

impl ModelFile {
    pub fn from_model(model: &TrainedModel, corpus: &Corpus) -> Self {
        let by_user = corpus.reviews_by_user();
        let users = by_user
            .iter()
            .enumerate()
            .map(|(u, indices)| {
                let final_experience = indices
                    .last()
                    .map(|&i| model.experience.e[i])
                    .unwrap_or(model.experience.gbm[u].s0);
                let years_active = indices
                    .last()
                    .map(|&i| corpus.reviews[i].t_fine)
                    .unwrap_or(0.0);
                UserSummary {
                    user_id: corpus.user_ids[u].clone(),
                    final_experience,
                    n_reviews: indices.len(),
                    years_active,
                    mu: model.experience.gbm[u].mu,
                    sigma: model.experience.gbm[u].sigma,
                }
            })
            .collect();

        let mut word_freq = vec![vec![0u32; corpus.vocab_size()]; corpus.n_epochs as usize];
        for review in &corpus.reviews {
            for &w in &review.tokens {
                word_freq[review.epoch as usize][w as usize] += 1;
            }
        }

        Self {
            magic: MODEL_MAGIC.into(),
            version: FORMAT_VERSION,
            config: model.config.clone(),
            iteration: model.iteration,
            ll_history: model.ll_history.clone(),
            acceptance_history: model.acceptance_history.clone(),
            corpus_sig: CorpusSignature::of(corpus),
            lm: model.lm.clone(),
            assignments: model.facets.assignments.clone(),
            experiences: model.experience.e.clone(),
            gbm: model.experience.gbm.clone(),
            word_exp: model.word_exp.clone(),
            vocabulary: corpus.vocabulary.clone(),
            users,
            word_freq,
            review_users: corpus.reviews.iter().map(|r| r.user).collect(),
            review_timestamps: corpus.reviews.iter().map(|r| r.timestamp).collect(),
        }
    }

    /// Reattach the stored state to its training corpus, rebuilding the
    /// count matrices from the assignments.
    pub fn into_model(mut self, train_corpus: &Corpus) -> Result<TrainedModel> {
        let sig = CorpusSignature::of(train_corpus);
        if sig != self.corpus_sig {
            return Err(Error::Incompatible(format!(
                "checkpoint was trained on a different corpus (fingerprint {:x} vs {:x})",
                self.corpus_sig.fingerprint, sig.fingerprint
            )));
        }
        if self.assignments.len() != train_corpus.n_reviews() {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} reviews, corpus has {} (was the holdout setting different?)",
                self.assignments.len(),
                train_corpus.n_reviews()
            )));
        }
        self.lm.refresh_pi();
        let facets = FacetState::from_assignments(
            train_corpus,
            self.config.n_facets,
            self.config.alpha,
            self.assignments,
        );
        Ok(TrainedModel {
            config: self.config,
            lm: self.lm,
            facets,
            experience: ExperienceState {
                e: self.experiences,
                gbm: self.gbm,
            },
            word_exp: self.word_exp,
            iteration: self.iteration,
            ll_history: self.ll_history,
            acceptance_history: self.acceptance_history,
        })
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.user_id == user_id)
    }
}

pub fn save_model(path: &Path, model: &TrainedModel, corpus: &Corpus) -> Result<()> {
    let file = ModelFile::from_model(model, corpus);
    write_atomic(path, &serde_json::to_vec(&file)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    check_header(path, &bytes, MODEL_MAGIC)?;
    let mut file: ModelFile = serde_json::from_slice(&bytes)?;
    file.lm.refresh_pi();
    Ok(file)
}
