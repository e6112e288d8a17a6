//! Experience-aware language modeling for review corpora.
//!
//! `expevo` jointly infers three coupled latent structures from a stream of
//! timestamped reviews:
//!
//! - a continuous per-user **experience trajectory**, modeled as a geometric
//!   Brownian motion and resampled review-by-review with Metropolis-Hastings
//!   ([`stochastic`], [`experience`]);
//! - **time-evolving facet language models** in natural-parameter form,
//!   smoothed across epochs by scalar Kalman filters whose noise follows the
//!   change in word-level experience ([`langmodel`]);
//! - token-level **facet assignments** via collapsed Gibbs sampling
//!   ([`facet`]).
//!
//! [`trainer`] orchestrates the phases, [`evaluation`] turns a trained model
//! into rating predictions and user rankings, and [`synth`] generates
//! corpora from the generative process with recorded ground truth. The CLI
//! in the companion `expevo-cli` crate drives everything from the command
//! line; the guide under `book/` walks through the concepts with runnable
//! examples.

pub mod book;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experience;
pub mod facet;
pub mod langmodel;
pub mod stochastic;
pub mod synth;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};

pub use corpus::{Corpus, CorpusConfig, RawReview, Review};
pub use stochastic::GbmParams;
pub use trainer::{TrainConfig, TrainedModel};
