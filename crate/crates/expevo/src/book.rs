//! The guide from `book/`, mounted as rustdoc modules so every code block
//! in it compiles and runs under `cargo test --doc`. mdbook and rustdoc
//! share the same hidden-line convention, so the chapters stay runnable in
//! both renderers without duplication.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/experience.md")]
pub mod experience {}

#[doc = include_str!("../../../book/src/facets.md")]
pub mod facets {}

#[doc = include_str!("../../../book/src/language-model.md")]
pub mod language_model {}

#[doc = include_str!("../../../book/src/experience-sampling.md")]
pub mod experience_sampling {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
