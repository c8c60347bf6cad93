//! Research-paper user modeling.
//!
//! Two stages:
//!
//! 1. A hybrid topic model. Titles are preprocessed ([`corpus`]), a collapsed
//!    Gibbs LDA sampler ([`lda`]) estimates word-topic distributions, a
//!    full-softmax skip-gram model ([`embed`]) learns word vectors, and
//!    [`fusion`] expands each topic's seed words through their embedding
//!    neighbourhoods to build a refined word-topic map used to vote on the
//!    dominant topic of every title.
//! 2. An LSTM next-topic predictor ([`intent`]) over per-user click logs
//!    ([`sessions`]), with Markov and frequent-pattern baselines.
//!
//! [`eval`] holds the classification probe, sequence metrics and ranking
//! metrics used to compare the pipelines.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod intent;
pub mod lda;
pub mod rng;
pub mod sessions;

pub use error::{Error, Result};
