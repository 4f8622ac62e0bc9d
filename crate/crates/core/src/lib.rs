//! Lexical normalization toolkit.
//!
//! Word-aligned corpora, the most-frequent-replacement and leave-as-is
//! baselines, an entropy-gated dictionary stage, a few-shot LLM
//! normalization pipeline, and the evaluation stack used to score and
//! analyse normalization runs.

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod detection;
pub mod error;
pub mod framing;
pub mod lookup;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod translit;

pub use corpus::{parse_corpus, serialize_corpus, Corpus, Sentence, Token, TokenKind};
pub use error::{Error, Result};
pub use metrics::{RunOutput, ScoreReport};
