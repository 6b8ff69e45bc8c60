//! Sample-based uncertainty scores for language-model answers.
//!
//! Every score here is computed from token-level log-probabilities (natural
//! log) of `M` sampled answers to one input:
//!
//! - predictive entropy ([`estimators::predictive_entropy`]),
//! - semantic entropy and its discrete variant over a semantic partition
//!   ([`estimators::semantic_entropy`], [`estimators::discrete_semantic_entropy`]),
//! - the unobserved probability mass `1 - sum_{s in A} p(s|x)` computed with
//!   EOS-inclusive joint probabilities ([`estimators::eos_up`]) or with
//!   length-normalized, EOS-free probabilities ([`estimators::ln_up`]).
//!
//! The [`synthetic`] module provides an exactly enumerable autoregressive
//! model used as ground truth for entropy, missing mass and convergence
//! checks, and [`eval`] holds the AUROC evaluation and the sweep over `M`.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clustering;
pub mod error;
pub mod estimators;
pub mod eval;
mod numeric;
pub mod sequence;
pub mod synthetic;

pub use clustering::{
    build_clusters, ClusterAssignment, EquivalenceBackend, ExactMatch, NormalizedMatch,
};
pub use error::{Error, Result};
pub use estimators::{ClusterMass, Estimator, ScoreConfig, ScoreRecord};
pub use eval::{auroc, sweep_m, LabeledScore, SweepConfig, SweepResult, Truncation};
pub use sequence::{
    dedup, unobserved_probability, AnswerSet, DedupKey, GeneratedSequence, ProbMode, SamplingMeta,
    UniqueAnswer, UniqueAnswers,
};
pub use synthetic::{SequenceTree, EOS_SYMBOL};
