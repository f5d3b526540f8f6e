//! Multi-reference scoring for speech recognition output.
//!
//! A hypothesis is scored against every legitimate transcription convention
//! (verbatim, non-verbatim, legal, or custom) instead of a single "correct"
//! reference. On top of the per-convention WER the crate computes the
//! epistemic injustice distance (EID) and its group contrast, WER-Range,
//! the hermeneutical gap between conventions, fairness gaps, and
//! inter-reference distances, and serializes everything with explicit
//! convention labels.
//!
//! Module map:
//!
//! * [`corpus`] data model, manifest/hypothesis loaders, CHAT subset parser
//! * [`textnorm`] tokenization, normalization and convention derivation
//! * [`align`] word-level minimum edit alignment
//! * [`metrics`] group aggregates and the EID family of metrics
//! * [`report`] convention-labeled csv/json/markdown output
//! * [`config`] run configuration file
//!
//! All metric values are exact rationals ([`Rate`]); conversion to decimal
//! happens only when a report is serialized.

pub mod align;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod rational;
pub mod report;
pub mod textnorm;

pub use align::{align, operation_rates, wer, Alignment, EditKind, EditOp};
pub use config::RunConfig;
pub use corpus::{
    Corpus, GroupLabel, GroupVocabulary, Hypothesis, PolicyId, PolicyKind, ReferenceSet, Token,
    TokenClass, Transcript, TranscriptSource, Utterance,
};
pub use error::Error;
pub use metrics::EidMode;
pub use rational::Rate;
pub use report::{EvaluationReport, OutputFormat};
pub use textnorm::{ConventionRuleSet, NormalizationScheme};
