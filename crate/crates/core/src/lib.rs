//! Construction and validation of residual-stream steering vectors from
//! chain-of-thought traces.
//!
//! The pipeline goes: segment traces into labeled paragraphs ([`segment`]),
//! estimate per-boundary stability from resampled continuations
//! ([`stability`]), build difference-of-means steering vectors with optional
//! stability filtering and content-subspace projection ([`builder`],
//! [`subspace`]), and validate the whole chain against a synthetic data
//! model with known ground truth ([`synthetic`], [`probe`]).
//!
//! All aggregation is performed in a deterministic order and all randomness
//! flows through explicit seeds, so identical inputs produce byte-identical
//! outputs.

pub mod builder;
pub mod error;
pub mod io;
pub mod lexicon;
pub mod optim;
pub mod probe;
pub mod segment;
pub mod stability;
pub mod subspace;
pub mod synthetic;
pub mod types;
pub mod vecmath;

pub use error::{Error, Result};
pub use lexicon::KeywordLexicon;
pub use stability::{ContinuationRecord, StabilityReport};
pub use subspace::{ContentSubspace, QuestionEmbedding};
pub use types::{
    BoundaryRecord, HiddenStateSet, Method, Paragraph, SegmentLabel, SteeringVector, TraceRecord,
};
