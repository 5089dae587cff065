//! Translational-impact analytics for research corpora.
//!
//! The crate covers the whole pipeline from line-delimited record files to
//! report tables:
//!
//! * [`corpus`] ingests papers, patents and repository links, builds the
//!   citation graph and the studied/complement venue partition.
//! * [`embedding`] holds unit vectors and the exact similarity primitives,
//!   plus a deterministic hashing embedder for running without a model.
//! * [`classify`] assigns Responsible-AI topics from keyword similarity and
//!   keeps the high-confidence corpus.
//! * [`linkage`] matches patent references to papers and papers to
//!   repositories.
//! * [`metrics`] computes impact ratios, significance tests, Kaplan-Meier
//!   curves and institution rankings.
//! * [`conventionality`] scores cited-venue combinations against a
//!   year-stratified permutation null.
//! * [`pipeline`] wires the stages together and writes the report bundle.

pub mod classify;
pub mod conventionality;
pub mod corpus;
pub mod embedding;
mod error;
pub mod linkage;
pub mod metrics;
pub mod pipeline;
pub mod special;
pub mod synth;

pub use classify::{KeywordQuery, Topic, TopicAssignment};
pub use conventionality::{ConventionalityScore, NullDistribution, VenuePairObservation};
pub use corpus::{
    CitationGraph, CorpusPartition, PaperCorpus, PaperRecord, PatentCorpus, PatentRecord,
    ReferenceString, RepoLink,
};
pub use embedding::{MockEmbedder, SimilarityScore, VectorStore};
pub use error::{Error, Result};
pub use linkage::{CandidateMatch, ElbowCurve, LinkKind, LinkageResult};
pub use metrics::{ImpactRatios, InstitutionRow, SurvivalCurve, TestResult};
pub use pipeline::PipelineConfig;
