//! Multi-faceted retrieval and coverage-aware list-wise ranking for
//! retrieval-augmented generation.
//!
//! The numeric core ([`text`], [`ranker`], [`silver`], [`preference`],
//! [`eval`]) is generic over a floating-point [`Scalar`]; the aliases below fix
//! it to `f64`, which is what the pipeline and its artifacts use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aspects;
pub mod client;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod pipeline;
pub mod pool;
pub mod preference;
pub mod ranker;
pub mod scalar;
pub mod silver;
pub mod synth;
pub mod text;

pub use aspects::{format_target, parse_aspects, predict_aspects, AspectSource, ExplorerPrompt, SubAspectList};
pub use config::{Ablation, AspectMode, BackendKind, GeneratorKind, RunConfig};
pub use corpus::{build_index, build_index_with, Bm25Params, Document, InvertedIndex, Retriever, ScoredDoc};
pub use dataset::{load_dataset, DatasetRecord};
pub use error::{Error, Result};
pub use eval::{MetricsReport, DEFAULT_RELEVANCE_THRESHOLD, DEFAULT_RRF_K};
pub use pipeline::{run_pipeline, Pipeline, Stage, StageStats};
pub use pool::{merge_pool, retrieve_per_aspect, Candidate, CandidatePool};
pub use preference::{Generator, OracleGenerator, Provenance};
pub use ranker::{DecodeMode, ScoringBackend};
pub use scalar::Scalar;
pub use text::{tokenize, RougeVariant, TokenSequence};

pub type Overlap = text::OverlapScore<f64>;
pub type RankerConfig = ranker::RankerConfig<f64>;
pub type RankingList = ranker::RankingList<f64>;
pub type CandidateEncoding = ranker::CandidateEncoding<f64>;
pub type ReferenceBackend = ranker::ReferenceBackend<f64>;
pub type SilverTarget = silver::SilverTarget<f64>;
pub type RewardedList = preference::RewardedList<f64>;
pub type PreferencePair = preference::PreferencePair<f64>;
pub type ResponseMetrics = eval::ResponseMetrics<f64>;
pub type RankingMetrics = eval::RankingMetrics<f64>;

pub type Overlap32 = text::OverlapScore<f32>;
pub type RankingList32 = ranker::RankingList<f32>;
pub type SilverTarget32 = silver::SilverTarget<f32>;
