//! Pipeline for classifying long court opinions into a two-level label
//! ontology with a chat-completions endpoint.
//!
//! The crate is organized around the stages of a classification run:
//!
//! - [`corpus`] - documents, label ontologies, splits, and histograms
//! - [`chunker`] - reference tokenizer and document slicing strategies
//! - [`classweights`] - log-smoothed class weights and weighted cross-entropy
//! - [`promptkit`] - prompt templates, few-shot selection, response parsing
//! - [`llmclient`] - chat-completions HTTP client with retries and bounded
//!   concurrency
//! - [`mock`] - fixture-driven mock endpoint for offline runs
//! - [`retrieval`] - keyword-lexicon retrieval and category scoring
//! - [`decision`] - aggregation of per-chunk predictions into document labels
//! - [`eval`] - confusion matrices, metrics, and comparison tables

pub mod chunker;
pub mod classweights;
pub mod corpus;
pub mod decision;
pub mod eval;
pub mod llmclient;
pub mod mock;
pub mod promptkit;
pub mod retrieval;

pub use chunker::{Chunk, ChunkPlan, ChunkStrategy, TokenSpan};
pub use classweights::{ClassWeights, WeightConfig};
pub use corpus::{Corpus, CorpusSplit, Document, LabelLevel, LabelOntology};
pub use decision::{ChunkPrediction, DecisionRule, DocumentDecision};
pub use eval::{ConfusionMatrix, MetricsReport};
pub use llmclient::{BatchJob, CompletionExchange, EndpointConfig};
pub use promptkit::{AnswerFormat, FewShotExample, ParsedLabel, PromptTemplate};
pub use retrieval::{CategoryScore, KeywordLexicon, Segment};
