//! Metacognitive retrieval-augmented question answering.
//!
//! A QA model answers from retrieved passages; an independent expert model
//! answers the same question and the two answers are compared by embedding
//! similarity. When they disagree the pipeline diagnoses whether internal or
//! external knowledge is missing, names reasoning errors, and revises the
//! answer with more references, a different answering mode, or suggestions.
//!
//! Modules, bottom up:
//!
//! - [`corpus`]: documents, passages, the corpus file
//! - [`retrieval`]: BM25, dense ranking, reciprocal rank fusion
//! - [`providers`]: chat, expert, embedding and NLI contracts with scripted
//!   doubles and HTTP clients
//! - [`prompts`]: templates and the error catalog
//! - [`metacognition`]: monitor, judges, critic, planner
//! - [`controller`]: the per-question loop and traces
//! - [`eval`] and [`config`]: datasets, metrics, runs, sweeps, ablations

pub mod config;
pub mod controller;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod metacognition;
pub mod prompts;
pub mod providers;
pub mod retrieval;

pub use config::RunConfig;
pub use controller::{run_pipeline, FinalResult, TraceRound};
pub use corpus::{Corpus, Document, Passage};
pub use retrieval::{Bm25Retriever, Retriever};
