//! Tokenized patient health timelines, a small decoder-only model over them,
//! and Monte-Carlo inference and evaluation for clinical prediction tasks.

pub mod evaluation;
pub mod inference;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod split;
pub mod synth;
pub mod tokenizer;
