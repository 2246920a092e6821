//! Data pipeline, fine-tuning plan and evaluation toolkit for building
//! domain-expert instruction-tuned language models for transportation safety.

pub mod dataset;
pub mod eval;
pub mod generate;
pub mod ingest;
pub mod error;
pub mod metrics;
pub mod retry;
pub mod text_norm;
pub mod train_plan;

pub use error::{Error, Location, Result};
