//! Speaker clustering over fixed-dimension utterance embeddings.

pub mod ahc;
pub mod cli;
pub mod dtvae;
pub mod error;
pub mod eval;
pub mod ndgrad;
pub mod pipeline;
pub mod plda;
pub mod synthdata;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;
