//! Discourse coherence scoring with a hierarchical Bi-LSTM and attention
//! encoder, optionally trained jointly with grammatical-role prediction.

pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod model;
pub mod training;

pub use error::{Error, Result};
