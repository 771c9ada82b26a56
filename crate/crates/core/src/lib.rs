//! Confusion-aware fine-tuning of a small bidirectional language model for
//! intent detection on speech-recognizer output.

pub mod alignment;
pub mod autodiff;
pub mod bilm;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod finetune;
pub mod recurrent;
pub mod seed;
pub mod slu;
pub mod wcn;

pub use error::{Error, Result};
