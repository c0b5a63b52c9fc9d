//! Gated deep cross networks for CTR prediction, with field-level embedding
//! dimension optimization and gate-based interpretation.

pub mod checkpoint;
pub mod cli;
pub mod crossnet;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod fdo;
pub mod features;
pub mod interpret;
pub mod model;
pub mod seed;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
