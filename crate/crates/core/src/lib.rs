//! Content-preserving linguistic steganography: hide bits in an unmodified
//! cover text by fine-tuning a masked language model so that its predictions
//! at key-selected words encode the message.

pub mod cli;
pub mod coding;
pub mod corpus;
pub mod cover;
pub mod error;
pub mod eval;
pub mod extractor;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
