//! Minimally supervised categorization of metadata-rich documents.
//!
//! The pipeline embeds words, documents, labels and metadata instances on the
//! unit sphere, synthesizes labeled documents from class-conditioned
//! von Mises-Fisher draws, and trains a convolutional classifier on the real
//! and synthetic samples together.

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod generator;
pub mod linalg;
pub mod pipeline;
pub mod planted;
pub mod vmf;

pub use error::{Error, Result};
