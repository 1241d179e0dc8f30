//! Unsupervised aspect-oriented opinion mining.
//!
//! Given a review sentence and an aspect term, the pipeline proposes opinion
//! candidates from dependency patterns, picks the candidate the aspect
//! attends to most in the encoder's lower layers, and labels its polarity by
//! cosine similarity to label-word embeddings.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod polarity;
pub mod selector;
pub mod syntax;
pub mod text;

pub use corpus::Polarity;
pub use error::{Error, ErrorKind, Result};
