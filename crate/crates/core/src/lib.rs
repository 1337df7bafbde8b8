//! Humans-in-the-loop detection and analysis of job-related short messages.

pub mod analytics;
pub mod annotation;
pub mod corpus;
pub mod error;
pub mod lexicon;
pub mod model;
pub mod pipeline;
pub mod service;
pub mod topics;

pub use error::{Error, Result};
