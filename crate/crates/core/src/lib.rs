//! Path-based entity graphs and a question-gated relational graph network
//! for multi-document, multiple-choice reading comprehension.
//!
//! The pipeline runs in five stages:
//!
//! - [`ingest`] parses samples, tokenizes supports and locates mentions.
//! - [`graph`] extracts subject-to-candidate reasoning paths and builds the
//!   typed entity graph.
//! - [`model`] embeds nodes, runs the gated graph network and scores
//!   candidates.
//! - [`train`] fits parameters with Adam and evaluates accuracy.
//! - [`synth`] generates multi-hop corpora with known answers.

pub mod embed;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
