//! Natural-language object retrieval.
//!
//! Scores candidate boxes in an image by the likelihood a recurrent language model assigns
//! to a text query, conditioned on the box's visual feature, its spatial configuration, and
//! a whole-image context feature.

pub mod cli;
pub mod datastore;
mod error;
pub mod evalmetrics;
pub mod geometry;
pub mod gradcheck;
pub mod model;
pub mod nncore;
pub mod retrieval;
pub mod synth;
pub mod textproc;
pub mod train;

pub use error::{Result, ScrcError};
