//! The spatial-context recurrent scoring network.
//!
//! A language LSTM reads the query; a local LSTM sees `[h_language, x_box, x_spatial]` and a
//! global LSTM sees `[h_language, x_context]`. Next-word scores are
//! `W_local h_local + W_global h_global + r`, and a box is scored by the log-likelihood of
//! the query under that distribution.

mod beam;
mod config;
mod network;
mod params;

pub use beam::{emittable_tokens, Generated};
pub use config::ScrcConfig;
pub use network::{DecoderState, ForwardTrace, ScoreRequest, ScrcModel, StepOutput, StepTrace, VisualInput};
pub use params::{ScrcParams, INIT_RADIUS};
