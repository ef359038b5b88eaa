//! Multi-source AMP over random semi-unitary dictionaries, with the
//! two-time state-evolution predictor, detection/channel-estimation scoring
//! for unsourced random access, the genie-aided MMSE benchmark, and a
//! lazy-frame oracle that reproduces the residual dynamics in law.
//!
//! Everything is deterministic under one master seed: each consumer derives
//! a named substream via [`rng::stream`]. Simulated quantities come paired
//! with computable predictions, and [`validate`] holds the self-check
//! battery that gates a build.

pub mod error;
pub mod linalg;
pub mod rng;
pub mod stats;
pub mod dictionary;
pub mod model;
pub mod denoiser;
pub mod state_evolution;
pub mod amp;
pub mod detection;
pub mod oracle;
pub mod validate;
pub mod cli;
