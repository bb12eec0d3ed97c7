//! Rule-driven repetition judging from 2D pose keypoints.

pub mod cache;
pub mod eval;
pub mod judge;
pub mod retrieval;
pub mod stats;
pub mod synth;
pub mod rules;
pub mod schema;
pub mod thresholds;
pub mod tracking;
pub mod validator;

pub use thresholds::{ThresholdConfig, ThresholdError};
