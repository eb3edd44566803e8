//! Simulation lab for buffer-driven bitrate adaptation of tiled 360-degree
//! video.
//!
//! The crate covers the media model, the per-chunk decision rule and its
//! practical variants, a set of comparison algorithms, an event-driven
//! session simulator, an offline dynamic-programming bound and a seeded
//! multi-trial experiment harness.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod baselines;
pub mod bola;
pub mod error;
pub mod experiment;
pub mod head;
pub mod heuristics;
pub mod media;
pub mod oracle;
pub mod predictor;
pub mod report;
pub mod sim;
pub mod trace;

pub use algorithm::{AbrAlgorithm, Action, AlgoParams, AlgorithmId, AlgorithmSpec, DecisionContext, Wait};
pub use bola::{decide_chunk, BolaParams, DecisionVector, WaitPolicy};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutput, TrialResultRow};
pub use head::{HeadModel, ProfileSpec};
pub use media::{BitrateLadder, BitrateLevel, VideoSpec};
pub use oracle::{dp_off, OracleConfig, OracleResult};
pub use sim::{compute_metrics, run_session, simulate, SessionConfig, SessionLog, SessionMetrics};
pub use trace::BandwidthTrace;
