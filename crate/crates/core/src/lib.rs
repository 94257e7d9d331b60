//! In-cabin presence classification from WiFi channel state information.
//!
//! The pipeline runs in four stages:
//!
//! * [`sim`] synthesizes labelled multipath CSI recordings (empty cabin,
//!   child, adult) and scenario banks with disjoint train/test environments.
//! * [`features`] turns each analysis window into an `l x N_s` matrix of
//!   per-subcarrier autocorrelations of the channel power.
//! * [`model`] classifies that matrix with an autocorrelation-attention
//!   encoder and an MLP head, with hand-derived gradients.
//! * [`train`] and [`eval`] run two-stage training with link augmentations,
//!   then report smoothed decisions and metrics.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod seed;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use features::{AcfParams, AcfSample, Provenance};
pub use model::{ModelConfig, ModelParams};
pub use sim::{Class, CsiRecording, ScenarioConfig, Split};
