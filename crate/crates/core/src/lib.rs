//! Driving-style segmentation with a sticky HDP-HMM.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] parses kinematic logs (`t, v_f, v_l, a_f, a_l`) from CSV or
//!    KITTI oxts records into a uniformly sampled [`ingest::DrivingSeries`].
//! 2. [`sticky`] fits a weak-limit sticky HDP-HMM with a blocked Gibbs
//!    sampler; the occupied states are the driving-style clusters.
//! 3. [`ranking`] orders clusters by urgency from the sign pattern of their
//!    forward acceleration and whether the vehicle comes to a stop.
//! 4. [`scenario`] joins per-frame scene features from 3D bounding-box labels
//!    with the ranked clusters and reports how speed co-varies with them.
//!
//! [`hmm`] holds the finite-state primitives the sampler is built on, and
//! [`synth`] / [`eval`] provide the synthetic-recovery harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod gaussian;
pub mod hmm;
pub mod ingest;
pub mod ranking;
pub mod rng;
pub mod scenario;
pub mod segment;
pub mod sticky;
pub mod synth;

/// Number of kinematic channels: forward/leftward velocity and acceleration.
pub const CHANNELS: usize = 4;

/// Channel names in storage order.
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["v_f", "v_l", "a_f", "a_l"];
