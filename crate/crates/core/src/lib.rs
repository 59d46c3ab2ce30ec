//! Adaptive keyframe motion tracking on a deterministic planar character.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`motion`]: phase-parameterized reference motions, procedural generation,
//!   keyframe selection and parametric editing.
//! - [`sim`]: planar articulated rigid-body simulation with penalty contacts,
//!   PD actuation and domain randomization.
//! - [`rewards`]: sparse global / dense local reward groups.
//! - [`nets`]: small MLPs with exact reverse-mode gradients, Gaussian heads,
//!   observation normalization and checkpointing.
//! - [`envs`]: the tracking environment tying sim + motion + rewards together.
//! - [`trainer`]: PPO with per-group GAE and double critics (stage 1).
//! - [`adapters`]: phase / tracking adapters over a frozen base (stage 2).
//! - [`eval`]: metrics, adaptation sweeps and method comparison tables.
//! - [`config`]: the experiment configuration all commands consume.

pub mod adapters;
pub mod config;
pub mod envs;
pub mod eval;
pub mod motion;
pub mod nets;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod sim;
pub mod tasks;
pub mod trainer;
