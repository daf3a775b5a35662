//! Exact simulation and limit theorems for a two-queue model of
//! entanglement-assisted communication.
//!
//! A slow queue of classical messages (A) is served faster whenever a fast,
//! short-lived queue of Bell pairs (B) is nonempty. This crate provides
//!
//! * [`gillespie`]: exact event simulation of the coupled chain, occupation
//!   measures and first-passage times, plus the hitting-time MGF bound;
//! * [`fluid`]: the averaged ODE for the scaled message queue, its steady
//!   state and the effective service rate;
//! * [`fclt`]: the frozen-generator Poisson equation, the fluctuation
//!   variance profile and the limiting Gaussian process;
//! * [`stats`]: ensembles and the tests that compare Monte Carlo with the
//!   limits;
//! * [`export`]: the CSV formats written by the command-line tool.

pub mod error;
pub mod export;
pub mod fclt;
pub mod fluid;
pub mod gillespie;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{make_preset, ModelParams, Preset, PresetRates, RateFunction, ScaledState, State};
