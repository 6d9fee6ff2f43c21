//! Duration-structured three-stage HIV transmission model.
//!
//! The host population is split into susceptibles and three infection
//! stages (primary, asymptomatic latency, AIDS), each stratified by the
//! time already spent in the stage. This crate provides:
//!
//! - [`params`]: model constants, duration-dependent rates, grids;
//! - [`kernels`]: stage survival kernels, the basic reproduction number
//!   and both equilibria in closed form;
//! - [`simulator`]: the transport solver for the base model along
//!   characteristics;
//! - [`control`]: the eight-compartment extension with ART control
//!   routing;
//! - [`optimizer`]: objective, discrete adjoint, control characterization
//!   and the forward-backward sweep;
//! - [`sensitivity`]: full-factorial designs with exact ANOVA variance
//!   decomposition.
//!
//! The crate is `no_std` (with `alloc`); all file formats, configuration
//! and parallel sweep scheduling live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cells;
pub mod control;
pub mod kernels;
pub mod math;
pub mod optimizer;
pub mod params;
pub mod sensitivity;
pub mod simulator;

pub use params::{AgeGrid, ModelParams, Stage};
