//! Swarm-based vibration inspection of a thin steel plate.
//!
//! The pipeline runs from a finite-difference plate model, through ambient
//! vibration synthesis and a simulated robot swarm that explores by Gaussian
//! process uncertainty, to frequency domain decomposition and mode shape
//! curvature damage maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod damage;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod modal;
pub mod oma;
pub mod plate;
pub mod rng;
pub mod swarm;
pub mod vibration;

pub use error::{Error, Result};
