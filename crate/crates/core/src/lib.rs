//! Simulation, demonstration processing and action-diffusion policy for
//! robotic mortise-and-tenon insertion.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation.
//! File formats, the teleoperation server and the command line live in the
//! `joinery` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod demo;
pub mod eval;
pub mod policy;
pub mod rotation;
pub mod seed;
pub mod sim;
