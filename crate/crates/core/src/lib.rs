//! Hybridizable discontinuous Galerkin and weak Galerkin solvers for the
//! 2-D diffusion problem, statically condensed to a face-based SPD trace
//! system, with a two-level preconditioner (point smoother plus a
//! conforming piecewise-linear auxiliary-space correction), spectral
//! diagnostics, and a batch experiment harness.

pub mod auxspace;
pub mod cli;
pub mod elements;
pub mod hdg;
pub mod mesh;
pub mod solvers;
pub mod sparse;
pub mod verify;
