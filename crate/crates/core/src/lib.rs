//! Numerical laboratory for the nonlinear stability of viscous shock
//! profiles and semilinear fronts.
//!
//! The crate is organised bottom-up: [`model`] describes the PDE, [`profile`]
//! solves for the standing wave, [`linop`] and [`spectral`] discretize and
//! decompose the linearization, [`csm`] builds center-stable manifolds by a
//! truncated Lyapunov–Perron iteration, [`evolve`] integrates the nonlinear
//! equations, [`tracking`] computes the shock location from the Green-kernel
//! formula and [`lab`] wires everything into experiments and file outputs.

pub mod banded;
pub mod csm;
pub mod disc;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod lab;
pub mod linop;
pub mod model;
pub mod profile;
pub mod special;
pub mod spectral;
pub mod tracking;

pub use error::{Error, Result};
pub use grid::{BoundaryCondition, Grid1D};
