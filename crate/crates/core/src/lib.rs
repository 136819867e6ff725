//! Finite-element toolkit for gastric slow-wave electrophysiology and
//! electromechanics.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: line and triangle meshes, generators, native and VTK I/O.
//! - [`fem`]: P1 element kernels, stiffness and lumped mass.
//! - [`linalg`]: CSR matrices, preconditioned conjugate gradients and a banded LU.
//! - [`cell_model`]: two-variable Mitchell-Schaeffer type cell model for ICC and SMC.
//! - [`harmonic`]: Laplace-Dirichlet coordinates, gradients and fiber frames.
//! - [`params`]: heterogeneous excitability, weighting and diffusivity fields.
//! - [`ep`]: coupled ICC/SMC monodomain solver.
//! - [`mixture`]: constrained-mixture point model with active strain and prestress.
//! - [`axisym`]: reduced axisymmetric thin-wall solver for the cylinder benchmark.
//! - [`analysis`]: frequencies, activation times, conduction velocity, isochrones.
//! - [`presets`]: the line, cylinder and torus benchmark scenarios.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod axisym;
pub mod cell_model;
pub mod ep;
pub mod error;
pub mod fem;
pub mod harmonic;
pub mod linalg;
pub mod mesh;
pub mod mixture;
pub mod params;
pub mod presets;

pub use error::{Error, Result};

/// Conversion factor from mmHg to kPa.
pub const MMHG_TO_KPA: f64 = 0.133322;
