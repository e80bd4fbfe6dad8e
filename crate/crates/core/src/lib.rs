//! Numerical engine for overdamped dynamic density functional theory with
//! two-body hydrodynamic interactions.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation on a uniform cell-centered mesh: IO, config files and the
//! command line live in the companion `ddft` crate.
//!
//! Layout:
//! - [`grid`]: mesh, fields, quadrature, differencing, divergence.
//! - [`convolve`]: dense nonlocal convolutions on the mesh.
//! - [`model`]: potentials and hydrodynamic tensor kernels.
//! - [`nonlocal`]: diffusion tensor, HI operator, flux solver, spectra.
//! - [`energy`]: free energy, its derivative, dissipation, flux functional.
//! - [`dynamics`]: positivity-preserving time stepping.
//! - [`equilibrium`]: self-consistent Gibbs fixed point and decay rates.
//! - [`particles`]: Brownian particle oracle.
//! - [`diagnostics`]: trajectory records and envelope checks.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is deliberate: it also rejects NaN. Index loops mirror the
// stencils they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod convolve;
pub mod diagnostics;
pub mod dynamics;
pub mod energy;
pub mod equilibrium;
mod error;
pub mod grid;
pub mod linalg;
pub(crate) mod math;
pub mod model;
pub mod nonlocal;
pub mod particles;

pub use error::{Error, Result};
pub use grid::{FaceFluxField, Field, Grid, VectorField};
pub use model::{KernelKind, KernelSpec, Model, Modulation, TensorKernelSpec, TensorStructure};
