//! Numerical core of the anisotropic conductivity lab.
//!
//! The layering is strictly bottom-up:
//!
//! * [`geom`], [`quadrature`], [`linalg`] — small dense/sparse numerics.
//! * [`mesh`], [`field`] — simplicial meshes on boxes and nodal fields.
//! * [`conductivity`] — synthetic γ presets and the direct Fourier oracle.
//! * [`pde`] — quasilinear forward solver and Dirichlet-to-Neumann pairings.
//! * [`asymptotics`] — linearization experiments in the data amplitude.
//! * [`reconstruct`] — frequency-domain recovery of γ̂ from boundary data.
//! * [`driver`] — config parsing, run orchestration, CSV/manifest output.

pub mod asymptotics;
pub mod conductivity;
pub mod driver;
pub mod field;
pub mod geom;
pub mod linalg;
pub mod mesh;
pub mod pde;
pub mod quadrature;
pub mod reconstruct;
