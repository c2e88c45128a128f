//! Elastodynamics on triangle meshes with a three-level timestep solver:
//! a per-object affine subspace, a sparse material-aware skinning subspace
//! built from clipped biharmonic weights on a stiffness-aware mesh
//! partition, and a short lagged-Hessian conjugate-gradient refinement in
//! the full space. Elastic Hessians are approximated with per-partition
//! moment-fitted cubature so subspace iterations never touch every element.
//!
//! The crate is organized bottom-up:
//! - [`mesh`], [`operators`]: geometry, materials, mass/Laplacian assembly
//! - [`energy`], [`contact`]: incremental potential, barriers, step filters
//! - [`geodesics`], [`partition`], [`subspace`], [`cubature`]: precompute
//! - [`pcg`], [`solver`], [`reference`]: the solvers themselves
//! - [`scene`], [`sim`]: scene files, the timestep driver, and output

pub mod contact;
pub mod cubature;
pub mod energy;
pub mod error;
pub mod geodesics;
pub mod mesh;
pub mod operators;
pub mod partition;
pub mod pcg;
pub mod reference;
pub mod scene;
pub mod sim;
pub mod solver;
pub mod sparse;
pub mod subspace;

pub use error::SimError;
