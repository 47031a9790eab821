//! Simultaneous two-phase elastic shape optimization on a periodic unit cell.
//!
//! A nodal phase field `v` on a uniform periodic grid splits the cell into two
//! elastic phases. Each phase is homogenized under a set of affine load cases
//! (with the complementary region replaced by a soft material scaled by
//! `delta`), and the optimizer minimizes the worse of the two phases' load
//! costs plus a Modica–Mortola interface penalty.
//!
//! Module map:
//!
//! - [`mesh`]: periodic grid, trilinear shape functions, Simpson quadrature, prolongation
//! - [`material`]: isotropic Lamé algebra
//! - [`phase_field`]: phase interpolation and the interface energy
//! - [`elasticity`]: periodic corrector problems solved with Jacobi-preconditioned CG
//! - [`homogenize`]: effective stiffness components and volume fractions
//! - [`objective`]: worst-case multi-load cost with its analytic gradient
//! - [`optimizer`]: projected descent with center-of-mass constraints and continuation
//! - [`config`], [`output`], [`postprocess`], [`gradcheck`]: experiment plumbing

pub mod config;
pub mod elasticity;
pub mod error;
pub mod gradcheck;
pub mod homogenize;
pub mod material;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod output;
pub mod phase_field;
pub mod postprocess;

pub use error::{Error, Result};
pub use material::{IsotropicMaterial, SymTensor};
pub use mesh::PeriodicMesh;
pub use phase_field::PhaseField;
