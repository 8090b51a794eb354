//! Neumann Laplacian spectra on irregular domains: rasterized domains and
//! boundary geometry, a finite-volume Neumann form, a shift-invert sparse
//! eigensolver, heat-kernel bounds, Sobolev/Hardy constant estimates and
//! eigenvalue stability under boundary perturbations.

pub mod error;
pub mod expr;
pub mod fit;
pub mod eigen;
pub mod geometry;
pub mod linalg;
pub mod whitney;
pub mod heat;
pub mod inequalities;
pub mod operator;
pub mod perturbation;
pub mod report;

pub use error::{Error, Result};
