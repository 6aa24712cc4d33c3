//! Numerical laboratory for transfer operators of expanding circle maps and
//! hyperbolic torus maps: dyadic (Paley-Littlewood) multipliers and the
//! associated isotropic/anisotropic Hölder norms, compact-plus-small operator
//! splittings, oscillatory kernel estimates, hyperbolicity exponents, and
//! dynamical Fredholm determinants cross-checked against discretized operator
//! spectra.

pub mod cones;
pub mod determinant;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fourier;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod report;
pub mod transfer;

pub use error::{CoreError, Result};
pub use grid::GridFunction;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
