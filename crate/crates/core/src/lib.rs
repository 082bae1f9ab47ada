//! Cubature formulae on Wiener space.
//!
//! The pipeline builds weighted sets of piecewise-linear paths whose expected
//! truncated signatures match Brownian motion up to a chosen degree:
//! orthogonal arrays give an initial path set, recombination shrinks it,
//! a linear program sharpens the weights, and dyadic products extend the
//! match to subintervals. The [`sde`] and [`sim`] modules compare the result
//! against Monte Carlo and quasi-Monte Carlo on models with known statistics.

pub mod cubature;
pub mod error;
pub mod linalg;
pub mod oa;
pub mod path;
pub mod quad;
pub mod recombine;
pub mod sde;
pub mod sharpen;
pub mod sim;
pub mod tensor;

pub use cubature::{BuildOptions, CubatureFormula};
pub use error::{Error, Result};
pub use path::PiecewiseLinearPath;
pub use tensor::{GradedTensor, Word, WordBasis};
