//! Numerical verification of monotonicity, multiplicity, diameter and Sobolev
//! inequalities for sampled varifolds in constant-curvature model spaces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod comparison;
pub mod error;
pub mod immersion;
pub mod inequalities;
pub mod model_space;
pub mod quadrature;
pub mod varifold;

pub use error::{GeomError, Result};
pub use inequalities::{InequalityReport, Verdict};
pub use model_space::{Isometry, ModelSpace, Point, TangentPlane, TangentVector};
pub use varifold::{BallMode, Est, RefineOptions, SampledVarifold};
