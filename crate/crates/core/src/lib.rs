//! Spectral regularization filters, exact worst-case total error on diagonal
//! operator models, numerical hypothesis checks and saturation experiments.

// `!(x > 0.0)` is how NaN gets rejected along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod config;
pub mod error;
pub mod filters;
pub mod grid;
pub mod hypotheses;
pub mod qualification;
pub mod rng;
pub mod satlab;
pub mod spectral;
pub mod toterr;

pub use error::{Error, Result};
pub use filters::{FamilySpec, FilterFamily};
pub use grid::{log_space, DeltaGridSpec, Grids};
pub use spectral::{IndexFunction, SpectralElement, SpectralOperator, SpectrumSpec};
