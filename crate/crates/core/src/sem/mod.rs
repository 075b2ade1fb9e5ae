//! Spectral-element building blocks: the GLL rule, element fields and
//! geometric factors, the direct Ax oracle and the flop model.

pub mod ax;
pub mod basis;
pub mod field;

pub use ax::{ax_reference, ax_with_matrices, dense_assemble, flops_model, DenseMatrix};
pub use basis::{gll_basis, legendre_eval, DerivativeMatrices, GllBasis};
pub use field::{box_geometry, random_spd_geometry, ElementField, GeomFactors};
