//! Sparse and dense linear algebra: CSR matrices, Cholesky factorizations
//! (dense and banded), matrix-free operators with spectral bound estimation,
//! and Matrix Market I/O.

pub mod banded;
pub mod dense;
pub mod matrix_market;
pub mod operator;
pub mod sparse;

pub use banded::{banded_factorize, BandedFactor};
pub use dense::{dense_cholesky, logdet_from_cholesky, DenseFactor, DenseMatrix};
pub use matrix_market::{read_matrix_market, write_matrix_market};
pub use operator::{
    gershgorin_bounds, gershgorin_interval, lanczos_extremes, LinearOperator, ShiftedOperator,
    SpectralBounds,
};
pub use sparse::SparseMatrix;
