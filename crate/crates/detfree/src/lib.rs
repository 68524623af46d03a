//! Determinant-free MCMC for covariance parameters of high-dimensional
//! linear Gaussian models.
//!
//! The target is the posterior of covariance parameters theta for
//!
//! ```text
//! y = A x + eps,    x ~ N(mu_theta, Sigma_theta),    eps ~ N(0, tau^-1 I)
//! ```
//!
//! so that marginally `y ~ N(A mu_theta, S_theta)` with
//! `S_theta = tau^-1 I + A Sigma_theta A^T`. Instead of evaluating
//! `log |S_theta|` with a Cholesky factorization, the sampler augments the
//! state with an auxiliary Gaussian variable `z ~ N(0, S_theta^-1)` whose
//! normalizing constant cancels the marginal likelihood determinant. The
//! only remaining primitive is the application of `S_theta^-(1/2)` (or of
//! the analogous latent-precision root) to a vector, done with a rational
//! approximation whose shifted linear systems are solved by a single
//! multi-shift conjugate gradient sweep.
//!
//! Modules:
//! - [`linalg`]: CSR sparse matrices, dense and banded Cholesky, spectral
//!   bounds, Matrix Market I/O.
//! - [`krylov`]: conjugate gradients and the shifted-family variant.
//! - [`rational`]: Jacobi elliptic functions and the inverse square root
//!   quadrature.
//! - [`models`]: the Gaussian model families (random sparse precision,
//!   compactly supported Wendland GP, lattice GMRF with whitening).
//! - [`mcmc`]: the two-block auxiliary sampler and the Cholesky baseline.
//! - [`diagnostics`]: effective sample size and chain summaries.
//! - [`cli`]: config parsing and the simulate/run/compare/ess commands.

pub mod cli;
pub mod diagnostics;
mod error;
pub mod krylov;
pub mod linalg;
pub mod mcmc;
pub mod models;
pub mod rational;

pub use error::{Error, Result};
