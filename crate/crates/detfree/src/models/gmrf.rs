//! Lattice Markov random field observed through bilinear interpolation.
//!
//! The latent field lives on an nx-by-ny grid with precision
//! Q = gamma^{-2} L^2, where L is the 5-point Dirichlet Laplacian of the
//! grid.  Because L is banded and its Cholesky factor is computed once,
//! latent draws and Q^{-1} applies are exact triangular solves — this
//! family never needs the rational approximation.  Observations sit at
//! arbitrary points of the unit square and A carries bilinear weights.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{banded_factorize, BandedFactor, SparseMatrix, SpectralBounds};
use crate::{Error, Result};

use super::{matrix_bandwidth, GaussianModel, ModelState, Whitener};

/// 5-point stencil Laplacian with Dirichlet boundary: 4 on the diagonal,
/// -1 for each in-grid 4-neighbor, nodes in row-major order
/// (index = iy * nx + ix).  Positive definite for every grid size.
pub fn build_grid_laplacian(nx: usize, ny: usize) -> Result<SparseMatrix> {
    if nx == 0 || ny == 0 {
        return Err(Error::Dimension("grid must have positive extent".into()));
    }
    let n = nx * ny;
    let mut t = Vec::with_capacity(5 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            let idx = iy * nx + ix;
            t.push((idx, idx, 4.0));
            if ix > 0 {
                t.push((idx, idx - 1, -1.0));
            }
            if ix + 1 < nx {
                t.push((idx, idx + 1, -1.0));
            }
            if iy > 0 {
                t.push((idx, idx - nx, -1.0));
            }
            if iy + 1 < ny {
                t.push((idx, idx + nx, -1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &t)?.into_symmetric()
}

/// Exact spectrum interval of the Dirichlet 5-point Laplacian:
/// its eigenvalues are 4 - 2cos(p pi/(nx+1)) - 2cos(q pi/(ny+1)).
pub fn grid_laplacian_spectrum_interval(nx: usize, ny: usize) -> (f64, f64) {
    let fx = |p: usize| 2.0 - 2.0 * (p as f64 * std::f64::consts::PI / (nx as f64 + 1.0)).cos();
    let fy = |q: usize| 2.0 - 2.0 * (q as f64 * std::f64::consts::PI / (ny as f64 + 1.0)).cos();
    (fx(1) + fy(1), fx(nx) + fy(ny))
}

fn axis_weights(coord: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let g = coord * (n - 1) as f64;
    let mut i0 = g.floor() as usize;
    if i0 > n - 2 {
        i0 = n - 2; // coord == 1.0 lands on the last cell with frac 1
    }
    (i0, g - i0 as f64)
}

/// Bilinear interpolation matrix: row k holds the weights that evaluate a
/// grid function at `points[k]`.  Points must lie in the closed unit
/// square; the grid spans it with node (ix, iy) at
/// (ix/(nx-1), iy/(ny-1)).  Zero weights are not stored.
pub fn build_interpolation(
    points: &[[f64; 2]],
    nx: usize,
    ny: usize,
) -> Result<SparseMatrix> {
    if nx == 0 || ny == 0 {
        return Err(Error::Dimension("grid must have positive extent".into()));
    }
    let mut t = Vec::with_capacity(4 * points.len());
    for (k, &[px, py]) in points.iter().enumerate() {
        if !((0.0..=1.0).contains(&px) && (0.0..=1.0).contains(&py)) {
            return Err(Error::InvalidArgument(format!(
                "observation point ({px}, {py}) lies outside the unit square"
            )));
        }
        let (ix0, fx) = axis_weights(px, nx);
        let (iy0, fy) = axis_weights(py, ny);
        for (dx, wx) in [(0usize, 1.0 - fx), (1, fx)] {
            if wx == 0.0 || nx == 1 && dx == 1 {
                continue;
            }
            for (dy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
                if wy == 0.0 || ny == 1 && dy == 1 {
                    continue;
                }
                t.push((k, (iy0 + dy) * nx + (ix0 + dx), wx * wy));
            }
        }
    }
    SparseMatrix::from_triplets(points.len(), nx * ny, &t)
}

/// Grid MRF with Q = gamma^{-2} L^2 and free parameters
/// [ln_tau, ln_gamma] under flat priors on [-20, 20].  The banded Cholesky
/// factor of L is computed once and shared across parameter values.
pub struct GmrfWhiteningModel {
    laplacian: SparseMatrix,
    laplacian_squared: SparseMatrix,
    factor: Arc<BandedFactor>,
    spectrum: (f64, f64),
    a: SparseMatrix,
    a_t: SparseMatrix,
    y: Vec<f64>,
}

const PARAM_NAMES: [&str; 2] = ["ln_tau", "ln_gamma"];
const PRIOR_LO: f64 = -20.0;
const PRIOR_HI: f64 = 20.0;

impl GmrfWhiteningModel {
    pub fn new(nx: usize, ny: usize, points: &[[f64; 2]], y: Vec<f64>) -> Result<Self> {
        if y.len() != points.len() {
            return Err(Error::Dimension(format!(
                "{} observations for {} points",
                y.len(),
                points.len()
            )));
        }
        let laplacian = build_grid_laplacian(nx, ny)?;
        let laplacian_squared = laplacian.matmul(&laplacian)?.into_symmetric()?;
        let factor = Arc::new(banded_factorize(
            &laplacian,
            matrix_bandwidth(&laplacian),
        )?);
        let a = build_interpolation(points, nx, ny)?;
        let a_t = a.transpose();
        Ok(GmrfWhiteningModel {
            laplacian,
            laplacian_squared,
            factor,
            spectrum: grid_laplacian_spectrum_interval(nx, ny),
            a,
            a_t,
            y,
        })
    }

    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    fn gamma_tau(params: &[f64]) -> Result<(f64, f64)> {
        if params.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "expected 2 parameters, got {}",
                params.len()
            )));
        }
        let tau = params[0].exp();
        let gamma = params[1].exp();
        if ![tau, gamma].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameters {params:?} exponentiate out of range"
            )));
        }
        Ok((gamma, tau))
    }
}

impl GaussianModel for GmrfWhiteningModel {
    fn family(&self) -> &'static str {
        "gmrf_whitening"
    }

    fn param_names(&self) -> &[&'static str] {
        &PARAM_NAMES
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        if params.len() == 2
            && params
                .iter()
                .all(|p| p.is_finite() && (PRIOR_LO..=PRIOR_HI).contains(p))
        {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..2).map(|_| rng.random_range(PRIOR_LO..PRIOR_HI)).collect()
    }

    fn dim_latent(&self) -> usize {
        self.laplacian.n_rows()
    }

    fn dim_obs(&self) -> usize {
        self.y.len()
    }

    fn a_matrix(&self) -> &SparseMatrix {
        &self.a
    }

    fn a_transpose(&self) -> &SparseMatrix {
        &self.a_t
    }

    fn data(&self) -> &[f64] {
        &self.y
    }

    fn mean(&self, _: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn state(&self, params: &[f64]) -> Result<ModelState> {
        let (gamma, tau) = Self::gamma_tau(params)?;
        let q = self.laplacian_squared.scaled(1.0 / (gamma * gamma))?;
        let (lo, hi) = self.spectrum;
        let bounds = SpectralBounds::new((lo / gamma).powi(2), (hi / gamma).powi(2))?;
        Ok(ModelState::Precision {
            q,
            tau,
            whitener: Some(Whitener::new(self.factor.clone(), gamma)?),
            q_bounds: Some(bounds),
        })
    }
}
