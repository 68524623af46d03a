//! Synthetic sparse-precision family: Q_gamma = gamma^{-1} Q0 + gamma I
//! with Q0 a random sparse symmetric matrix of controlled spectrum.
//!
//! Q0 is built as G D G' where D is diagonal with entries in (0, 1/2] and
//! G is a short product of random Givens rotations, applied only while the
//! matrix stays sparse.  Because the diagonal is positive, Q_gamma is
//! positive definite for every gamma > 0; its spectrum is the image of
//! spec(Q0) under lambda -> lambda/gamma + gamma, which gives certified
//! quadrature bounds without any Lanczos run.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{gershgorin_interval, SparseMatrix, SpectralBounds};
use crate::{Error, Result};

use super::{GaussianModel, ModelState};

/// Random sparse symmetric Q0 = G D G' with diagonal D uniform on (0, 1/2]
/// and G a product of random Givens rotations.  Rotations are applied
/// greedily until the fill reaches about 2.5 nonzeros per row; each
/// rotation mixes two random rows/columns, so the result is neither
/// diagonal nor dense.  Deterministic per seed.
pub fn generate_random_precision(n: usize, seed: u64) -> Result<SparseMatrix> {
    if n == 0 {
        return Err(Error::Dimension("empty precision matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major map representation while fill evolves
    let mut rows: Vec<BTreeMap<usize, f64>> = (0..n).map(|_| BTreeMap::new()).collect();
    let mut nnz = 0usize;
    for (i, row) in rows.iter_mut().enumerate() {
        let d = 0.5 - rng.random_range(0.0..0.5); // uniform on (0, 1/2]
        row.insert(i, d);
        nnz += 1;
    }
    let target = ((2.5 * n as f64).ceil() as usize).max(n);
    let mut guard = 0usize;
    while nnz < target && n > 1 {
        guard += 1;
        if guard > 50 * n {
            break; // cannot happen for n > 1, but never loop forever
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        nnz = apply_symmetric_givens(&mut rows, i, j, c, s, nnz);
    }
    let mut triplets = Vec::with_capacity(nnz);
    for (i, row) in rows.iter().enumerate() {
        for (&j, &v) in row {
            triplets.push((i, j, v));
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)?.into_symmetric()
}

/// In-place Q <- G Q G' for the Givens rotation G acting on coordinates
/// (i, j) with cosine c and sine s, keeping `rows` exactly symmetric.
/// Returns the updated nonzero count.
fn apply_symmetric_givens(
    rows: &mut [BTreeMap<usize, f64>],
    i: usize,
    j: usize,
    c: f64,
    s: f64,
    mut nnz: usize,
) -> usize {
    let qii = rows[i].get(&i).copied().unwrap_or(0.0);
    let qjj = rows[j].get(&j).copied().unwrap_or(0.0);
    let qij = rows[i].get(&j).copied().unwrap_or(0.0);

    // rows/columns k outside {i, j}: (q_ik, q_jk) rotates as a 2-vector
    let union: Vec<usize> = {
        let mut ks: Vec<usize> = rows[i]
            .keys()
            .chain(rows[j].keys())
            .copied()
            .filter(|&k| k != i && k != j)
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    for k in union {
        let qik = rows[i].get(&k).copied().unwrap_or(0.0);
        let qjk = rows[j].get(&k).copied().unwrap_or(0.0);
        let new_ik = c * qik + s * qjk;
        let new_jk = -s * qik + c * qjk;
        for (a, b, v) in [(i, k, new_ik), (j, k, new_jk)] {
            if rows[a].insert(b, v).is_none() {
                nnz += 1;
            }
            if rows[b].insert(a, v).is_none() {
                nnz += 1;
            }
        }
    }

    // the 2x2 block itself
    let new_ii = c * c * qii + 2.0 * c * s * qij + s * s * qjj;
    let new_jj = s * s * qii - 2.0 * c * s * qij + c * c * qjj;
    let new_ij = c * s * (qjj - qii) + (c * c - s * s) * qij;
    if rows[i].insert(i, new_ii).is_none() {
        nnz += 1;
    }
    if rows[j].insert(j, new_jj).is_none() {
        nnz += 1;
    }
    if rows[i].insert(j, new_ij).is_none() {
        nnz += 1;
    }
    if rows[j].insert(i, new_ij).is_none() {
        nnz += 1;
    }
    nnz
}

/// Direct-observation model y = x + noise with latent precision
/// Q_gamma = gamma^{-1} Q0 + gamma I.  The single free parameter is
/// log(gamma) under a flat prior on [-20, 20]; the noise precision tau is
/// fixed.  A is the identity.
pub struct RandomPrecisionModel {
    q0: SparseMatrix,
    /// Gershgorin interval of Q0, computed once; gamma-dependent bounds are
    /// its image under lambda -> lambda/gamma + gamma.
    q0_interval: (f64, f64),
    a: SparseMatrix,
    tau: f64,
    y: Vec<f64>,
}

const LN_GAMMA_LO: f64 = -20.0;
const LN_GAMMA_HI: f64 = 20.0;

impl RandomPrecisionModel {
    pub fn new(q0: SparseMatrix, tau: f64, y: Vec<f64>) -> Result<Self> {
        if q0.n_rows() != q0.n_cols() || !q0.is_symmetric() {
            return Err(Error::NotSymmetric(
                "random-precision base matrix must be square and symmetric".into(),
            ));
        }
        if y.len() != q0.n_rows() {
            return Err(Error::Dimension(format!(
                "data length {} vs latent dimension {}",
                y.len(),
                q0.n_rows()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise precision must be positive, got {tau}"
            )));
        }
        let q0_interval = gershgorin_interval(&q0)?;
        let a = SparseMatrix::identity(q0.n_rows());
        Ok(RandomPrecisionModel { q0, q0_interval, a, tau, y })
    }

    /// Generates the base matrix from a seed and attaches data.
    pub fn from_seed(n: usize, seed: u64, tau: f64, y: Vec<f64>) -> Result<Self> {
        Self::new(generate_random_precision(n, seed)?, tau, y)
    }

    pub fn q0(&self) -> &SparseMatrix {
        &self.q0
    }

    fn gamma(params: &[f64]) -> Result<f64> {
        if params.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected 1 parameter, got {}",
                params.len()
            )));
        }
        let g = params[0].exp();
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "log gamma {} out of range",
                params[0]
            )));
        }
        Ok(g)
    }
}

impl GaussianModel for RandomPrecisionModel {
    fn family(&self) -> &'static str {
        "random_precision"
    }

    fn param_names(&self) -> &[&'static str] {
        &["ln_gamma"]
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        if params.len() == 1
            && params[0].is_finite()
            && (LN_GAMMA_LO..=LN_GAMMA_HI).contains(&params[0])
        {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.random_range(LN_GAMMA_LO..LN_GAMMA_HI)]
    }

    fn dim_latent(&self) -> usize {
        self.q0.n_rows()
    }

    fn dim_obs(&self) -> usize {
        self.y.len()
    }

    fn a_matrix(&self) -> &SparseMatrix {
        &self.a
    }

    fn a_transpose(&self) -> &SparseMatrix {
        &self.a
    }

    fn data(&self) -> &[f64] {
        &self.y
    }

    fn mean(&self, _: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn state(&self, params: &[f64]) -> Result<ModelState> {
        let gamma = Self::gamma(params)?;
        let q = self
            .q0
            .scaled(1.0 / gamma)?
            .shift_diagonal(gamma)?;
        // spec(Q_gamma) = spec(Q0)/gamma + gamma; keep the lower end away
        // from zero in case the Gershgorin lower end is negative
        let (lo0, hi0) = self.q0_interval;
        let upper = hi0.max(0.0) / gamma + gamma;
        let lower = (lo0 / gamma + gamma).max(1e-10 * upper);
        Ok(ModelState::Precision {
            q,
            tau: self.tau,
            whitener: None,
            q_bounds: Some(SpectralBounds::new(lower, upper)?),
        })
    }
}
