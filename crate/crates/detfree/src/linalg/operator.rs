use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

use super::sparse::SparseMatrix;

/// Matrix-free symmetric positive definite operator: a dimension and a
/// matrix-vector product. Implementations must be linear; the test suite
/// probes apply(a x + b y) against a apply(x) + b apply(y).
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.n_rows(), self.n_cols());
        self.n_rows()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.spmv_into(x, out).expect("operator dimensions checked");
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
}

/// op + shift * I.
pub struct ShiftedOperator<'a, O: ?Sized> {
    op: &'a O,
    shift: f64,
}

impl<'a, O: LinearOperator + ?Sized> ShiftedOperator<'a, O> {
    pub fn new(op: &'a O, shift: f64) -> Self {
        ShiftedOperator { op, shift }
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for ShiftedOperator<'_, O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.shift * xi;
        }
    }
}

/// Interval [lower, upper] known to contain the operator spectrum,
/// with 0 < lower <= upper enforced at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    lower: f64,
    upper: f64,
}

impl SpectralBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower <= 0.0 || lower > upper {
            return Err(Error::InvalidArgument(format!(
                "spectral bounds must satisfy 0 < lower <= upper, got [{lower:.3e}, {upper:.3e}]"
            )));
        }
        Ok(SpectralBounds { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// Raw Gershgorin interval (min_i of a_ii - r_i, max_i of a_ii + r_i) with
/// r_i the off-diagonal absolute row sum. The lower end may be negative.
pub fn gershgorin_interval(m: &SparseMatrix) -> Result<(f64, f64)> {
    if !m.is_symmetric() {
        return Err(Error::NotSymmetric(
            "Gershgorin bounds require the symmetric flag".into(),
        ));
    }
    let n = m.n_rows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let (cols, vals) = m.row(i);
        let mut diag = 0.0;
        let mut radius = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                radius += v.abs();
            }
        }
        lo = lo.min(diag - radius);
        hi = hi.max(diag + radius);
    }
    Ok((lo, hi))
}

/// Gershgorin spectral bounds for a symmetric matrix with positive upper
/// bound. The lower bound is floored at 1e-10 * upper so that a diagonally
/// non-dominant but SPD matrix still yields usable bounds.
pub fn gershgorin_bounds(m: &SparseMatrix) -> Result<SpectralBounds> {
    let (lo, hi) = gershgorin_interval(m)?;
    if hi <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Gershgorin upper bound {hi:.3e} is not positive"
        )));
    }
    let floor = 1e-10 * hi;
    SpectralBounds::new(lo.max(floor), hi)
}

/// Extreme eigenvalue estimates by plain Lanczos (no reorthogonalization),
/// expanded by a 10% safety margin on each side. A vanishing continuation
/// vector means the Krylov space is invariant, so the Ritz extremes found so
/// far are exact and iteration stops early; `LanczosBreakdown` is reserved
/// for non-finite recurrence values.
pub fn lanczos_extremes<O: LinearOperator + ?Sized>(
    op: &O,
    iters: usize,
    seed: u64,
) -> Result<SpectralBounds> {
    let n = op.dim();
    if iters < 2 {
        return Err(Error::InvalidArgument("lanczos_extremes needs iters >= 2".into()));
    }
    if n == 0 {
        return Err(Error::Dimension("empty operator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = l2(&v);
    v.iter_mut().for_each(|x| *x /= norm);

    let steps = iters.min(n);
    let mut v_prev = vec![0.0; n];
    let mut beta_prev = 0.0;
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut w = vec![0.0; n];
    for step in 0..steps {
        op.apply_into(&v, &mut w);
        let alpha = dot(&v, &w);
        if !alpha.is_finite() {
            return Err(Error::LanczosBreakdown { step });
        }
        for i in 0..n {
            w[i] -= alpha * v[i] + beta_prev * v_prev[i];
        }
        alphas.push(alpha);
        let beta = l2(&w);
        if !beta.is_finite() {
            return Err(Error::LanczosBreakdown { step });
        }
        let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
        if beta <= 1e-13 * scale || step + 1 == steps {
            break;
        }
        betas.push(beta);
        std::mem::swap(&mut v_prev, &mut v);
        for i in 0..n {
            v[i] = w[i] / beta;
        }
        beta_prev = beta;
    }

    let (ritz_min, ritz_max) = tridiag_extremes(&alphas, &betas);
    let upper = ritz_max + 0.1 * ritz_max.abs();
    if upper <= 0.0 {
        return Err(Error::InvalidArgument(
            "operator appears negative semidefinite".into(),
        ));
    }
    let mut lower = ritz_min - 0.1 * ritz_min.abs();
    let floor = 1e-10 * upper;
    if lower < floor {
        lower = floor;
    }
    SpectralBounds::new(lower, upper)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Extreme eigenvalues of a symmetric tridiagonal matrix by Sturm-sequence
/// bisection. The negative-pivot count of T - x I is the number of
/// eigenvalues below x.
fn tridiag_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    debug_assert!(betas.len() + 1 >= k);
    // Gershgorin box for T
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let left = if i > 0 { betas[i - 1].abs() } else { 0.0 };
        let right = if i < betas.len() && i + 1 < k {
            betas[i].abs()
        } else {
            0.0
        };
        lo = lo.min(alphas[i] - left - right);
        hi = hi.max(alphas[i] + left + right);
    }
    if k == 1 {
        return (alphas[0], alphas[0]);
    }
    let count_below = |x: f64| -> usize {
        let mut count = 0usize;
        let mut d = alphas[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..k {
            let b2 = betas[i - 1] * betas[i - 1];
            let mut denom = d;
            if denom.abs() < 1e-300 {
                denom = -1e-300;
            }
            d = alphas[i] - x - b2 / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bisect = |target_below: usize| -> f64 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if count_below(mid) >= target_below {
                b = mid;
            } else {
                a = mid;
            }
            if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(k))
}
