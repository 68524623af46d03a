//! Conjugate-gradient solvers for symmetric positive definite systems: a
//! plain CG and a multi-shift CG that solves the whole family
//! (A + sigma_j I) x_j = b with a single Krylov sequence, i.e. one operator
//! apply per iteration regardless of how many shifts are requested.
//!
//! The multi-shift recurrences exploit that Krylov residuals for shifted
//! systems stay collinear with the seed residual: r_k^sigma = zeta_k r_k with
//! a scalar zeta_k that obeys a three-term recurrence in the seed step sizes
//! (Jegerlehner, "Krylov space solvers for shifted linear systems", 1996).
//! For sigma >= 0 the factors satisfy 0 < zeta_k <= 1, so convergence of the
//! seed system bounds every shifted residual, and the seed residual is what
//! the stopping rule monitors.

use crate::linalg::{LinearOperator, ShiftedOperator};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Relative residual target: stop once ||r|| <= tol * ||b||.
    pub tol: f64,
    /// Iteration cap; defaults to 10 * dim when unset.
    pub max_iters: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iters: None,
        }
    }
}

impl SolverConfig {
    fn cap(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or(10 * dim)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    /// Final seed-system residual norm ||b - A x||.
    pub residual_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves A x = b for SPD `op`. Returns `Ok` with `converged == false` if the
/// iteration cap is hit; errors only on structural problems (dimension
/// mismatch, non-finite input, detected indefiniteness).
pub fn cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match operator dimension {n}",
            b.len()
        )));
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("rhs contains non-finite values".into()));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                converged: true,
                residual_norm: 0.0,
            },
        ));
    }
    let threshold = config.tol * b_norm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut q = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let cap = config.cap(n);
    let mut iterations = 0;
    while iterations < cap && rr.sqrt() > threshold {
        op.apply_into(&p, &mut q);
        let pap = dot(&p, &q);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "curvature p'Ap = {pap:.3e} at iteration {iterations}"
            )));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for i in 0..n {
            r[i] -= alpha * q[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    let residual_norm = rr.sqrt();
    Ok((
        x,
        SolveStats {
            iterations,
            converged: residual_norm <= threshold,
            residual_norm,
        },
    ))
}

/// Solves (A + sigma_j I) x_j = b for every shift in `shifts` using one
/// Krylov sequence. Shifts must be finite, non-negative and sorted in
/// increasing order. The smallest shift is folded into the operator, so the
/// seed system is the best-conditioned member of the family and the
/// recurrence handles the non-negative offsets to the rest.
///
/// With a single shift of zero this performs exactly the arithmetic of
/// [`cg_solve`] and returns bit-identical iterates.
pub fn shifted_cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    shifts: &[f64],
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<Vec<f64>>, SolveStats)> {
    if shifts.is_empty() {
        return Err(Error::InvalidArgument("shift list is empty".into()));
    }
    for w in shifts.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::InvalidArgument(
                "shifts must be sorted in increasing order".into(),
            ));
        }
    }
    if !shifts[0].is_finite() || shifts[0] < 0.0 || !shifts[shifts.len() - 1].is_finite() {
        return Err(Error::InvalidArgument(
            "shifts must be finite and non-negative".into(),
        ));
    }

    let base = shifts[0];
    if base == 0.0 {
        shifted_cg_inner(op, shifts, b, config)
    } else {
        let folded = ShiftedOperator::new(op, base);
        shifted_cg_inner(&folded, shifts, b, config)
    }
}

/// Multi-shift CG where `shifts[0]` is already folded into `op`; the working
/// offsets are `shifts[j] - shifts[0] >= 0` and the seed system is offset 0.
fn shifted_cg_inner<O: LinearOperator + ?Sized>(
    op: &O,
    shifts: &[f64],
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<Vec<f64>>, SolveStats)> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match operator dimension {n}",
            b.len()
        )));
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("rhs contains non-finite values".into()));
    }
    let n_shifts = shifts.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![vec![0.0; n]; n_shifts],
            SolveStats {
                iterations: 0,
                converged: true,
                residual_norm: 0.0,
            },
        ));
    }
    let threshold = config.tol * b_norm;
    let sigmas: Vec<f64> = shifts[1..].iter().map(|s| s - shifts[0]).collect();

    // Seed system state; mirrors cg_solve statement for statement so that a
    // single zero shift reproduces its arithmetic exactly.
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut q = vec![0.0; n];
    let mut rr = dot(&r, &r);

    // Per-offset state for shifts[1..]: solution, direction, the current and
    // previous collinearity factors, the previous shifted step size, and a
    // frozen flag set once the factor underflows (that system has converged
    // to far below the target by then).
    let mut xs: Vec<Vec<f64>> = vec![vec![0.0; n]; sigmas.len()];
    let mut ps: Vec<Vec<f64>> = vec![b.to_vec(); sigmas.len()];
    let mut zeta: Vec<f64> = vec![1.0; sigmas.len()];
    let mut zeta_prev: Vec<f64> = vec![1.0; sigmas.len()];
    let mut frozen: Vec<bool> = vec![false; sigmas.len()];
    const FREEZE: f64 = 1e-250;

    let mut alpha_prev = 1.0;
    let mut beta_prev = 0.0;

    let cap = config.cap(n);
    let mut iterations = 0;
    while iterations < cap && rr.sqrt() > threshold {
        op.apply_into(&p, &mut q);
        let pap = dot(&p, &q);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "curvature p'Ap = {pap:.3e} at iteration {iterations}"
            )));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for i in 0..n {
            r[i] -= alpha * q[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;

        for (s, &sigma) in sigmas.iter().enumerate() {
            if frozen[s] {
                continue;
            }
            let zk = zeta[s];
            let zkm = zeta_prev[s];
            let denom = alpha_prev * zkm * (1.0 + sigma * alpha) + alpha * beta_prev * (zkm - zk);
            let zeta_next = zk * zkm * alpha_prev / denom;
            if !zeta_next.is_finite() || zeta_next.abs() < FREEZE {
                frozen[s] = true;
                continue;
            }
            let alpha_s = alpha * zeta_next / zk;
            let beta_s = beta * (zeta_next / zk) * (zeta_next / zk);
            let xs_s = &mut xs[s];
            let ps_s = &mut ps[s];
            for i in 0..n {
                xs_s[i] += alpha_s * ps_s[i];
            }
            for i in 0..n {
                ps_s[i] = zeta_next * r[i] + beta_s * ps_s[i];
            }
            zeta_prev[s] = zk;
            zeta[s] = zeta_next;
        }

        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        alpha_prev = alpha;
        beta_prev = beta;
        rr = rr_next;
        iterations += 1;
    }

    let residual_norm = rr.sqrt();
    let mut solutions = Vec::with_capacity(n_shifts);
    solutions.push(x);
    solutions.extend(xs);
    Ok((
        solutions,
        SolveStats {
            iterations,
            converged: residual_norm <= threshold,
            residual_norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use rand_chacha::ChaCha8Rng;
    use rand::prelude::*;
    use std::cell::Cell;

    fn random_spd(n: usize, seed: u64, diag_boost: f64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag_boost + rng.random_range(0.0..1.0)));
        }
        for _ in 0..(3 * n) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                let v = rng.random_range(-0.1..0.1);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
            .unwrap()
            .into_symmetric()
            .unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn residual<O: LinearOperator + ?Sized>(op: &O, x: &[f64], b: &[f64], shift: f64) -> f64 {
        let ax = op.apply(x);
        let mut s = 0.0;
        for i in 0..x.len() {
            let ri = b[i] - ax[i] - shift * x[i];
            s += ri * ri;
        }
        s.sqrt()
    }

    /// Wraps an operator and counts applications.
    struct Counting<'a> {
        inner: &'a SparseMatrix,
        count: Cell<usize>,
    }

    impl LinearOperator for Counting<'_> {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn apply_into(&self, x: &[f64], out: &mut [f64]) {
            self.count.set(self.count.get() + 1);
            self.inner.apply_into(x, out)
        }
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let m = SparseMatrix::identity(12);
        let b = random_vec(12, 3);
        let (x, stats) = cg_solve(&m, &b, &SolverConfig::default()).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.converged);
        for i in 0..12 {
            assert!((x[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let m = random_spd(10, 1, 2.0);
        let (x, stats) = cg_solve(&m, &vec![0.0; 10], &SolverConfig::default()).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(stats.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_dense_factorization() {
        use crate::linalg::{dense_cholesky, DenseMatrix};
        for seed in 0..5 {
            let n = 40;
            let m = random_spd(n, seed, 1.5);
            let b = random_vec(n, 100 + seed);
            let (x, stats) = cg_solve(&m, &b, &SolverConfig::default()).unwrap();
            assert!(stats.converged, "seed {seed}");
            let dense = DenseMatrix::from_fn(n, |i, j| m.get(i, j));
            let want = dense_cholesky(&dense).unwrap().solve(&b).unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - want[i]).abs() < 1e-8 * (1.0 + want[i].abs()),
                    "seed {seed} component {i}: {} vs {}",
                    x[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn indefinite_operator_is_detected() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)])
            .unwrap()
            .into_symmetric()
            .unwrap();
        let err = cg_solve(&m, &[0.0, 1.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let m = random_spd(50, 7, 0.05);
        let b = random_vec(50, 8);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iters: Some(2),
        };
        let (_, stats) = cg_solve(&m, &b, &cfg).unwrap();
        assert_eq!(stats.iterations, 2);
        assert!(!stats.converged);
        assert!(stats.residual_norm > 0.0);
    }

    #[test]
    fn shifted_identity_scales_rhs() {
        let m = SparseMatrix::identity(9);
        let b = random_vec(9, 11);
        let (xs, stats) =
            shifted_cg_solve(&m, &[0.5, 2.0], &b, &SolverConfig::default()).unwrap();
        assert!(stats.converged);
        for i in 0..9 {
            assert!((xs[0][i] - b[i] / 1.5).abs() < 1e-13);
            assert!((xs[1][i] - b[i] / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn single_zero_shift_bit_matches_plain_cg() {
        let m = random_spd(30, 21, 1.0);
        let b = random_vec(30, 22);
        let cfg = SolverConfig::default();
        let (x_plain, s_plain) = cg_solve(&m, &b, &cfg).unwrap();
        let (xs, s_shift) = shifted_cg_solve(&m, &[0.0], &b, &cfg).unwrap();
        assert_eq!(s_plain.iterations, s_shift.iterations);
        assert_eq!(x_plain, xs[0]);
        assert_eq!(s_plain.residual_norm, s_shift.residual_norm);
    }

    #[test]
    fn agrees_with_per_shift_cg_across_wide_shift_range() {
        let n = 60;
        let m = random_spd(n, 33, 0.5);
        let b = random_vec(n, 34);
        let mut shifts = vec![0.0];
        for k in 0..19 {
            shifts.push(10f64.powf(-3.0 + 6.0 * k as f64 / 18.0));
        }
        let cfg = SolverConfig {
            tol: 1e-12,
            ..SolverConfig::default()
        };
        let (xs, stats) = shifted_cg_solve(&m, &shifts, &b, &cfg).unwrap();
        assert!(stats.converged);
        for (j, &sigma) in shifts.iter().enumerate() {
            let shifted = ShiftedOperator::new(&m, sigma);
            let (want, ws) = cg_solve(&shifted, &b, &cfg).unwrap();
            assert!(ws.converged);
            for i in 0..n {
                assert!(
                    (xs[j][i] - want[i]).abs() < 1e-8 * (1.0 + want[i].abs()),
                    "shift {sigma}: component {i} differs"
                );
            }
            // direct residual check against the original operator
            assert!(residual(&m, &xs[j], &b, sigma) < 1e-7 * norm(&b));
        }
    }

    #[test]
    fn one_operator_apply_per_iteration() {
        let m = random_spd(40, 55, 1.0);
        let b = random_vec(40, 56);
        let counting = Counting {
            inner: &m,
            count: Cell::new(0),
        };
        let shifts = [0.0, 0.1, 1.0, 10.0, 100.0];
        let (_, stats) =
            shifted_cg_solve(&counting, &shifts, &b, &SolverConfig::default()).unwrap();
        assert!(stats.converged);
        assert_eq!(counting.count.get(), stats.iterations);
    }

    #[test]
    fn folding_smallest_shift_wraps_operator_once() {
        // with a strictly positive smallest shift the counting wrapper still
        // sees exactly one apply per iteration
        let m = random_spd(25, 57, 1.0);
        let b = random_vec(25, 58);
        let counting = Counting {
            inner: &m,
            count: Cell::new(0),
        };
        let (xs, stats) =
            shifted_cg_solve(&counting, &[0.5, 1.5], &b, &SolverConfig::default()).unwrap();
        assert_eq!(counting.count.get(), stats.iterations);
        assert!(residual(&m, &xs[0], &b, 0.5) < 1e-8 * norm(&b));
        assert!(residual(&m, &xs[1], &b, 1.5) < 1e-8 * norm(&b));
    }

    #[test]
    fn seed_residual_decreases_monotonically_when_well_conditioned() {
        // On a well-conditioned SPD matrix the CG residual should decrease
        // essentially monotonically; allow 10% slack per step.
        let n = 50;
        let m = random_spd(n, 71, 2.0);
        let b = random_vec(n, 72);
        let mut prev = f64::INFINITY;
        for iters in 1..12 {
            let cfg = SolverConfig {
                tol: 1e-15,
                max_iters: Some(iters),
            };
            let (x, _) = cg_solve(&m, &b, &cfg).unwrap();
            let r = residual(&m, &x, &b, 0.0);
            assert!(r <= prev * 1.1, "residual rose from {prev} to {r}");
            prev = r;
        }
    }

    #[test]
    fn rejects_bad_shift_lists() {
        let m = SparseMatrix::identity(4);
        let b = vec![1.0; 4];
        let cfg = SolverConfig::default();
        assert!(shifted_cg_solve(&m, &[], &b, &cfg).is_err());
        assert!(shifted_cg_solve(&m, &[1.0, 0.5], &b, &cfg).is_err());
        assert!(shifted_cg_solve(&m, &[-1.0, 0.5], &b, &cfg).is_err());
        assert!(shifted_cg_solve(&m, &[f64::NAN], &b, &cfg).is_err());
    }

    #[test]
    fn rejects_dimension_mismatch_and_bad_tol() {
        let m = SparseMatrix::identity(4);
        assert!(cg_solve(&m, &[1.0; 3], &SolverConfig::default()).is_err());
        let bad = SolverConfig {
            tol: 0.0,
            max_iters: None,
        };
        assert!(cg_solve(&m, &[1.0; 4], &bad).is_err());
    }

    #[test]
    fn extreme_shift_freezes_without_poisoning_others() {
        // A shift of 1e12 drives its collinearity factor to underflow almost
        // immediately; the remaining systems must still come out right.
        let n = 30;
        let m = random_spd(n, 91, 1.0);
        let b = random_vec(n, 92);
        let shifts = [0.0, 1.0, 1e12];
        let cfg = SolverConfig {
            tol: 1e-12,
            ..SolverConfig::default()
        };
        let (xs, stats) = shifted_cg_solve(&m, &shifts, &b, &cfg).unwrap();
        assert!(stats.converged);
        assert!(residual(&m, &xs[0], &b, 0.0) < 1e-8 * norm(&b));
        assert!(residual(&m, &xs[1], &b, 1.0) < 1e-8 * norm(&b));
        // relative to the huge diagonal the third system is easy: x ~ b/sigma
        assert!(residual(&m, &xs[2], &b, 1e12) < 1e-6 * norm(&b));
    }
}
