//! Compactly-supported GP family on scattered 2-D points.
//!
//! The covariance is the Wendland C^2 kernel
//! k(r) = s^2 (1 - r/l)_+^4 (4 r/l + 1), which is exactly zero beyond the
//! range l, so the covariance matrix is sparse and assembled with a cell
//! grid instead of an all-pairs scan.  An optional fixed mean function
//! (intercept plus five Gaussian bumps fitted once by least squares) can be
//! subtracted before inference.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dense_cholesky, DenseMatrix, SparseMatrix};
use crate::{Error, Result};

use super::{GaussianModel, ModelState};

/// Wendland C^2 kernel value at distance r, range l, marginal variance s2.
pub fn wendland_kernel(r: f64, l: f64, s2: f64) -> f64 {
    if r >= l {
        return 0.0;
    }
    let t = r / l;
    let omt = 1.0 - t;
    let omt2 = omt * omt;
    s2 * omt2 * omt2 * (4.0 * t + 1.0)
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    (dx * dx + dy * dy).sqrt()
}

/// Sparse covariance over the points: entry (i, j) is the kernel at their
/// distance, stored only when it is nonzero (r < l).  Pairs are found by
/// hashing points into cells of side l and scanning the 3x3 neighborhood,
/// which touches every pair closer than l exactly once.
pub fn build_sparse_covariance(points: &[[f64; 2]], l: f64, s2: f64) -> Result<SparseMatrix> {
    if !(l > 0.0 && l.is_finite() && s2 > 0.0 && s2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kernel needs positive finite range and variance, got l={l}, s2={s2}"
        )));
    }
    let n = points.len();
    let cell_of = |p: [f64; 2]| -> (i64, i64) {
        ((p[0] / l).floor() as i64, (p[1] / l).floor() as i64)
    };
    let mut cells: std::collections::HashMap<(i64, i64), Vec<usize>> =
        std::collections::HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(cell_of(p)).or_default().push(i);
    }
    let mut triplets = Vec::with_capacity(4 * n);
    for (i, &p) in points.iter().enumerate() {
        triplets.push((i, i, s2));
        let (cx, cy) = cell_of(p);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                let Some(bucket) = cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j <= i {
                        continue; // each unordered pair once
                    }
                    let r = dist(p, points[j]);
                    if r < l {
                        let v = wendland_kernel(r, l, s2);
                        triplets.push((i, j, v));
                        triplets.push((j, i, v));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)?.into_symmetric()
}

/// Fixed mean surface: intercept plus Gaussian bumps at fitted centers,
/// m(p) = beta_0 + sum_i beta_i exp(-|p - c_i|^2 / (2 h^2)).
#[derive(Clone, Debug)]
pub struct MeanFunction {
    centers: Vec<[f64; 2]>,
    bandwidth: f64,
    coeffs: Vec<f64>, // intercept first
}

impl MeanFunction {
    pub fn evaluate(&self, p: [f64; 2]) -> f64 {
        let mut v = self.coeffs[0];
        let denom = 2.0 * self.bandwidth * self.bandwidth;
        for (c, beta) in self.centers.iter().zip(&self.coeffs[1..]) {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            v += beta * (-(dx * dx + dy * dy) / denom).exp();
        }
        v
    }

    pub fn evaluate_all(&self, points: &[[f64; 2]]) -> Vec<f64> {
        points.iter().map(|&p| self.evaluate(p)).collect()
    }
}

const MEAN_BUMPS: usize = 5;
const KMEANS_MAX_ITERS: usize = 100;

/// Fits the fixed mean surface: k-means (Lloyd's algorithm, deterministic
/// per seed) places `MEAN_BUMPS` centers, the bump bandwidth is the minimum
/// pairwise center distance, and the coefficients come from ordinary least
/// squares of y on [1, bump_1, ..., bump_5].
pub fn fit_mean_function(points: &[[f64; 2]], y: &[f64], seed: u64) -> Result<MeanFunction> {
    let n = points.len();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "mean fit: {} responses for {} points",
            y.len(),
            n
        )));
    }
    if n < MEAN_BUMPS + 1 {
        return Err(Error::InvalidArgument(format!(
            "mean fit needs at least {} points, got {n}",
            MEAN_BUMPS + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Lloyd's algorithm; empty clusters are reseeded to a random point
    let mut centers: Vec<[f64; 2]> = {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..MEAN_BUMPS {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx[..MEAN_BUMPS].iter().map(|&i| points[i]).collect()
    };
    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let best = (0..MEAN_BUMPS)
                .min_by(|&a, &b| {
                    dist(p, centers[a])
                        .partial_cmp(&dist(p, centers[b]))
                        .expect("distances are finite")
                })
                .expect("at least one center");
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = [[0.0f64; 2]; MEAN_BUMPS];
        let mut counts = [0usize; MEAN_BUMPS];
        for (i, &p) in points.iter().enumerate() {
            let c = assignment[i];
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..MEAN_BUMPS {
            centers[c] = if counts[c] == 0 {
                points[rng.random_range(0..n)]
            } else {
                [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64]
            };
        }
    }

    let mut bandwidth = f64::INFINITY;
    for a in 0..MEAN_BUMPS {
        for b in (a + 1)..MEAN_BUMPS {
            bandwidth = bandwidth.min(dist(centers[a], centers[b]));
        }
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(
            "mean fit produced coincident centers; data has too few distinct points".into(),
        ));
    }

    // OLS on the 6-column design via the normal equations
    let k = MEAN_BUMPS + 1;
    let design: Vec<Vec<f64>> = points
        .iter()
        .map(|&p| {
            let mut row = Vec::with_capacity(k);
            row.push(1.0);
            let denom = 2.0 * bandwidth * bandwidth;
            for c in &centers {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                row.push((-(dx * dx + dy * dy) / denom).exp());
            }
            row
        })
        .collect();
    let mut xtx = DenseMatrix::zeros(k);
    let mut xty = vec![0.0; k];
    for (row, &yi) in design.iter().zip(y) {
        for a in 0..k {
            xty[a] += row[a] * yi;
            for b in 0..k {
                xtx.set(a, b, xtx.at(a, b) + row[a] * row[b]);
            }
        }
    }
    let coeffs = match dense_cholesky(&xtx) {
        Ok(f) => f.solve(&xty)?,
        Err(_) => {
            // nearly collinear bumps: retry with a small ridge
            let ridge = 1e-8 * (0..k).map(|a| xtx.at(a, a)).fold(0.0f64, f64::max);
            for a in 0..k {
                xtx.set(a, a, xtx.at(a, a) + ridge);
            }
            dense_cholesky(&xtx)?.solve(&xty)?
        }
    };
    Ok(MeanFunction {
        centers,
        bandwidth,
        coeffs,
    })
}

/// GP with Wendland covariance observed directly at its points (A = I),
/// log-scale parameters [ln_tau, ln_s2, ln_l] under independent normal
/// priors, and an optional fixed mean surface.
pub struct WendlandGPModel {
    points: Vec<[f64; 2]>,
    a: SparseMatrix,
    y: Vec<f64>,
    mean: Option<MeanFunction>,
}

const PARAM_NAMES: [&str; 3] = ["ln_tau", "ln_s2", "ln_l"];
/// Prior standard deviations of [ln_tau, ln_s2, ln_l]: tau, s and l are
/// log-normal with log-scale 3, and ln_s2 = 2 ln_s doubles the scale.
const PRIOR_SD: [f64; 3] = [3.0, 6.0, 3.0];

impl WendlandGPModel {
    pub fn new(points: Vec<[f64; 2]>, y: Vec<f64>, mean: Option<MeanFunction>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Dimension("model needs at least one point".into()));
        }
        if y.len() != points.len() {
            return Err(Error::Dimension(format!(
                "{} observations for {} points",
                y.len(),
                points.len()
            )));
        }
        let a = SparseMatrix::identity(points.len());
        Ok(WendlandGPModel { points, a, y, mean })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn unpack(params: &[f64]) -> Result<(f64, f64, f64)> {
        if params.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 3 parameters, got {}",
                params.len()
            )));
        }
        let tau = params[0].exp();
        let s2 = params[1].exp();
        let l = params[2].exp();
        if ![tau, s2, l].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameters {params:?} exponentiate out of range"
            )));
        }
        Ok((tau, s2, l))
    }
}

impl GaussianModel for WendlandGPModel {
    fn family(&self) -> &'static str {
        "wendland_gp"
    }

    fn param_names(&self) -> &[&'static str] {
        &PARAM_NAMES
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        if params.len() != 3 || params.iter().any(|p| !p.is_finite()) {
            return f64::NEG_INFINITY;
        }
        params
            .iter()
            .zip(PRIOR_SD)
            .map(|(p, sd)| {
                let z = p / sd;
                -0.5 * z * z - sd.ln() - 0.5 * super::LN_2PI
            })
            .sum()
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        PRIOR_SD
            .iter()
            .map(|sd| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn dim_latent(&self) -> usize {
        self.points.len()
    }

    fn dim_obs(&self) -> usize {
        self.points.len()
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
        self.mean.as_ref().map(|m| m.evaluate_all(&self.points))
    }

    fn state(&self, params: &[f64]) -> Result<ModelState> {
        let (tau, s2, l) = Self::unpack(params)?;
        Ok(ModelState::Covariance {
            sigma: build_sparse_covariance(&self.points, l, s2)?,
            tau,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect()
    }

    #[test]
    fn kernel_shape() {
        // boundary and interior values of the polynomial
        assert_eq!(wendland_kernel(0.0, 0.5, 2.0), 2.0);
        assert_eq!(wendland_kernel(0.5, 0.5, 2.0), 0.0);
        assert_eq!(wendland_kernel(0.7, 0.5, 2.0), 0.0);
        // r = l/2: (1/2)^4 (2 + 1) = 3/16
        let v = wendland_kernel(0.25, 0.5, 1.0);
        assert!((v - 3.0 / 16.0).abs() < 1e-15);
        // decreasing in r on [0, l]
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let v = wendland_kernel(k as f64 * 0.005, 0.5, 1.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn binned_covariance_equals_all_pairs_scan() {
        for (n, l, seed) in [(60usize, 0.15f64, 1u64), (100, 0.35, 2), (50, 1.5, 3), (40, 0.02, 4)]
        {
            let pts = random_points(n, seed);
            let s2 = 1.7;
            let sigma = build_sparse_covariance(&pts, l, s2).unwrap();
            assert!(sigma.is_symmetric());
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j {
                        s2
                    } else {
                        wendland_kernel(dist(pts[i], pts[j]), l, s2)
                    };
                    let got = sigma.get(i, j);
                    assert!(
                        got == want,
                        "l={l} entry ({i},{j}): {got:e} vs {want:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn covariance_is_positive_definite_on_many_points() {
        let pts = random_points(500, 11);
        let sigma = build_sparse_covariance(&pts, 0.2, 1.0).unwrap();
        let d = DMatrix::from_fn(500, 500, |i, j| sigma.get(i, j));
        assert!(d.cholesky().is_some(), "kernel matrix lost definiteness");
    }

    #[test]
    fn covariance_of_duplicate_points_keeps_full_kernel_value() {
        let pts = vec![[0.3, 0.3], [0.3, 0.3], [0.9, 0.9]];
        let sigma = build_sparse_covariance(&pts, 0.25, 2.0).unwrap();
        assert_eq!(sigma.get(0, 1), 2.0);
        assert_eq!(sigma.get(0, 2), 0.0);
        assert_eq!(sigma.get(0, 0), 2.0);
    }

    #[test]
    fn mean_fit_recovers_constant_surface() {
        let pts = random_points(120, 5);
        let y = vec![3.25; 120];
        let mean = fit_mean_function(&pts, &y, 0).unwrap();
        for &p in &pts {
            assert!((mean.evaluate(p) - 3.25).abs() < 1e-8);
        }
        // and at points it never saw
        for &p in &random_points(30, 6) {
            assert!((mean.evaluate(p) - 3.25).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_fit_recovers_its_own_basis_exactly() {
        // build a surface from one fit's basis, then refit on noiseless
        // values of it: OLS must reproduce the surface
        let pts = random_points(150, 7);
        let probe = fit_mean_function(&pts, &vec![1.0; 150], 3).unwrap();
        let truth = MeanFunction {
            centers: probe.centers.clone(),
            bandwidth: probe.bandwidth,
            coeffs: vec![0.5, 1.0, -2.0, 0.7, 1.4, -0.3],
        };
        let y = truth.evaluate_all(&pts);
        let fitted = fit_mean_function(&pts, &y, 3).unwrap();
        for &p in &random_points(40, 8) {
            let diff = (fitted.evaluate(p) - truth.evaluate(p)).abs();
            assert!(diff < 1e-6, "surface mismatch {diff:e} at {p:?}");
        }
    }

    #[test]
    fn mean_fit_is_deterministic_per_seed() {
        let pts = random_points(80, 9);
        let y: Vec<f64> = pts.iter().map(|p| p[0] + 2.0 * p[1]).collect();
        let a = fit_mean_function(&pts, &y, 42).unwrap();
        let b = fit_mean_function(&pts, &y, 42).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert_eq!(a.centers, b.centers);
    }

    #[test]
    fn model_state_and_priors() {
        let pts = random_points(30, 10);
        let y = vec![0.0; 30];
        let model = WendlandGPModel::new(pts.clone(), y, None).unwrap();
        assert_eq!(model.param_names(), &["ln_tau", "ln_s2", "ln_l"]);

        let params = [0.3, -0.7, -1.2];
        let ModelState::Covariance { sigma, tau } = model.state(&params).unwrap() else {
            panic!("expected covariance state");
        };
        assert!((tau - params[0].exp()).abs() < 1e-15);
        assert_eq!(sigma.get(0, 0), params[1].exp());
        let direct =
            build_sparse_covariance(&pts, params[2].exp(), params[1].exp()).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(sigma.get(i, j), direct.get(i, j));
            }
        }

        // log prior: independent normals, checked against the summed form
        let lp = model.log_prior(&params);
        let want: f64 = params
            .iter()
            .zip([3.0f64, 6.0, 3.0])
            .map(|(p, sd)| {
                -0.5 * (p / sd) * (p / sd)
                    - 0.5 * (2.0 * std::f64::consts::PI * sd * sd).ln()
            })
            .sum();
        assert!((lp - want).abs() < 1e-12);
        assert_eq!(model.log_prior(&[f64::INFINITY, 0.0, 0.0]), f64::NEG_INFINITY);

        // prior draws have roughly the right spread
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws: Vec<Vec<f64>> = (0..4000).map(|_| model.sample_prior(&mut rng)).collect();
        for (idx, sd) in [(0usize, 3.0f64), (1, 6.0), (2, 3.0)] {
            let mean: f64 = draws.iter().map(|d| d[idx]).sum::<f64>() / 4000.0;
            let var: f64 = draws.iter().map(|d| (d[idx] - mean).powi(2)).sum::<f64>() / 4000.0;
            assert!(mean.abs() < 5.0 * sd / (4000.0f64).sqrt());
            assert!((var.sqrt() - sd).abs() < 0.15 * sd);
        }
    }
}
