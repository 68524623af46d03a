//! Auxiliary-variable target and Gibbs updates.
//!
//! The sampler works on the augmented density
//!
//! ```text
//! p(theta, z | y) ∝ p(theta) exp(-1/2 r' S^{-1} r - 1/2 z' S z),
//! r = y - A mu_theta,  S = tau^{-1} I + A Sigma_theta A',
//! ```
//!
//! where the auxiliary block z | theta ~ N(0, S^{-1}) restores exactly the
//! normalizing determinant of the marginal likelihood, so no log-determinant
//! is ever evaluated.  Everything here reduces to solves with S (covariance
//! route) or with Q and Q + tau A'A (precision route).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::krylov::{cg_solve, SolverConfig};
use crate::linalg::{banded_factorize, gershgorin_bounds, BandedFactor, LinearOperator, SparseMatrix};
use crate::models::{
    centered_data, matrix_bandwidth, GaussianModel, MarginalCovOperator, ModelState, Whitener,
};
use crate::rational::{apply_invsqrt, InvsqrtQuadrature};
use crate::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn standard_normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Q + tau A'A, the precision of the latent field conditional on the data,
/// applied matrix-free.
pub struct ConditionalPrecOperator<'a> {
    q: &'a SparseMatrix,
    a: &'a SparseMatrix,
    a_t: &'a SparseMatrix,
    tau: f64,
}

impl<'a> ConditionalPrecOperator<'a> {
    pub fn new(
        q: &'a SparseMatrix,
        a: &'a SparseMatrix,
        a_t: &'a SparseMatrix,
        tau: f64,
    ) -> Self {
        ConditionalPrecOperator { q, a, a_t, tau }
    }
}

impl LinearOperator for ConditionalPrecOperator<'_> {
    fn dim(&self) -> usize {
        self.q.n_rows()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.q.spmv_into(x, out).expect("dimensions fixed at construction");
        let ax = self.a.spmv(x).expect("dimensions fixed at construction");
        let atax = self.a_t.spmv(&ax).expect("dimensions fixed at construction");
        for (o, v) in out.iter_mut().zip(&atax) {
            *o += self.tau * v;
        }
    }
}

/// S^{-1} v by the inversion lemma,
/// S^{-1} = tau I - tau^2 A (Q + tau A'A)^{-1} A', with one inner CG solve.
pub fn marginal_precision_apply(
    q: &SparseMatrix,
    a: &SparseMatrix,
    a_t: &SparseMatrix,
    tau: f64,
    v: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let at_v = a_t.spmv(v)?;
    let op = ConditionalPrecOperator::new(q, a, a_t, tau);
    let (inner, stats) = cg_solve(&op, &at_v, solver)?;
    if !stats.converged {
        return Err(Error::NoConvergence(format!(
            "conditional-precision solve stalled at residual {:.3e}",
            stats.residual_norm
        )));
    }
    let a_inner = a.spmv(&inner)?;
    Ok(v.iter()
        .zip(&a_inner)
        .map(|(vi, mi)| tau * vi - tau * tau * mi)
        .collect())
}

/// Covariance-route Gibbs draw z ~ N(0, S^{-1}): one inverse-square-root
/// apply, z = S^{-1/2} w with w standard normal.
pub fn gibbs_update_aux_cov<O: LinearOperator + ?Sized>(
    s_op: &O,
    quad: &InvsqrtQuadrature,
    rng: &mut ChaCha8Rng,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let w = standard_normals(s_op.dim(), rng);
    let (z, _) = apply_invsqrt(s_op, quad, &w, solver)?;
    Ok(z)
}

/// Precision-route Gibbs draw z ~ N(0, S^{-1}) from an exact latent draw
/// x_tilde ~ N(0, Q^{-1}): form y_tilde = A x_tilde + noise, which has
/// covariance S, then return z = S^{-1} y_tilde via the inversion lemma.
pub fn gibbs_update_aux_prec(
    q: &SparseMatrix,
    a: &SparseMatrix,
    a_t: &SparseMatrix,
    tau: f64,
    x_tilde: &[f64],
    rng: &mut ChaCha8Rng,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut y_tilde = a.spmv(x_tilde)?;
    let noise_sd = tau.sqrt().recip();
    for v in &mut y_tilde {
        let e: f64 = rng.sample(StandardNormal);
        *v += noise_sd * e;
    }
    marginal_precision_apply(q, a, a_t, tau, &y_tilde, solver)
}

/// Everything the sampler needs at one parameter point: the bound latent
/// structure, the centered data, and (lazily) the inverse-square-root
/// quadrature used by the auxiliary draw.
pub struct ThetaContext<'m> {
    model: &'m dyn GaussianModel,
    params: Vec<f64>,
    log_prior: f64,
    state: ModelState,
    r: Vec<f64>,
    quad: Option<InvsqrtQuadrature>,
    /// Banded Cholesky of Q + tau A'A, built when the model carries a
    /// whitener (the matrix is then banded but far worse conditioned than
    /// Q itself, so CG on it is a poor trade).  Used for solves only.
    mtau_factor: Option<BandedFactor>,
    solver: SolverConfig,
    quad_target: f64,
    quad_terms: Option<usize>,
}

impl<'m> ThetaContext<'m> {
    /// Binds the model at `params`.  The caller is expected to have checked
    /// the prior; a point of zero prior density is a contract violation.
    pub fn new(
        model: &'m dyn GaussianModel,
        params: &[f64],
        solver: SolverConfig,
        quad_target: f64,
    ) -> Result<Self> {
        let log_prior = model.log_prior(params);
        if log_prior == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(
                "cannot bind the model outside the prior support".into(),
            ));
        }
        let state = model.state(params)?;
        let r = centered_data(model, params)?;
        let mtau_factor = match &state {
            ModelState::Precision { q, tau, whitener: Some(_), .. } => {
                let ata = model.a_transpose().matmul(model.a_matrix())?.into_symmetric()?;
                let m_tau = q.add_scaled(1.0, &ata, *tau)?.into_symmetric()?;
                Some(banded_factorize(&m_tau, matrix_bandwidth(&m_tau))?)
            }
            _ => None,
        };
        Ok(ThetaContext {
            model,
            params: params.to_vec(),
            log_prior,
            state,
            r,
            quad: None,
            mtau_factor,
            solver,
            quad_target,
            quad_terms: None,
        })
    }

    /// Pins the quadrature to a fixed number of terms instead of the
    /// error-bound-driven automatic choice.  `None` restores the default.
    pub fn set_quad_terms(&mut self, n: Option<usize>) {
        if n != self.quad_terms {
            self.quad = None;
        }
        self.quad_terms = n;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    fn cov_parts(&self) -> Option<(&SparseMatrix, f64)> {
        match &self.state {
            ModelState::Covariance { sigma, tau } => Some((sigma, *tau)),
            ModelState::Precision { .. } => None,
        }
    }

    /// r' S^{-1} r, the data quadratic of the augmented target.  Depends
    /// only on the parameters, so the chain caches it between auxiliary
    /// refreshes.
    pub fn quad_y(&self) -> Result<f64> {
        match &self.state {
            ModelState::Covariance { sigma, tau } => {
                let op = MarginalCovOperator::new(
                    self.model.a_matrix(),
                    self.model.a_transpose(),
                    sigma,
                    *tau,
                )?;
                let (x, stats) = cg_solve(&op, &self.r, &self.solver)?;
                if !stats.converged {
                    return Err(Error::NoConvergence(format!(
                        "marginal covariance solve stalled at residual {:.3e}",
                        stats.residual_norm
                    )));
                }
                Ok(dot(&self.r, &x))
            }
            ModelState::Precision { q, tau, .. } => {
                let z = self.apply_marginal_inverse(q, *tau, &self.r)?;
                Ok(dot(&self.r, &z))
            }
        }
    }

    /// (Q + tau A'A)^{-1} rhs, through the cached banded factor when one
    /// exists and by conjugate gradients otherwise.
    fn mtau_solve(&self, q: &SparseMatrix, tau: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.mtau_factor {
            Some(factor) => factor.solve(rhs),
            None => {
                let op = ConditionalPrecOperator::new(
                    q,
                    self.model.a_matrix(),
                    self.model.a_transpose(),
                    tau,
                );
                let (x, stats) = cg_solve(&op, rhs, &self.solver)?;
                if !stats.converged {
                    return Err(Error::NoConvergence(format!(
                        "conditional-precision solve stalled at residual {:.3e}",
                        stats.residual_norm
                    )));
                }
                Ok(x)
            }
        }
    }

    /// S^{-1} v by the inversion lemma,
    /// S^{-1} = tau I - tau^2 A (Q + tau A'A)^{-1} A'.
    fn apply_marginal_inverse(&self, q: &SparseMatrix, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
        let at_v = self.model.a_transpose().spmv(v)?;
        let inner = self.mtau_solve(q, tau, &at_v)?;
        let a_inner = self.model.a_matrix().spmv(&inner)?;
        Ok(v.iter()
            .zip(&a_inner)
            .map(|(vi, mi)| tau * vi - tau * tau * mi)
            .collect())
    }

    /// z' S z, the auxiliary quadratic of the augmented target.
    pub fn quad_z(&self, z: &[f64]) -> Result<f64> {
        match &self.state {
            ModelState::Covariance { sigma, tau } => {
                let op = MarginalCovOperator::new(
                    self.model.a_matrix(),
                    self.model.a_transpose(),
                    sigma,
                    *tau,
                )?;
                Ok(dot(z, &op.apply(z)))
            }
            ModelState::Precision { q, tau, whitener, .. } => {
                let at_z = self.model.a_transpose().spmv(z)?;
                let qinv_at_z = self.apply_q_inverse(q, whitener, &at_z)?;
                Ok(dot(z, z) / tau + dot(&at_z, &qinv_at_z))
            }
        }
    }

    fn apply_q_inverse(
        &self,
        q: &SparseMatrix,
        whitener: &Option<Whitener>,
        v: &[f64],
    ) -> Result<Vec<f64>> {
        match whitener {
            Some(wh) => wh.precision_solve(v),
            None => {
                let (x, stats) = cg_solve(q, v, &self.solver)?;
                if !stats.converged {
                    return Err(Error::NoConvergence(format!(
                        "latent precision solve stalled at residual {:.3e}",
                        stats.residual_norm
                    )));
                }
                Ok(x)
            }
        }
    }

    /// The quadrature backing auxiliary draws, built on first use: on the
    /// covariance route it approximates S^{-1/2}, on the whitener-free
    /// precision route Q^{-1/2}.
    fn ensure_quad(&mut self) -> Result<&InvsqrtQuadrature> {
        if self.quad.is_none() {
            let bounds = match &self.state {
                ModelState::Covariance { sigma, tau } => MarginalCovOperator::new(
                    self.model.a_matrix(),
                    self.model.a_transpose(),
                    sigma,
                    *tau,
                )?
                .spectral_bounds()?,
                ModelState::Precision { q, q_bounds, .. } => match q_bounds {
                    Some(b) => b.clone(),
                    None => gershgorin_bounds(q)?,
                },
            };
            self.quad = Some(match self.quad_terms {
                Some(n) => InvsqrtQuadrature::build(n, &bounds)?,
                None => InvsqrtQuadrature::auto(&bounds, self.quad_target)?,
            });
        }
        Ok(self.quad.as_ref().expect("just built"))
    }

    /// Gibbs refresh of the auxiliary block: a draw from N(0, S^{-1}) at
    /// the bound parameters.
    pub fn draw_aux(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match &self.state {
            ModelState::Covariance { .. } => {
                self.ensure_quad()?;
                let (sigma, tau) = self.cov_parts().expect("covariance state");
                let op = MarginalCovOperator::new(
                    self.model.a_matrix(),
                    self.model.a_transpose(),
                    sigma,
                    tau,
                )?;
                gibbs_update_aux_cov(
                    &op,
                    self.quad.as_ref().expect("built above"),
                    rng,
                    &self.solver,
                )
            }
            ModelState::Precision { whitener: Some(_), .. } => {
                let ModelState::Precision { q, tau, whitener, .. } = &self.state else {
                    unreachable!()
                };
                let w = standard_normals(q.n_rows(), rng);
                let x_tilde = whitener.as_ref().expect("matched above").draw_latent(&w)?;
                self.lemma_draw(q, *tau, &x_tilde, rng)
            }
            ModelState::Precision { whitener: None, .. } => {
                self.ensure_quad()?;
                let ModelState::Precision { q, tau, .. } = &self.state else {
                    unreachable!()
                };
                let w = standard_normals(q.n_rows(), rng);
                let (x_tilde, _) = apply_invsqrt(
                    q,
                    self.quad.as_ref().expect("built above"),
                    &w,
                    &self.solver,
                )?;
                self.lemma_draw(q, *tau, &x_tilde, rng)
            }
        }
    }

    /// Shared tail of the precision-route draw: y_tilde = A x_tilde + noise
    /// has covariance S exactly, so S^{-1} y_tilde ~ N(0, S^{-1}).
    fn lemma_draw(
        &self,
        q: &SparseMatrix,
        tau: f64,
        x_tilde: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let mut y_tilde = self.model.a_matrix().spmv(x_tilde)?;
        let noise_sd = tau.sqrt().recip();
        for v in &mut y_tilde {
            let e: f64 = rng.sample(StandardNormal);
            *v += noise_sd * e;
        }
        self.apply_marginal_inverse(q, tau, &y_tilde)
    }
}

/// The augmented log target
/// log p(theta) - 1/2 r' S^{-1} r - 1/2 z' S z, or -inf outside the prior.
/// No determinant enters: the auxiliary quadratic replaces it.
pub fn log_joint_aug(
    model: &dyn GaussianModel,
    params: &[f64],
    z: &[f64],
    solver: &SolverConfig,
) -> Result<f64> {
    let lp = model.log_prior(params);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let ctx = ThetaContext::new(model, params, *solver, 1e-10)?;
    Ok(lp - 0.5 * ctx.quad_y()? - 0.5 * ctx.quad_z(z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_data;
    use crate::models::GmrfWhiteningModel;
    use nalgebra::DMatrix;

    fn tridiag_spd(n: usize, diag: f64, off: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
            .unwrap()
            .into_symmetric()
            .unwrap()
    }

    fn random_a(n_obs: usize, n_lat: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n_obs {
            t.push((i, rng.random_range(0..n_lat), rng.random_range(-1.0..1.0)));
            t.push((i, rng.random_range(0..n_lat), rng.random_range(-1.0..1.0)));
        }
        SparseMatrix::from_triplets(n_obs, n_lat, &t).unwrap()
    }

    fn to_na(m: &SparseMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| m.get(i, j))
    }

    /// One-parameter covariance family used to probe the target across
    /// parameter values: Sigma(theta) = e^theta Sigma0.
    struct ScaledCovModel {
        a: SparseMatrix,
        a_t: SparseMatrix,
        sigma0: SparseMatrix,
        tau: f64,
        y: Vec<f64>,
    }

    impl ScaledCovModel {
        fn new(a: SparseMatrix, sigma0: SparseMatrix, tau: f64, y: Vec<f64>) -> Self {
            let a_t = a.transpose();
            ScaledCovModel { a, a_t, sigma0, tau, y }
        }
    }

    impl GaussianModel for ScaledCovModel {
        fn family(&self) -> &'static str {
            "scaled_cov_test"
        }
        fn param_names(&self) -> &[&'static str] {
            &["ln_scale"]
        }
        fn log_prior(&self, params: &[f64]) -> f64 {
            if params.len() == 1 && params[0].is_finite() && params[0].abs() <= 5.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
            vec![rng.random_range(-5.0..5.0)]
        }
        fn dim_latent(&self) -> usize {
            self.sigma0.n_rows()
        }
        fn dim_obs(&self) -> usize {
            self.a.n_rows()
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
            Ok(ModelState::Covariance {
                sigma: self.sigma0.scaled(params[0].exp())?,
                tau: self.tau,
            })
        }
    }

    fn dense_s(model: &dyn GaussianModel, params: &[f64]) -> DMatrix<f64> {
        let n = model.dim_obs();
        let ad = to_na(model.a_matrix());
        match model.state(params).unwrap() {
            ModelState::Covariance { sigma, tau } => {
                DMatrix::identity(n, n) / tau + &ad * to_na(&sigma) * ad.transpose()
            }
            ModelState::Precision { q, tau, .. } => {
                DMatrix::identity(n, n) / tau
                    + &ad * to_na(&q).try_inverse().unwrap() * ad.transpose()
            }
        }
    }

    fn dense_aug_target(
        model: &dyn GaussianModel,
        params: &[f64],
        z: &[f64],
    ) -> f64 {
        let s = dense_s(model, params);
        let n = model.dim_obs();
        let r = DMatrix::from_column_slice(n, 1, model.data());
        let zv = DMatrix::from_column_slice(n, 1, z);
        let sinv_r = s.clone().cholesky().unwrap().solve(&r);
        let quad_y = (r.transpose() * sinv_r)[(0, 0)];
        let quad_z = (zv.transpose() * &s * &zv)[(0, 0)];
        model.log_prior(params) - 0.5 * quad_y - 0.5 * quad_z
    }

    #[test]
    fn aug_target_matches_dense_oracle_on_both_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let solver = SolverConfig::default();
        let n_obs = 9;
        let n_lat = 7;
        let y: Vec<f64> = (0..n_obs).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z: Vec<f64> = (0..n_obs).map(|_| rng.random_range(-1.5..1.5)).collect();

        let a = random_a(n_obs, n_lat, &mut rng);
        let cov = ScaledCovModel::new(a.clone(), tridiag_spd(n_lat, 2.0, 0.6), 1.4, y.clone());
        for theta in [-0.8, 0.0, 1.1] {
            let got = log_joint_aug(&cov, &[theta], &z, &solver).unwrap();
            let want = dense_aug_target(&cov, &[theta], &z);
            assert!((got - want).abs() < 1e-8, "cov theta={theta}: {got} vs {want}");
        }

        // precision route through the same entry point
        use crate::models::RandomPrecisionModel;
        let prec = RandomPrecisionModel::from_seed(n_obs, 4, 1.7, y.clone()).unwrap();
        for theta in [-1.0, 0.3] {
            let got = log_joint_aug(&prec, &[theta], &z, &solver).unwrap();
            let want = dense_aug_target(&prec, &[theta], &z);
            assert!((got - want).abs() < 1e-8, "prec theta={theta}: {got} vs {want}");
        }
    }

    #[test]
    fn aug_target_with_zero_residual_and_zero_aux_is_the_prior() {
        // y = 0 means r = 0, and z = 0 kills the auxiliary quadratic
        let a = random_a(6, 5, &mut ChaCha8Rng::seed_from_u64(3));
        let model = ScaledCovModel::new(a, tridiag_spd(5, 2.0, 0.5), 1.0, vec![0.0; 6]);
        let got = log_joint_aug(&model, &[0.7], &[0.0; 6], &SolverConfig::default()).unwrap();
        assert!((got - model.log_prior(&[0.7])).abs() < 1e-12);
    }

    #[test]
    fn aug_target_is_minus_infinity_outside_the_prior() {
        let a = random_a(4, 4, &mut ChaCha8Rng::seed_from_u64(4));
        let model = ScaledCovModel::new(a, tridiag_spd(4, 2.0, 0.5), 1.0, vec![0.1; 4]);
        let got = log_joint_aug(&model, &[9.0], &[0.0; 4], &SolverConfig::default()).unwrap();
        assert_eq!(got, f64::NEG_INFINITY);
    }

    #[test]
    fn target_differences_across_parameters_match_dense() {
        // MH only sees differences of the target; track them across a
        // parameter sweep on both routes
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let solver = SolverConfig::default();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = random_a(8, 6, &mut rng);
        let model = ScaledCovModel::new(a, tridiag_spd(6, 2.5, -0.7), 2.0, y);
        let thetas = [-1.5, -0.5, 0.5, 1.5];
        for w in thetas.windows(2) {
            let got = log_joint_aug(&model, &[w[1]], &z, &solver).unwrap()
                - log_joint_aug(&model, &[w[0]], &z, &solver).unwrap();
            let want =
                dense_aug_target(&model, &[w[1]], &z) - dense_aug_target(&model, &[w[0]], &z);
            assert!(
                (got - want).abs() < 1e-8,
                "delta {:?}: {got} vs {want}",
                w
            );
        }
    }

    #[test]
    fn lemma_apply_matches_dense_marginal_inverse() {
        // 20 instances of S^{-1} v computed without forming S
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let solver = SolverConfig::default();
        for trial in 0..20 {
            let n_lat = 12;
            let n_obs = 9;
            let q = tridiag_spd(n_lat, 3.0 + trial as f64 * 0.1, 1.0);
            let a = random_a(n_obs, n_lat, &mut rng);
            let a_t = a.transpose();
            let tau = rng.random_range(0.4..3.0);
            let v: Vec<f64> = (0..n_obs).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = marginal_precision_apply(&q, &a, &a_t, tau, &v, &solver).unwrap();

            let ad = to_na(&a);
            let s = DMatrix::identity(n_obs, n_obs) / tau
                + &ad * to_na(&q).try_inverse().unwrap() * ad.transpose();
            let want = s
                .cholesky()
                .unwrap()
                .solve(&DMatrix::from_column_slice(n_obs, 1, &v));
            for i in 0..n_obs {
                assert!(
                    (got[i] - want[(i, 0)]).abs() < 1e-8,
                    "trial {trial} component {i}: {} vs {}",
                    got[i],
                    want[(i, 0)]
                );
            }
        }
    }

    #[test]
    fn prec_gibbs_with_zero_a_returns_scaled_noise() {
        // A = 0 collapses the draw to z = tau * noise, noise ~ N(0, tau^{-1} I)
        let q = tridiag_spd(5, 3.0, 1.0);
        let a = SparseMatrix::from_triplets(4, 5, &[]).unwrap();
        let a_t = a.transpose();
        let tau = 2.3;
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = gibbs_update_aux_prec(&q, &a, &a_t, tau, &[0.0; 5], &mut rng, &solver).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(8);
        let sd = tau.sqrt().recip();
        for zi in &z {
            let e: f64 = replay.sample(StandardNormal);
            assert!((zi - tau * sd * e).abs() < 1e-14);
        }
    }

    /// Sample covariance of draws against a dense reference, entrywise
    /// within 5 standard errors of the Wishart fluctuation.
    fn assert_draw_covariance(
        mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
        want: &DMatrix<f64>,
        n_draws: usize,
        seed: u64,
    ) {
        let n = want.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cross = vec![0.0; n * n];
        for _ in 0..n_draws {
            let z = draw(&mut rng);
            for i in 0..n {
                for j in 0..n {
                    cross[i * n + j] += z[i] * z[j];
                }
            }
        }
        let nf = n_draws as f64;
        for i in 0..n {
            for j in 0..n {
                let got = cross[i * n + j] / nf;
                let se =
                    ((want[(i, i)] * want[(j, j)] + want[(i, j)] * want[(i, j)]) / nf).sqrt();
                assert!(
                    (got - want[(i, j)]).abs() < 5.0 * se,
                    "cov[{i},{j}]: {got:.4} vs {:.4} (se {se:.4})",
                    want[(i, j)]
                );
            }
        }
    }

    #[test]
    fn cov_gibbs_identity_marginal_gives_standard_normal_draws() {
        // A = 0 and tau = 1 make S the identity; the rational approximation
        // degenerates to the exact scalar case
        let a = SparseMatrix::from_triplets(4, 3, &[]).unwrap();
        let model = ScaledCovModel::new(a, tridiag_spd(3, 2.0, 0.5), 1.0, vec![0.0; 4]);
        let mut ctx =
            ThetaContext::new(&model, &[0.0], SolverConfig::default(), 1e-10).unwrap();
        assert_draw_covariance(
            |rng| ctx.draw_aux(rng).unwrap(),
            &DMatrix::identity(4, 4),
            50_000,
            21,
        );
    }

    #[test]
    fn cov_gibbs_draws_have_inverse_marginal_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n_obs = 15;
        let a = random_a(n_obs, 11, &mut rng);
        let model =
            ScaledCovModel::new(a, tridiag_spd(11, 2.0, 0.6), 1.3, vec![0.0; n_obs]);
        let theta = [0.4];
        let want = dense_s(&model, &theta).try_inverse().unwrap();
        let mut ctx =
            ThetaContext::new(&model, &theta, SolverConfig::default(), 1e-10).unwrap();
        assert_draw_covariance(|rng| ctx.draw_aux(rng).unwrap(), &want, 50_000, 22);
    }

    #[test]
    fn prec_gibbs_draws_have_inverse_marginal_covariance() {
        use crate::models::RandomPrecisionModel;
        let n = 15;
        let model = RandomPrecisionModel::from_seed(n, 12, 1.6, vec![0.0; n]).unwrap();
        let theta = [0.2];
        let want = dense_s(&model, &theta).try_inverse().unwrap();
        let mut ctx =
            ThetaContext::new(&model, &theta, SolverConfig::default(), 1e-10).unwrap();
        assert_draw_covariance(|rng| ctx.draw_aux(rng).unwrap(), &want, 50_000, 23);
    }

    #[test]
    fn whitened_prec_gibbs_draws_have_inverse_marginal_covariance() {
        // GMRF route: the latent draw goes through the banded factor
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let points: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)])
            .collect();
        let model = GmrfWhiteningModel::new(4, 4, &points, vec![0.0; 10]).unwrap();
        let theta = [0.5, -0.3];
        let want = dense_s(&model, &theta).try_inverse().unwrap();
        let mut ctx =
            ThetaContext::new(&model, &theta, SolverConfig::default(), 1e-10).unwrap();
        assert_draw_covariance(|rng| ctx.draw_aux(rng).unwrap(), &want, 40_000, 24);
    }

    #[test]
    fn quadratics_are_cached_consistently() {
        // quad_y is parameter-only; recomputing it must be bit-stable, and
        // the full target must match the one-shot entry point
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = random_a(8, 6, &mut rng);
        let model = ScaledCovModel::new(a, tridiag_spd(6, 2.0, 0.5), 1.0, y);
        let solver = SolverConfig::default();
        let ctx = ThetaContext::new(&model, &[0.3], solver, 1e-10).unwrap();
        let q1 = ctx.quad_y().unwrap();
        let q2 = ctx.quad_y().unwrap();
        assert_eq!(q1, q2);
        let z: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = log_joint_aug(&model, &[0.3], &z, &solver).unwrap();
        let assembled = ctx.log_prior() - 0.5 * q1 - 0.5 * ctx.quad_z(&z).unwrap();
        assert!((direct - assembled).abs() < 1e-12);
    }

    #[test]
    fn gmrf_aux_chain_draws_validate_against_simulated_data() {
        // end-to-end: simulate from the model, bind at truth, and check the
        // augmented target is finite and the aux draw has the right length
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let points: Vec<[f64; 2]> = (0..25)
            .map(|_| [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)])
            .collect();
        let truth = [1.0, -0.5];
        let scaffold = GmrfWhiteningModel::new(8, 8, &points, vec![0.0; 25]).unwrap();
        let sim = simulate_data(&scaffold, &truth, 99).unwrap();
        let model = GmrfWhiteningModel::new(8, 8, &points, sim.y).unwrap();
        let mut ctx =
            ThetaContext::new(&model, &truth, SolverConfig::default(), 1e-10).unwrap();
        let z = ctx.draw_aux(&mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        assert_eq!(z.len(), 25);
        let t = log_joint_aug(&model, &truth, &z, &SolverConfig::default()).unwrap();
        assert!(t.is_finite());
    }
}
