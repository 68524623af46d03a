//! Two-block MCMC over covariance parameters.
//!
//! `run_detfree_chain` alternates a Gibbs refresh of the auxiliary vector
//! (one inverse-square-root or lemma solve) with an adaptive random-walk
//! Metropolis step on the log-scale parameters, never touching a
//! determinant.  `run_cholesky_chain` runs the same Metropolis machinery
//! against the exact marginal likelihood via dense or banded factorizations
//! and serves as the validation baseline.
//!
//! Both samplers draw from a single seeded generator in a fixed order
//! (auxiliary noise, proposal displacement, acceptance uniform), so traces
//! are bit-reproducible per seed.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::krylov::SolverConfig;
use crate::linalg::{dense_cholesky, DenseFactor, DenseMatrix};
use crate::models::{marginal_loglik, GaussianModel, DEFAULT_DENSE_GUARD};
use crate::{Error, Result};

mod aux_update;

pub use aux_update::{
    gibbs_update_aux_cov, gibbs_update_aux_prec, log_joint_aug, marginal_precision_apply,
    ConditionalPrecOperator, ThetaContext,
};

/// Number of parameter draws an adaptation window must hold before the
/// proposal is re-estimated.
pub const ADAPT_MIN_WINDOW: usize = 50;
/// Acceptance rate the scale nudges steer toward.
pub const ADAPT_TARGET_RATE: f64 = 0.3;

/// Random-walk proposal: candidate = current + scale * L xi with xi
/// standard normal.  `factor` is the Cholesky factor of the estimated
/// posterior shape; without one the walk is isotropic.
#[derive(Clone)]
pub struct Proposal {
    factor: Option<DenseFactor>,
    scale: f64,
}

impl Proposal {
    pub fn isotropic(scale: f64) -> Self {
        Proposal { factor: None, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_isotropic(&self) -> bool {
        self.factor.is_none()
    }

    /// Draws a candidate point, consuming exactly dim(theta) normals.
    pub fn step(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let xi: Vec<f64> = (0..theta.len()).map(|_| rng.sample(StandardNormal)).collect();
        let dir = match &self.factor {
            Some(f) => f.lower_times(&xi).expect("factor dimension fixed"),
            None => xi,
        };
        theta
            .iter()
            .zip(&dir)
            .map(|(t, d)| t + self.scale * d)
            .collect()
    }
}

/// Re-estimates the proposal from an adaptation window: the covariance
/// becomes (2.38^2 / d)(empirical covariance + 1e-10 I) and the scalar
/// scale moves 10% up or down toward the target acceptance rate.  Windows
/// below `ADAPT_MIN_WINDOW` leave the proposal untouched; a degenerate
/// (constant) window falls back to an isotropic walk because it carries no
/// shape information.
pub fn adapt_proposal(window: &[Vec<f64>], accepted: usize, current: &Proposal) -> Proposal {
    if window.len() < ADAPT_MIN_WINDOW || window[0].is_empty() {
        return current.clone();
    }
    let d = window[0].len();
    let n = window.len() as f64;
    let rate = accepted as f64 / n;
    let scale = current.scale * if rate > ADAPT_TARGET_RATE { 1.1 } else { 0.9 };

    let mut mean = vec![0.0; d];
    for row in window {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = DenseMatrix::zeros(d);
    for row in window {
        for i in 0..d {
            for j in 0..d {
                let v = cov.at(i, j) + (row[i] - mean[i]) * (row[j] - mean[j]) / n;
                cov.set(i, j, v);
            }
        }
    }
    let max_var = (0..d).map(|i| cov.at(i, i)).fold(0.0, f64::max);
    if max_var < 1e-12 {
        return Proposal { factor: None, scale };
    }
    let g = 2.38 * 2.38 / d as f64;
    for i in 0..d {
        for j in 0..d {
            let ridge = if i == j { 1e-10 } else { 0.0 };
            cov.set(i, j, g * (cov.at(i, j) + ridge));
        }
    }
    match dense_cholesky(&cov) {
        Ok(f) => Proposal { factor: Some(f), scale },
        Err(_) => Proposal { factor: None, scale },
    }
}

/// Result of one Metropolis step.  `payload` carries whatever the target
/// evaluation produced at the candidate and is present only on acceptance.
pub struct MhStep<T> {
    pub accepted: bool,
    pub candidate: Vec<f64>,
    pub target: f64,
    pub payload: Option<T>,
}

/// One random-walk Metropolis update.  The evaluation closure returns the
/// candidate's log target plus a payload, with `(NEG_INFINITY, None)` for
/// candidates outside the prior support (skipping all heavy work).  The
/// acceptance uniform is drawn unconditionally — even for certain accepts
/// and prior rejections — so the generator stream advances identically
/// regardless of the decisions taken.
pub fn mh_update_theta<T>(
    theta: &[f64],
    current_target: f64,
    proposal: &Proposal,
    rng: &mut ChaCha8Rng,
    eval: impl FnOnce(&[f64]) -> Result<(f64, Option<T>)>,
) -> Result<MhStep<T>> {
    let candidate = proposal.step(theta, rng);
    let (cand_target, payload) = eval(&candidate)?;
    let u: f64 = rng.random_range(0.0..1.0);
    let accepted = u.ln() < cand_target - current_target;
    Ok(MhStep {
        accepted,
        candidate,
        target: if accepted { cand_target } else { current_target },
        payload: if accepted { payload } else { None },
    })
}

/// Current position of a chain: parameters, the auxiliary block (absent in
/// the marginal baseline), and the cached log target at that position.
pub struct ChainState {
    pub theta: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub log_target: f64,
    pub iteration: usize,
}

/// How a chain picks its starting parameters.
#[derive(Clone, Debug)]
pub enum ChainInit {
    /// A draw from the model's prior (the default).
    PriorDraw,
    /// An explicit starting point, e.g. the simulation truth.
    Explicit(Vec<f64>),
}

/// Sampler settings shared by both chain drivers.
#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Fraction of iterations treated as burn-in (adaptation window).
    pub burn_in_frac: f64,
    pub init: ChainInit,
    /// Initial isotropic proposal scale.
    pub initial_scale: f64,
    /// Adaptation cadence in iterations (during burn-in only).
    pub adapt_every: usize,
    pub solver: SolverConfig,
    /// Target sup-norm error of the inverse-square-root quadrature.
    pub quad_target: f64,
    /// Fixed quadrature term count; `None` selects the smallest count
    /// meeting `quad_target` from the a-priori error bound.
    pub quad_terms: Option<usize>,
    /// Dense-dimension guard for the Cholesky baseline.
    pub dense_guard: usize,
}

impl ChainConfig {
    pub fn new(iterations: usize) -> Self {
        ChainConfig {
            iterations,
            burn_in_frac: 0.3,
            init: ChainInit::PriorDraw,
            initial_scale: 0.2,
            adapt_every: 100,
            solver: SolverConfig::default(),
            quad_target: 1e-10,
            quad_terms: None,
            dense_guard: DEFAULT_DENSE_GUARD,
        }
    }

    fn validate(&self, model: &dyn GaussianModel) -> Result<usize> {
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(Error::Config(format!(
                "burn-in fraction {} must lie in [0, 1)",
                self.burn_in_frac
            )));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::Config(format!(
                "initial proposal scale {} must be positive",
                self.initial_scale
            )));
        }
        if self.adapt_every == 0 {
            return Err(Error::Config("adaptation cadence must be positive".into()));
        }
        if let ChainInit::Explicit(v) = &self.init {
            if v.len() != model.param_names().len() {
                return Err(Error::Config(format!(
                    "initial point has {} coordinates, model has {} parameters",
                    v.len(),
                    model.param_names().len()
                )));
            }
            if model.log_prior(v) == f64::NEG_INFINITY {
                return Err(Error::Config(
                    "initial point has zero prior density".into(),
                ));
            }
        }
        Ok((self.burn_in_frac * self.iterations as f64).floor() as usize)
    }
}

/// A recorded chain.  Statistical columns (parameters, log target,
/// acceptance) are bit-reproducible per seed; the cumulative seconds column
/// reflects wall-clock and is not.
#[derive(Debug)]
pub struct Trace {
    pub sampler: &'static str,
    pub param_names: Vec<String>,
    pub iters: Vec<u64>,
    pub params: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    pub accepted: Vec<bool>,
    pub seconds_cum: Vec<f64>,
    pub burn_in: usize,
    pub seed: u64,
    pub complete: bool,
    pub error: Option<String>,
}

impl Trace {
    fn new(sampler: &'static str, model: &dyn GaussianModel, burn_in: usize, seed: u64) -> Self {
        Trace {
            sampler,
            param_names: model.param_names().iter().map(|s| s.to_string()).collect(),
            iters: Vec::new(),
            params: Vec::new(),
            log_target: Vec::new(),
            accepted: Vec::new(),
            seconds_cum: Vec::new(),
            burn_in,
            seed,
            complete: false,
            error: None,
        }
    }

    fn push(&mut self, iter: u64, params: Vec<f64>, log_target: f64, accepted: bool, secs: f64) {
        self.iters.push(iter);
        self.params.push(params);
        self.log_target.push(log_target);
        self.accepted.push(accepted);
        self.seconds_cum.push(secs);
    }

    pub fn len(&self) -> usize {
        self.iters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iters.is_empty()
    }

    /// Post-burn-in values of one parameter.
    pub fn param_column_post_burn_in(&self, j: usize) -> Vec<f64> {
        self.params
            .iter()
            .skip(self.burn_in.min(self.len()))
            .map(|row| row[j])
            .collect()
    }

    /// Acceptance rate over the post-burn-in rows.
    pub fn acceptance_rate(&self) -> f64 {
        let tail = &self.accepted[self.burn_in.min(self.len())..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().filter(|&&a| a).count() as f64 / tail.len() as f64
    }

    /// Total sampling wall-clock in seconds (file I/O happens outside the
    /// sampling loop and is not included).
    pub fn total_seconds(&self) -> f64 {
        self.seconds_cum.last().copied().unwrap_or(0.0)
    }
}

fn initial_theta(
    model: &dyn GaussianModel,
    init: &ChainInit,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    match init {
        ChainInit::PriorDraw => model.sample_prior(rng),
        ChainInit::Explicit(v) => v.clone(),
    }
}

/// Runs the determinant-free two-block sampler.  Mid-run numerical
/// failures stop the chain and return the partial trace with
/// `complete == false` and the error recorded; configuration problems are
/// reported as errors before any sampling happens.
pub fn run_detfree_chain(
    model: &dyn GaussianModel,
    config: &ChainConfig,
    seed: u64,
) -> Result<Trace> {
    let burn_in = config.validate(model)?;
    let mut trace = Trace::new("detfree", model, burn_in, seed);
    if config.iterations == 0 {
        trace.complete = true;
        return Ok(trace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = initial_theta(model, &config.init, &mut rng);
    let start = Instant::now();

    let run = |trace: &mut Trace, rng: &mut ChaCha8Rng| -> Result<()> {
        if model.log_prior(&theta0) == f64::NEG_INFINITY {
            return Err(Error::Config(
                "prior draw landed outside its own support".into(),
            ));
        }
        let mut ctx = ThetaContext::new(model, &theta0, config.solver, config.quad_target)?;
        ctx.set_quad_terms(config.quad_terms);
        let mut quad_y = ctx.quad_y()?;
        let mut state = ChainState {
            theta: theta0.clone(),
            z: None,
            log_target: f64::NAN, // defined once the first auxiliary draw lands
            iteration: 0,
        };
        let mut proposal = Proposal::isotropic(config.initial_scale);
        let mut window: Vec<Vec<f64>> = Vec::new();
        let mut window_accepts = 0usize;

        for iter in 1..=config.iterations {
            state.iteration = iter;
            // Gibbs block: refresh z | theta and the auxiliary quadratic
            let z = ctx.draw_aux(rng)?;
            let quad_z = ctx.quad_z(&z)?;
            state.log_target = ctx.log_prior() - 0.5 * (quad_y + quad_z);

            // Metropolis block: theta | z
            let step = mh_update_theta(
                &state.theta,
                state.log_target,
                &proposal,
                rng,
                |cand| {
                    if model.log_prior(cand) == f64::NEG_INFINITY {
                        return Ok((f64::NEG_INFINITY, None));
                    }
                    let mut cand_ctx =
                        ThetaContext::new(model, cand, config.solver, config.quad_target)?;
                    cand_ctx.set_quad_terms(config.quad_terms);
                    let qy = cand_ctx.quad_y()?;
                    let qz = cand_ctx.quad_z(&z)?;
                    Ok((cand_ctx.log_prior() - 0.5 * (qy + qz), Some((cand_ctx, qy))))
                },
            )?;
            if step.accepted {
                let (cand_ctx, qy) = step.payload.expect("payload accompanies acceptance");
                ctx = cand_ctx;
                quad_y = qy;
                state.theta = step.candidate;
            }
            state.log_target = step.target;
            state.z = Some(z);

            if cfg!(debug_assertions) && iter % 512 == 0 {
                let fresh = log_joint_aug(
                    model,
                    &state.theta,
                    state.z.as_ref().expect("set above"),
                    &config.solver,
                )?;
                debug_assert!(
                    (fresh - state.log_target).abs() <= 1e-10 * (1.0 + state.log_target.abs()),
                    "cached target drifted: {fresh} vs {}",
                    state.log_target
                );
            }

            trace.push(
                iter as u64,
                state.theta.clone(),
                state.log_target,
                step.accepted,
                start.elapsed().as_secs_f64(),
            );

            if iter <= burn_in {
                window.push(state.theta.clone());
                if step.accepted {
                    window_accepts += 1;
                }
                if iter % config.adapt_every == 0 {
                    proposal = adapt_proposal(&window, window_accepts, &proposal);
                    window.clear();
                    window_accepts = 0;
                }
            }
        }
        Ok(())
    };

    match run(&mut trace, &mut rng) {
        Ok(()) => trace.complete = true,
        Err(e) => {
            trace.complete = false;
            trace.error = Some(e.to_string());
        }
    }
    Ok(trace)
}

/// Runs the exact-marginal baseline: the same adaptive Metropolis walk, but
/// the target is log prior + the factorization-based marginal likelihood.
pub fn run_cholesky_chain(
    model: &dyn GaussianModel,
    config: &ChainConfig,
    seed: u64,
) -> Result<Trace> {
    let burn_in = config.validate(model)?;
    let mut trace = Trace::new("cholesky", model, burn_in, seed);
    if config.iterations == 0 {
        trace.complete = true;
        return Ok(trace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = initial_theta(model, &config.init, &mut rng);
    let start = Instant::now();

    let run = |trace: &mut Trace, rng: &mut ChaCha8Rng| -> Result<()> {
        if model.log_prior(&theta0) == f64::NEG_INFINITY {
            return Err(Error::Config(
                "prior draw landed outside its own support".into(),
            ));
        }
        let mut state = ChainState {
            theta: theta0.clone(),
            z: None,
            log_target: model.log_prior(&theta0)
                + marginal_loglik(model, &theta0, config.dense_guard)?,
            iteration: 0,
        };
        let mut proposal = Proposal::isotropic(config.initial_scale);
        let mut window: Vec<Vec<f64>> = Vec::new();
        let mut window_accepts = 0usize;

        for iter in 1..=config.iterations {
            state.iteration = iter;
            let step = mh_update_theta(
                &state.theta,
                state.log_target,
                &proposal,
                rng,
                |cand| {
                    let lp = model.log_prior(cand);
                    if lp == f64::NEG_INFINITY {
                        return Ok((f64::NEG_INFINITY, None));
                    }
                    Ok((lp + marginal_loglik(model, cand, config.dense_guard)?, Some(())))
                },
            )?;
            if step.accepted {
                state.theta = step.candidate;
            }
            state.log_target = step.target;

            trace.push(
                iter as u64,
                state.theta.clone(),
                state.log_target,
                step.accepted,
                start.elapsed().as_secs_f64(),
            );

            if iter <= burn_in {
                window.push(state.theta.clone());
                if step.accepted {
                    window_accepts += 1;
                }
                if iter % config.adapt_every == 0 {
                    proposal = adapt_proposal(&window, window_accepts, &proposal);
                    window.clear();
                    window_accepts = 0;
                }
            }
        }
        Ok(())
    };

    match run(&mut trace, &mut rng) {
        Ok(()) => trace.complete = true,
        Err(e) => {
            trace.complete = false;
            trace.error = Some(e.to_string());
        }
    }
    Ok(trace)
}
