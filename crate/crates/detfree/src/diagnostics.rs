//! Chain quality summaries: autocorrelation-based effective sample size,
//! Monte Carlo standard errors, and per-parameter trace summaries.
//!
//! ESS uses Geyer's initial positive sequence estimator (Geyer 1992):
//! sum the paired autocorrelations Gamma_m = rho(2m) + rho(2m+1) while they
//! stay positive, which is consistent for reversible chains without any
//! bandwidth tuning.

use crate::mcmc::Trace;
use crate::{Error, Result};

const MIN_SERIES: usize = 4;

fn validate(x: &[f64]) -> Result<()> {
    if x.len() < MIN_SERIES {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is too short to estimate autocorrelation",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "series contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Autocovariance at the given lag, normalized by n (biased form, the
/// convention under which Geyer's truncation argument holds).
fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size by the initial positive sequence estimator,
/// clamped to (0, n].  A chain with negative lag-1 correlation (for
/// example a strictly alternating series) has every Gamma_m <= 0; the
/// estimator then reports the clamp value n rather than extrapolating
/// beyond the number of draws.
pub fn ess(x: &[f64]) -> Result<f64> {
    validate(x)?;
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = autocovariance(x, mean, 0);
    if c0 <= 0.0 {
        return Err(Error::ZeroVariance(
            "cannot estimate ESS of a constant series".into(),
        ));
    }
    let mut gamma_sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let gamma =
            (autocovariance(x, mean, 2 * m) + autocovariance(x, mean, 2 * m + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        gamma_sum += gamma;
        m += 1;
    }
    // 1 + 2 sum_{k>=1} rho_k written in terms of the paired sums
    let tau = 2.0 * gamma_sum - 1.0;
    if tau <= 0.0 {
        return Ok(n as f64);
    }
    Ok((n as f64 / tau).min(n as f64))
}

/// Monte Carlo standard error of the mean: sd / sqrt(ESS) with the
/// unbiased standard deviation.
pub fn mcse(x: &[f64]) -> Result<f64> {
    let e = ess(x)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((var / e).sqrt())
}

/// Per-parameter summary of the post-burn-in portion of a trace.
#[derive(Clone, Debug)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub mcse: f64,
    /// ESS divided by total sampler wall-clock seconds (burn-in included,
    /// file I/O excluded — the trace only times the sampling loop).
    pub ess_per_second: f64,
}

/// Summarizes each parameter over the post-burn-in rows.
pub fn summarize(trace: &Trace) -> Result<Vec<ParamSummary>> {
    let seconds = trace.total_seconds();
    trace
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let x = trace.param_column_post_burn_in(j);
            let e = ess(&x)?;
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            Ok(ParamSummary {
                name: name.clone(),
                mean,
                sd,
                ess: e,
                mcse: sd / e.sqrt(),
                ess_per_second: if seconds > 0.0 { e / seconds } else { f64::NAN },
            })
        })
        .collect()
}
