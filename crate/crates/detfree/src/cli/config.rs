//! Run configuration: a single JSON document drives the simulate, run, and
//! compare pipeline, so every artifact is reconstructible from the config
//! file plus a seed.  Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::mcmc::{ChainConfig, ChainInit};
use crate::models::GaussianModel;
use crate::{Error, Result};

use super::data::sha256_hex;

/// Top-level config document.
#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub mcmc: McmcBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub rational: RationalBlock,
    pub output: OutputBlock,
}

/// Model family plus its family-specific keys.  The schema is one flat
/// struct with everything optional so that unknown keys are still rejected
/// (tagged serde enums cannot do that); `RunConfig::validate` then enforces
/// the per-family key sets.
#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// One of `random_precision`, `wendland_gp`, `gmrf_whitening`.
    pub family: String,
    /// Seeds the model structure: sparsity pattern, point locations, mean
    /// basis.  Simulation noise uses `seed + 1` so the two streams never
    /// overlap.
    pub seed: Option<u64>,
    /// Latent dimension (random_precision) or point count (wendland_gp).
    pub n: Option<usize>,
    /// Grid extent (gmrf_whitening).
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// Observation count (gmrf_whitening).
    pub n_obs: Option<usize>,
    /// Fixed observation precision (random_precision).
    pub tau: Option<f64>,
    /// Generating parameter values, keyed by parameter name; required by
    /// `simulate` and by `init: "truth"`.
    pub true_params: Option<BTreeMap<String, f64>>,
    /// Matrix Market file for the precision structure (random_precision);
    /// written by `simulate`, read back by `run` when present.
    pub matrix_file: Option<String>,
    /// Observation CSV: `x,y,value` for the spatial families,
    /// `index,value` for random_precision.
    pub data_file: Option<String>,
    /// Fit the radial-basis mean surface from the data (wendland_gp).
    pub fit_mean: Option<bool>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct McmcBlock {
    pub iterations: usize,
    /// Burn-in fraction in [0, 1); defaults to 0.3.
    pub burnin: Option<f64>,
    /// `"prior"`, `"truth"`, or an explicit parameter vector.
    pub init: Option<InitSpec>,
    /// Initial isotropic random-walk scale; defaults to 0.2.
    pub proposal_scale: Option<f64>,
    /// Chain seed; defaults to 0 and is overridden by `--seed`.
    pub seed: Option<u64>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
pub enum InitSpec {
    Keyword(String),
    Explicit(Vec<f64>),
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct RationalBlock {
    /// Quadrature term count: an integer, or `"auto"` (the default) for the
    /// smallest count whose a-priori error bound meets the target.
    pub n: Option<TermSpec>,
}

#[derive(Deserialize, Debug, Clone, PartialEq)]
#[serde(untagged)]
pub enum TermSpec {
    Fixed(usize),
    Keyword(String),
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
}

/// The model families the CLI can build.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Family {
    RandomPrecision,
    WendlandGp,
    GmrfWhitening,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::RandomPrecision => "random_precision",
            Family::WendlandGp => "wendland_gp",
            Family::GmrfWhitening => "gmrf_whitening",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "random_precision" => Ok(Family::RandomPrecision),
            "wendland_gp" => Ok(Family::WendlandGp),
            "gmrf_whitening" => Ok(Family::GmrfWhitening),
            other => Err(Error::Config(format!(
                "unknown model family {other:?}; expected one of \
                 random_precision, wendland_gp, gmrf_whitening"
            ))),
        }
    }
}

impl RunConfig {
    /// Structural validation beyond the serde schema: family-specific key
    /// sets, ranges, and keyword spellings.
    pub fn validate(&self) -> Result<Family> {
        let family = Family::parse(&self.model.family)?;
        let m = &self.model;

        let reject = |key: &str, present: bool| -> Result<()> {
            if present {
                return Err(Error::Config(format!(
                    "model key {key:?} does not apply to family {}",
                    family.name()
                )));
            }
            Ok(())
        };
        match family {
            Family::RandomPrecision => {
                reject("nx", m.nx.is_some())?;
                reject("ny", m.ny.is_some())?;
                reject("n_obs", m.n_obs.is_some())?;
                reject("fit_mean", m.fit_mean.is_some())?;
            }
            Family::WendlandGp => {
                reject("nx", m.nx.is_some())?;
                reject("ny", m.ny.is_some())?;
                reject("n_obs", m.n_obs.is_some())?;
                reject("tau", m.tau.is_some())?;
                reject("matrix_file", m.matrix_file.is_some())?;
            }
            Family::GmrfWhitening => {
                reject("n", m.n.is_some())?;
                reject("tau", m.tau.is_some())?;
                reject("matrix_file", m.matrix_file.is_some())?;
                reject("fit_mean", m.fit_mean.is_some())?;
            }
        }

        let require = |key: &str, present: bool| -> Result<()> {
            if !present {
                return Err(Error::Config(format!(
                    "family {} requires model key {key:?}",
                    family.name()
                )));
            }
            Ok(())
        };
        require("seed", m.seed.is_some())?;
        require("data_file", m.data_file.is_some())?;
        match family {
            Family::RandomPrecision => {
                require("n", m.n.is_some())?;
                require("tau", m.tau.is_some())?;
                let tau = m.tau.expect("checked");
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!(
                        "observation precision tau = {tau} must be positive and finite"
                    )));
                }
            }
            Family::WendlandGp => require("n", m.n.is_some())?,
            Family::GmrfWhitening => {
                require("nx", m.nx.is_some())?;
                require("ny", m.ny.is_some())?;
                require("n_obs", m.n_obs.is_some())?;
                if m.nx == Some(0) || m.ny == Some(0) || m.n_obs == Some(0) {
                    return Err(Error::Config(
                        "grid extents and observation count must be positive".into(),
                    ));
                }
            }
        }
        if m.n == Some(0) {
            return Err(Error::Config("model dimension n must be positive".into()));
        }

        if let Some(b) = self.mcmc.burnin {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!(
                    "burnin fraction {b} must lie in [0, 1)"
                )));
            }
        }
        if let Some(s) = self.mcmc.proposal_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "proposal_scale {s} must be positive and finite"
                )));
            }
        }
        if let Some(InitSpec::Keyword(k)) = &self.mcmc.init {
            if k != "prior" && k != "truth" {
                return Err(Error::Config(format!(
                    "init keyword {k:?} must be \"prior\", \"truth\", or an \
                     explicit parameter array"
                )));
            }
            if k == "truth" && m.true_params.is_none() {
                return Err(Error::Config(
                    "init \"truth\" requires model.true_params".into(),
                ));
            }
        }
        if let Some(t) = self.solver.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!(
                    "solver tol {t} must be positive and finite"
                )));
            }
        }
        match &self.rational.n {
            Some(TermSpec::Fixed(0)) => {
                return Err(Error::Config(
                    "rational n must be at least 1 quadrature term".into(),
                ));
            }
            Some(TermSpec::Keyword(k)) if k != "auto" => {
                return Err(Error::Config(format!(
                    "rational n must be an integer or \"auto\", got {k:?}"
                )));
            }
            _ => {}
        }
        if self.output.directory.is_empty() {
            return Err(Error::Config("output directory must be non-empty".into()));
        }
        Ok(family)
    }
}

/// A parsed and validated config together with its provenance: the SHA-256
/// digest of the raw file bytes and the directory relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub family: Family,
    pub digest: String,
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)?;
    let config: RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let family = config.validate()?;
    let digest = sha256_hex(&bytes);
    let mut base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    if base_dir.as_os_str().is_empty() {
        base_dir = PathBuf::from(".");
    }
    Ok(LoadedConfig {
        config,
        family,
        digest,
        base_dir,
    })
}

impl LoadedConfig {
    /// Resolves a config-file-relative path (absolute paths pass through).
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(self.config.model.data_file.as_deref().expect("validated"))
    }

    pub fn matrix_path(&self) -> Option<PathBuf> {
        self.config
            .model
            .matrix_file
            .as_deref()
            .map(|f| self.resolve(f))
    }

    /// Output directory, with the `--out` flag taking precedence.
    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        match cli_out {
            Some(p) => p.to_path_buf(),
            None => self.resolve(&self.config.output.directory),
        }
    }

    /// Effective chain seed: `--seed` beats `mcmc.seed` beats 0.
    pub fn chain_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.config.mcmc.seed).unwrap_or(0)
    }

    /// Generating parameters in the model's parameter order.
    pub fn true_theta(&self, model: &dyn GaussianModel) -> Result<Vec<f64>> {
        let map = self.config.model.true_params.as_ref().ok_or_else(|| {
            Error::Config("this operation requires model.true_params".into())
        })?;
        theta_in_order(model.param_names(), map)
    }

    /// Translates the mcmc/solver/rational blocks into sampler settings.
    pub fn chain_config(&self, model: &dyn GaussianModel) -> Result<ChainConfig> {
        let m = &self.config.mcmc;
        let mut cc = ChainConfig::new(m.iterations);
        if let Some(b) = m.burnin {
            cc.burn_in_frac = b;
        }
        if let Some(s) = m.proposal_scale {
            cc.initial_scale = s;
        }
        cc.init = match &m.init {
            None => ChainInit::PriorDraw,
            Some(InitSpec::Keyword(k)) if k == "prior" => ChainInit::PriorDraw,
            Some(InitSpec::Keyword(_)) => ChainInit::Explicit(self.true_theta(model)?),
            Some(InitSpec::Explicit(v)) => ChainInit::Explicit(v.clone()),
        };
        if let Some(t) = self.config.solver.tol {
            cc.solver.tol = t;
        }
        if self.config.solver.max_iters.is_some() {
            cc.solver.max_iters = self.config.solver.max_iters;
        }
        if let Some(TermSpec::Fixed(n)) = self.config.rational.n {
            cc.quad_terms = Some(n);
        }
        Ok(cc)
    }
}

/// Orders a name-keyed parameter map into the model's parameter vector,
/// rejecting missing or extraneous names.
pub fn theta_in_order(names: &[&str], map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    for key in map.keys() {
        if !names.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter {key:?}; model parameters are {names:?}"
            )));
        }
    }
    names
        .iter()
        .map(|name| {
            map.get(*name).copied().ok_or_else(|| {
                Error::Config(format!("missing value for parameter {name:?}"))
            })
        })
        .collect()
}
