//! The four subcommands: `simulate` writes synthetic data files, `run`
//! samples one chain and records it, `compare` tabulates two traces side
//! by side, and `ess` summarizes a single trace.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{summarize, ParamSummary};
use crate::linalg::{read_matrix_market, write_matrix_market};
use crate::mcmc::{run_cholesky_chain, run_detfree_chain};
use crate::models::{
    generate_random_precision, simulate_data, fit_mean_function, GaussianModel,
    GmrfWhiteningModel, RandomPrecisionModel, WendlandGPModel,
};
use crate::{Error, Result};

use super::config::{Family, LoadedConfig};
use super::data::{
    epoch_seconds, file_digest, load_trace_csv, read_indexed_csv, read_spatial_csv,
    write_compare_csv, write_indexed_csv, write_run_metadata, write_spatial_csv,
    write_summary_csv, write_trace_csv, CompareRow,
};
use super::SamplerChoice;

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn report_written(path: &Path, rows: usize) -> Result<()> {
    println!(
        "wrote {} ({rows} rows) sha256={}",
        path.display(),
        file_digest(path)?
    );
    Ok(())
}

/// Uniform locations on the unit square, seeded by the model seed.
fn uniform_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect()
}

/// Generates data at the config's `true_params` and writes the files `run`
/// will read.  The model seed fixes the structure (sparsity pattern or
/// locations); the simulation noise stream uses seed + 1 so structure and
/// noise never share draws.
pub fn cmd_simulate(loaded: &LoadedConfig) -> Result<()> {
    let m = &loaded.config.model;
    let seed = m.seed.expect("validated");
    let data_path = loaded.data_path();
    ensure_parent(&data_path)?;
    match loaded.family {
        Family::RandomPrecision => {
            let n = m.n.expect("validated");
            let q0 = generate_random_precision(n, seed)?;
            if let Some(mtx) = loaded.matrix_path() {
                ensure_parent(&mtx)?;
                write_matrix_market(&mtx, &q0)?;
                report_written(&mtx, q0.nnz())?;
            }
            let model = RandomPrecisionModel::new(q0, m.tau.expect("validated"), vec![0.0; n])?;
            let theta = loaded.true_theta(&model)?;
            let sim = simulate_data(&model, &theta, seed.wrapping_add(1))?;
            write_indexed_csv(&data_path, &sim.y)?;
            report_written(&data_path, sim.y.len())?;
        }
        Family::WendlandGp => {
            let n = m.n.expect("validated");
            let points = uniform_points(n, seed);
            // simulation always uses the zero-mean generative model; a
            // fitted mean surface only exists once data exists
            let model = WendlandGPModel::new(points.clone(), vec![0.0; n], None)?;
            let theta = loaded.true_theta(&model)?;
            let sim = simulate_data(&model, &theta, seed.wrapping_add(1))?;
            write_spatial_csv(&data_path, &points, &sim.y)?;
            report_written(&data_path, sim.y.len())?;
        }
        Family::GmrfWhitening => {
            let (nx, ny) = (m.nx.expect("validated"), m.ny.expect("validated"));
            let n_obs = m.n_obs.expect("validated");
            let points = uniform_points(n_obs, seed);
            let model = GmrfWhiteningModel::new(nx, ny, &points, vec![0.0; n_obs])?;
            let theta = loaded.true_theta(&model)?;
            let sim = simulate_data(&model, &theta, seed.wrapping_add(1))?;
            write_spatial_csv(&data_path, &points, &sim.y)?;
            report_written(&data_path, sim.y.len())?;
        }
    }
    Ok(())
}

/// Builds the model `run` samples from, reading the data files `simulate`
/// wrote (or user-supplied files in the same formats).
pub fn build_model(loaded: &LoadedConfig) -> Result<Box<dyn GaussianModel>> {
    let m = &loaded.config.model;
    let seed = m.seed.expect("validated");
    let data_path = loaded.data_path();
    match loaded.family {
        Family::RandomPrecision => {
            let n = m.n.expect("validated");
            let y = read_indexed_csv(&data_path)?;
            let q0 = match loaded.matrix_path() {
                Some(mtx) => {
                    let q0 = read_matrix_market(&mtx)?;
                    if q0.n_rows() != n {
                        return Err(Error::Config(format!(
                            "matrix file is {}-dimensional but the config says n = {n}",
                            q0.n_rows()
                        )));
                    }
                    q0
                }
                None => generate_random_precision(n, seed)?,
            };
            Ok(Box::new(RandomPrecisionModel::new(
                q0,
                m.tau.expect("validated"),
                y,
            )?))
        }
        Family::WendlandGp => {
            let data = read_spatial_csv(&data_path)?;
            let mean = if m.fit_mean.unwrap_or(false) {
                Some(fit_mean_function(&data.points, &data.values, seed)?)
            } else {
                None
            };
            Ok(Box::new(WendlandGPModel::new(
                data.points,
                data.values,
                mean,
            )?))
        }
        Family::GmrfWhitening => {
            let data = read_spatial_csv(&data_path)?;
            Ok(Box::new(GmrfWhiteningModel::new(
                m.nx.expect("validated"),
                m.ny.expect("validated"),
                &data.points,
                data.values,
            )?))
        }
    }
}

fn print_summaries(rows: &[ParamSummary]) {
    println!(
        "{:<12} {:>14} {:>12} {:>10} {:>12} {:>12}",
        "parameter", "mean", "sd", "ess", "mcse", "ess_per_s"
    );
    for s in rows {
        println!(
            "{:<12} {:>14.6} {:>12.6} {:>10.1} {:>12.6} {:>12.2}",
            s.name, s.mean, s.sd, s.ess, s.mcse, s.ess_per_second
        );
    }
}

/// Runs one chain and writes `trace_<sampler>.csv`, its metadata sidecar,
/// and `summary_<sampler>.csv` into the output directory.  A chain that
/// stops early still leaves its partial trace and metadata behind, then
/// surfaces the failure through the exit code.
pub fn cmd_run(
    loaded: &LoadedConfig,
    sampler: SamplerChoice,
    cli_seed: Option<u64>,
    cli_out: Option<&Path>,
) -> Result<()> {
    let model = build_model(loaded)?;
    let chain_config = loaded.chain_config(model.as_ref())?;
    let seed = loaded.chain_seed(cli_seed);
    let out = loaded.output_dir(cli_out);
    std::fs::create_dir_all(&out)?;

    let start = epoch_seconds();
    let trace = match sampler {
        SamplerChoice::Detfree => run_detfree_chain(model.as_ref(), &chain_config, seed)?,
        SamplerChoice::Cholesky => run_cholesky_chain(model.as_ref(), &chain_config, seed)?,
    };
    let end = epoch_seconds();

    let trace_path = out.join(format!("trace_{}.csv", trace.sampler));
    let meta_path = out.join(format!("trace_{}.meta.json", trace.sampler));
    let summary_path = out.join(format!("summary_{}.csv", trace.sampler));
    write_trace_csv(&trace_path, &trace)?;
    write_run_metadata(
        &meta_path,
        &trace,
        loaded.family.name(),
        &loaded.digest,
        chain_config.iterations,
        start,
        end,
    )?;
    println!(
        "run: sampler={} family={} seed={seed} recorded={} burn_in={}",
        trace.sampler,
        loaded.family.name(),
        trace.len(),
        trace.burn_in
    );
    println!("wrote {}", trace_path.display());
    println!("wrote {}", meta_path.display());

    if !trace.complete {
        write_summary_csv(&summary_path, &[])?;
        let msg = trace
            .error
            .clone()
            .unwrap_or_else(|| "unknown failure".into());
        return Err(Error::NoConvergence(format!(
            "chain stopped after {} of {} iterations: {msg}",
            trace.len(),
            chain_config.iterations
        )));
    }
    if trace.is_empty() {
        write_summary_csv(&summary_path, &[])?;
        println!("wrote {} (empty chain)", summary_path.display());
        return Ok(());
    }
    let summaries = summarize(&trace)?;
    write_summary_csv(&summary_path, &summaries)?;
    println!("wrote {}", summary_path.display());
    println!(
        "acceptance rate (post burn-in) {:.3}, sampling wall-clock {:.3} s",
        trace.acceptance_rate(),
        trace.total_seconds()
    );
    print_summaries(&summaries);
    Ok(())
}

/// Side-by-side table of two traces over the same parameters, with
/// `z_mean = |mean_a - mean_b| / sqrt(mcse_a^2 + mcse_b^2)`.
pub fn cmd_compare(
    trace_a: &Path,
    trace_b: &Path,
    burnin: f64,
    out: Option<&Path>,
) -> Result<()> {
    let a = load_trace_csv(trace_a, burnin)?;
    let b = load_trace_csv(trace_b, burnin)?;
    if a.param_names != b.param_names {
        return Err(Error::InvalidArgument(format!(
            "traces disagree on parameters: {:?} vs {:?}",
            a.param_names, b.param_names
        )));
    }
    let sa = summarize(&a)?;
    let sb = summarize(&b)?;
    let rows: Vec<CompareRow> = sa
        .into_iter()
        .zip(sb)
        .map(|(x, y)| {
            let z = (x.mean - y.mean).abs() / (x.mcse.powi(2) + y.mcse.powi(2)).sqrt();
            CompareRow {
                parameter: x.name.clone(),
                a: x,
                b: y,
                z_mean: z,
            }
        })
        .collect();
    if let Some(path) = out {
        ensure_parent(path)?;
        write_compare_csv(path, &rows)?;
        println!("wrote {}", path.display());
    }
    println!(
        "{:<12} {:>12} {:>12} {:>10} {:>10} {:>8}",
        "parameter", "mean_a", "mean_b", "ess_a", "ess_b", "z_mean"
    );
    for r in &rows {
        println!(
            "{:<12} {:>12.6} {:>12.6} {:>10.1} {:>10.1} {:>8.2}",
            r.parameter, r.a.mean, r.b.mean, r.a.ess, r.b.ess, r.z_mean
        );
    }
    Ok(())
}

/// Effective-sample-size summary of a single trace file.
pub fn cmd_ess(trace: &Path, burnin: f64, out: Option<&Path>) -> Result<()> {
    let t = load_trace_csv(trace, burnin)?;
    if t.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} has no rows to summarize",
            trace.display()
        )));
    }
    let summaries = summarize(&t)?;
    print_summaries(&summaries);
    if let Some(path) = out {
        ensure_parent(path)?;
        write_summary_csv(path, &summaries)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
