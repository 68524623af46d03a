//! On-disk formats shared by the subcommands: observation CSVs, trace
//! CSVs, summary and comparison tables, and the metadata sidecar.
//!
//! Floats are written with the shortest round-trip representation, so a
//! written file reloads to bit-identical values and identical chains
//! produce byte-identical statistical columns.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::diagnostics::ParamSummary;
use crate::mcmc::Trace;
use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub fn epoch_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{}: {field:?} is not a number", path.display()),
    })
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "{}: header {got:?} does not match expected {want:?}",
                path.display()
            ),
        });
    }
    Ok(())
}

/// Point-indexed observations: the `x,y,value` CSV of the spatial families.
#[derive(Debug)]
pub struct SpatialData {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

pub fn write_spatial_csv(path: &Path, points: &[[f64; 2]], values: &[f64]) -> Result<()> {
    if points.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} points against {} values",
            points.len(),
            values.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["x", "y", "value"])
        .map_err(|e| csv_error(path, e))?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spatial_csv(path: &Path) -> Result<SpatialData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    check_header(
        path,
        &reader.headers().map_err(|e| csv_error(path, e))?.clone(),
        &["x", "y", "value"],
    )?;
    let mut data = SpatialData {
        points: Vec::new(),
        values: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("{}: expected 3 fields", path.display()),
            });
        }
        data.points.push([
            parse_f64(path, line, &record[0])?,
            parse_f64(path, line, &record[1])?,
        ]);
        data.values.push(parse_f64(path, line, &record[2])?);
    }
    Ok(data)
}

/// Plain indexed observations (`index,value`) for the non-spatial family.
pub fn write_indexed_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["index", "value"])
        .map_err(|e| csv_error(path, e))?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_indexed_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    check_header(
        path,
        &reader.headers().map_err(|e| csv_error(path, e))?.clone(),
        &["index", "value"],
    )?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("{}: expected 2 fields", path.display()),
            });
        }
        // the index column guards against reordered or truncated files
        if record[0].trim() != i.to_string() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "{}: index {:?} out of order, expected {i}",
                    path.display(),
                    &record[0]
                ),
            });
        }
        values.push(parse_f64(path, line, &record[1])?);
    }
    Ok(values)
}

/// Writes a chain as CSV with the fixed header
/// `iter,<parameter names...>,log_target,accepted,seconds_cum`.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["iter".to_string()];
    header.extend(trace.param_names.iter().cloned());
    header.extend(
        ["log_target", "accepted", "seconds_cum"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..trace.len() {
        let mut row = vec![trace.iters[i].to_string()];
        row.extend(trace.params[i].iter().map(|v| v.to_string()));
        row.push(trace.log_target[i].to_string());
        row.push(if trace.accepted[i] { "1" } else { "0" }.to_string());
        row.push(trace.seconds_cum[i].to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV back; `burn_in_frac` restores the burn-in split the
/// file itself does not record (its metadata sidecar does).
pub fn load_trace_csv(path: &Path, burn_in_frac: f64) -> Result<Trace> {
    if !(0.0..1.0).contains(&burn_in_frac) {
        return Err(Error::InvalidArgument(format!(
            "burn-in fraction {burn_in_frac} must lie in [0, 1)"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let bad_header = || Error::Parse {
        line: 1,
        message: format!(
            "{}: expected header iter,<params...>,log_target,accepted,seconds_cum, \
             got {headers:?}",
            path.display()
        ),
    };
    if headers.len() < 5
        || headers[0] != "iter"
        || headers[headers.len() - 3..] != ["log_target", "accepted", "seconds_cum"]
    {
        return Err(bad_header());
    }
    let param_names: Vec<String> = headers[1..headers.len() - 3].to_vec();
    let d = param_names.len();

    let mut trace = Trace {
        sampler: "loaded",
        param_names,
        iters: Vec::new(),
        params: Vec::new(),
        log_target: Vec::new(),
        accepted: Vec::new(),
        seconds_cum: Vec::new(),
        burn_in: 0,
        seed: 0,
        complete: true,
        error: None,
    };
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != d + 4 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "{}: expected {} fields, got {}",
                    path.display(),
                    d + 4,
                    record.len()
                ),
            });
        }
        let iter: u64 = record[0].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("{}: bad iteration index {:?}", path.display(), &record[0]),
        })?;
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            row.push(parse_f64(path, line, &record[1 + j])?);
        }
        let log_target = parse_f64(path, line, &record[1 + d])?;
        let accepted = match record[2 + d].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "{}: accepted flag {other:?} must be 0 or 1",
                        path.display()
                    ),
                })
            }
        };
        let seconds = parse_f64(path, line, &record[3 + d])?;
        trace.iters.push(iter);
        trace.params.push(row);
        trace.log_target.push(log_target);
        trace.accepted.push(accepted);
        trace.seconds_cum.push(seconds);
    }
    trace.burn_in = (burn_in_frac * trace.len() as f64).floor() as usize;
    Ok(trace)
}

/// Sidecar JSON describing a run: everything needed to reproduce the trace
/// (config digest + seed) plus completion bookkeeping.
pub fn write_run_metadata(
    path: &Path,
    trace: &Trace,
    family: &str,
    config_digest: &str,
    iterations_requested: usize,
    start_epoch_s: u64,
    end_epoch_s: u64,
) -> Result<()> {
    let doc = serde_json::json!({
        "sampler": trace.sampler,
        "family": family,
        "seed": trace.seed,
        "config_digest": config_digest,
        "iterations_requested": iterations_requested,
        "iterations_recorded": trace.len(),
        "burn_in": trace.burn_in,
        "start_epoch_s": start_epoch_s,
        "end_epoch_s": end_epoch_s,
        "sampling_seconds": trace.total_seconds(),
        "complete": trace.complete,
        "error": trace.error,
    });
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One row per parameter: `parameter,mean,sd,ess,mcse,ess_per_s`.
pub fn write_summary_csv(path: &Path, rows: &[ParamSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["parameter", "mean", "sd", "ess", "mcse", "ess_per_s"])
        .map_err(|e| csv_error(path, e))?;
    for s in rows {
        w.write_record([
            s.name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.ess.to_string(),
            s.mcse.to_string(),
            s.ess_per_second.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// A cross-sampler comparison line; `z_mean` is |Δmean| over the combined
/// Monte Carlo standard error.
pub struct CompareRow {
    pub parameter: String,
    pub a: ParamSummary,
    pub b: ParamSummary,
    pub z_mean: f64,
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "parameter",
        "mean_a",
        "sd_a",
        "ess_a",
        "ess_per_s_a",
        "mean_b",
        "sd_b",
        "ess_b",
        "ess_per_s_b",
        "z_mean",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.parameter.clone(),
            r.a.mean.to_string(),
            r.a.sd.to_string(),
            r.a.ess.to_string(),
            r.a.ess_per_second.to_string(),
            r.b.mean.to_string(),
            r.b.sd.to_string(),
            r.b.ess.to_string(),
            r.b.ess_per_second.to_string(),
            r.z_mean.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}
