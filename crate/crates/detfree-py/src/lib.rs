//! Python bindings: the sparse-matrix type, the Krylov and rational
//! primitives, the chain diagnostics, and a one-call `run_chain` that
//! drives a full sampling run from the same JSON configs the CLI reads.
//!
//! Build with `cargo build -p detfree-py --release` and import the
//! resulting `libdetfree_py.so` as module `detfree_py` (rename or link it
//! to `detfree_py.so` somewhere on `sys.path`).

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use detfree::cli::{build_model, load_config};
use detfree::diagnostics;
use detfree::krylov::{self, SolverConfig};
use detfree::linalg::{self, gershgorin_bounds};
use detfree::mcmc::{run_cholesky_chain, run_detfree_chain};
use detfree::rational::{self, InvsqrtQuadrature};
use detfree::Error;

fn pyerr(e: Error) -> PyErr {
    match &e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::InvalidArgument(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Symmetric-friendly CSR matrix over f64, the operand of every solver here.
#[pyclass(name = "SparseMatrix")]
struct PySparseMatrix {
    inner: linalg::SparseMatrix,
}

#[pymethods]
impl PySparseMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    /// `symmetric=True` verifies bitwise symmetry and marks the matrix as
    /// such, which the spectral-bound machinery requires.
    #[new]
    #[pyo3(signature = (n_rows, n_cols, triplets, symmetric = false))]
    fn new(
        n_rows: usize,
        n_cols: usize,
        triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> PyResult<Self> {
        let mut inner =
            linalg::SparseMatrix::from_triplets(n_rows, n_cols, &triplets).map_err(pyerr)?;
        if symmetric {
            inner = inner.into_symmetric().map_err(pyerr)?;
        }
        Ok(PySparseMatrix { inner })
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        PySparseMatrix { inner: linalg::SparseMatrix::identity(n) }
    }

    /// Reads a symmetric or general `coordinate real` Matrix Market file.
    #[staticmethod]
    fn from_matrix_market(path: &str) -> PyResult<Self> {
        let inner = linalg::read_matrix_market(path.as_ref()).map_err(pyerr)?;
        Ok(PySparseMatrix { inner })
    }

    fn shape(&self) -> (usize, usize) {
        (self.inner.n_rows(), self.inner.n_cols())
    }

    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    /// Matrix-vector product.
    fn spmv(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.spmv(&x).map_err(pyerr)
    }

    fn __repr__(&self) -> String {
        format!(
            "SparseMatrix({}x{}, nnz={})",
            self.inner.n_rows(),
            self.inner.n_cols(),
            self.inner.nnz()
        )
    }
}

/// A-priori sup-norm error bound of the N-term rational rule for the
/// inverse square root on [lower, upper].
#[pyfunction]
fn error_bound(n_terms: usize, lower: f64, upper: f64) -> PyResult<f64> {
    if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
        return Err(PyValueError::new_err(format!(
            "need 0 < lower <= upper < inf, got [{lower}, {upper}]"
        )));
    }
    Ok(rational::error_bound(n_terms, lower, upper))
}

/// Jacobi elliptic functions (sn, cn, dn) at argument u with modulus k.
#[pyfunction]
fn jacobi_elliptic(u: f64, k: f64) -> PyResult<(f64, f64, f64)> {
    rational::jacobi_elliptic(u, k).map_err(pyerr)
}

fn solver(tol: f64, max_iters: Option<usize>) -> SolverConfig {
    SolverConfig { tol, max_iters }
}

/// Conjugate gradients on SPD `matrix`; returns (x, iterations, converged).
#[pyfunction(signature = (matrix, b, tol = 1e-10, max_iters = None))]
fn cg_solve(
    matrix: &PySparseMatrix,
    b: Vec<f64>,
    tol: f64,
    max_iters: Option<usize>,
) -> PyResult<(Vec<f64>, usize, bool)> {
    let (x, stats) =
        krylov::cg_solve(&matrix.inner, &b, &solver(tol, max_iters)).map_err(pyerr)?;
    Ok((x, stats.iterations, stats.converged))
}

/// Solves (A + s I) x = b for every shift in one Krylov sweep; returns
/// (solutions, iterations, converged). Shifts must be sorted ascending
/// and non-negative.
#[pyfunction(signature = (matrix, shifts, b, tol = 1e-10, max_iters = None))]
fn shifted_cg_solve(
    matrix: &PySparseMatrix,
    shifts: Vec<f64>,
    b: Vec<f64>,
    tol: f64,
    max_iters: Option<usize>,
) -> PyResult<(Vec<Vec<f64>>, usize, bool)> {
    let (xs, stats) = krylov::shifted_cg_solve(&matrix.inner, &shifts, &b, &solver(tol, max_iters))
        .map_err(pyerr)?;
    Ok((xs, stats.iterations, stats.converged))
}

/// Applies matrix^(-1/2) to b through the rational approximation, with
/// spectral bounds taken from Gershgorin discs. `target` is the requested
/// sup-norm accuracy of the rational rule.
#[pyfunction(signature = (matrix, b, target = 1e-10, tol = 1e-10))]
fn apply_invsqrt(
    matrix: &PySparseMatrix,
    b: Vec<f64>,
    target: f64,
    tol: f64,
) -> PyResult<Vec<f64>> {
    let bounds = gershgorin_bounds(&matrix.inner).map_err(pyerr)?;
    let quad = InvsqrtQuadrature::auto(&bounds, target).map_err(pyerr)?;
    let (x, _) =
        rational::apply_invsqrt(&matrix.inner, &quad, &b, &solver(tol, None)).map_err(pyerr)?;
    Ok(x)
}

/// Effective sample size of a scalar chain (initial-positive-sequence rule).
#[pyfunction]
fn ess(x: Vec<f64>) -> PyResult<f64> {
    diagnostics::ess(&x).map_err(pyerr)
}

/// Monte Carlo standard error of the chain mean.
#[pyfunction]
fn mcse(x: Vec<f64>) -> PyResult<f64> {
    diagnostics::mcse(&x).map_err(pyerr)
}

/// Runs one chain from a JSON run config (same schema as the CLI) and
/// returns a JSON summary string: per-parameter posterior statistics plus
/// chain-level counters. `sampler` is "detfree" or "cholesky".
#[pyfunction(signature = (config_path, sampler = "detfree", seed = None))]
fn run_chain(config_path: &str, sampler: &str, seed: Option<u64>) -> PyResult<String> {
    let loaded = load_config(config_path.as_ref()).map_err(pyerr)?;
    let model = build_model(&loaded).map_err(pyerr)?;
    let config = loaded.chain_config(model.as_ref()).map_err(pyerr)?;
    let seed = loaded.chain_seed(seed);
    let trace = match sampler {
        "detfree" => run_detfree_chain(model.as_ref(), &config, seed),
        "cholesky" => run_cholesky_chain(model.as_ref(), &config, seed),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown sampler {other:?}; expected \"detfree\" or \"cholesky\""
            )))
        }
    }
    .map_err(pyerr)?;
    if !trace.complete {
        return Err(PyRuntimeError::new_err(format!(
            "chain stopped after {} of {} iterations: {}",
            trace.len(),
            config.iterations,
            trace.error.as_deref().unwrap_or("unknown failure")
        )));
    }
    let summaries = diagnostics::summarize(&trace).map_err(pyerr)?;
    let params: Vec<serde_json::Value> = summaries
        .iter()
        .map(|s| {
            serde_json::json!({
                "name": s.name,
                "mean": s.mean,
                "sd": s.sd,
                "ess": s.ess,
                "mcse": s.mcse,
                "ess_per_second": s.ess_per_second,
            })
        })
        .collect();
    let out = serde_json::json!({
        "sampler": trace.sampler,
        "seed": trace.seed,
        "iterations": trace.len(),
        "burn_in": trace.burn_in,
        "acceptance_rate": trace.acceptance_rate(),
        "seconds": trace.total_seconds(),
        "parameters": params,
    });
    Ok(out.to_string())
}

#[pymodule]
fn detfree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparseMatrix>()?;
    m.add_function(wrap_pyfunction!(error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(jacobi_elliptic, m)?)?;
    m.add_function(wrap_pyfunction!(cg_solve, m)?)?;
    m.add_function(wrap_pyfunction!(shifted_cg_solve, m)?)?;
    m.add_function(wrap_pyfunction!(apply_invsqrt, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(mcse, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    Ok(())
}
