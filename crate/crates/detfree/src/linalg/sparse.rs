use rayon::prelude::*;

use crate::{Error, Result};

use super::dense::DenseMatrix;

/// Row count above which spmv parallelizes over rows. Row results are
/// computed independently, so the output is identical for any worker count.
const SPMV_PAR_MIN_ROWS: usize = 4096;

/// Sparse matrix in compressed sparse row form.
///
/// Construction enforces: `row_offsets` has length `n_rows + 1`, starts at
/// zero, is non-decreasing and ends at `values.len()`; column indices are
/// strictly increasing within each row; all values are finite. A matrix
/// flagged symmetric stores both triangles explicitly so that row access
/// never needs the transpose.
///
/// Matrices are immutable after construction; all "mutating" operations
/// return a new matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds from (row, col, value) triplets. Duplicate entries are summed
    /// in insertion order (stable sort), so mirrored triplet lists produce
    /// bitwise-symmetric matrices despite float addition being
    /// non-associative. Explicit zeros are kept so that the stored pattern
    /// round-trips.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Dimension(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at ({i}, {j})"
                )));
            }
            entries.push((i, j, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut rows = Vec::with_capacity(entries.len());
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            if rows.last() == Some(&i) && col_indices.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_indices.push(j);
                values.push(v);
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &i in &rows {
            row_offsets[i + 1] += 1;
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values, false)
    }

    /// Builds directly from CSR arrays, validating every structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::Dimension(format!(
                "row_offsets length {} != n_rows + 1 = {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return Err(Error::InvalidArgument(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::Dimension(
                "col_indices and values length mismatch".into(),
            ));
        }
        for r in 0..n_rows {
            if row_offsets[r] > row_offsets[r + 1] {
                return Err(Error::InvalidArgument(format!(
                    "row_offsets decreasing at row {r}"
                )));
            }
            let lo = row_offsets[r];
            let hi = row_offsets[r + 1];
            for k in lo..hi {
                if col_indices[k] >= n_cols {
                    return Err(Error::Dimension(format!(
                        "column index {} out of range in row {r}",
                        col_indices[k]
                    )));
                }
                if k > lo && col_indices[k] <= col_indices[k - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "column indices not strictly increasing in row {r}"
                    )));
                }
                if !values[k].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value in row {r}"
                    )));
                }
            }
        }
        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        if symmetric {
            m = m.into_symmetric()?;
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n]).expect("identity is always valid")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let triplets: Vec<(usize, usize, f64)> =
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, n, &triplets)?.into_symmetric()
    }

    /// Verifies that the stored pattern and values equal their transpose and
    /// sets the symmetric flag. Comparison is exact: symmetric matrices are
    /// expected to be assembled with mirrored entries, not recomputed ones.
    pub fn into_symmetric(mut self) -> Result<Self> {
        if self.n_rows != self.n_cols {
            return Err(Error::NotSymmetric(format!(
                "{}x{} is not square",
                self.n_rows, self.n_cols
            )));
        }
        let t = self.transpose();
        let same = t.row_offsets == self.row_offsets
            && t.col_indices == self.col_indices
            && t.values
                .iter()
                .zip(self.values.iter())
                .all(|(a, b)| a == b);
        if !same {
            return Err(Error::NotSymmetric(
                "pattern or values differ from transpose".into(),
            ));
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals.iter()).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// y = A x. O(nnz); parallelizes over rows for large matrices with a
    /// deterministic row partition.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::Dimension(format!(
                "spmv: x has length {}, expected {}",
                x.len(),
                self.n_cols
            )));
        }
        if y.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "spmv: y has length {}, expected {}",
                y.len(),
                self.n_rows
            )));
        }
        let row_dot = |i: usize| -> f64 {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            acc
        };
        if self.n_rows >= SPMV_PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let nnz = self.nnz();
        let mut row_offsets = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            row_offsets[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            row_offsets[j + 1] += row_offsets[j];
        }
        let mut next = row_offsets.clone();
        let mut col_indices = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let slot = next[j];
                col_indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
            symmetric: self.symmetric,
        }
    }

    /// C = A B. Setup-time utility (normal matrices, squared Laplacians);
    /// not used in solver hot loops.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::Dimension(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_offsets = vec![0usize; self.n_rows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        // dense accumulator with a touched-column list per row
        let mut acc = vec![0.0; other.n_cols];
        let mut seen = vec![false; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &b) in bcols.iter().zip(bvals) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
                seen[j] = false;
            }
            row_offsets[i + 1] = col_indices.len();
            touched.clear();
        }
        SparseMatrix::from_csr(
            self.n_rows,
            other.n_cols,
            row_offsets,
            col_indices,
            values,
            false,
        )
    }

    /// alpha * self + beta * other, matching dimensions required.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Dimension("add_scaled: shape mismatch".into()));
        }
        let mut row_offsets = vec![0usize; self.n_rows + 1];
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ac.len() || q < bc.len() {
                let (j, v) = if q >= bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    let e = (ac[p], alpha * av[p]);
                    p += 1;
                    e
                } else if p >= ac.len() || bc[q] < ac[p] {
                    let e = (bc[q], beta * bv[q]);
                    q += 1;
                    e
                } else {
                    let e = (ac[p], alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                    e
                };
                col_indices.push(j);
                values.push(v);
            }
            row_offsets[i + 1] = col_indices.len();
        }
        SparseMatrix::from_csr(
            self.n_rows,
            self.n_cols,
            row_offsets,
            col_indices,
            values,
            false,
        )
    }

    pub fn scaled(&self, factor: f64) -> Result<SparseMatrix> {
        if !factor.is_finite() {
            return Err(Error::InvalidArgument("non-finite scale factor".into()));
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        Ok(out)
    }

    /// self + shift * I (square only). Inserts missing diagonal entries.
    pub fn shift_diagonal(&self, shift: f64) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::Dimension("shift_diagonal: matrix not square".into()));
        }
        let eye = SparseMatrix::identity(self.n_rows);
        let mut out = self.add_scaled(1.0, &eye, shift)?;
        if self.symmetric {
            out = out.into_symmetric()?;
        }
        Ok(out)
    }

    /// Densifies. Caller is responsible for keeping the dimension small.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::Dimension("to_dense: matrix not square".into()));
        }
        let mut d = DenseMatrix::zeros(self.n_rows);
        for (i, j, v) in self.entries() {
            d.set(i, j, v);
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n_rows: usize, n_cols: usize, nnz: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triplets: Vec<(usize, usize, f64)> = (0..nnz)
            .map(|_| {
                (
                    rng.random_range(0..n_rows),
                    rng.random_range(0..n_cols),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        SparseMatrix::from_triplets(n_rows, n_cols, &triplets).unwrap()
    }

    /// Dense reference multiply straight from the triplet definition.
    fn dense_spmv(m: &SparseMatrix, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; m.n_rows()];
        for (i, j, v) in m.entries() {
            y[i] += v * x[j];
        }
        y
    }

    #[test]
    fn from_triplets_sums_duplicates_and_sorts() {
        let m = SparseMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn invalid_construction_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 0, f64::NAN)]).is_err());
        // non-monotone offsets
        assert!(SparseMatrix::from_csr(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0], false).is_err());
        // duplicate column in a row
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 1], vec![1.0, 1.0], false).is_err());
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n_rows = rng.random_range(1..40);
            let n_cols = rng.random_range(1..40);
            let m = random_sparse(n_rows, n_cols, n_rows * 3, 100 + trial);
            let x: Vec<f64> = (0..n_cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = m.spmv(&x).unwrap();
            let want = dense_spmv(&m, &x);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spmv_dimension_mismatch_errors() {
        let m = SparseMatrix::identity(3);
        assert!(m.spmv(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn spmv_identical_across_worker_counts() {
        let n = 5000; // above the parallel threshold
        let m = random_sparse(n, n, 6 * n, 3);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let serial = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            pool.install(|| m.spmv(&x).unwrap())
        };
        let parallel = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
            pool.install(|| m.spmv(&x).unwrap())
        };
        assert_eq!(serial, parallel);
    }

    #[test]
    fn symmetric_flag_requires_mirrored_entries() {
        let asym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert!(asym.into_symmetric().is_err());
        let sym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0), (0, 0, 2.0), (1, 1, 2.0)])
            .unwrap()
            .into_symmetric()
            .unwrap();
        assert!(sym.is_symmetric());
    }

    #[test]
    fn transpose_and_matmul_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_sparse(8, 5, 20, 21);
        let b = random_sparse(5, 7, 18, 22);
        let c = a.matmul(&b).unwrap();
        for i in 0..8 {
            for j in 0..7 {
                let mut want = 0.0;
                for k in 0..5 {
                    want += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - want).abs() < 1e-13);
            }
        }
        let t = a.transpose();
        for i in 0..8 {
            for j in 0..5 {
                assert_eq!(a.get(i, j), t.get(j, i));
            }
        }
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let via_c = c.spmv(&x).unwrap();
        let via_ab = a.spmv(&b.spmv(&x).unwrap()).unwrap();
        for (p, q) in via_c.iter().zip(&via_ab) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn add_scaled_and_shift_diagonal() {
        let a = random_sparse(6, 6, 12, 31);
        let b = random_sparse(6, 6, 12, 32);
        let c = a.add_scaled(2.0, &b, -0.5).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = 2.0 * a.get(i, j) - 0.5 * b.get(i, j);
                assert!((c.get(i, j) - want).abs() < 1e-14);
            }
        }
        let s = a.shift_diagonal(3.25).unwrap();
        for i in 0..6 {
            assert!((s.get(i, i) - (a.get(i, i) + 3.25)).abs() < 1e-14);
        }
    }
}
