use crate::{Error, Result};

/// Square dense matrix, row-major. Used for small-problem baselines, exact
/// simulation, and proposal covariances; never on the large-n solver path.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "matvec: x has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(y)
    }

    /// Max |a_ij - a_ji| over the strict upper triangle.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower-triangular Cholesky factor L with L L^T = S.
#[derive(Clone, Debug)]
pub struct DenseFactor {
    n: usize,
    lower: Vec<f64>, // row-major, strict upper kept at zero
}

/// Dense Cholesky factorization of a symmetric positive definite matrix.
/// Fails with `NotPositiveDefinite` on the first non-positive pivot and with
/// `NotSymmetric` when the input is visibly asymmetric.
pub fn dense_cholesky(s: &DenseMatrix) -> Result<DenseFactor> {
    let n = s.n();
    let scale = (0..n).map(|i| s.at(i, i).abs()).fold(0.0f64, f64::max);
    if s.asymmetry() > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric(format!(
            "asymmetry {:.3e} exceeds tolerance",
            s.asymmetry()
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = s.at(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {sum:.3e} at index {i}"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(DenseFactor { n, lower: l })
}

/// log det S from its Cholesky factor: 2 * sum_i log L_ii.
pub fn logdet_from_cholesky(factor: &DenseFactor) -> f64 {
    factor.logdet()
}

impl DenseFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves S x = b via the two triangular solves.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_lower(b)?;
        self.solve_lower_transpose(&y)
    }

    /// Solves L y = b (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension("solve: length mismatch".into()));
        }
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in 0..i {
                sum -= self.lower[i * n + k] * y[k];
            }
            y[i] = sum / self.lower[i * n + i];
        }
        Ok(y)
    }

    /// Solves L^T x = b (back substitution).
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension("solve: length mismatch".into()));
        }
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.lower[k * n + i] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        Ok(x)
    }

    /// y = L w; with w standard normal, y has covariance S.
    pub fn lower_times(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n {
            return Err(Error::Dimension("lower_times: length mismatch".into()));
        }
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = 0.0;
            for k in 0..=i {
                sum += self.lower[i * n + k] * w[k];
            }
            y[i] = sum;
        }
        Ok(y)
    }

    /// Reassembles L L^T (test support).
    pub fn recompose(&self) -> DenseMatrix {
        let n = self.n;
        DenseMatrix::from_fn(n, |i, j| {
            let mut sum = 0.0;
            for k in 0..=i.min(j) {
                sum += self.lower[i * n + k] * self.lower[j * n + k];
            }
            sum
        })
    }
}
