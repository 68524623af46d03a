use crate::{Error, Result};

use super::sparse::SparseMatrix;

/// Cholesky factor of a symmetric positive definite banded matrix.
///
/// Lower-banded storage: row i holds columns i-bandwidth..=i at
/// `bands[i * (bandwidth + 1) + (j - i + bandwidth)]`. Factorization and
/// solves cost O(n * bandwidth^2) and O(n * bandwidth).
#[derive(Clone, Debug)]
pub struct BandedFactor {
    n: usize,
    bandwidth: usize,
    bands: Vec<f64>,
}

/// Banded Cholesky of a symmetric matrix whose entries all lie within
/// `bandwidth` of the diagonal. Entries outside the band are an error, as is
/// a non-positive pivot.
pub fn banded_factorize(m: &SparseMatrix, bandwidth: usize) -> Result<BandedFactor> {
    if !m.is_symmetric() {
        return Err(Error::NotSymmetric(
            "banded_factorize requires the symmetric flag".into(),
        ));
    }
    let n = m.n_rows();
    let w = bandwidth + 1;
    let mut a = vec![0.0; n * w];
    for (i, j, v) in m.entries() {
        if i.abs_diff(j) > bandwidth {
            return Err(Error::InvalidArgument(format!(
                "entry ({i}, {j}) outside bandwidth {bandwidth}"
            )));
        }
        if j <= i {
            a[i * w + (j + bandwidth - i)] = v;
        }
    }
    // in-place banded Cholesky on the lower band
    for i in 0..n {
        let lo = i.saturating_sub(bandwidth);
        for j in lo..=i {
            let mut sum = a[i * w + (j + bandwidth - i)];
            let kmin = lo.max(j.saturating_sub(bandwidth));
            for k in kmin..j {
                sum -= a[i * w + (k + bandwidth - i)] * a[j * w + (k + bandwidth - j)];
            }
            if j == i {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {sum:.3e} at index {i}"
                    )));
                }
                a[i * w + bandwidth] = sum.sqrt();
            } else {
                a[i * w + (j + bandwidth - i)] = sum / a[j * w + bandwidth];
            }
        }
    }
    Ok(BandedFactor {
        n,
        bandwidth,
        bands: a,
    })
}

impl BandedFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.bands[i * (self.bandwidth + 1) + (j + self.bandwidth - i)]
    }

    /// Solves S x = b where S = L L^T.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension("banded solve: length mismatch".into()));
        }
        let n = self.n;
        let bw = self.bandwidth;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut sum = y[i];
            for k in lo..i {
                sum -= self.l(i, k) * y[k];
            }
            y[i] = sum / self.l(i, i);
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut sum = y[i];
            for k in (i + 1)..=hi {
                sum -= self.l(k, i) * y[k];
            }
            y[i] = sum / self.l(i, i);
        }
        Ok(y)
    }

    /// log det S = 2 * sum_i log L_ii. Only the Cholesky baseline reads this.
    pub fn logdet(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l(i, i).ln()).sum()
    }
}
