use super::davidson::Preconditioner;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Cholesky factor of a shifted symmetric band matrix `A - sigma`, stored
/// by rows of the lower band.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// `l[i * (bw + 1) + (bw - (i - j))]` holds `L_ij` for `i - bw <= j <= i`.
    l: Vec<f64>,
    pub shift: f64,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = a.diagonal().len();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + bw - (i - j)] = v;
                }
            }
            l[i * w + bw] -= shift;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut sum = l[i * w + bw - (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    sum -= l[i * w + bw - (i - k)] * l[j * w + bw - (j - k)];
                }
                if j == i {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite { eigenvalue: sum });
                    }
                    l[i * w + bw] = sum.sqrt();
                } else {
                    l[i * w + bw - (i - j)] = sum / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l, shift })
    }

    /// Overwrites `x` with `(A - sigma)^{-1} x`.
    pub fn solve(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + bw - (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.l[k * w + bw - (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
    }
}

impl Preconditioner for BandCholesky {
    fn apply(&self, _theta: f64, r: &mut [f64]) {
        self.solve(r);
    }
}
