//! Direct solvers for the symmetric systems that arise from the stencils:
//! tridiagonal (Thomas) and banded Cholesky.

use crate::error::{Error, Result};

/// Pre-factored constant-coefficient tridiagonal matrix with diagonal `diag`
/// and both off-diagonals equal to `off`.
#[derive(Debug, Clone)]
pub struct ConstTridiag {
    off: f64,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl ConstTridiag {
    pub fn new(n: usize, diag: f64, off: f64) -> Self {
        let mut inv_pivot = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = if i == 0 { diag } else { diag - off * prev };
            let inv = 1.0 / pivot;
            prev = off * inv;
            inv_pivot.push(inv);
            upper.push(prev);
        }
        Self {
            off,
            inv_pivot,
            upper,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solves in place on a contiguous slice.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.off * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }

    /// Solves `n` independent systems at once, one per column of the
    /// row-major block `rows[r * stride + offset .. + width]`, r = 0..n.
    pub fn solve_columns(&self, data: &mut [f64], stride: usize, offset: usize, width: usize) {
        let n = self.len();
        let (off, inv, up) = (self.off, &self.inv_pivot, &self.upper);
        let row = |r: usize| offset + r * stride;
        for v in &mut data[row(0)..row(0) + width] {
            *v *= inv[0];
        }
        for r in 1..n {
            let (head, tail) = data.split_at_mut(row(r));
            let prev = &head[row(r - 1)..row(r - 1) + width];
            let cur = &mut tail[..width];
            let ir = inv[r];
            for (c, p) in cur.iter_mut().zip(prev) {
                *c = (*c - off * p) * ir;
            }
        }
        for r in (0..n - 1).rev() {
            let (head, tail) = data.split_at_mut(row(r + 1));
            let cur = &mut head[row(r)..row(r) + width];
            let next = &tail[..width];
            let ur = up[r];
            for (c, nx) in cur.iter_mut().zip(next) {
                *c -= ur * nx;
            }
        }
    }
    /// Solves one system per row of a row-major block, the unknowns of row
    /// `r` being `data[(first + r) * stride + offset ..][..n]`. The sweep runs
    /// across rows in the inner loop so the recurrences of different rows
    /// overlap.
    pub fn solve_rows(
        &self,
        data: &mut [f64],
        stride: usize,
        first: usize,
        rows: usize,
        offset: usize,
    ) {
        let n = self.len();
        let (off, inv, up) = (self.off, &self.inv_pivot, &self.upper);
        let base = |r: usize| (first + r) * stride + offset;
        for r in 0..rows {
            data[base(r)] *= inv[0];
        }
        for i in 1..n {
            let ii = inv[i];
            for r in 0..rows {
                let k = base(r) + i;
                data[k] = (data[k] - off * data[k - 1]) * ii;
            }
        }
        for i in (0..n - 1).rev() {
            let ui = up[i];
            for r in 0..rows {
                let k = base(r) + i;
                data[k] -= ui * data[k + 1];
            }
        }
    }
}

/// Symmetric tridiagonal solve with variable diagonal and constant
/// off-diagonal, without pivoting (the matrix must be positive definite).
pub fn solve_symmetric_tridiag(diag: &[f64], off: f64, rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut upper = vec![0.0; n];
    let mut prev = 0.0;
    for i in 0..n {
        let pivot = if i == 0 {
            diag[0]
        } else {
            diag[i] - off * prev
        };
        if !(pivot > 0.0) {
            return Err(Error::InvalidParams(
                "tridiagonal matrix is not positive definite".into(),
            ));
        }
        rhs[i] = if i == 0 {
            rhs[0] / pivot
        } else {
            (rhs[i] - off * rhs[i - 1]) / pivot
        };
        prev = off / pivot;
        upper[i] = prev;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        rhs[i] -= upper[i] * rhs[i + 1];
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive-definite band matrix with
/// half-bandwidth `bw`. Row `i` stores columns `i - bw ..= i` of `L`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    /// `entry(i, j)` must return `A[i][j]` for `i - bw <= j <= i`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        // data[i * w + (j + bw - i)] holds L[i][j].
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut sum = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    sum -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::InvalidParams(format!(
                            "band matrix not positive definite at row {i}"
                        )));
                    }
                    data[i * w + bw] = sum.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = sum / data[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn solve(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = x[i];
            for j in j0..i {
                s -= self.data[i * w + (j + bw - i)] * x[j];
            }
            x[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= self.data[i * w + bw];
            let xi = x[i];
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                x[j] -= self.data[i * w + (j + bw - i)] * xi;
            }
        }
    }
}
