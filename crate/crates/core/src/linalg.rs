//! Dense symmetric linear algebra: an incrementally extendable Cholesky
//! factorization, a Jacobi eigenvalue solver and a pivoted Gaussian
//! elimination used only as an independent cross-check.

use crate::error::{Error, Result};

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            let d = self.get(i, i) + v;
            self.set(i, i, d);
        }
    }
}

/// Lower-triangular Cholesky factor with O(n²) row appends.
///
/// Stored packed row-major: row `i` holds `i + 1` entries.
#[derive(Debug, Clone, Default)]
pub struct CholeskyFactor {
    n: usize,
    rows: Vec<f64>,
}

impl CholeskyFactor {
    pub fn empty() -> Self {
        CholeskyFactor::default()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.rows[start..start + i + 1]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.rows[i * (i + 1) / 2 + i]
    }

    /// Factorizes a symmetric positive-definite matrix from scratch.
    pub fn from_spd(a: &SymMatrix) -> Result<Self> {
        let mut f = CholeskyFactor::empty();
        for i in 0..a.n() {
            let col: Vec<f64> = (0..i).map(|j| a.get(i, j)).collect();
            f.push_row(&col, a.get(i, i))?;
        }
        Ok(f)
    }

    /// Extends the factor by one row for a new point whose covariances
    /// against the existing points are `cov` and whose self-covariance is
    /// `diag`. Fails when the Schur complement is not positive.
    pub fn push_row(&mut self, cov: &[f64], diag: f64) -> Result<()> {
        assert_eq!(cov.len(), self.n, "covariance vector length");
        let w = self.solve_lower(cov);
        let s2 = diag - w.iter().map(|v| v * v).sum::<f64>();
        if s2 <= 0.0 || !s2.is_finite() {
            return Err(Error::Factorization { attempts: 1 });
        }
        self.rows.extend_from_slice(&w);
        self.rows.push(s2.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Forward substitution: solves `L w = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; b.len()];
        for i in 0..b.len() {
            let row = self.row(i);
            let mut acc = b[i];
            for j in 0..i {
                acc -= row[j] * w[j];
            }
            w[i] = acc / row[i];
        }
        w
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_lower(b);
        for i in (0..self.n).rev() {
            x[i] /= self.diag(i);
            let row_i = i * (i + 1) / 2;
            for j in 0..i {
                x[j] -= self.rows[row_i + j] * x[i];
            }
        }
        x
    }

    /// log det(L Lᵀ).
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.diag(i).ln()).sum()
    }

    /// Rebuilds `L Lᵀ` densely. Test and verification use only.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| {
            let (ri, rj) = (self.row(i), self.row(j));
            (0..=j.min(i)).map(|k| ri[k] * rj[k]).sum()
        })
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// returned in descending order.
pub fn symmetric_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    let n = a.n();
    if n == 0 {
        return Vec::new();
    }
    let mut m = a.clone();
    let scale = m.trace().abs().max(1.0);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).abs();
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Deliberately shares nothing with [`CholeskyFactor`]; the verify suite
/// uses it as the second route when checking posterior algebra.
pub fn solve_dense(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    assert_eq!(b.len(), n);
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a.get(i, j)).collect();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::Factorization { attempts: 1 });
        }
        m.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            let (pivot_rows, rest) = m.split_at_mut(row);
            let pivot = &pivot_rows[col];
            for (a, b) in rest[0][col..=n].iter_mut().zip(&pivot[col..=n]) {
                *a -= factor * b;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in (i + 1)..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Ok(x)
}
