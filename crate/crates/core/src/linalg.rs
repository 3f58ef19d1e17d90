//! Small dense-matrix support for the block least-squares updates.
//!
//! Every linear system the estimator solves is symmetric positive
//! semi-definite and tiny (at most a few dozen rows), so a cyclic Jacobi
//! eigendecomposition with an eigenvalue cutoff covers both the regular and
//! the rank-deficient cases. Minimum-norm solutions come from the resulting
//! pseudo-inverse.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a row-major slice. Panics if the length is wrong.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Mat {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`.
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// `self' * other` without materializing the transpose.
    pub fn tr_mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "tr_mul shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(k, i);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        let data = self.data.iter().map(|v| v * s).collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Squared Frobenius norm.
    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with `a = V diag(l) V'` and the
/// eigenvectors in the columns of `V`. Quadratic convergence makes a handful
/// of sweeps enough at the sizes used here.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    assert_eq!(a.rows, a.cols, "sym_eigen needs a square matrix");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return ((0..n).map(|i| m.get(i, i)).collect(), v);
    }

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        let norm = m.frob_sq();
        if off <= norm * 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix.
///
/// Eigenvalues below `max_eig * 1e-12` are treated as zero, which is what
/// makes the rank-deficient block updates minimum-norm instead of exploding.
pub fn pinv_psd(a: &Mat) -> Mat {
    pinv_psd_floor(a, 0.0)
}

/// [`pinv_psd`] with an additional absolute eigenvalue floor: directions at
/// or below `floor` are zeroed even when the matrix is uniformly small.
pub fn pinv_psd_floor(a: &Mat, floor: f64) -> Mat {
    let n = a.rows();
    let (eigs, v) = sym_eigen(a);
    let max_eig = eigs.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    let cutoff = (max_eig * 1e-12).max(floor);
    let mut out = Mat::zeros(n, n);
    for (k, &lambda) in eigs.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda <= 0.0 {
            continue;
        }
        let inv = 1.0 / lambda;
        for i in 0..n {
            let vik = v.get(i, k);
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out.add_to(i, j, inv * vik * v.get(j, k));
            }
        }
    }
    out
}

/// Minimum-norm solution `X` of the symmetric PSD system `A X = B`.
pub fn solve_psd_min_norm(a: &Mat, b: &Mat) -> Mat {
    pinv_psd(a).mul(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Mat::from_rows(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_rows(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.mul(&b);
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);
        let at_b = a.transpose().mul(&a);
        let tr = a.tr_mul(&a);
        assert_eq!(at_b, tr);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // diag(1, 3) rotated by 45 degrees: eigenvalues must come back.
        let m = Mat::from_rows(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let (mut eigs, v) = sym_eigen(&m);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(approx(eigs[0], 1.0, 1e-12), "{eigs:?}");
        assert!(approx(eigs[1], 3.0, 1e-12), "{eigs:?}");
        // V diag V' reconstructs the input.
        let (eigs, _) = sym_eigen(&m);
        let mut rec = Mat::zeros(2, 2);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    rec.add_to(i, j, eigs[k] * v.get(i, k) * v.get(j, k));
                }
            }
        }
        assert!(rec.sub(&m).frob_sq() < 1e-24);
    }

    #[test]
    fn pinv_satisfies_moore_penrose_on_singular_input() {
        // Rank-1 PSD matrix: outer product of (1, 2).
        let m = Mat::from_rows(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pinv_psd(&m);
        // A A+ A = A and A+ A A+ = A+.
        let apa = m.mul(&p).mul(&m);
        assert!(apa.sub(&m).frob_sq() < 1e-20);
        let pap = p.mul(&m).mul(&p);
        assert!(pap.sub(&p).frob_sq() < 1e-20);
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let p = pinv_psd(&Mat::identity(4));
        assert!(p.sub(&Mat::identity(4)).frob_sq() < 1e-24);
    }

    #[test]
    fn solve_min_norm_matches_direct_inverse_when_regular() {
        let a = Mat::from_rows(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = Mat::from_rows(2, 1, &[1.0, 2.0]);
        let x = solve_psd_min_norm(&a, &b);
        // Direct solution of the 2x2 system.
        let det = 4.0 * 3.0 - 1.0;
        let expect = [(3.0 * 1.0 - 1.0 * 2.0) / det, (4.0 * 2.0 - 1.0 * 1.0) / det];
        assert!(approx(x.get(0, 0), expect[0], 1e-12));
        assert!(approx(x.get(1, 0), expect[1], 1e-12));
    }
}
