//! Small dense matrix helpers: exactly what the fixed MLP compositions and
//! the verification oracles need, nothing more.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for j in 0..self.cols {
                y[j] += row[j] * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// C = A B
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut c = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    c.data[i * other.cols + j] += aik * other.get(k, j);
                }
            }
        }
        c
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Euclidean distance between two vectors of equal length.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    libm::sqrt(acc)
}

/// Householder QR of a tall matrix (rows >= cols). Returns the thin Q
/// (rows x cols) with orthonormal columns and the sign of R's diagonal
/// corrected to be positive, so the factorization is unique.
pub fn qr_thin_q(a: &Mat) -> Mat {
    assert!(a.rows >= a.cols);
    let m = a.rows;
    let n = a.cols;
    let mut r = a.clone();
    // Householder vectors, stored per reflection.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = vec![0.0; m - k];
        for i in k..m {
            v[i - k] = r.get(i, k);
        }
        let alpha = -sign(v[0]) * norm2(&v);
        v[0] -= alpha;
        let vn = norm2(&v);
        if vn > 0.0 {
            for x in &mut v {
                *x /= vn;
            }
            // Apply reflection to the trailing block of R.
            for j in k..n {
                let mut proj = 0.0;
                for i in k..m {
                    proj += v[i - k] * r.get(i, j);
                }
                for i in k..m {
                    let val = r.get(i, j) - 2.0 * proj * v[i - k];
                    r.set(i, j, val);
                }
            }
        }
        vs.push(v);
    }
    // Accumulate thin Q by applying reflections to the first n identity columns.
    let mut q = Mat::zeros(m, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        for j in 0..n {
            let mut proj = 0.0;
            for i in k..m {
                proj += v[i - k] * q.get(i, j);
            }
            for i in k..m {
                let val = q.get(i, j) - 2.0 * proj * v[i - k];
                q.set(i, j, val);
            }
        }
    }
    // Sign-correct so diag(R) > 0.
    for j in 0..n {
        if r.get(j, j) < 0.0 {
            for i in 0..m {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }
    q
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Used as an independent oracle for singular values (eig of A^T A);
/// deliberately not the power-iteration path used in training.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = sign(theta) / (theta.abs() + libm::sqrt(theta * theta + 1.0));
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
            }
        }
    }
    (0..n).map(|i| m.get(i, i)).collect()
}

/// Largest singular value via the Jacobi eigenvalue oracle on A^T A
/// (or A A^T, whichever is smaller).
pub fn max_singular_value(a: &Mat) -> f64 {
    let gram = if a.cols <= a.rows {
        a.transpose().matmul(a)
    } else {
        a.matmul(&a.transpose())
    };
    let eigs = sym_eigenvalues(&gram);
    let lmax = eigs.iter().cloned().fold(0.0, f64::max);
    libm::sqrt(lmax.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn matvec_identity() {
        let a = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.matvec(&[3.0, -2.0]), vec![3.0, -2.0]);
    }

    #[test]
    fn qr_q_has_orthonormal_columns() {
        let mut r = rng::seeded(11);
        let mut a = Mat::zeros(8, 5);
        for v in &mut a.data {
            *v = rng::normal(&mut r);
        }
        let q = qr_thin_q(&a);
        let g = q.transpose().matmul(&q);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_recovers_diagonal_eigenvalues() {
        let a = Mat::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let mut eigs = sym_eigenvalues(&a);
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn max_singular_value_of_diag() {
        let a = Mat::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        assert!((max_singular_value(&a) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn max_singular_value_matches_definition_on_random() {
        // sigma_max = max_{|x|=1} |A x|; check the oracle dominates random probes.
        let mut r = rng::seeded(5);
        let mut a = Mat::zeros(6, 4);
        for v in &mut a.data {
            *v = rng::normal(&mut r);
        }
        let smax = max_singular_value(&a);
        for _ in 0..1000 {
            let mut x: alloc::vec::Vec<f64> = (0..4).map(|_| rng::normal(&mut r)).collect();
            let n = norm2(&x);
            for v in &mut x {
                *v /= n;
            }
            assert!(norm2(&a.matvec(&x)) <= smax + 1e-9);
        }
    }
}
