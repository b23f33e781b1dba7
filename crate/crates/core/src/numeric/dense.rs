//! Small dense kernels (Hankel sections, Rayleigh–Ritz blocks, least-squares
//! fits), generic over [`Real`] so they run in f64 or double-double.

use std::ops::{Index, IndexMut};

use super::dd::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = T::zero();
            for k in 0..self.cols {
                acc = acc + self[(i, k)] * other[(k, j)];
            }
            acc
        })
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let two = T::from_f64(2.0);

    let frob = {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
        s
    };
    let thresh = frob * T::from_f64(T::epsilon() * T::epsilon());

    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        if off <= thresh || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = {
                    let r = (theta * theta + T::one()).sqrt();
                    let denom = theta.abs() + r;
                    if theta < T::zero() {
                        -(T::one() / denom)
                    } else {
                        T::one() / denom
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`. Returns the index of
/// the first non-positive pivot on failure.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>, usize> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s = s - l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Minimum-norm residual solution of the overdetermined system `A x ≈ b`
/// via Householder QR. Returns `None` when `A` is rank deficient at working
/// precision.
pub fn least_squares<T: Real>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let m = a.rows();
    let n = a.cols();
    assert!(m >= n && b.len() == m);
    let mut r = a.clone();
    let mut y: Vec<T> = b.to_vec();
    let mut scale = T::zero();
    for j in 0..n {
        for i in 0..m {
            if r[(i, j)].abs() > scale {
                scale = r[(i, j)].abs();
            }
        }
    }

    for k in 0..n {
        let mut norm = T::zero();
        for i in k..m {
            norm = norm + r[(i, k)] * r[(i, k)];
        }
        let norm = norm.sqrt();
        if norm <= scale * T::from_f64(T::epsilon() * 16.0) {
            return None;
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::from_f64(2.0);
        for j in k..n {
            let mut s = T::zero();
            for (idx, i) in (k..m).enumerate() {
                s = s + v[idx] * r[(i, j)];
            }
            let f = two * s / vnorm2;
            for (idx, i) in (k..m).enumerate() {
                r[(i, j)] = r[(i, j)] - f * v[idx];
            }
        }
        let mut s = T::zero();
        for (idx, i) in (k..m).enumerate() {
            s = s + v[idx] * y[i];
        }
        let f = two * s / vnorm2;
        for (idx, i) in (k..m).enumerate() {
            y[i] = y[i] - f * v[idx];
        }
    }

    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s = s - r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::dd::DoubleDouble;

    #[test]
    fn eigen_of_known_2x2() {
        let a = Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        let (vals, vecs) = symmetric_eigen(&a);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        let v0 = vecs.column(0);
        assert!((v0[0] + v0[1]).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_matrix_in_dd() {
        let n = 5;
        let a = Matrix::from_fn(n, n, |i, j| {
            DoubleDouble::ONE / DoubleDouble::from_f64((i + j + 1) as f64)
        });
        let (vals, v) = symmetric_eigen(&a);
        let lam = Matrix::from_fn(n, n, |i, j| if i == j { vals[i] } else { DoubleDouble::ZERO });
        let back = v.matmul(&lam).matmul(&v.transpose());
        for i in 0..n {
            for j in 0..n {
                assert!((back[(i, j)] - a[(i, j)]).abs().hi < 1e-28);
            }
        }
        // Hilbert(5) smallest eigenvalue
        assert!((vals[0].to_f64() - 3.287928772171e-6).abs() < 1e-16);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert_eq!(cholesky(&a), Err(1));
    }

    #[test]
    fn least_squares_fits_line() {
        let a = Matrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let b = [1.0, 3.0, 5.0, 7.0];
        let x = least_squares(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-13 && (x[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let a = Matrix::from_fn(3, 2, |i, _| i as f64 + 1.0);
        assert!(least_squares(&a, &[1.0, 2.0, 3.0]).is_none());
    }
}
