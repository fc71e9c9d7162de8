//! Small dense matrices for linearisation and Riccati solves.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Mat { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn t(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn symmetrize(&self) -> Mat {
        (self + &self.t()).scale(0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `A ⊗ B`.
    pub fn kron(&self, b: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows * b.rows, self.cols * b.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..b.rows {
                    for l in 0..b.cols {
                        out[(i * b.rows + k, j * b.cols + l)] = a * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &Mat) -> Option<Mat> {
        assert!(self.is_square() && rhs.rows == self.rows);
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = self.data.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))?;
            if a[(piv, col)].abs() <= 1e-14 * scale {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                }
                for j in 0..m {
                    b.data.swap(col * m + j, piv * m + j);
                }
            }
            let d = a[(col, col)];
            for i in col + 1..n {
                let f = a[(i, col)] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[(i, j)] -= f * a[(col, j)];
                }
                for j in 0..m {
                    b[(i, j)] -= f * b[(col, j)];
                }
            }
        }
        for col in (0..n).rev() {
            for j in 0..m {
                let mut s = b[(col, j)];
                for k in col + 1..n {
                    s -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = s / a[(col, col)];
            }
        }
        Some(b)
    }

    pub fn inverse(&self) -> Option<Mat> {
        self.solve(&Mat::identity(self.rows))
    }

    /// Lower Cholesky factor, or `None` when not positive definite.
    pub fn cholesky(&self) -> Option<Mat> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.t()) <= tol
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// Solves `A X + X Aᵀ = C` through the vectorised system `(A ⊗ I + I ⊗ A) vec X = vec C`.
pub fn lyapunov_solve(a: &Mat, c: &Mat) -> Option<Mat> {
    assert!(a.is_square() && c.rows == a.rows && c.cols == a.cols);
    let n = a.rows;
    let i = Mat::identity(n);
    let m = &a.kron(&i) + &i.kron(a);
    let v = Mat::from_vec(n * n, 1, c.data.clone());
    let x = m.solve(&v)?;
    Some(Mat::from_vec(n, n, x.data))
}

/// All eigenvalues in the open left half plane, decided by whether
/// `AᵀX + XA = -I` has a positive definite solution.
pub fn is_hurwitz(a: &Mat) -> bool {
    let n = a.rows;
    match lyapunov_solve(&a.t(), &Mat::identity(n).scale(-1.0)) {
        Some(x) => x.is_finite() && x.symmetrize().is_positive_definite(),
        None => false,
    }
}
