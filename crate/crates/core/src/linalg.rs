//! Small dense helpers. Agent counts are in the tens at most, so plain
//! row-major storage is all the mixing matrices need.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a square matrix from rows; `None` if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self { n, data: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `self * rhs`.
    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    /// Row vector times matrix: `vᵀ M`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (k, &vk) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += vk * self.get(k, j);
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_sum_error(&self) -> f64 {
        self.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_j (max_i M[i,j] - min_i M[i,j])`: zero iff all rows agree.
    pub fn max_row_spread(&self) -> f64 {
        (0..self.n)
            .map(|j| {
                let (lo, hi) = (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.get(i, j);
                    (lo.min(v), hi.max(v))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    pub fn min_positive_entry(&self) -> Option<f64> {
        self.data.iter().copied().filter(|v| *v > 0.0).reduce(f64::min)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_spread() {
        let a = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let p = a.mul(&Matrix::identity(2));
        assert_eq!(p, a);
        assert_eq!(p.max_row_spread(), 0.0);
        assert!(Matrix::identity(3).max_row_spread() == 1.0);
    }

    #[test]
    fn left_multiplication() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.25, 0.75]]).unwrap();
        assert_eq!(a.left_mul(&[0.5, 0.5]), vec![0.625, 0.375]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![0.0, 1.0]]).is_none());
    }
}
