//! Dense index arrays for n ≤ 4.
//!
//! `Tensor3` stores `t[i][j][k]` row-major; for jet blocks the first index is
//! the upper one (`aⁱ_jk`). `Tensor4` is the same with one more index.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n * n, "tensor3 data length");
        Tensor3 { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Average over the last two indices so that `t[i][j][k] = t[i][k][j]`.
    pub fn symmetrize_lower(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in (j + 1)..n {
                    let avg = 0.5 * (self[(i, j, k)] + self[(i, k, j)]);
                    self[(i, j, k)] = avg;
                    self[(i, k, j)] = avg;
                }
            }
        }
    }

    pub fn lower_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    m = m.max((self[(i, j, k)] - self[(i, k, j)]).abs());
                }
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        Tensor3 { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Tensor3) -> Self {
        Tensor3 { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Tensor3) -> Self {
        Tensor3 { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `m · t`: contract the upper index with a matrix, `(m t)ⁱ_jk = mⁱ_s tˢ_jk`.
    pub fn left_mul(&self, m: &Matrix) -> Self {
        let n = self.n;
        Tensor3::from_fn(n, |i, j, k| (0..n).map(|s| m[(i, s)] * self[(s, j, k)]).sum())
    }

    /// `t(b, b)`: contract both lower indices, `tⁱ_st bˢ_j bᵗ_k`.
    pub fn lower_mul(&self, b: &Matrix) -> Self {
        let n = self.n;
        // two passes keep this O(n^4)
        let half = Tensor3::from_fn(n, |i, s, k| (0..n).map(|t| self[(i, s, t)] * b[(t, k)]).sum());
        Tensor3::from_fn(n, |i, j, k| (0..n).map(|s| half[(i, s, k)] * b[(s, j)]).sum())
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[(i * self.n + j) * self.n + k]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(i * self.n + j) * self.n + k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor4::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        t[(i, j, k, l)] = f(i, j, k, l);
                    }
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize, usize, usize)> for Tensor4 {
    type Output = f64;
    fn index(&self, (i, j, k, l): (usize, usize, usize, usize)) -> &f64 {
        let n = self.n;
        &self.data[((i * n + j) * n + k) * n + l]
    }
}

impl IndexMut<(usize, usize, usize, usize)> for Tensor4 {
    fn index_mut(&mut self, (i, j, k, l): (usize, usize, usize, usize)) -> &mut f64 {
        let n = self.n;
        &mut self.data[((i * n + j) * n + k) * n + l]
    }
}

pub fn max_abs_matrix(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
