use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Entries uniform in `[-1, 1)` from a ChaCha8 stream seeded with `seed`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `‖PA − LU‖_F / ‖A‖_F` where row `a` of `PA` is row `perm[a]` of `A`.
pub fn residual(a: &Matrix, perm: &[usize], l: &Matrix, u: &Matrix) -> f64 {
    let lu = l.matmul(u);
    let mut err = 0.0;
    for (i, &p) in perm.iter().enumerate() {
        for j in 0..a.cols {
            let d = a[(p, j)] - lu[(i, j)];
            err += d * d;
        }
    }
    err.sqrt() / a.frobenius()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_exact_residual() {
        assert_eq!(Matrix::random(5, 3), Matrix::random(5, 3));
        assert_ne!(Matrix::random(5, 3), Matrix::random(5, 4));
        let a = Matrix::from_fn(2, 2, |i, j| [[0.0, 2.0], [4.0, 6.0]][i][j]);
        let l = Matrix::from_fn(2, 2, |i, j| [[1.0, 0.0], [0.0, 1.0]][i][j]);
        let u = Matrix::from_fn(2, 2, |i, j| [[4.0, 6.0], [0.0, 2.0]][i][j]);
        assert_eq!(residual(&a, &[1, 0], &l, &u), 0.0);
    }
}
