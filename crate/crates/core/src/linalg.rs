//! Small dense helpers: a square matrix type and a Cholesky solver for the
//! Gram systems that come up in weight refitting.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dense `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare(n, r.len()));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    /// Accepts a 2-mode tensor with equal extents.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [r, c] if r == c => Ok(Self {
                n: r,
                data: (0..r * r).map(|k| t.at(k / r, k % r)).collect(),
            }),
            [r, c] => Err(Error::NotSquare(r, c)),
            _ => Err(Error::Format {
                what: "matrix",
                reason: format!("expected a 2-mode tensor, got extents {:?}", t.dims()),
            }),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(&[self.n, self.n], |ix| self[(ix[0], ix[1])])
            .expect("square matrix has valid extents")
    }

    /// `G G^T` for a `p x q` matrix stored as a 2-mode tensor.
    pub fn gram_of_rows(g: &Tensor) -> Self {
        let (p, q) = (g.dims()[0], g.dims()[1]);
        let d = g.data();
        let mut m = Self::zeros(p);
        for c in 0..q {
            let col = &d[c * p..(c + 1) * p];
            for i in 0..p {
                let gi = col[i];
                if gi == 0.0 {
                    continue;
                }
                for (j, &gj) in col.iter().enumerate().skip(i) {
                    m.data[i * p + j] += gi * gj;
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                m.data[i * p + j] = m.data[j * p + i];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower Cholesky factor of `a + ridge I`, or `None` when a pivot falls below
/// `1e-12` times the largest diagonal entry (numerically singular).
pub fn cholesky(a: &SquareMatrix, ridge: f64) -> Option<Vec<f64>> {
    let n = a.dim();
    let max_diag = (0..n).map(|i| a[(i, i)] + ridge).fold(0.0, f64::max);
    let floor = 1e-12 * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[(j, j)] + ridge;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d.is_nan() || d <= floor {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}
