//! Small dense kernels: null spaces by complete-pivot elimination and LU solves.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Basis of the right null space of `a`, one vector per free column.
///
/// Rows are scaled to unit max-norm first (the null space is unchanged), then
/// reduced with complete pivoting; pivots below `rel_tol` times the largest
/// entry count as zero.
pub fn kernel_basis(a: &Matrix, rel_tol: f64) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    let mut r = a.clone();
    for i in 0..m {
        let s = r.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if s > 0.0 {
            for v in &mut r.data[i * n..(i + 1) * n] {
                *v /= s;
            }
        }
    }
    let scale = r.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);

    // Column permutation so pivots sit on the leading diagonal.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while rank < m && rank < n {
        let mut best = (0.0, rank, rank);
        for i in rank..m {
            for j in rank..n {
                let v = r.at(i, perm[j]).abs();
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        if best.0 <= tol {
            break;
        }
        let (_, pi, pj) = best;
        if pi != rank {
            for c in 0..n {
                r.data.swap(pi * n + c, rank * n + c);
            }
        }
        perm.swap(rank, pj);
        let pc = perm[rank];
        let inv = 1.0 / r.at(rank, pc);
        for c in 0..n {
            *r.at_mut(rank, c) *= inv;
        }
        for i in 0..m {
            if i == rank {
                continue;
            }
            let f = r.at(i, pc);
            if f != 0.0 {
                for c in 0..n {
                    let v = r.at(rank, c);
                    *r.at_mut(i, c) -= f * v;
                }
            }
        }
        rank += 1;
    }

    let mut basis = Vec::with_capacity(n - rank);
    for &free in &perm[rank..] {
        let mut v = vec![0.0; n];
        v[free] = 1.0;
        for i in 0..rank {
            v[perm[i]] = -r.at(i, free);
        }
        basis.push(v);
    }
    basis
}

/// Numerical rank with the same pivoting rule as [`kernel_basis`].
pub fn rank(a: &Matrix, rel_tol: f64) -> usize {
    a.cols - kernel_basis(a, rel_tol).len()
}

/// LU factorisation with partial pivoting of a square matrix.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::InvalidArgument("LU needs a square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, big) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if big == 0.0 || !big.is_finite() {
                return Err(Error::Numerical(format!("singular matrix at column {k}")));
            }
            if p != k {
                for c in 0..n {
                    lu.swap(p * n + c, k * n + c);
                }
                piv.swap(p, k);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[i * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for c in 0..i {
                s -= self.lu[i * n + c] * x[c];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..n {
                s -= self.lu[i * n + c] * x[c];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Summation that keeps rounding error logarithmic in the length and
/// depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
