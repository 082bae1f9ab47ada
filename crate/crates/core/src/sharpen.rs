//! Reweighting an approximate cubature so its moments match exactly.
//!
//! The weights solve `min t` subject to `|(A w - b)_k| <= t` on every scaled
//! row, `Σ w = 1` and `w >= 0`, by a dense simplex method with Bland's rule.
//! The start is the vertex `w = e_j`, where `t` equals the largest residual of
//! column `j`; it is feasible by construction, so no phase one is needed.

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

/// Rows whose target is smaller than this are scaled by it instead.
pub const MIN_ROW_SCALE: f64 = 1e-3;

pub const DEFAULT_TOL: f64 = 1e-12;

/// `A w ≈ b` with one column per path and one row per monitored word.
#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub w0: Vec<f64>,
    /// Positive divisor applied to row `k` of `A` and to `b_k`.
    pub scales: Vec<f64>,
}

impl MomentSystem {
    /// Rows scaled by `max(|b_k|, 1, MIN_ROW_SCALE)`.
    pub fn new(a: Matrix, b: Vec<f64>, w0: Vec<f64>) -> Result<Self> {
        let scales = b.iter().map(|v| v.abs().max(1.0)).collect();
        Self::with_scales(a, b, w0, scales)
    }

    /// Explicit natural sizes per row; each row is divided by
    /// `max(|b_k|, natural_k, MIN_ROW_SCALE)`.
    pub fn with_scales(a: Matrix, b: Vec<f64>, w0: Vec<f64>, natural: Vec<f64>) -> Result<Self> {
        if a.rows != b.len() || a.cols != w0.len() || natural.len() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "moment system {}x{} with {} targets, {} weights and {} scales",
                a.rows,
                a.cols,
                b.len(),
                w0.len(),
                natural.len()
            )));
        }
        if a.data.iter().chain(&b).chain(&w0).chain(&natural).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("moment system has non-finite entries".into()));
        }
        let scales = b
            .iter()
            .zip(&natural)
            .map(|(bk, nk)| bk.abs().max(*nk).max(MIN_ROW_SCALE))
            .collect();
        Ok(Self { a, b, w0, scales })
    }

    pub fn num_rows(&self) -> usize {
        self.a.rows
    }

    pub fn num_cols(&self) -> usize {
        self.a.cols
    }

    /// Largest scaled residual `|(A w - b)_k| / scale_k`.
    pub fn residual(&self, w: &[f64]) -> f64 {
        let aw = self.a.mul_vec(w);
        aw.iter()
            .zip(&self.b)
            .zip(&self.scales)
            .map(|((x, b), s)| ((x - b) / s).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Sharpened {
    pub weights: Vec<f64>,
    /// Largest scaled residual of `weights`.
    pub residual: f64,
    /// Whether `residual <= tol`.
    pub exact: bool,
    pub pivots: usize,
}

/// Runs the linear program and reports whether the result is exact to `tol`.
/// An already exact `w0` is returned unchanged.
pub fn sharpen(sys: &MomentSystem, tol: f64) -> Result<Sharpened> {
    let r0 = sys.residual(&sys.w0);
    let mass0: f64 = sys.w0.iter().sum();
    if r0 <= tol && (mass0 - 1.0).abs() <= 1e-14 && sys.w0.iter().all(|&w| w >= 0.0) {
        return Ok(Sharpened {
            weights: sys.w0.clone(),
            residual: r0,
            exact: true,
            pivots: 0,
        });
    }
    let lp = solve_lp_infnorm(sys)?;
    let residual = sys.residual(&lp.weights);
    Ok(Sharpened {
        exact: residual <= tol,
        weights: lp.weights,
        residual,
        pivots: lp.pivots,
    })
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub weights: Vec<f64>,
    /// Optimal `t` as carried by the tableau.
    pub objective: f64,
    pub pivots: usize,
}

/// Dense tableau in canonical form for the current basis; the last column is
/// the right-hand side and the last row holds the reduced costs.
struct Tableau {
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }
}

/// Minimises the largest scaled residual over the probability simplex.
pub fn solve_lp_infnorm(sys: &MomentSystem) -> Result<LpSolution> {
    let (k, m) = (sys.num_rows(), sys.num_cols());
    if m == 0 {
        return Err(Error::Lp("no columns".into()));
    }
    // Variables: w (m), t, slacks of the upper rows (k), of the lower rows (k),
    // and one artificial for the mass row.
    let t_col = m;
    let art = m + 1 + 2 * k;
    let cols = art + 1;
    let rows = 2 * k + 1;
    let w = cols + 1;
    let mut data = vec![0.0; (rows + 1) * w];
    for r in 0..k {
        let s = sys.scales[r];
        for j in 0..m {
            let v = sys.a.at(r, j) / s;
            data[r * w + j] = v;
            data[(k + r) * w + j] = -v;
        }
        data[r * w + t_col] = -1.0;
        data[(k + r) * w + t_col] = -1.0;
        data[r * w + m + 1 + r] = 1.0;
        data[(k + r) * w + m + 1 + k + r] = 1.0;
        data[r * w + cols] = sys.b[r] / s;
        data[(k + r) * w + cols] = -sys.b[r] / s;
    }
    for j in 0..m {
        data[2 * k * w + j] = 1.0;
    }
    data[2 * k * w + art] = 1.0;
    data[2 * k * w + cols] = 1.0;
    data[rows * w + t_col] = 1.0;
    let basis = (0..k)
        .map(|r| m + 1 + r)
        .chain((0..k).map(|r| m + 1 + k + r))
        .chain([art])
        .collect();
    let mut tab = Tableau {
        cols,
        data,
        basis,
    };

    // Start at the heaviest column's vertex.
    let j0 = (0..m)
        .max_by(|&a, &b| sys.w0[a].total_cmp(&sys.w0[b]).then(b.cmp(&a)))
        .unwrap();
    tab.pivot(2 * k, j0);
    if k > 0 {
        let mut tight = (f64::NEG_INFINITY, 0);
        for r in 0..k {
            let res = (sys.a.at(r, j0) - sys.b[r]) / sys.scales[r];
            // The upper row binds for a positive residual, the lower row for a negative one.
            let (row, val) = if res >= 0.0 { (r, res) } else { (k + r, -res) };
            if val > tight.0 {
                tight = (val, row);
            }
        }
        tab.pivot(tight.1, t_col);
    }
    for r in 0..=rows {
        tab.data[r * w + art] = 0.0;
    }

    let scale = 1.0 + (0..rows).map(|r| tab.rhs(r).abs()).fold(0.0, f64::max);
    let eps = 1e-12;
    let max_pivots = 200 * (rows + cols);
    let mut pivots = 0;
    loop {
        let t_value = (0..rows).find(|&r| tab.basis[r] == t_col).map_or(0.0, |r| tab.rhs(r));
        if t_value <= 1e-16 {
            break;
        }
        let Some(enter) = (0..art).find(|&c| tab.at(rows, c) < -eps) else {
            break;
        };
        let mut leave: Option<(f64, usize, usize)> = None;
        for r in 0..rows {
            let a = tab.at(r, enter);
            if a > eps {
                let ratio = tab.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((best, _, bvar)) => {
                        ratio < best - 1e-15 * scale || (ratio <= best + 1e-15 * scale && tab.basis[r] < bvar)
                    }
                };
                if better {
                    leave = Some((ratio, r, tab.basis[r]));
                }
            }
        }
        let Some((_, pr, _)) = leave else {
            return Err(Error::Lp(format!("unbounded direction at column {enter}")));
        };
        tab.pivot(pr, enter);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Lp(format!("no convergence after {pivots} pivots")));
        }
    }

    let objective = (0..rows).find(|&r| tab.basis[r] == t_col).map_or(0.0, |r| tab.rhs(r));
    let mut weights = vec![0.0; m];
    let polished = polish(sys, &tab.basis, t_col);
    match polished {
        Some(x) => {
            for (&var, &v) in tab.basis.iter().zip(&x) {
                if var < m {
                    weights[var] = v.max(0.0);
                }
            }
        }
        None => {
            for r in 0..rows {
                if tab.basis[r] < m {
                    weights[tab.basis[r]] = tab.rhs(r).max(0.0);
                }
            }
        }
    }
    Ok(LpSolution {
        weights,
        objective,
        pivots,
    })
}

/// Re-solves the final basis directly from the original constraints, which
/// removes the rounding accumulated over the pivots.
fn polish(sys: &MomentSystem, basis: &[usize], t_col: usize) -> Option<Vec<f64>> {
    let (k, m) = (sys.num_rows(), sys.num_cols());
    let n = basis.len();
    let mut bm = Matrix::zeros(n, n);
    for (j, &var) in basis.iter().enumerate() {
        for r in 0..k {
            let s = sys.scales[r];
            let (up, down) = if var < m {
                (sys.a.at(r, var) / s, -sys.a.at(r, var) / s)
            } else if var == t_col {
                (-1.0, -1.0)
            } else if var == m + 1 + r {
                (1.0, 0.0)
            } else if var == m + 1 + k + r {
                (0.0, 1.0)
            } else {
                (0.0, 0.0)
            };
            *bm.at_mut(r, j) = up;
            *bm.at_mut(k + r, j) = down;
        }
        *bm.at_mut(2 * k, j) = if var < m { 1.0 } else { 0.0 };
    }
    let mut rhs = vec![0.0; n];
    for r in 0..k {
        rhs[r] = sys.b[r] / sys.scales[r];
        rhs[k + r] = -sys.b[r] / sys.scales[r];
    }
    rhs[2 * k] = 1.0;
    let x = Lu::new(&bm).ok()?.solve(&rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}
