//! Solving SDEs along driving paths and the error metrics of the benchmarks.

mod bench;
mod sampling;

use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;
use crate::sde::SdeModel;

pub use bench::{
    bench, plot_data, read_reports, write_plot_data, write_reports, BenchConfig, ErrorReport, PlotRow, Sampler,
};
pub use sampling::{sample_brownian_paths, sample_increments, HALTON_MAX_DIM, SOBOL_MAX_DIM};

pub const DEFAULT_SUBSTEPS: usize = 16;

/// Solution of an SDE along one driving path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub state_dim: usize,
    /// States at the path knots, row-major.
    pub states: Vec<f64>,
    /// Trapezoid rule for `∫ y_0 dt` over the substep grid.
    pub integral: f64,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - self.state_dim..]
    }
}

/// Integrates the Stratonovich ODE along each linear piece of `path` with
/// `substeps` classical RK4 steps per piece, projecting after every step.
pub fn solve_along_path(
    model: &SdeModel,
    path: &PiecewiseLinearPath,
    y0: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    let e = model.state_dim();
    if path.dim() != model.noise_dim() {
        return Err(Error::InvalidArgument(format!(
            "{} needs a {}-channel path, got {}",
            model.name(),
            model.noise_dim(),
            path.dim()
        )));
    }
    if y0.len() != e || substeps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need {e} initial values and at least one substep"
        )));
    }
    let d = path.dim();
    let mut inc = vec![0.0; d + 1];
    let mut v = vec![0.0; d];
    let mut y = y0.to_vec();
    model.clamp(&mut y);
    let mut states = Vec::with_capacity(path.num_knots() * e);
    states.extend_from_slice(&y);
    let mut k = [[0.0; 2]; 4];
    let mut tmp = [0.0; 2];
    let mut integral = 0.0;
    for seg in 0..path.num_segments() {
        path.increment(seg, &mut inc);
        let dt = inc[0];
        for c in 0..d {
            v[c] = inc[c + 1] / dt;
        }
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            let before = y[0];
            model.field(&y, &v, &mut k[0][..e]);
            for i in 0..e {
                tmp[i] = y[i] + 0.5 * h * k[0][i];
            }
            model.field(&tmp[..e], &v, &mut k[1][..e]);
            for i in 0..e {
                tmp[i] = y[i] + 0.5 * h * k[1][i];
            }
            model.field(&tmp[..e], &v, &mut k[2][..e]);
            for i in 0..e {
                tmp[i] = y[i] + h * k[2][i];
            }
            model.field(&tmp[..e], &v, &mut k[3][..e]);
            for i in 0..e {
                y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            model.clamp(&mut y);
            integral += 0.5 * h * (before + y[0]);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { segment: seg });
        }
        states.extend_from_slice(&y);
    }
    Ok(Trajectory {
        state_dim: e,
        states,
        integral,
    })
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

fn weighted_sum(weights: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let terms: Vec<f64> = (0..weights.len()).map(|i| weights[i] * f(i)).collect();
    pairwise_sum(&terms)
}

/// Weighted mean and weighted central second moment.
pub fn empirical_mean_var(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let m = weighted_sum(weights, |i| values[i]);
    let v = weighted_sum(weights, |i| (values[i] - m).powi(2));
    (m, v)
}

/// 2-Wasserstein distance between `N(m̂, v̂)` and `N(m, v)`.
pub fn mve(m_hat: f64, v_hat: f64, m: f64, v: f64) -> Result<f64> {
    if v_hat < 0.0 || v < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "variances must be non-negative, got {v_hat} and {v}"
        )));
    }
    Ok(((m_hat - m).powi(2) + (v_hat.sqrt() - v.sqrt()).powi(2)).sqrt())
}

/// `Σ λ_i exp(-∫ X dt)` from the trajectory integrals.
pub fn bond_price_estimate(integrals: &[f64], weights: &[f64]) -> f64 {
    weighted_sum(weights, |i| (-integrals[i]).exp())
}

/// `exp(-μT) Σ λ_i (exp(X_T) - K)^+`.
pub fn call_price_estimate(log_prices: &[f64], weights: &[f64], strike: f64, maturity: f64, mu: f64) -> f64 {
    (-mu * maturity).exp() * weighted_sum(weights, |i| (log_prices[i].exp() - strike).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::make_model;
    use std::collections::BTreeMap;

    fn model(name: &str) -> SdeModel {
        make_model(name, &BTreeMap::new()).unwrap()
    }

    fn line(slope: f64) -> PiecewiseLinearPath {
        PiecewiseLinearPath::new(1, vec![0.0, 0.5, 1.0], vec![0.0, 0.5 * slope, slope]).unwrap()
    }

    #[test]
    fn ou_along_zero_path() {
        let ou = model("ou");
        let tr = solve_along_path(&ou, &line(0.0), &[2.0], 16).unwrap();
        let exact = 3.0 - (-1.0f64).exp();
        assert!((tr.terminal()[0] - exact).abs() < 1e-8);
        assert_eq!(tr.states.len(), 3);
    }

    #[test]
    fn rk4_order() {
        // IGBM along a line solves y' = (σc - a_s) y + a_s b_s.
        let m = model("igbm");
        let (a, b, s, c) = (0.1, 0.04, 0.6, 1.3);
        let a_s = a + s * s / 2.0;
        let k = s * c - a_s;
        let exact = |y0: f64| (y0 + a * b / k) * k.exp() - a * b / k;
        let err = |n| (solve_along_path(&m, &line(c), &[0.06], n).unwrap().terminal()[0] - exact(0.06)).abs();
        assert!(err(16) < 1e-8);
        let ou = model("ou");
        let ou_err = |n| {
            let y = solve_along_path(&ou, &line(0.0), &[2.0], n).unwrap().terminal()[0];
            (y - 3.0 + (-1.0f64).exp()).abs()
        };
        assert!(ou_err(1) / ou_err(4) >= 16.0);
        assert!(err(1) / err(4) >= 16.0);
    }

    #[test]
    fn trapezoid_integral() {
        let ou = SdeModel::Ou {
            a: 1.0,
            b: 0.0,
            sigma: 1.0,
            x0: 0.0,
        };
        // Along W_t = t the ODE is y' = 1 - y, so y = 1 - exp(-t).
        let tr = solve_along_path(&ou, &line(1.0), &[0.0], 8).unwrap();
        let exact_y = 1.0 - (-1.0f64).exp();
        assert!((tr.terminal()[0] - exact_y).abs() < 1e-7);
        let exact_int = (-1.0f64).exp();
        assert!((tr.integral - exact_int).abs() < 1e-3);
    }

    #[test]
    fn non_finite_state_reports_segment() {
        let m = SdeModel::Igbm {
            a: 1.0,
            b: 1.0,
            sigma: 1.0,
            x0: 1.0,
        };
        let p = PiecewiseLinearPath::new(1, vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1e300]).unwrap();
        match solve_along_path(&m, &p, &[1.0], 2) {
            Err(Error::NonFinite { segment }) => assert_eq!(segment, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(empirical_mean_var(&[3.0], &[1.0]), (3.0, 0.0));
        assert_eq!(empirical_mean_var(&[1.0, -1.0], &[0.5, 0.5]), (0.0, 1.0));
        assert_eq!(mve(0.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(mve(1.0, 1.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(mve(0.0, 4.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(mve(0.0, -1.0, 0.0, 1.0).is_err());
        assert!((bond_price_estimate(&[0.3], &[1.0]) - (-0.3f64).exp()).abs() < 1e-16);
        assert_eq!(call_price_estimate(&[2f64.ln(); 3], &[1.0 / 3.0; 3], 2.0, 1.0, 0.1), 0.0);
        assert!((call_price_estimate(&[4f64.ln()], &[1.0], 2.0, 1.0, 0.0) - 2.0).abs() < 1e-15);
        let zero_k = call_price_estimate(&[0.0, 1.0], &[0.5, 0.5], 0.0, 1.0, 0.1);
        assert!((zero_k - (-0.1f64).exp() * 0.5 * (1.0 + 1f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
