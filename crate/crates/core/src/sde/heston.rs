//! Semi-closed-form European call price under the log-Heston model.
//!
//! The characteristic function uses the `r_-` form of the Heston solution,
//! which is accurate for the default parameters but is not protected against
//! the branch-cut discontinuity of the complex logarithm ("little Heston
//! trap") at long maturities and large vol-of-vol.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

use super::SdeModel;
use crate::error::{Error, Result};
use crate::quad::integrate;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn log1p(z: Complex64) -> Complex64 {
    // ln|1 + z| = ½ ln(1 + 2 Re z + |z|²) without cancellation for small z.
    let re = 0.5 * (2.0 * z.re + z.norm_sqr()).ln_1p();
    Complex64::new(re, z.im.atan2(1.0 + z.re))
}

fn expm1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        z * (1.0 + z * (0.5 + z / 6.0))
    } else {
        z.exp() - 1.0
    }
}

struct Params {
    x0: f64,
    v0: f64,
    mu: f64,
    a: f64,
    b: f64,
    sigma: f64,
    rho: f64,
}

fn params(model: &SdeModel) -> Result<Params> {
    match *model {
        SdeModel::LogHeston {
            x0,
            v0,
            mu,
            a,
            b,
            sigma,
            rho,
        } => Ok(Params {
            x0,
            v0,
            mu,
            a,
            b,
            sigma,
            rho,
        }),
        _ => Err(Error::Unsupported(format!(
            "call price formula needs the log-Heston model, got {}",
            model.name()
        ))),
    }
}

/// `log ψ_{X_T}(u)`.
fn log_cf(p: &Params, u: Complex64, t: f64) -> Complex64 {
    let alpha = -0.5 * u * u - 0.5 * I * u;
    let beta = p.a - p.rho * p.sigma * I * u;
    let gamma = 0.5 * p.sigma * p.sigma;
    let h = (beta * beta - 4.0 * alpha * gamma).sqrt();
    // r_- = (β - h)/σ², rewritten without the cancellation.
    let r_minus = 2.0 * alpha / (beta + h);
    let g = 4.0 * alpha * gamma / ((beta + h) * (beta + h));
    let e = (-h * t).exp();
    let one_minus_e = -expm1(-h * t);
    let b_t = r_minus * one_minus_e / (1.0 - g * e);
    // (1 - g e)/(1 - g) = 1 + g (1 - e)/(1 - g)
    let log_ratio = log1p(g * one_minus_e / (1.0 - g));
    let a_t = p.a * (t * r_minus - log_ratio / gamma);
    a_t * p.b + b_t * p.v0 + I * u * (p.x0 + p.mu * t)
}

/// `ψ_{X_T}(u) = E[exp(i u X_T)]`.
pub fn heston_characteristic(model: &SdeModel, u: Complex64, maturity: f64) -> Result<Complex64> {
    let p = params(model)?;
    Ok(log_cf(&p, u, maturity).exp())
}

/// Black–Scholes call with spot `s0`, rate `mu` and total variance `w`.
pub fn black_scholes_call(s0: f64, strike: f64, maturity: f64, mu: f64, w: f64) -> f64 {
    let n = Normal::standard();
    let sw = w.sqrt();
    let d1 = ((s0 / strike).ln() + mu * maturity + 0.5 * w) / sw;
    s0 * n.cdf(d1) - (-mu * maturity).exp() * strike * n.cdf(d1 - sw)
}

/// `E[exp(-μT) (S_T - K)^+]` for `S = exp(X)`.
pub fn heston_call_reference(model: &SdeModel, strike: f64, maturity: f64) -> Result<f64> {
    call_price(model, strike, maturity, 1e-13)
}

fn call_price(model: &SdeModel, strike: f64, maturity: f64, abs_tol: f64) -> Result<f64> {
    if !(strike > 0.0) || !(maturity > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need K > 0 and T > 0, got K = {strike}, T = {maturity}"
        )));
    }
    let p = params(model)?;
    let t = maturity;
    let lk = strike.ln();
    let log_norm = log_cf(&p, -I, t);
    let pi1 = |u: f64| {
        let z = log_cf(&p, Complex64::new(u, -1.0), t) - log_norm - I * u * lk;
        (z.exp() / (I * u)).re
    };
    let pi2 = |u: f64| {
        let z = log_cf(&p, Complex64::new(u, 0.0), t) - I * u * lk;
        (z.exp() / (I * u)).re
    };
    const TAIL: f64 = 1e-12;
    const MAX_U: f64 = 1e5;
    let mut lo = 0.0;
    let mut hi = 25.0;
    let (mut i1, mut i2) = (0.0, 0.0);
    loop {
        let d1 = integrate(pi1, lo, hi, abs_tol, 1e-13)?.value;
        let d2 = integrate(pi2, lo, hi, abs_tol, 1e-13)?.value;
        i1 += d1;
        i2 += d2;
        if lo > 0.0 && d1.abs() < TAIL && d2.abs() < TAIL {
            break;
        }
        if hi >= MAX_U {
            return Err(Error::Quadrature {
                achieved: d1.abs().max(d2.abs()),
            });
        }
        lo = hi;
        hi *= 2.0;
    }
    let s0 = p.x0.exp();
    let price = s0 * (0.5 + i1 / PI) - (-p.mu * t).exp() * strike * (0.5 + i2 / PI);
    if !price.is_finite() {
        return Err(Error::Numerical("call price is not finite".into()));
    }
    Ok(price)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::make_model;
    use std::collections::BTreeMap;

    fn heston(overrides: &[(&str, f64)]) -> SdeModel {
        let o: BTreeMap<String, f64> = overrides.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        make_model("heston", &o).unwrap()
    }

    #[test]
    fn normalisation() {
        let m = heston(&[]);
        let one = heston_characteristic(&m, Complex64::new(0.0, 0.0), 1.0).unwrap();
        assert!((one - 1.0).norm() < 1e-15);
        let fwd = heston_characteristic(&m, -I, 1.0).unwrap();
        assert!((fwd.re - 20.0 * 0.1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn vanishing_vol_of_vol_is_black_scholes() {
        for rho in [0.0, -0.5] {
            let m = heston(&[("sigma", 1e-7), ("rho", rho)]);
            let (a, b, v0) = (2.0, 0.1, 0.4);
            for &(k, t) in &[(2.0, 1.0), (20.0, 1.0), (25.0, 0.5)] {
                let w = b * t + (v0 - b) * -(-a * t as f64).exp_m1() / a;
                let bs = black_scholes_call(20.0, k, t, 0.1, w);
                let h = heston_call_reference(&m, k, t).unwrap();
                assert!((h - bs).abs() < 1e-6 * bs, "K={k} T={t}: {h} vs {bs}");
            }
        }
    }

    #[test]
    fn small_strike_and_tolerance() {
        let m = heston(&[]);
        let p = heston_call_reference(&m, 1e-6, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-5);
        let base = heston_call_reference(&m, 2.0, 1.0).unwrap();
        let fine = call_price(&m, 2.0, 1.0, 1e-15).unwrap();
        assert!(base > 0.0);
        assert!((base - fine).abs() < 1e-9 * base);
        // Deep in the money: within a few cents of intrinsic forward value.
        assert!(base > 20.0 - 2.0 * (-0.1f64).exp() - 1e-9);
    }

    #[test]
    fn other_models_rejected() {
        let ou = make_model("ou", &BTreeMap::new()).unwrap();
        assert!(heston_call_reference(&ou, 1.0, 1.0).is_err());
        assert!(heston_call_reference(&heston(&[]), -1.0, 1.0).is_err());
    }
}
