//! Benchmark SDEs in Stratonovich form, with closed-form reference statistics.
//!
//! Every model is written as `dy = μ(y) dt + Σ_i σ_i(y) ∘ dW^i`, so along a
//! linear path segment with channel slopes `v` it is the ODE
//! `dy/dt = μ(y) + Σ_i σ_i(y) v_i`.

mod heston;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use heston::{black_scholes_call, heston_call_reference, heston_characteristic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SdeModel {
    /// `dX = a (b - X) dt + σ dW`.
    Ou { a: f64, b: f64, sigma: f64, x0: f64 },
    /// `dX = a (b - X) dt + σ X dW`.
    Igbm { a: f64, b: f64, sigma: f64, x0: f64 },
    /// `dX = a (b - X) dt + σ sqrt(X) dW`.
    Cir { a: f64, b: f64, sigma: f64, x0: f64 },
    /// `dX = s X (1 - X) dt + sqrt(γ X (1 - X)) dW` on `[0, 1]`.
    WrightFisher { s: f64, gamma: f64, x0: f64 },
    /// Log-price `X` and variance `V`; `W^(1) = ρ W^v + sqrt(1 - ρ²) W^⊥`.
    LogHeston {
        x0: f64,
        v0: f64,
        mu: f64,
        a: f64,
        b: f64,
        sigma: f64,
        rho: f64,
    },
}

pub const MODEL_NAMES: [&str; 5] = ["ou", "igbm", "cir", "wf", "heston"];

fn invalid(model: &str, constraint: &str) -> Error {
    Error::InvalidParameter {
        model: model.into(),
        constraint: constraint.into(),
    }
}

/// Model `name` at its default parameters, with `overrides` applied.
///
/// Accepted names: `ou` (or `vasicek`), `igbm`, `cir`, `wf` (or
/// `wright-fisher`), `heston` (or `log-heston`).
pub fn make_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SdeModel> {
    let key = name.to_ascii_lowercase();
    let mut params: BTreeMap<&str, f64> = match key.as_str() {
        "ou" | "vasicek" => [("a", 1.0), ("b", 3.0), ("sigma", 0.5), ("x0", 2.0)].into(),
        "igbm" => [("a", 0.1), ("b", 0.04), ("sigma", 0.6), ("x0", 0.06)].into(),
        "cir" => [("a", 1.0), ("b", 3.0), ("sigma", 0.5), ("x0", 2.0)].into(),
        "wf" | "wright-fisher" => [("s", 0.0), ("gamma", 1.0), ("x0", 0.5)].into(),
        "heston" | "log-heston" => [
            ("x0", 20f64.ln()),
            ("v0", 0.4),
            ("mu", 0.1),
            ("a", 2.0),
            ("b", 0.1),
            ("sigma", 0.5),
            ("rho", 0.0),
        ]
        .into(),
        _ => return Err(Error::Unsupported(format!("unknown model '{name}'"))),
    };
    for (k, &v) in overrides {
        match params.get_mut(k.as_str()) {
            Some(p) => *p = v,
            None => return Err(invalid(name, &format!("unknown parameter '{k}'"))),
        }
    }
    if params.values().any(|v| !v.is_finite()) {
        return Err(invalid(name, "parameters must be finite"));
    }
    let p = |k: &str| params[k];
    let model = match key.as_str() {
        "ou" | "vasicek" => SdeModel::Ou {
            a: p("a"),
            b: p("b"),
            sigma: p("sigma"),
            x0: p("x0"),
        },
        "igbm" => SdeModel::Igbm {
            a: p("a"),
            b: p("b"),
            sigma: p("sigma"),
            x0: p("x0"),
        },
        "cir" => SdeModel::Cir {
            a: p("a"),
            b: p("b"),
            sigma: p("sigma"),
            x0: p("x0"),
        },
        "wf" | "wright-fisher" => SdeModel::WrightFisher {
            s: p("s"),
            gamma: p("gamma"),
            x0: p("x0"),
        },
        _ => SdeModel::LogHeston {
            x0: p("x0"),
            v0: p("v0"),
            mu: p("mu"),
            a: p("a"),
            b: p("b"),
            sigma: p("sigma"),
            rho: p("rho"),
        },
    };
    model.validate()?;
    Ok(model)
}

impl SdeModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.name();
        match *self {
            SdeModel::Ou { a, sigma, .. } => {
                if !(a > 0.0) {
                    return Err(invalid(n, "a > 0"));
                }
                if !(sigma > 0.0) {
                    return Err(invalid(n, "sigma > 0"));
                }
            }
            SdeModel::Igbm { a, b, sigma, x0 } | SdeModel::Cir { a, b, sigma, x0 } => {
                if !(a > 0.0) {
                    return Err(invalid(n, "a > 0"));
                }
                if !(b > 0.0) {
                    return Err(invalid(n, "b > 0"));
                }
                if !(sigma > 0.0) {
                    return Err(invalid(n, "sigma > 0"));
                }
                if !(x0 >= 0.0) {
                    return Err(invalid(n, "x0 >= 0"));
                }
            }
            SdeModel::WrightFisher { gamma, x0, .. } => {
                if !(gamma > 0.0) {
                    return Err(invalid(n, "gamma > 0"));
                }
                if !(0.0..=1.0).contains(&x0) {
                    return Err(invalid(n, "0 <= x0 <= 1"));
                }
            }
            SdeModel::LogHeston { v0, a, sigma, rho, .. } => {
                if !(a > 0.0) {
                    return Err(invalid(n, "a > 0"));
                }
                if !(sigma > 0.0) {
                    return Err(invalid(n, "sigma > 0"));
                }
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(invalid(n, "-1 <= rho <= 1"));
                }
                if !(v0 >= 0.0) {
                    return Err(invalid(n, "v0 >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SdeModel::Ou { .. } => "ou",
            SdeModel::Igbm { .. } => "igbm",
            SdeModel::Cir { .. } => "cir",
            SdeModel::WrightFisher { .. } => "wf",
            SdeModel::LogHeston { .. } => "heston",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SdeModel::LogHeston { .. } => 2,
            _ => 1,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.state_dim()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match *self {
            SdeModel::Ou { x0, .. }
            | SdeModel::Igbm { x0, .. }
            | SdeModel::Cir { x0, .. }
            | SdeModel::WrightFisher { x0, .. } => vec![x0],
            SdeModel::LogHeston { x0, v0, .. } => vec![x0, v0],
        }
    }

    /// Stratonovich drift `μ(y)`.
    pub fn strat_drift(&self, y: &[f64], out: &mut [f64]) {
        match *self {
            SdeModel::Ou { a, b, .. } => out[0] = a * (b - y[0]),
            SdeModel::Igbm { a, b, sigma, .. } => {
                let s2 = sigma * sigma;
                let a_s = a + 0.5 * s2;
                let b_s = 2.0 * a * b / (2.0 * a + s2);
                out[0] = a_s * (b_s - y[0]);
            }
            SdeModel::Cir { a, b, sigma, .. } => out[0] = a * (b - sigma * sigma / (4.0 * a) - y[0]),
            SdeModel::WrightFisher { s, gamma, .. } => {
                let x = y[0].clamp(0.0, 1.0);
                out[0] = s * x * (1.0 - x) - gamma * (0.25 - 0.5 * x);
            }
            SdeModel::LogHeston {
                mu, a, b, sigma, rho, ..
            } => {
                let v = y[1];
                out[0] = mu - 0.25 * rho * sigma - 0.5 * v;
                out[1] = a * (b - sigma * sigma / (4.0 * a) - v);
            }
        }
    }

    /// Diffusion vector field `σ_i(y)` of noise channel `i`.
    pub fn diffusion(&self, y: &[f64], channel: usize, out: &mut [f64]) {
        match *self {
            SdeModel::Ou { sigma, .. } => out[0] = sigma,
            SdeModel::Igbm { sigma, .. } => out[0] = sigma * y[0],
            SdeModel::Cir { sigma, .. } => out[0] = sigma * y[0].max(0.0).sqrt(),
            SdeModel::WrightFisher { gamma, .. } => {
                let x = y[0].clamp(0.0, 1.0);
                out[0] = (gamma * x * (1.0 - x)).sqrt();
            }
            SdeModel::LogHeston { sigma, rho, .. } => {
                let sv = y[1].max(0.0).sqrt();
                if channel == 0 {
                    out[0] = rho * sv;
                    out[1] = sigma * sv;
                } else {
                    out[0] = (1.0 - rho * rho).sqrt() * sv;
                    out[1] = 0.0;
                }
            }
        }
    }

    /// `dy/dt = μ(y) + Σ_i σ_i(y) v_i` along a segment with channel slopes `v`.
    #[inline]
    pub fn field(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            SdeModel::LogHeston { .. } => {
                self.strat_drift(y, out);
                let mut s = [0.0; 2];
                for (i, &vi) in v.iter().enumerate() {
                    self.diffusion(y, i, &mut s);
                    out[0] += s[0] * vi;
                    out[1] += s[1] * vi;
                }
            }
            _ => {
                let mut s = [0.0];
                self.strat_drift(y, out);
                self.diffusion(y, 0, &mut s);
                out[0] += s[0] * v[0];
            }
        }
    }

    /// Projection onto the state space; the identity except for Wright–Fisher.
    pub fn clamp(&self, y: &mut [f64]) {
        if let SdeModel::WrightFisher { .. } = self {
            y[0] = y[0].clamp(0.0, 1.0);
        }
    }

    /// Metrics with a closed-form reference for this model.
    pub fn supported_metrics(&self) -> &'static [Metric] {
        match self {
            SdeModel::Ou { .. } | SdeModel::Cir { .. } => &[Metric::Mve, Metric::Bond],
            SdeModel::Igbm { .. } => &[Metric::Mve],
            SdeModel::WrightFisher { s, .. } if *s == 0.0 => &[Metric::Mve],
            SdeModel::WrightFisher { .. } => &[],
            SdeModel::LogHeston { .. } => &[Metric::Call],
        }
    }
}

/// Error metric of a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// 2-Wasserstein distance between the Gaussians with the estimated and the
    /// true mean and variance of `X_T`.
    Mve,
    /// Relative error of the zero-coupon bond price.
    Bond,
    /// Relative error of the European call price.
    Call,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mve => "mve",
            Metric::Bond => "bond",
            Metric::Call => "call",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mve" => Ok(Metric::Mve),
            "bond" => Ok(Metric::Bond),
            "call" => Ok(Metric::Call),
            _ => Err(Error::Unsupported(format!("unknown metric '{s}'"))),
        }
    }
}

const BRANCH_TOL: f64 = 1e-12;

/// General IGBM variance, valid when `σ²/a ∉ {1, 2}`.
pub fn igbm_variance_generic(a: f64, b: f64, sigma: f64, x0: f64, t: f64) -> f64 {
    let s2 = sigma * sigma;
    let e1 = (-a * t).exp();
    let e2 = (-2.0 * a * t).exp();
    (-(2.0 * a - s2) * t).exp()
        * (x0 * x0 - 2.0 * a * b / (a - s2) * x0 + 2.0 * a * a * b * b / ((2.0 * a - s2) * (a - s2)))
        + b * b * s2 / (2.0 * a - s2)
        + 2.0 * b * s2 * (x0 - b) / (a - s2) * e1
        - e2 * (x0 - b).powi(2)
}

/// `(E[X_t], Var[X_t])` given `X_0 = x0`.
pub fn reference_mean_var(model: &SdeModel, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        if let SdeModel::LogHeston { .. } = model {
            return Err(Error::Unsupported("closed-form moments for the log-Heston model".into()));
        }
        return Ok((model.initial_state()[0], 0.0));
    }
    match *model {
        SdeModel::Ou { a, b, sigma, x0 } => {
            let mean = b + (x0 - b) * (-a * t).exp();
            let var = sigma * sigma / (2.0 * a) * -(-2.0 * a * t).exp_m1();
            Ok((mean, var))
        }
        SdeModel::Igbm { a, b, sigma, x0 } => {
            let e1 = (-a * t).exp();
            let e2 = (-2.0 * a * t).exp();
            let mean = b + (x0 - b) * e1;
            let ratio = sigma * sigma / a;
            let var = if (ratio - 1.0).abs() <= BRANCH_TOL {
                e1 * (2.0 * a * b * (t * x0 - x0 / a - t * b) + x0 * x0) - e2 * (x0 - b).powi(2) + b * b
            } else if (ratio - 2.0).abs() <= BRANCH_TOL {
                e1 * (4.0 * b * (b - x0)) - e2 * (x0 - b).powi(2) + 2.0 * b * b * a * t - 3.0 * b * b
                    + 2.0 * b * x0
                    + x0 * x0
            } else {
                igbm_variance_generic(a, b, sigma, x0, t)
            };
            Ok((mean, var))
        }
        SdeModel::Cir { a, b, sigma, x0 } => {
            let e1 = (-a * t).exp();
            let mean = x0 * e1 + b * (1.0 - e1);
            let s2 = sigma * sigma;
            let var = s2 * x0 / a * (e1 - e1 * e1) + s2 * b / (2.0 * a) * (1.0 - e1).powi(2);
            Ok((mean, var))
        }
        SdeModel::WrightFisher { s, gamma, x0 } => {
            if s != 0.0 {
                return Err(Error::Unsupported(
                    "closed-form Wright-Fisher moments need s = 0".into(),
                ));
            }
            Ok((x0, x0 * (1.0 - x0) * -(-gamma * t).exp_m1()))
        }
        SdeModel::LogHeston { .. } => Err(Error::Unsupported(
            "closed-form moments for the log-Heston model".into(),
        )),
    }
}

/// `E[exp(-∫_0^T X_t dt)]` for the Vasicek and CIR short-rate models.
pub fn bond_price_reference(model: &SdeModel, maturity: f64) -> Result<f64> {
    if !(maturity > 0.0) {
        return Err(Error::InvalidArgument(format!("maturity must be positive, got {maturity}")));
    }
    let tau = maturity;
    match *model {
        SdeModel::Ou { a, b, sigma, x0 } => {
            let bb = -(-a * tau).exp_m1() / a;
            let gamma = b - sigma * sigma / (2.0 * a * a);
            let aa = (gamma * (bb - tau) - sigma * sigma / (4.0 * a) * bb * bb).exp();
            Ok(aa * (-x0 * bb).exp())
        }
        SdeModel::Cir { a, b, sigma, x0 } => {
            let s2 = sigma * sigma;
            let g = (a * a + 2.0 * s2).sqrt();
            let eg = (g * tau).exp();
            let den = (g - a) + (g + a) * eg;
            let aa = (2.0 * g * ((g + a) * tau / 2.0).exp() / den).powf(2.0 * a * b / s2);
            let bb = 2.0 * (g * tau).exp_m1() / den;
            Ok(aa * (-x0 * bb).exp())
        }
        _ => Err(Error::Unsupported(format!("no bond price formula for {}", model.name()))),
    }
}

/// Probability that a Wright–Fisher diffusion started at `x0` is absorbed at 1.
pub fn wf_absorption_probability(s: f64, gamma: f64, x0: f64) -> f64 {
    if s == 0.0 {
        return x0;
    }
    let c = -2.0 * s / gamma;
    (c * x0).exp_m1() / c.exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(name: &str) -> SdeModel {
        make_model(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn stratonovich_corrections() {
        let mut out = [0.0];
        model("cir").strat_drift(&[0.0], &mut out);
        assert!((out[0] - 2.9375).abs() < 1e-15);
        model("igbm").strat_drift(&[0.0], &mut out);
        // a_s b_s = a b
        assert!((out[0] - 0.004).abs() < 1e-15);
        model("igbm").strat_drift(&[1.0], &mut out);
        assert!((out[0] - (0.004 - 0.28)).abs() < 1e-15);
        model("ou").strat_drift(&[2.0], &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn parameter_validation() {
        let bad: BTreeMap<String, f64> = [("sigma".to_string(), -1.0)].into();
        let e = make_model("cir", &bad).unwrap_err();
        assert!(e.to_string().contains("sigma > 0"));
        let unknown: BTreeMap<String, f64> = [("kappa".to_string(), 1.0)].into();
        assert!(make_model("ou", &unknown).is_err());
        assert!(make_model("sabr", &BTreeMap::new()).is_err());
    }

    #[test]
    fn reference_examples() {
        let (m, v) = reference_mean_var(&model("ou"), 1.0).unwrap();
        assert!((m - (3.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((v - 0.125 * (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        let (m, v) = reference_mean_var(&model("wf"), 1.0).unwrap();
        assert_eq!(m, 0.5);
        assert!((v - 0.25 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        for name in ["ou", "igbm", "cir", "wf"] {
            let mdl = model(name);
            assert_eq!(reference_mean_var(&mdl, 0.0).unwrap(), (mdl.initial_state()[0], 0.0));
        }
        let wf: BTreeMap<String, f64> = [("s".to_string(), 0.3)].into();
        assert!(reference_mean_var(&make_model("wf", &wf).unwrap(), 1.0).is_err());
        assert!(reference_mean_var(&model("heston"), 1.0).is_err());
    }

    /// Second moment from `m2' = 2ab m1 - (2a - σ²) m2` integrated by RK4.
    fn igbm_variance_ode(a: f64, b: f64, sigma: f64, x0: f64, t: f64) -> f64 {
        let f = |s: f64, m2: f64| {
            let m1 = b + (x0 - b) * (-a * s).exp();
            2.0 * a * b * m1 - (2.0 * a - sigma * sigma) * m2
        };
        let n = 20_000;
        let h = t / n as f64;
        let mut m2 = x0 * x0;
        for k in 0..n {
            let s = k as f64 * h;
            let k1 = f(s, m2);
            let k2 = f(s + h / 2.0, m2 + h / 2.0 * k1);
            let k3 = f(s + h / 2.0, m2 + h / 2.0 * k2);
            let k4 = f(s + h, m2 + h * k3);
            m2 += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let m1 = b + (x0 - b) * (-a * t).exp();
        m2 - m1 * m1
    }

    #[test]
    fn igbm_variance_branches() {
        for &(a, sigma) in &[(0.1, 0.6), (0.25, 0.5), (0.125, 0.5), (1.0, 0.3)] {
            let (b, x0, t) = (0.04, 0.06, 1.5);
            let mdl = SdeModel::Igbm { a, b, sigma, x0 };
            let (_, v) = reference_mean_var(&mdl, t).unwrap();
            let ode = igbm_variance_ode(a, b, sigma, x0, t);
            assert!((v - ode).abs() < 1e-12 * ode.abs().max(1e-6), "a={a} sigma={sigma}: {v} vs {ode}");
        }
        // The generic branch is continuous across the special ratios.
        for ratio in [1.0, 2.0] {
            let a = 0.25;
            let exact = SdeModel::Igbm {
                a,
                b: 0.04,
                sigma: (ratio * a).sqrt(),
                x0: 0.06,
            };
            let (_, v) = reference_mean_var(&exact, 1.0).unwrap();
            for eps in [1e-6, -1e-6] {
                let near = igbm_variance_generic(a, 0.04, ((ratio + eps) * a).sqrt(), 0.06, 1.0);
                assert!((near - v).abs() < 1e-4 * v, "ratio {ratio}{eps:+}");
            }
        }
    }

    #[test]
    fn bond_prices() {
        let p = bond_price_reference(&model("ou"), 1.0).unwrap();
        let bb = 1.0 - (-1.0f64).exp();
        let gamma = 3.0 - 0.125;
        let expected = (gamma * (bb - 1.0) - 0.0625 * bb * bb - 2.0 * bb).exp();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.0957).abs() < 5e-4);
        for name in ["ou", "cir"] {
            let tiny = bond_price_reference(&model(name), 1e-9).unwrap();
            assert!((tiny - 1.0).abs() < 1e-8);
            let p = bond_price_reference(&model(name), 2.0).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(bond_price_reference(&model("igbm"), 1.0).is_err());
    }

    #[test]
    fn absorption_probability() {
        assert_eq!(wf_absorption_probability(0.0, 1.0, 0.5), 0.5);
        assert_eq!(wf_absorption_probability(0.7, 1.0, 0.0), 0.0);
        assert!((wf_absorption_probability(0.7, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((wf_absorption_probability(1e-8, 1.0, 0.3) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn clamp_is_idempotent() {
        let wf = model("wf");
        for x in [-0.5, 0.2, 1.7] {
            let mut y = [x];
            wf.clamp(&mut y);
            let once = y[0];
            wf.clamp(&mut y);
            assert_eq!(y[0], once);
            assert!((0.0..=1.0).contains(&once));
        }
    }

    #[test]
    fn field_combines_drift_and_diffusion() {
        let h: BTreeMap<String, f64> = [("rho".to_string(), -0.4)].into();
        let m = make_model("heston", &h).unwrap();
        let y = [3.0, 0.3];
        let v = [0.7, -1.1];
        let mut f = [0.0; 2];
        m.field(&y, &v, &mut f);
        let mut d = [0.0; 2];
        m.strat_drift(&y, &mut d);
        let sv = 0.3f64.sqrt();
        let expect_x = d[0] + sv * (-0.4 * 0.7 + (1.0f64 - 0.16).sqrt() * -1.1);
        let expect_v = d[1] + 0.5 * sv * 0.7;
        assert!((f[0] - expect_x).abs() < 1e-15);
        assert!((f[1] - expect_v).abs() < 1e-15);
    }
}
