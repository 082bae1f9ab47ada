//! Oracles shared by the integration tests and the acceptance suite.
//!
//! The truncated tensor algebra here is a deliberately naive map from words to
//! coefficients, kept independent of the library's word basis and products.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

/// Truncated tensor series keyed by word, with `0` the time letter.
#[derive(Clone, Debug)]
pub struct Series {
    pub degree: usize,
    pub terms: BTreeMap<Vec<u8>, f64>,
}

pub fn word_degree(w: &[u8]) -> usize {
    w.len() + w.iter().filter(|&&l| l == 0).count()
}

fn all_words(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for w in &frontier {
            for l in 0..=dim as u8 {
                let mut v: Vec<u8> = w.clone();
                v.push(l);
                if word_degree(&v) <= degree {
                    next.push(v);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

impl Series {
    pub fn unit(degree: usize) -> Self {
        Self {
            degree,
            terms: [(Vec::new(), 1.0)].into(),
        }
    }

    /// `exp(Σ_i x_i e_i)` for `x = (dt, dx_1, .., dx_d)`: word `w` gets
    /// `Π x_{w_j} / |w|!`.
    pub fn segment(x: &[f64], degree: usize) -> Self {
        let dim = x.len() - 1;
        let terms = all_words(dim, degree)
            .into_iter()
            .map(|w| {
                let mut c = 1.0;
                for (j, &l) in w.iter().enumerate() {
                    c *= x[l as usize] / (j + 1) as f64;
                }
                (w, c)
            })
            .collect();
        Self { degree, terms }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                if word_degree(a) + word_degree(b) <= self.degree {
                    let mut w = a.clone();
                    w.extend_from_slice(b);
                    *terms.entry(w).or_insert(0.0) += x * y;
                }
            }
        }
        Self {
            degree: self.degree,
            terms,
        }
    }

    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        let mut terms = self.terms.clone();
        for (w, y) in &other.terms {
            *terms.entry(w.clone()).or_insert(0.0) += c * y;
        }
        Self {
            degree: self.degree,
            terms,
        }
    }

    pub fn pow(&self, mut n: usize) -> Self {
        let mut acc = Self::unit(self.degree);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    pub fn get(&self, w: &[u8]) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }
}

/// `exp(t e_0 + t/2 Σ e_i e_i)` by its power series.
pub fn brownian_signature(dim: usize, t: f64, degree: usize) -> Series {
    let mut gen = Series {
        degree,
        terms: BTreeMap::new(),
    };
    gen.terms.insert(vec![0], t);
    for i in 1..=dim as u8 {
        gen.terms.insert(vec![i, i], t / 2.0);
    }
    let mut acc = Series::unit(degree);
    let mut term = Series::unit(degree);
    for k in 1..=degree / 2 {
        term = term.mul(&gen);
        term.terms.values_mut().for_each(|v| *v /= k as f64);
        acc = acc.add_scaled(&term, 1.0);
    }
    acc
}

/// Expected signature of the `N`-step walk with i.i.d. `±1/sqrt(N)` steps in
/// every channel.
pub fn walk_signature(dim: usize, steps: usize, degree: usize) -> Series {
    let n = steps as f64;
    let mut step = Series {
        degree,
        terms: BTreeMap::new(),
    };
    for mask in 0..1u32 << dim {
        let mut x = vec![1.0 / n];
        for c in 0..dim {
            x.push(if mask >> c & 1 == 1 { -1.0 } else { 1.0 } / n.sqrt());
        }
        step = step.add_scaled(&Series::segment(&x, degree), 1.0 / (1u32 << dim) as f64);
    }
    step.pow(steps)
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

const CHUNK: usize = 4096;

/// Runs `f(rng)` once per sample with a reproducible stream per chunk.
fn samples(n: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Vec<f64> {
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// `X_T` of `dX = a(b - X)dt + σ dW` by chaining exact Gaussian transitions.
pub fn ou_terminal_samples(a: f64, b: f64, sigma: f64, x0: f64, t: f64, steps: usize, n: usize, seed: u64) -> Vec<f64> {
    let dt = t / steps as f64;
    let decay = (-a * dt).exp();
    let sd = sigma * ((1.0 - decay * decay) / (2.0 * a)).sqrt();
    samples(n, seed, |rng| {
        let mut x = x0;
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(rng);
            x = b + (x - b) * decay + sd * z;
        }
        x
    })
}

/// `exp(-∫_0^T X dt)` for Vasicek, exact transitions and the trapezoid rule.
pub fn vasicek_discount_samples(a: f64, b: f64, sigma: f64, x0: f64, t: f64, steps: usize, n: usize, seed: u64) -> Vec<f64> {
    let dt = t / steps as f64;
    let decay = (-a * dt).exp();
    let sd = sigma * ((1.0 - decay * decay) / (2.0 * a)).sqrt();
    samples(n, seed, |rng| {
        let mut x = x0;
        let mut int = 0.0;
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(rng);
            let next = b + (x - b) * decay + sd * z;
            int += 0.5 * dt * (x + next);
            x = next;
        }
        (-int).exp()
    })
}

/// `exp(-∫_0^T X dt)` for CIR, sampling the exact non-central chi-square
/// transition (requires `4ab/σ² > 1`).
pub fn cir_discount_samples(a: f64, b: f64, sigma: f64, x0: f64, t: f64, steps: usize, n: usize, seed: u64) -> Vec<f64> {
    let dt = t / steps as f64;
    let decay = (-a * dt).exp();
    let c = sigma * sigma * (1.0 - decay) / (4.0 * a);
    let k = 4.0 * a * b / (sigma * sigma);
    assert!(k > 1.0);
    let chi = ChiSquared::new(k - 1.0).unwrap();
    samples(n, seed, |rng| {
        let mut x = x0;
        let mut int = 0.0;
        for _ in 0..steps {
            let lambda = x * decay / c;
            let z: f64 = StandardNormal.sample(rng);
            let next = c * (chi.sample(rng) + (z + lambda.sqrt()).powi(2));
            int += 0.5 * dt * (x + next);
            x = next;
        }
        (-int).exp()
    })
}
