//! Piecewise-linear driving paths on `[0, T]`.
//!
//! The time coordinate is implicit: a path in `R^d` is stored as its knot
//! times plus `d` channel values per knot.

use crate::error::{Error, Result};

/// Knots closer than this are treated as the same time.
pub const KNOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearPath {
    dim: usize,
    times: Vec<f64>,
    /// Row-major, `dim` values per knot.
    values: Vec<f64>,
}

impl PiecewiseLinearPath {
    /// Builds a path on `[0, 1]`, starting at the origin.
    pub fn new(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let path = Self::on_horizon(dim, times, values)?;
        let end = *path.times.last().unwrap();
        if (end - 1.0).abs() > KNOT_TOLERANCE {
            return Err(Error::InvalidPath(format!("last knot at {end}, expected 1")));
        }
        Ok(path)
    }

    /// Builds a path on `[0, T]` for an arbitrary horizon `T = times.last()`.
    pub fn on_horizon(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("path dimension must be positive".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath("a path needs at least two knots".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "{} values for {} knots of dimension {dim}",
                values.len(),
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!("first knot at {}, expected 0", times[0])));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidPath("path must start at the origin".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath(format!(
                "knot times must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite knot".into()));
        }
        Ok(Self { dim, times, values })
    }

    /// Path with `increments.len() / dim` uniform steps on `[0, 1]`.
    pub fn from_increments(dim: usize, increments: &[f64]) -> Result<Self> {
        if dim == 0 || increments.len() % dim != 0 || increments.is_empty() {
            return Err(Error::InvalidPath(format!(
                "{} increments do not split into channels of dimension {dim}",
                increments.len()
            )));
        }
        let steps = increments.len() / dim;
        let times = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        let mut values = vec![0.0; (steps + 1) * dim];
        for k in 0..steps {
            for c in 0..dim {
                values[(k + 1) * dim + c] = values[k * dim + c] + increments[k * dim + c];
            }
        }
        Self::new(dim, times, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_knots(&self) -> usize {
        self.times.len()
    }

    pub fn num_segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value(&self, knot: usize) -> &[f64] {
        &self.values[knot * self.dim..(knot + 1) * self.dim]
    }

    pub fn end_value(&self) -> &[f64] {
        self.value(self.num_knots() - 1)
    }

    /// `(dt, dx_1, .., dx_d)` of segment `k`.
    pub fn increment(&self, k: usize, out: &mut [f64]) {
        out[0] = self.times[k + 1] - self.times[k];
        for c in 0..self.dim {
            out[c + 1] = self.values[(k + 1) * self.dim + c] - self.values[k * self.dim + c];
        }
    }

    /// Index of the knot at time `t`, if there is one.
    pub fn knot_index(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - KNOT_TOLERANCE);
        (i < self.times.len() && (self.times[i] - t).abs() <= KNOT_TOLERANCE).then_some(i)
    }

    /// Brownian rescaling onto `[0, horizon]`: `t -> t * horizon`, values scaled by `sqrt(horizon)`.
    pub fn rescaled(&self, horizon: f64) -> Self {
        let root = horizon.sqrt();
        Self {
            dim: self.dim,
            times: self.times.iter().map(|t| t * horizon).collect(),
            values: self.values.iter().map(|v| v * root).collect(),
        }
    }

    /// Negates the channels whose bit is set in `mask`.
    pub fn reflected(&self, mask: u32) -> Self {
        let mut values = self.values.clone();
        for (i, v) in values.iter_mut().enumerate() {
            if mask >> (i % self.dim) & 1 == 1 {
                *v = -*v;
            }
        }
        Self {
            dim: self.dim,
            times: self.times.clone(),
            values,
        }
    }

    /// `self` squeezed onto `[0, 1/2]` followed by `other` squeezed onto `[1/2, 1]`,
    /// each with Brownian scaling (`omega(2t) / sqrt(2)`).
    pub fn concat_halves(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let dim = self.dim;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let h0 = self.horizon();
        let h1 = other.horizon();
        let mut times = Vec::with_capacity(self.num_knots() + other.num_knots() - 1);
        let mut values = Vec::with_capacity(times.capacity() * dim);
        for k in 0..self.num_knots() {
            times.push(0.5 * self.times[k] / h0);
            values.extend(self.value(k).iter().map(|v| v * scale));
        }
        let mid: Vec<f64> = values[values.len() - dim..].to_vec();
        for k in 1..other.num_knots() {
            times.push(0.5 + 0.5 * other.times[k] / h1);
            values.extend(other.value(k).iter().zip(&mid).map(|(v, m)| m + v * scale));
        }
        *times.last_mut().unwrap() = 1.0;
        Self { dim, times, values }
    }

    /// Value at time `t` by linear interpolation.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        for c in 0..self.dim {
            let v0 = self.values[k * self.dim + c];
            let v1 = self.values[(k + 1) * self.dim + c];
            out[c] = v0 + a * (v1 - v0);
        }
    }
}
