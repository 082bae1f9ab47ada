//! Error-versus-path-count experiments and their CSV files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bond_price_estimate, call_price_estimate, empirical_mean_var, mve, solve_along_path};
use super::{sample_increments, DEFAULT_SUBSTEPS};
use crate::cubature::CubatureFormula;
use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;
use crate::sde::{bond_price_reference, heston_call_reference, reference_mean_var, Metric, SdeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    Mc,
    /// Joe–Kuo direction numbers, optionally with a seeded digital shift.
    Sobol { shift: bool },
    /// Included for completeness; in practice close to plain Monte Carlo.
    Halton,
    Lhs,
}

impl Sampler {
    pub fn label(&self) -> &'static str {
        match self {
            Sampler::Mc => "mc",
            Sampler::Sobol { shift: false } => "sobol",
            Sampler::Sobol { shift: true } => "sobol-shift",
            Sampler::Halton => "halton",
            Sampler::Lhs => "lhs",
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Sampler::Mc),
            "sobol" => Ok(Sampler::Sobol { shift: false }),
            "sobol-shift" => Ok(Sampler::Sobol { shift: true }),
            "halton" => Ok(Sampler::Halton),
            "lhs" => Ok(Sampler::Lhs),
            _ => Err(Error::Unsupported(format!("unknown sampling method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub model: SdeModel,
    pub metric: Metric,
    pub horizon: f64,
    pub samplers: Vec<Sampler>,
    pub m_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Steps of the Monte Carlo and QMC walks.
    pub n_steps: usize,
    /// Labelled cubature formulae on `[0, 1]`, rescaled to the horizon.
    pub cubatures: Vec<(String, CubatureFormula)>,
    pub substeps: usize,
    /// Call strike; only used by the call-price metric.
    pub strike: f64,
    /// Record wall-clock times; otherwise `runtime_ms` is 0 so that output is reproducible.
    pub timing: bool,
}

impl BenchConfig {
    pub fn new(model: SdeModel, metric: Metric) -> Self {
        Self {
            model,
            metric,
            horizon: 1.0,
            samplers: vec![Sampler::Mc],
            m_grid: vec![100, 1000, 10_000],
            seeds: (0..20).collect(),
            n_steps: 64,
            cubatures: Vec::new(),
            substeps: DEFAULT_SUBSTEPS,
            strike: 2.0,
            timing: false,
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub model: String,
    pub metric: Metric,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub value: f64,
    pub runtime_ms: f64,
    pub n_steps: usize,
}

enum Reference {
    MeanVar(f64, f64),
    Price(f64),
}

fn reference(cfg: &BenchConfig) -> Result<Reference> {
    if !cfg.model.supported_metrics().contains(&cfg.metric) {
        return Err(Error::Unsupported(format!(
            "metric {} is not available for model {}",
            cfg.metric,
            cfg.model.name()
        )));
    }
    let t = cfg.horizon;
    Ok(match cfg.metric {
        Metric::Mve => {
            let (m, v) = reference_mean_var(&cfg.model, t)?;
            Reference::MeanVar(m, v)
        }
        Metric::Bond => Reference::Price(bond_price_reference(&cfg.model, t)?),
        Metric::Call => Reference::Price(heston_call_reference(&cfg.model, cfg.strike, t)?),
    })
}

/// Error of the weighted path set `paths` (on `[0, horizon]`) for the configured metric.
fn error_of(cfg: &BenchConfig, reference: &Reference, paths: &[PiecewiseLinearPath], weights: &[f64]) -> Result<f64> {
    let y0 = cfg.model.initial_state();
    let solved: Vec<(f64, f64)> = paths
        .par_iter()
        .map(|p| {
            let tr = solve_along_path(&cfg.model, p, &y0, cfg.substeps)?;
            Ok((tr.terminal()[0], tr.integral))
        })
        .collect::<Result<_>>()?;
    let terminal: Vec<f64> = solved.iter().map(|s| s.0).collect();
    match *reference {
        Reference::MeanVar(m, v) => {
            let (m_hat, v_hat) = empirical_mean_var(&terminal, weights);
            mve(m_hat, v_hat, m, v)
        }
        Reference::Price(p) => {
            let estimate = match cfg.metric {
                Metric::Bond => {
                    let integrals: Vec<f64> = solved.iter().map(|s| s.1).collect();
                    bond_price_estimate(&integrals, weights)
                }
                _ => {
                    let mu = match cfg.model {
                        SdeModel::LogHeston { mu, .. } => mu,
                        _ => 0.0,
                    };
                    call_price_estimate(&terminal, weights, cfg.strike, cfg.horizon, mu)
                }
            };
            Ok((estimate - p).abs() / p.abs())
        }
    }
}

/// Runs every sampler at every `M` and seed, then every cubature formula.
pub fn bench(cfg: &BenchConfig) -> Result<Vec<ErrorReport>> {
    if !(cfg.horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    let reference = reference(cfg)?;
    let d = cfg.model.noise_dim();
    let mut out = Vec::new();
    let report = |method: String, m, seed, value, runtime_ms, n_steps| ErrorReport {
        method,
        model: cfg.model.name().to_string(),
        metric: cfg.metric,
        m,
        horizon: cfg.horizon,
        seed,
        value,
        runtime_ms,
        n_steps,
    };
    for &sampler in &cfg.samplers {
        for &m in &cfg.m_grid {
            for &seed in &cfg.seeds {
                let start = Instant::now();
                let inc = sample_increments(sampler, d, cfg.n_steps, m, seed)?;
                let paths: Vec<PiecewiseLinearPath> = inc
                    .par_chunks(d * cfg.n_steps)
                    .map(|row| PiecewiseLinearPath::from_increments(d, row).map(|p| p.rescaled(cfg.horizon)))
                    .collect::<Result<_>>()?;
                let weights = vec![1.0 / m as f64; m];
                let value = error_of(cfg, &reference, &paths, &weights)?;
                let ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                out.push(report(sampler.label().to_string(), m, seed, value, ms, cfg.n_steps));
            }
        }
    }
    for (label, c) in &cfg.cubatures {
        if c.dim != d {
            return Err(Error::InvalidArgument(format!(
                "cubature '{label}' has {} channels, model {} needs {d}",
                c.dim,
                cfg.model.name()
            )));
        }
        let start = Instant::now();
        let paths: Vec<PiecewiseLinearPath> = c.paths.iter().map(|p| p.rescaled(cfg.horizon)).collect();
        let value = error_of(cfg, &reference, &paths, &c.weights)?;
        let ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let n_steps = c.paths.first().map_or(0, |p| p.num_segments());
        out.push(report(label.clone(), c.len(), c.seed, value, ms, n_steps));
    }
    Ok(out)
}

pub fn write_reports(reports: &[ErrorReport], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in reports {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_reports(r: impl Read) -> Result<Vec<ErrorReport>> {
    let mut csv = csv::Reader::from_reader(r);
    csv.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Seed-aggregated error at one path count, one line of a log-log error plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub figure: String,
    pub model: String,
    pub metric: Metric,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub method: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub runs: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups reports by figure (model, metric, horizon), method and `M`.
pub fn plot_data(reports: &[ErrorReport]) -> Vec<PlotRow> {
    let mut groups: BTreeMap<(String, String, String, u64, usize), (ErrorReport, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        let key = (
            r.model.clone(),
            r.metric.to_string(),
            r.method.clone(),
            r.horizon.to_bits(),
            r.m,
        );
        groups.entry(key).or_insert_with(|| (r.clone(), Vec::new())).1.push(r.value);
    }
    groups
        .into_values()
        .map(|(r, mut v)| {
            v.sort_by(f64::total_cmp);
            PlotRow {
                figure: format!("{}-{}-T{}", r.model, r.metric, r.horizon),
                model: r.model,
                metric: r.metric,
                horizon: r.horizon,
                method: r.method,
                m: r.m,
                median: quantile(&v, 0.5),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
                runs: v.len(),
            }
        })
        .collect()
}

pub fn write_plot_data(rows: &[PlotRow], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::make_model;

    fn ou() -> SdeModel {
        make_model("ou", &BTreeMap::new()).unwrap()
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let mut cfg = BenchConfig::new(ou(), Metric::Mve);
        cfg.samplers = vec![Sampler::Mc, Sampler::Sobol { shift: false }, Sampler::Lhs, Sampler::Halton];
        cfg.m_grid = vec![50];
        cfg.seeds = vec![1, 2];
        cfg.n_steps = 8;
        let a = bench(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        let mut buf = Vec::new();
        write_reports(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,model,metric,M,T,seed,value,runtime_ms,n_steps\n"));
        assert_eq!(read_reports(&buf[..]).unwrap(), a);
        let mut again = Vec::new();
        write_reports(&bench(&cfg).unwrap(), &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn unsupported_metric() {
        let cfg = BenchConfig::new(make_model("igbm", &BTreeMap::new()).unwrap(), Metric::Bond);
        assert!(matches!(bench(&cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn plot_rows_aggregate_seeds() {
        let mk = |seed, value| ErrorReport {
            method: "mc".into(),
            model: "ou".into(),
            metric: Metric::Mve,
            m: 10,
            horizon: 1.0,
            seed,
            value,
            runtime_ms: 0.0,
            n_steps: 64,
        };
        let rows = plot_data(&[mk(0, 3.0), mk(1, 1.0), mk(2, 2.0)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].median, 2.0);
        assert_eq!(rows[0].q25, 1.5);
        assert_eq!(rows[0].runs, 3);
        assert_eq!(rows[0].figure, "ou-mve-T1");
    }
}
