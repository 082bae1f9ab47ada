//! Brownian increments from Monte Carlo and quasi-Monte Carlo generators.
//!
//! QMC coordinate `j` of a point drives step `j / d`, channel `j % d`.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::distribution::{ContinuousCDF, Normal};

use super::bench::Sampler;
use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;

pub const HALTON_MAX_DIM: usize = 1111;
pub const SOBOL_MAX_DIM: usize = 21201;

fn primes(n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Uniforms in `(0, 1)`, `m` points of dimension `dim`, point-major.
fn uniforms(sampler: Sampler, dim: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    match sampler {
        Sampler::Sobol { shift } => {
            if dim > SOBOL_MAX_DIM {
                return Err(Error::DimensionBudget {
                    generator: "sobol",
                    max: SOBOL_MAX_DIM,
                    requested: dim,
                });
            }
            let params = if dim <= 1000 {
                JoeKuoD6::standard()
            } else {
                JoeKuoD6::extended()
            };
            let xor: Vec<u64> = if shift {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..dim).map(|_| rng.random::<u64>() >> 11).collect()
            } else {
                vec![0; dim]
            };
            let scale = (1u64 << 53) as f64;
            let mut out = Vec::with_capacity(m * dim);
            for p in Sobol::<f64>::new(dim, &params).skip(1).take(m) {
                for (u, x) in p.iter().zip(&xor) {
                    let bits = (u * scale) as u64 ^ x;
                    out.push(bits as f64 / scale);
                }
            }
            if out.len() < m * dim {
                return Err(Error::InvalidArgument(format!("sobol sequence exhausted before {m} points")));
            }
            Ok(out)
        }
        Sampler::Halton => {
            if dim > HALTON_MAX_DIM {
                return Err(Error::DimensionBudget {
                    generator: "halton",
                    max: HALTON_MAX_DIM,
                    requested: dim,
                });
            }
            let bases = primes(dim);
            let mut out = Vec::with_capacity(m * dim);
            for i in 1..=m as u64 {
                out.extend(bases.iter().map(|&b| radical_inverse(i, b)));
            }
            Ok(out)
        }
        Sampler::Lhs => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = vec![0.0; m * dim];
            let mut perm: Vec<usize> = (0..m).collect();
            for j in 0..dim {
                perm.shuffle(&mut rng);
                for (i, &p) in perm.iter().enumerate() {
                    let u: f64 = rng.random();
                    out[i * dim + j] = (p as f64 + u) / m as f64;
                }
            }
            Ok(out)
        }
        Sampler::Mc => unreachable!("Monte Carlo draws normals directly"),
    }
}

/// `m × steps × dim` increments of Brownian motion on `[0, 1]`.
pub fn sample_increments(sampler: Sampler, dim: usize, steps: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 || steps == 0 || m == 0 {
        return Err(Error::InvalidArgument("need d, N_steps and M to be positive".into()));
    }
    let width = dim * steps;
    let sd = (1.0 / steps as f64).sqrt();
    if let Sampler::Mc = sampler {
        let mut out = vec![0.0; m * width];
        out.par_chunks_mut(width).enumerate().for_each(|(i, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for x in row {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = sd * z;
            }
        });
        return Ok(out);
    }
    let n = Normal::standard();
    let tiny = f64::EPSILON;
    let mut u = uniforms(sampler, width, m, seed)?;
    u.par_iter_mut().for_each(|x| *x = sd * n.inverse_cdf(x.clamp(tiny, 1.0 - tiny)));
    Ok(u)
}

/// `m` piecewise-linear Brownian walks on `[0, 1]` with `steps` uniform steps.
pub fn sample_brownian_paths(
    sampler: Sampler,
    dim: usize,
    steps: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<PiecewiseLinearPath>> {
    let inc = sample_increments(sampler, dim, steps, m, seed)?;
    inc.chunks(dim * steps)
        .map(|row| PiecewiseLinearPath::from_increments(dim, row))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_is_reproducible() {
        let a = sample_increments(Sampler::Mc, 2, 8, 50, 3).unwrap();
        let b = sample_increments(Sampler::Mc, 2, 8, 50, 3).unwrap();
        let c = sample_increments(Sampler::Mc, 2, 8, 50, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // Path i does not depend on how many paths are drawn.
        let short = sample_increments(Sampler::Mc, 2, 8, 10, 3).unwrap();
        assert_eq!(&a[..short.len()], &short[..]);
    }

    #[test]
    fn sobol_increments_are_balanced() {
        let steps = 16;
        let inc = sample_increments(Sampler::Sobol { shift: false }, 1, steps, 1024, 0).unwrap();
        let sd = (1.0 / steps as f64).sqrt();
        for j in 0..steps {
            let mean: f64 = inc.iter().skip(j).step_by(steps).sum::<f64>() / 1024.0;
            assert!(mean.abs() <= 1e-2 * sd, "dimension {j}: {mean}");
        }
    }

    #[test]
    fn lhs_strata_are_distinct() {
        let m = 37;
        let u = uniforms(Sampler::Lhs, 5, m, 9).unwrap();
        for j in 0..5 {
            let mut bins: Vec<usize> = (0..m).map(|i| (u[i * 5 + j] * m as f64) as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..m).collect::<Vec<_>>());
        }
    }

    #[test]
    fn halton_first_points() {
        let u = uniforms(Sampler::Halton, 3, 3, 0).unwrap();
        let expected = [0.5, 1.0 / 3.0, 0.2, 0.25, 2.0 / 3.0, 0.4, 0.75, 1.0 / 9.0, 0.6];
        for (a, b) in u.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(primes(1111).last(), Some(&8933));
    }

    #[test]
    fn dimension_budgets() {
        assert!(matches!(
            sample_increments(Sampler::Halton, 2, 600, 4, 0),
            Err(Error::DimensionBudget { .. })
        ));
        assert!(sample_increments(Sampler::Sobol { shift: false }, 1, SOBOL_MAX_DIM + 1, 4, 0).is_err());
    }

    #[test]
    fn shifted_sobol_depends_on_seed() {
        let s = Sampler::Sobol { shift: true };
        let a = sample_increments(s, 1, 4, 8, 1).unwrap();
        assert_eq!(a, sample_increments(s, 1, 4, 8, 1).unwrap());
        assert_ne!(a, sample_increments(s, 1, 4, 8, 2).unwrap());
    }
}
