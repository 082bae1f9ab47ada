//! Cubature formulae on Wiener space: construction from an orthogonal array,
//! symmetrisation, dyadic refinement and verification.

mod io;
mod sizes;
mod steps;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oa::build_binary_oa;
use crate::path::PiecewiseLinearPath;
use crate::recombine::{recombine_with, RecombineOptions, StreamingRecombiner};
use crate::sharpen::{sharpen, MomentSystem, MIN_ROW_SCALE};
use crate::tensor::{brownian_expected_signature, degree as word_degree, path_signature, WordBasis};

pub use io::{from_json_str, read_json, to_json_string, write_json};
pub use sizes::{count_m, count_m_even, count_words};
pub use steps::{mean_signature, oa_row, path_from_bits, stream_features, StepTable};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Weighted paths on `[0, 1]` whose weighted signatures match the Brownian
/// expected signature up to `degree`, on every dyadic interval of level at
/// most `dyadic_depth`.
#[derive(Clone, Debug)]
pub struct CubatureFormula {
    pub dim: usize,
    pub degree: usize,
    /// Steps per path at depth zero.
    pub steps: usize,
    pub dyadic_depth: usize,
    /// Degree monitored on intervals below the top level, when lower than `degree`.
    pub fine_degree: Option<usize>,
    pub seed: u64,
    /// Paths come in reflection orbits of size `2^dim`, orbit members adjacent.
    pub symmetrised: bool,
    pub paths: Vec<PiecewiseLinearPath>,
    pub weights: Vec<f64>,
    pub verified: bool,
    pub max_residual: f64,
    /// One line per construction stage.
    pub provenance: Vec<String>,
}

impl CubatureFormula {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Degree checked on intervals at `level`.
    pub fn level_degree(&self, level: usize) -> usize {
        level_degree(level, self.degree, self.fine_degree)
    }

    /// Replaces every path by its `2^d` sign reflections, each carrying
    /// `1/2^d` of the weight. Odd moments then cancel exactly.
    pub fn symmetrised(&self) -> Self {
        if self.symmetrised {
            return self.clone();
        }
        let orbit = 1usize << self.dim;
        let share = 1.0 / orbit as f64;
        let mut paths = Vec::with_capacity(self.len() * orbit);
        let mut weights = Vec::with_capacity(self.len() * orbit);
        for (p, &w) in self.paths.iter().zip(&self.weights) {
            for mask in 0..orbit {
                paths.push(p.reflected(mask as u32));
                weights.push(w * share);
            }
        }
        let mut out = Self {
            paths,
            weights,
            symmetrised: true,
            ..self.clone()
        };
        out.provenance
            .push(format!("symmetrised: {} -> {} paths", self.len(), out.len()));
        out
    }

    /// `Σ λ_i sig(ω_i)` restricted to `interval`.
    pub fn expected_signature(&self, degree: usize, interval: (f64, f64)) -> Result<Vec<f64>> {
        let sigs: Vec<Vec<f64>> = self
            .paths
            .par_iter()
            .map(|p| path_signature(p, degree, interval).map(|s| s.into_coeffs()))
            .collect::<Result<_>>()?;
        let mut acc = vec![0.0; WordBasis::get(self.dim, degree).len()];
        for (s, &w) in sigs.iter().zip(&self.weights) {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += w * v;
            }
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub symmetrise: bool,
    /// Seeds the column sign flips of the orthogonal array.
    pub seed: u64,
    /// Streaming recombination stops at this multiple of the feature count,
    /// leaving the linear program some slack.
    pub early_stop_factor: f64,
    pub tol: f64,
    /// Attempts at `N, 2N, 4N, ..` before giving up.
    pub max_attempts: usize,
    pub dyadic_depth: usize,
    pub fine_degree: Option<usize>,
    /// Buffer size of the streaming recombiner.
    pub stream_capacity: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            symmetrise: false,
            seed: 0,
            early_stop_factor: 3.0,
            tol: 1e-12,
            max_attempts: 3,
            dyadic_depth: 0,
            fine_degree: None,
            stream_capacity: 1 << 17,
        }
    }
}

fn level_degree(level: usize, degree: usize, fine: Option<usize>) -> usize {
    match fine {
        Some(f) if level > 0 => f.min(degree),
        _ => degree,
    }
}

/// Every dyadic interval of level at most `depth`, as `(level, start, end)`,
/// level by level from the left.
pub fn dyadic_intervals(depth: usize) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::with_capacity((2 << depth) - 1);
    for level in 0..=depth {
        let n = 1usize << level;
        for k in 0..n {
            out.push((level, k as f64 / n as f64, (k + 1) as f64 / n as f64));
        }
    }
    out
}

/// Signatures of `path` on all intervals of [`dyadic_intervals`]. The finest
/// level is computed directly and coarser ones by Chen's identity.
pub fn interval_signatures(path: &PiecewiseLinearPath, degree: usize, depth: usize) -> Result<Vec<Vec<f64>>> {
    let basis = WordBasis::get(path.dim(), degree);
    let leaves = 1usize << depth;
    let mut out = vec![Vec::new(); 2 * leaves - 1];
    for k in 0..leaves {
        let s = k as f64 / leaves as f64;
        let t = (k + 1) as f64 / leaves as f64;
        out[leaves - 1 + k] = path_signature(path, degree, (s, t))?.into_coeffs();
    }
    for level in (0..depth).rev() {
        let n = 1usize << level;
        for k in 0..n {
            let mut parent = vec![0.0; basis.len()];
            basis.mul_into(&out[2 * n - 1 + 2 * k], &out[2 * n + 2 * k], &mut parent);
            out[n - 1 + k] = parent;
        }
    }
    Ok(out)
}

/// `(interval, word)` pairs with word degree in `lo(deg)..=deg` on each interval.
fn interval_words(
    dim: usize,
    degree: usize,
    depth: usize,
    fine: Option<usize>,
    even_only: bool,
    top_two: bool,
) -> Vec<(usize, usize)> {
    let basis = WordBasis::get(dim, degree);
    let mut out = Vec::new();
    for (i, &(level, _, _)) in dyadic_intervals(depth).iter().enumerate() {
        let deg = level_degree(level, degree, fine);
        let lo = if top_two { deg.saturating_sub(1) } else { 1 };
        out.extend(basis.select(lo, deg, even_only).into_iter().map(|w| (i, w)));
    }
    out
}

/// Targets and natural row sizes for monitored `(interval, word)` pairs.
fn targets(dim: usize, degree: usize, depth: usize, rows: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
    let basis = WordBasis::get(dim, degree);
    let spans = dyadic_intervals(depth);
    let expected: Vec<Vec<f64>> = (0..=depth)
        .map(|level| brownian_expected_signature(dim, 0.5f64.powi(level as i32), degree).into_coeffs())
        .collect();
    rows.iter()
        .map(|&(i, w)| {
            let (level, s, t) = spans[i];
            let natural = (t - s).powf(basis.word_degree(w) as f64 / 2.0);
            (expected[level][w], natural)
        })
        .unzip()
}

fn feature_points(sigs: &[Vec<Vec<f64>>], feats: &[(usize, usize)], keep: &[usize]) -> Vec<f64> {
    let mut points = Vec::with_capacity(keep.len() * feats.len());
    for &j in keep {
        points.extend(feats.iter().map(|&(i, w)| sigs[j][i][w]));
    }
    points
}

fn moment_system(
    sigs: &[Vec<Vec<f64>>],
    rows: &[(usize, usize)],
    b: Vec<f64>,
    natural: Vec<f64>,
    w0: Vec<f64>,
) -> Result<MomentSystem> {
    let cols = sigs.len();
    let mut a = Matrix::zeros(rows.len(), cols);
    for (k, &(i, w)) in rows.iter().enumerate() {
        for (j, s) in sigs.iter().enumerate() {
            *a.at_mut(k, j) = s[i][w];
        }
    }
    MomentSystem::with_scales(a, b, w0, natural)
}

type Attempt = std::result::Result<CubatureFormula, (&'static str, f64)>;

/// Builds a degree-`D` cubature from `N`-step sign paths.
///
/// An even degree is raised to the next odd one (the odd moments of the top
/// degree vanish anyway). When the linear program cannot make the moments
/// exact, the construction is retried with twice as many steps.
pub fn build(dim: usize, degree: usize, steps: usize, opts: &BuildOptions) -> Result<CubatureFormula> {
    if dim == 0 || degree == 0 || steps == 0 {
        return Err(Error::InvalidArgument("d, D and N must all be positive".into()));
    }
    if !(opts.tol > 0.0) || !(opts.early_stop_factor >= 1.0) {
        return Err(Error::InvalidArgument("tol must be positive and early_stop_factor at least 1".into()));
    }
    if opts.symmetrise && dim > 20 {
        return Err(Error::InvalidArgument("symmetrisation supports d <= 20".into()));
    }
    let mut provenance = Vec::new();
    let degree = if degree % 2 == 0 {
        log::warn!("degree {degree} is even; building degree {} instead", degree + 1);
        provenance.push(format!("even degree {degree} raised to {}", degree + 1));
        degree + 1
    } else {
        degree
    };
    let attempts = opts.max_attempts.max(1);
    let mut failure = ("sharpen", f64::INFINITY);
    for attempt in 0..attempts {
        let n = steps << attempt;
        match build_at(dim, degree, n, opts, &mut provenance)? {
            Ok(mut c) => {
                for _ in 0..opts.dyadic_depth {
                    c = dyadic_refine(&c, opts)?;
                }
                return Ok(c);
            }
            Err((stage, residual)) => {
                log::info!("N={n}: {stage} failed with residual {residual:.3e}; retrying");
                provenance.push(format!("N={n}: {stage} failed, residual {residual:.3e}"));
                if residual < failure.1 || failure.1.is_infinite() {
                    failure = (stage, residual);
                }
            }
        }
    }
    Err(Error::StageFailed {
        stage: failure.0,
        residual: failure.1,
        attempts,
    })
}

fn build_at(dim: usize, degree: usize, n: usize, opts: &BuildOptions, provenance: &mut Vec<String>) -> Result<Attempt> {
    let sym = opts.symmetrise;
    let oa = build_binary_oa(n * dim, degree)?.randomize_columns(opts.seed);
    let rows = oa.num_rows();
    provenance.push(format!(
        "N={n}: {} array, {rows} rows x {} columns, strength {}, {:.3} x Rao bound",
        oa.family(),
        oa.num_cols(),
        oa.strength(),
        oa.rao_ratio()
    ));

    let basis = WordBasis::get(dim, degree);
    let feats = basis.select(degree - 1, degree, sym);
    let target = ((opts.early_stop_factor * feats.len() as f64).ceil() as usize).max(feats.len());
    let table = StepTable::new(dim, degree, n);
    let homogeneous = |target| RecombineOptions {
        target,
        preserve_mass: false,
    };
    let mut stream = StreamingRecombiner::new(feats.len(), opts.stream_capacity, homogeneous(Some(target)));
    let w = 1.0 / rows as f64;
    stream_features(&oa, &table, &feats, |id, f| stream.push(id, f, w))?;
    let reductions = stream.reductions();
    let (ids, w_rec) = stream.finish()?;
    provenance.push(format!(
        "recombination: {rows} -> {} paths on {} features ({reductions} buffer reductions)",
        ids.len(),
        feats.len()
    ));

    let mut scratch = table.scratch();
    let rows_bits: Vec<Vec<u64>> = ids.iter().map(|&id| oa_row(&oa, id)).collect();
    let sigs: Vec<Vec<Vec<f64>>> = rows_bits
        .iter()
        .map(|row| {
            let mut s = vec![0.0; basis.len()];
            table.signature(row, &mut scratch, &mut s);
            vec![s]
        })
        .collect();

    let monitored = interval_words(dim, degree, 0, None, sym, false);
    let (b, natural) = targets(dim, degree, 0, &monitored);
    let sys = moment_system(&sigs, &monitored, b, natural, w_rec.clone())?;
    let sh = sharpen(&sys, opts.tol)?;
    provenance.push(format!(
        "sharpening on {} moments: residual {:.3e} -> {:.3e} in {} pivots",
        monitored.len(),
        sys.residual(&w_rec),
        sh.residual,
        sh.pivots
    ));
    if !sh.exact {
        return Ok(Err(("sharpen", sh.residual)));
    }

    let keep: Vec<usize> = (0..ids.len()).filter(|&j| sh.weights[j] > 0.0).collect();
    let top: Vec<(usize, usize)> = feats.iter().map(|&w| (0, w)).collect();
    let points = feature_points(&sigs, &top, &keep);
    let wk: Vec<f64> = keep.iter().map(|&j| sh.weights[j]).collect();
    let r = recombine_with(top.len(), &points, &wk, homogeneous(None))?;
    provenance.push(format!("final recombination: {} -> {} paths", keep.len(), r.indices.len()));

    let mut c = CubatureFormula {
        dim,
        degree,
        steps: n,
        dyadic_depth: 0,
        fine_degree: opts.fine_degree,
        seed: opts.seed,
        symmetrised: false,
        paths: r
            .indices
            .iter()
            .map(|&i| path_from_bits(&rows_bits[keep[i]], n, dim))
            .collect(),
        weights: r.weights,
        verified: false,
        max_residual: f64::INFINITY,
        provenance: std::mem::take(provenance),
    };
    if sym {
        c = c.symmetrised();
    }
    let report = verify(&c, degree, 0)?;
    c.max_residual = report.max_residual;
    c.verified = report.passes(opts.tol);
    if !c.verified {
        *provenance = std::mem::take(&mut c.provenance);
        return Ok(Err(("verify", report.max_scaled)));
    }
    Ok(Ok(c))
}

/// Cubature on `[0, 1]` made of every pair `(ω_i, ω_j)` of paths squeezed
/// onto the two halves, with product weights. Matches Brownian motion on every
/// dyadic interval one level deeper than its factors.
///
/// For a symmetrised input only orbit representatives are used on the left;
/// the global reflection restores the rest.
pub fn product_cubature(c: &CubatureFormula) -> (Vec<PiecewiseLinearPath>, Vec<f64>) {
    let orbit = if c.symmetrised { 1usize << c.dim } else { 1 };
    let mut paths = Vec::with_capacity(c.len() / orbit * c.len());
    let mut weights = Vec::with_capacity(paths.capacity());
    for i in (0..c.len()).step_by(orbit) {
        let wl = c.weights[i] * orbit as f64;
        for j in 0..c.len() {
            paths.push(c.paths[i].concat_halves(&c.paths[j]));
            weights.push(wl * c.weights[j]);
        }
    }
    (paths, weights)
}

/// One level of dyadic refinement: product cubature, recombination against
/// the top-degree words on every dyadic interval, and a second sharpening
/// pass if the recombined moments drift past `opts.tol`.
pub fn dyadic_refine(c: &CubatureFormula, opts: &BuildOptions) -> Result<CubatureFormula> {
    let (dim, degree) = (c.dim, c.degree);
    let depth = c.dyadic_depth + 1;
    let sym = c.symmetrised;
    let fine = c.fine_degree;
    let (paths, weights) = product_cubature(c);
    let sigs: Vec<Vec<Vec<f64>>> = paths
        .par_iter()
        .map(|p| interval_signatures(p, degree, depth))
        .collect::<Result<_>>()?;
    let feats = interval_words(dim, degree, depth, fine, sym, true);
    let homogeneous = RecombineOptions {
        target: None,
        preserve_mass: false,
    };
    let mut provenance = c.provenance.clone();

    let assemble = |idx: &[usize], w: Vec<f64>, provenance: Vec<String>| {
        let mut out = CubatureFormula {
            dyadic_depth: depth,
            symmetrised: false,
            paths: idx.iter().map(|&i| paths[i].clone()).collect(),
            weights: w,
            verified: false,
            max_residual: f64::INFINITY,
            provenance,
            ..c.clone()
        };
        if sym {
            out = out.symmetrised();
        }
        out
    };

    let all: Vec<usize> = (0..paths.len()).collect();
    let r = recombine_with(feats.len(), &feature_points(&sigs, &feats, &all), &weights, homogeneous)?;
    provenance.push(format!(
        "depth {depth}: product of {} paths, recombined to {} on {} features",
        paths.len(),
        r.indices.len(),
        feats.len()
    ));
    let mut out = assemble(&r.indices, r.weights, provenance.clone());
    let mut report = verify(&out, degree, depth)?;

    if !report.passes(opts.tol) {
        let monitored = interval_words(dim, degree, depth, fine, sym, false);
        let (b, natural) = targets(dim, degree, depth, &monitored);
        let sys = moment_system(&sigs, &monitored, b, natural, weights.clone())?;
        let sh = sharpen(&sys, opts.tol)?;
        provenance.push(format!(
            "depth {depth}: re-sharpened, residual {:.3e} -> {:.3e}",
            report.max_scaled, sh.residual
        ));
        if !sh.exact {
            return Err(Error::StageFailed {
                stage: "dyadic sharpen",
                residual: sh.residual,
                attempts: 1,
            });
        }
        let keep: Vec<usize> = all.iter().copied().filter(|&j| sh.weights[j] > 0.0).collect();
        let wk: Vec<f64> = keep.iter().map(|&j| sh.weights[j]).collect();
        let r = recombine_with(feats.len(), &feature_points(&sigs, &feats, &keep), &wk, homogeneous)?;
        let idx: Vec<usize> = r.indices.iter().map(|&i| keep[i]).collect();
        out = assemble(&idx, r.weights, provenance);
        report = verify(&out, degree, depth)?;
    }
    out.max_residual = report.max_residual;
    out.verified = report.passes(opts.tol);
    if !out.verified {
        return Err(Error::StageFailed {
            stage: "dyadic verify",
            residual: report.max_scaled,
            attempts: 1,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct IntervalResidual {
    pub level: usize,
    pub start: f64,
    pub end: f64,
    pub degree: usize,
    pub max_abs: f64,
    /// Residual divided by `max(|target|, h^{deg/2}, MIN_ROW_SCALE)`.
    pub max_scaled: f64,
    pub worst_word: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub intervals: Vec<IntervalResidual>,
    /// Largest absolute residual among words of each degree, over all intervals.
    pub per_degree: Vec<f64>,
    pub mass_error: f64,
    /// Largest absolute residual, including the mass.
    pub max_residual: f64,
    pub max_scaled: f64,
}

impl VerifyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_scaled <= tol && self.mass_error <= tol
    }
}

/// Compares `Σ λ_i sig(ω_i)` with the Brownian expected signature on every
/// dyadic interval of level at most `depth`, over all words of degree at most
/// `degree` (or the formula's fine degree below the top level).
pub fn verify(c: &CubatureFormula, degree: usize, depth: usize) -> Result<VerifyReport> {
    if c.paths.len() != c.weights.len() {
        return Err(Error::InvalidArgument("paths and weights differ in length".into()));
    }
    let basis = WordBasis::get(c.dim, degree);
    let sigs: Vec<Vec<Vec<f64>>> = c
        .paths
        .par_iter()
        .map(|p| interval_signatures(p, degree, depth))
        .collect::<Result<_>>()?;
    let spans = dyadic_intervals(depth);
    let mut intervals = Vec::with_capacity(spans.len());
    let mut per_degree = vec![0.0f64; degree + 1];
    let mass: f64 = c.weights.iter().sum();
    let mass_error = (mass - 1.0).abs();
    per_degree[0] = mass_error;
    for (i, &(level, s, t)) in spans.iter().enumerate() {
        let deg = level_degree(level, degree, c.fine_degree);
        let expected = brownian_expected_signature(c.dim, t - s, degree);
        let mut acc = vec![0.0; basis.len()];
        for (sig, &w) in sigs.iter().zip(&c.weights) {
            for (a, v) in acc.iter_mut().zip(&sig[i]) {
                *a += w * v;
            }
        }
        let mut res = IntervalResidual {
            level,
            start: s,
            end: t,
            degree: deg,
            max_abs: 0.0,
            max_scaled: 0.0,
            worst_word: Vec::new(),
        };
        for w in basis.select(1, deg, false) {
            let target = expected.coeffs()[w];
            let err = (acc[w] - target).abs();
            let k = basis.word_degree(w);
            let scale = target.abs().max((t - s).powf(k as f64 / 2.0)).max(MIN_ROW_SCALE);
            per_degree[k] = per_degree[k].max(err);
            if err > res.max_abs {
                res.max_abs = err;
                res.worst_word = basis.word(w).to_vec();
            }
            res.max_scaled = res.max_scaled.max(err / scale);
        }
        debug_assert!(res.worst_word.is_empty() || word_degree(&res.worst_word) <= deg);
        intervals.push(res);
    }
    let max_residual = intervals.iter().map(|r| r.max_abs).fold(mass_error, f64::max);
    let max_scaled = intervals.iter().map(|r| r.max_scaled).fold(0.0, f64::max);
    Ok(VerifyReport {
        intervals,
        per_degree,
        mass_error,
        max_residual,
        max_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_interval_layout() {
        let v = dyadic_intervals(2);
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], (0, 0.0, 1.0));
        assert_eq!(v[2], (1, 0.5, 1.0));
        assert_eq!(v[6], (2, 0.75, 1.0));
    }

    #[test]
    fn interval_signatures_agree_with_direct() {
        let incs: Vec<f64> = (0..8).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let p = PiecewiseLinearPath::from_increments(1, &incs).unwrap();
        let sigs = interval_signatures(&p, 5, 2).unwrap();
        for (i, &(_, s, t)) in dyadic_intervals(2).iter().enumerate() {
            let direct = path_signature(&p, 5, (s, t)).unwrap();
            for (a, b) in sigs[i].iter().zip(direct.coeffs()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_point_formula_residuals() {
        let up = PiecewiseLinearPath::from_increments(1, &[1.0]).unwrap();
        let c = CubatureFormula {
            dim: 1,
            degree: 5,
            steps: 1,
            dyadic_depth: 0,
            fine_degree: None,
            seed: 0,
            symmetrised: false,
            paths: vec![up.clone(), up.reflected(1)],
            weights: vec![0.5, 0.5],
            verified: false,
            max_residual: 0.0,
            provenance: vec![],
        };
        let r = verify(&c, 3, 0).unwrap();
        assert!(r.max_residual < 1e-15);
        let r = verify(&c, 5, 0).unwrap();
        // Largest gap is at (1,0,1): 1/6 against 0.
        assert!((r.max_residual - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.intervals[0].worst_word, vec![1, 0, 1]);
        assert!((r.per_degree[4] - 1.0 / 6.0).abs() < 1e-15);
        assert!(r.per_degree[5] < 1e-15);
        let e = c.expected_signature(5, (0.0, 1.0)).unwrap();
        let i = WordBasis::get(1, 5).index_of(&[1, 1, 1, 1]).unwrap();
        assert!((0.125 - e[i] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn small_build_is_exact() {
        let c = build(1, 3, 4, &BuildOptions::default()).unwrap();
        assert!(c.verified);
        assert!(c.len() as u128 <= count_m(1, 3));
        let s = build(1, 3, 4, &BuildOptions { symmetrise: true, ..Default::default() }).unwrap();
        assert!(s.verified);
        assert!(s.len() as u128 <= 2 * count_m_even(1, 3));
    }
}
