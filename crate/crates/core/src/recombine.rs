//! Carathéodory recombination: shrink a weighted point cloud in `R^m` to at
//! most `m + 1` of its points without changing the weighted mean.
//!
//! Large inputs are reduced through group barycenters: the active points are
//! split into `2(m+1)` contiguous groups, the barycenters are recombined, and
//! only members of surviving groups stay active, rescaled by their group's new
//! mass. Each pass at least halves the active set. Small sets are finished
//! point by point from one kernel basis.

use crate::error::{Error, Result};
use crate::linalg::{kernel_basis, Matrix};

/// Pivot tolerance for kernel computations, relative to the row-scaled matrix.
const KERNEL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPointSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    /// Points are row-major, `dim` coordinates each.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates for {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight {w} is not a finite nonnegative number")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite point coordinate".into()));
        }
        Ok(Self { dim, points, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        weighted_mean(self.dim, &self.points, &self.weights, None)
    }

    pub fn subset(&self, r: &Recombination) -> Self {
        let mut points = Vec::with_capacity(r.indices.len() * self.dim);
        for &i in &r.indices {
            points.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            points,
            weights: r.weights.clone(),
        }
    }
}

fn weighted_mean(dim: usize, points: &[f64], weights: &[f64], subset: Option<&[usize]>) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    let mut add = |i: usize, w: f64| {
        for (m, x) in mean.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
            *m += w * x;
        }
    };
    match subset {
        Some(s) => s.iter().zip(weights).for_each(|(&i, &w)| add(i, w)),
        None => weights.iter().enumerate().for_each(|(i, &w)| add(i, w)),
    }
    mean
}

/// Indices into the input and their new weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Recombination {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct RecombineOptions {
    /// Stop once the support is this small.
    pub target: Option<usize>,
    /// Also preserve total mass (append a constant coordinate). Turn off only
    /// when a constant is already a linear combination of the coordinates.
    pub preserve_mass: bool,
}

impl Default for RecombineOptions {
    fn default() -> Self {
        Self {
            target: None,
            preserve_mass: true,
        }
    }
}

/// View of the rows to recombine, with the optional constant coordinate.
struct Points<'a> {
    dim: usize,
    data: &'a [f64],
    mass: bool,
}

impl Points<'_> {
    fn rank_dim(&self) -> usize {
        self.dim + self.mass as usize
    }

    /// Matrix with one column per point.
    fn matrix(&self, columns: impl ExactSizeIterator<Item = Vec<f64>>) -> Matrix {
        let n = self.rank_dim();
        let k = columns.len();
        let mut m = Matrix::zeros(n, k);
        for (j, col) in columns.enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                *m.at_mut(r, j) = v;
            }
        }
        m
    }

    fn column(&self, i: usize) -> Vec<f64> {
        let mut c = self.data[i * self.dim..(i + 1) * self.dim].to_vec();
        if self.mass {
            c.push(1.0);
        }
        c
    }
}

/// Eliminates kernel directions from `w` until at most `stop_at` points are
/// alive or the kernel is exhausted. Dead points end with weight zero.
///
/// A point dies only as the pivot of an elimination, which also removes its
/// coordinate from the remaining kernel vectors. Weights that round to zero
/// without pivoting stay alive at zero, so the kernel stays exact; the next
/// direction that touches them removes them at no cost.
fn eliminate(a: &Matrix, w: &mut [f64], stop_at: usize) -> Result<()> {
    let mut kernel = kernel_basis(a, KERNEL_TOL);
    let mut alive: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    let mut count = alive.iter().filter(|&&a| a).count();
    for (wi, &al) in w.iter_mut().zip(&alive) {
        if !al {
            *wi = 0.0;
        }
    }
    let mut next = 0;
    while count > stop_at && next < kernel.len() {
        let (head, tail) = kernel.split_at_mut(next + 1);
        let c = &mut head[next];
        next += 1;
        for (ci, &al) in c.iter_mut().zip(&alive) {
            if !al {
                *ci = 0.0;
            }
        }
        let norm = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            continue;
        }
        if !c.iter().any(|&v| v > 1e-14 * norm) {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, &ci) in c.iter().enumerate() {
            if alive[i] && ci > 1e-14 * norm {
                let ratio = w[i] / ci;
                if ratio < best.0 {
                    best = (ratio, i);
                }
            }
        }
        let (t, pivot) = best;
        if pivot == usize::MAX {
            continue;
        }
        for ((wi, &ci), &al) in w.iter_mut().zip(c.iter()).zip(&alive) {
            if al {
                *wi = (*wi - t * ci).max(0.0);
            }
        }
        w[pivot] = 0.0;
        alive[pivot] = false;
        count -= 1;
        let cp = c[pivot];
        for v in tail.iter_mut() {
            let f = v[pivot] / cp;
            if f != 0.0 {
                for (vi, &ci) in v.iter_mut().zip(c.iter()) {
                    *vi -= f * ci;
                }
            }
            v[pivot] = 0.0;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite weight during elimination".into()));
    }
    Ok(())
}

/// One basic step: move along a kernel direction of `[points; 1]` until a
/// weight hits zero, and drop the zeroed points.
pub fn caratheodory_eliminate(ps: &WeightedPointSet) -> Result<WeightedPointSet> {
    let n = ps.dim + 1;
    if ps.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "elimination needs at least {} points, got {}",
            n + 1,
            ps.len()
        )));
    }
    let view = Points {
        dim: ps.dim,
        data: &ps.points,
        mass: true,
    };
    let a = view.matrix((0..ps.len()).map(|i| view.column(i)));
    let mut w = ps.weights.clone();
    let before = w.iter().filter(|&&x| x > 0.0).count();
    eliminate(&a, &mut w, before.saturating_sub(1))?;
    let keep: Vec<usize> = (0..ps.len()).filter(|&i| w[i] > 0.0).collect();
    let r = Recombination {
        weights: keep.iter().map(|&i| w[i]).collect(),
        indices: keep,
    };
    Ok(ps.subset(&r))
}

/// Recombines `ps`, preserving its mass and weighted mean.
pub fn recombine(ps: &WeightedPointSet, target: Option<usize>) -> Result<Recombination> {
    recombine_with(
        ps.dim,
        &ps.points,
        &ps.weights,
        RecombineOptions {
            target,
            preserve_mass: true,
        },
    )
}

/// Recombination on raw row-major points.
pub fn recombine_with(dim: usize, points: &[f64], weights: &[f64], opts: RecombineOptions) -> Result<Recombination> {
    if points.len() != dim * weights.len() {
        return Err(Error::InvalidArgument("points and weights disagree in length".into()));
    }
    let view = Points {
        dim,
        data: points,
        mass: opts.preserve_mass,
    };
    let n = view.rank_dim();
    let target = opts.target.unwrap_or(n).max(1);
    let mut w = weights.to_vec();
    let mut active: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();

    let switch = (4 * n).max(2 * target);
    let groups = 2 * n;
    while active.len() > switch {
        let len = active.len();
        let bounds: Vec<usize> = (0..=groups).map(|g| g * len / groups).collect();
        let mut masses = vec![0.0; groups];
        let mut bary = Vec::with_capacity(groups);
        for g in 0..groups {
            let members = &active[bounds[g]..bounds[g + 1]];
            let m: f64 = members.iter().map(|&i| w[i]).sum();
            let mut c = vec![0.0; n];
            for &i in members {
                let wi = w[i];
                for (cj, xj) in c.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                    *cj += wi * xj;
                }
            }
            c.iter_mut().for_each(|v| *v /= m);
            if view.mass {
                c[dim] = 1.0;
            }
            masses[g] = m;
            bary.push(c);
        }
        let a = view.matrix(bary.into_iter());
        let mut reduced = masses.clone();
        eliminate(&a, &mut reduced, 0)?;
        let mut next = Vec::with_capacity(len / 2 + n);
        for g in 0..groups {
            if reduced[g] > 0.0 {
                let f = reduced[g] / masses[g];
                for &i in &active[bounds[g]..bounds[g + 1]] {
                    w[i] *= f;
                    next.push(i);
                }
            } else {
                for &i in &active[bounds[g]..bounds[g + 1]] {
                    w[i] = 0.0;
                }
            }
        }
        if next.len() >= len {
            return Err(Error::Numerical(format!(
                "group reduction made no progress with {len} active points"
            )));
        }
        active = next;
    }

    if active.len() > target {
        let a = view.matrix(active.iter().map(|&i| view.column(i)));
        let mut local: Vec<f64> = active.iter().map(|&i| w[i]).collect();
        eliminate(&a, &mut local, target)?;
        for (&i, &v) in active.iter().zip(&local) {
            w[i] = v;
        }
        active.retain(|&i| w[i] > 0.0);
    }

    Ok(Recombination {
        weights: active.iter().map(|&i| w[i]).collect(),
        indices: active,
    })
}

/// Recombination over a stream of points that is too large to hold at once.
///
/// Points accumulate in a buffer; whenever it overflows, the buffer is
/// recombined in place and only the survivors are kept. Identifiers travel
/// with the points so the caller can recover whatever they refer to.
pub struct StreamingRecombiner {
    dim: usize,
    capacity: usize,
    opts: RecombineOptions,
    ids: Vec<u64>,
    points: Vec<f64>,
    weights: Vec<f64>,
    reductions: usize,
}

impl StreamingRecombiner {
    pub fn new(dim: usize, capacity: usize, opts: RecombineOptions) -> Self {
        let n = dim + opts.preserve_mass as usize;
        let capacity = capacity.max(8 * n).max(4 * opts.target.unwrap_or(0));
        Self {
            dim,
            capacity,
            opts,
            ids: Vec::with_capacity(capacity),
            points: Vec::with_capacity(capacity * dim),
            weights: Vec::with_capacity(capacity),
            reductions: 0,
        }
    }

    pub fn push(&mut self, id: u64, point: &[f64], weight: f64) -> Result<()> {
        debug_assert_eq!(point.len(), self.dim);
        if weight <= 0.0 {
            return Ok(());
        }
        self.ids.push(id);
        self.points.extend_from_slice(point);
        self.weights.push(weight);
        if self.ids.len() >= self.capacity {
            self.reduce(RecombineOptions {
                target: None,
                ..self.opts
            })?;
        }
        Ok(())
    }

    fn reduce(&mut self, opts: RecombineOptions) -> Result<()> {
        let r = recombine_with(self.dim, &self.points, &self.weights, opts)?;
        let mut points = Vec::with_capacity(self.capacity * self.dim);
        for &i in &r.indices {
            points.extend_from_slice(&self.points[i * self.dim..(i + 1) * self.dim]);
        }
        self.ids = r.indices.iter().map(|&i| self.ids[i]).collect();
        self.points = points;
        self.weights = r.weights;
        self.ids.reserve(self.capacity);
        self.weights.reserve(self.capacity);
        self.reductions += 1;
        Ok(())
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Final reduction to the configured target; returns `(ids, weights)`.
    pub fn finish(mut self) -> Result<(Vec<u64>, Vec<f64>)> {
        self.reduce(self.opts)?;
        Ok((self.ids, self.weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn max_mean_error(ps: &WeightedPointSet, r: &Recombination) -> f64 {
        let a = ps.mean();
        let b = weighted_mean(ps.dim, &ps.points, &r.weights, Some(&r.indices));
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_set(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> WeightedPointSet {
        let points: Vec<f64> = (0..m * dim).map(|_| StandardNormal.sample(rng)).collect();
        let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        WeightedPointSet::new(dim, points, raw.iter().map(|w| w / total).collect()).unwrap()
    }

    #[test]
    fn collinear_points() {
        let ps = WeightedPointSet::new(1, vec![0.0, 0.5, 1.0], vec![1.0 / 3.0; 3]).unwrap();
        let out = caratheodory_eliminate(&ps).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.mean()[0] - 0.5).abs() < 1e-15);
        assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_points_merge() {
        let ps = WeightedPointSet::new(2, vec![1.0, 2.0, 1.0, 2.0, 0.0, 0.0, 3.0, 1.0], vec![0.25; 4]).unwrap();
        let r = recombine(&ps, None).unwrap();
        assert_eq!(r.indices.len(), 3);
        assert!(max_mean_error(&ps, &r) < 1e-15);
        let dup_weight: f64 = r
            .indices
            .iter()
            .zip(&r.weights)
            .filter(|(&i, _)| i < 2)
            .map(|(_, w)| w)
            .sum();
        assert!((dup_weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_few_points_for_a_step() {
        let ps = WeightedPointSet::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(caratheodory_eliminate(&ps).is_err());
        let r = recombine(&ps, None).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        let one = WeightedPointSet::new(3, vec![1.0, 2.0, 3.0], vec![1.0]).unwrap();
        let r = recombine(&one, None).unwrap();
        assert_eq!((r.indices, r.weights), (vec![0], vec![1.0]));
    }

    #[test]
    fn simplex_corners_are_kept() {
        for d in [1, 3, 10, 50] {
            let mut points = vec![0.0; d * (d + 1)];
            for i in 0..d {
                points[(i + 1) * d + i] = 1.0;
            }
            let ps = WeightedPointSet::new(d, points, vec![1.0 / (d + 1) as f64; d + 1]).unwrap();
            let r = recombine(&ps, None).unwrap();
            assert_eq!(r.indices.len(), d + 1);
        }
    }

    #[test]
    fn gaussian_cloud_in_five_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = random_set(&mut rng, 10_000, 5);
        let r = recombine(&ps, None).unwrap();
        assert!(r.indices.len() <= 6);
        assert!(max_mean_error(&ps, &r) < 1e-10);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn target_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ps = random_set(&mut rng, 2000, 4);
        let r = recombine(&ps, Some(20)).unwrap();
        assert!(r.indices.len() <= 20 && r.indices.len() > 5);
        assert!(max_mean_error(&ps, &r) < 1e-12);
    }

    #[test]
    fn idempotent_on_minimal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = random_set(&mut rng, 500, 7);
        let r = recombine(&ps, None).unwrap();
        let small = ps.subset(&r);
        let again = recombine(&small, None).unwrap();
        assert_eq!(again.indices, (0..small.len()).collect::<Vec<_>>());
        for (a, b) in again.weights.iter().zip(small.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn streaming_matches_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = random_set(&mut rng, 5000, 6);
        let mut s = StreamingRecombiner::new(6, 300, RecombineOptions::default());
        for i in 0..ps.len() {
            s.push(i as u64, ps.point(i), ps.weights()[i]).unwrap();
        }
        assert!(s.reductions() > 10);
        let (ids, weights) = s.finish().unwrap();
        assert!(ids.len() <= 7);
        let r = Recombination {
            indices: ids.iter().map(|&i| i as usize).collect(),
            weights,
        };
        assert!(max_mean_error(&ps, &r) < 1e-12);
    }

    #[test]
    fn homogeneous_mode_without_mass_row() {
        // The coordinates sum to one at every point, so mass follows from the mean.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 400;
        let mut points = Vec::new();
        for _ in 0..m {
            let a: f64 = rng.random();
            let b: f64 = StandardNormal.sample(&mut rng);
            points.extend_from_slice(&[a, b, 1.0 - a]);
        }
        let w = vec![1.0 / m as f64; m];
        let r = recombine_with(3, &points, &w, RecombineOptions { target: None, preserve_mass: false }).unwrap();
        assert!(r.indices.len() <= 3);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(64))]
        #[test]
        fn preserves_mean_and_bounds_size(seed in 0u64..u64::MAX, m in 1usize..3000, dim in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ps = random_set(&mut rng, m, dim);
            let r = recombine(&ps, None).unwrap();
            proptest::prop_assert!(r.indices.len() <= dim + 1);
            let scale = 1.0 + ps.mean().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            proptest::prop_assert!(max_mean_error(&ps, &r) <= 1e-10 * scale);
            proptest::prop_assert!(r.weights.iter().all(|&w| w >= 0.0));
            proptest::prop_assert!(r.indices.windows(2).all(|p| p[0] < p[1]));
        }
    }
}
