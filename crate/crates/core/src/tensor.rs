//! Truncated tensor algebra over `R^{d+1}` graded by word degree, where the
//! time letter `0` counts twice.
//!
//! Coefficients are stored densely against a [`WordBasis`]: every word of
//! degree at most `D`, ordered by degree, then length, then lexicographically.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;

/// Degree of a word: its length plus the number of time letters.
pub fn degree(word: &[u8]) -> usize {
    word.len() + word.iter().filter(|&&a| a == 0).count()
}

/// A word is odd when some space letter occurs an odd number of times.
pub fn is_odd_word(word: &[u8]) -> bool {
    let mut parity = 0u64;
    for &a in word {
        if a != 0 {
            parity ^= 1 << (a - 1);
        }
    }
    parity != 0
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn new(letters: impl Into<Vec<u8>>) -> Self {
        Self(letters.into())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> usize {
        degree(&self.0)
    }

    pub fn is_odd(&self) -> bool {
        is_odd_word(&self.0)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<&[u8]> for Word {
    fn from(w: &[u8]) -> Self {
        Self(w.to_vec())
    }
}

/// Enumeration of all words over `{0..=d}` with degree at most `D`, plus the
/// index tables the dense kernels need.
pub struct WordBasis {
    dim: usize,
    max_degree: usize,
    letters: Vec<u8>,
    offsets: Vec<usize>,
    degrees: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// `degree_start[k]` is the first index of degree `k`; length `D + 2`.
    degree_start: Vec<usize>,
    /// For word `i`, pairs `(index(w[..j]), index(w[j..]))` for `j = 0..=len`.
    split_offsets: Vec<usize>,
    splits: Vec<(u32, u32)>,
    horner: HornerProgram,
}

/// In-place right multiplication by a segment exponential, compiled into a
/// flat list of multiply-adds.
///
/// For every word `w` of length `L` (longest first):
/// `acc = S[∅]; for j in 1..=L { acc = acc * x[w_j] / (L - j + 1) + S[w[..j]] }`.
struct HornerProgram {
    targets: Vec<u32>,
    starts: Vec<u32>,
    factors: Vec<u16>,
    sources: Vec<u32>,
}

static BASES: OnceLock<Mutex<HashMap<(usize, usize), Arc<WordBasis>>>> = OnceLock::new();

impl WordBasis {
    /// Shared basis for `(d, D)`; built once per process.
    pub fn get(dim: usize, max_degree: usize) -> Arc<WordBasis> {
        let cache = BASES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry((dim, max_degree))
            .or_insert_with(|| Arc::new(WordBasis::build(dim, max_degree)))
            .clone()
    }

    fn build(dim: usize, max_degree: usize) -> Self {
        assert!(dim >= 1 && dim < 64, "alphabet dimension out of range");
        let mut words: Vec<Vec<u8>> = Vec::new();
        let mut stack = vec![Vec::<u8>::new()];
        while let Some(w) = stack.pop() {
            let deg = degree(&w);
            for a in 0..=dim as u8 {
                let step = if a == 0 { 2 } else { 1 };
                if deg + step <= max_degree {
                    let mut next = w.clone();
                    next.push(a);
                    stack.push(next);
                }
            }
            words.push(w);
        }
        words.sort_by(|u, v| (degree(u), u.len(), u).cmp(&(degree(v), v.len(), v)));

        let mut letters = Vec::new();
        let mut offsets = vec![0];
        let mut degrees = Vec::with_capacity(words.len());
        let mut index = HashMap::with_capacity(words.len());
        let mut degree_start = vec![0; max_degree + 2];
        for (i, w) in words.iter().enumerate() {
            letters.extend_from_slice(w);
            offsets.push(letters.len());
            degrees.push(degree(w));
            index.insert(w.clone(), i);
        }
        for k in 0..=max_degree + 1 {
            degree_start[k] = degrees.partition_point(|&g| g < k);
        }

        let mut split_offsets = vec![0];
        let mut splits = Vec::new();
        for w in &words {
            for j in 0..=w.len() {
                splits.push((index[&w[..j]] as u32, index[&w[j..]] as u32));
            }
            split_offsets.push(splits.len());
        }

        let mut order: Vec<usize> = (1..words.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(words[i].len()));
        let mut horner = HornerProgram {
            targets: Vec::with_capacity(order.len()),
            starts: vec![0],
            factors: Vec::new(),
            sources: Vec::new(),
        };
        for i in order {
            let w = &words[i];
            let len = w.len();
            horner.targets.push(i as u32);
            for j in 1..=len {
                let letter = w[j - 1] as usize;
                horner.factors.push((letter * (max_degree + 1) + (len - j + 1)) as u16);
                horner.sources.push(index[&w[..j]] as u32);
            }
            horner.starts.push(horner.factors.len() as u32);
        }

        Self {
            dim,
            max_degree,
            letters,
            offsets,
            degrees,
            index,
            degree_start,
            split_offsets,
            splits,
            horner,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn word(&self, i: usize) -> &[u8] {
        &self.letters[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn words(&self) -> impl Iterator<Item = &[u8]> + '_ {
        (0..self.len()).map(move |i| self.word(i))
    }

    pub fn word_degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn index_of(&self, word: &[u8]) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index range of the words of exactly degree `k`.
    pub fn degree_range(&self, k: usize) -> std::ops::Range<usize> {
        if k > self.max_degree {
            return self.len()..self.len();
        }
        self.degree_start[k]..self.degree_start[k + 1]
    }

    /// Indices of the words with degree in `lo..=hi`, optionally even words only.
    pub fn select(&self, lo: usize, hi: usize, even_only: bool) -> Vec<usize> {
        let hi = hi.min(self.max_degree);
        if lo > hi {
            return Vec::new();
        }
        (self.degree_start[lo]..self.degree_start[hi + 1])
            .filter(|&i| !even_only || !is_odd_word(self.word(i)))
            .collect()
    }

    fn check_letters(&self, word: &[u8]) -> Result<()> {
        match word.iter().find(|&&a| a as usize > self.dim) {
            Some(&letter) => Err(Error::InvalidLetter {
                letter,
                dim: self.dim,
            }),
            None => Ok(()),
        }
    }

    /// Coefficient table `x[a] / k` consumed by the Horner program.
    fn fill_factors<const L: usize>(&self, increments: &[[f64; L]], table: &mut [[f64; L]]) {
        let stride = self.max_degree + 1;
        for (a, inc) in increments.iter().enumerate() {
            for k in 1..stride {
                let inv = 1.0 / k as f64;
                let row = &mut table[a * stride + k];
                for l in 0..L {
                    row[l] = inc[l] * inv;
                }
            }
        }
    }

    /// `coeffs <- coeffs ⊗ exp(x)` in place, for `L` independent tensors at once.
    fn apply_segment<const L: usize>(&self, coeffs: &mut [[f64; L]], table: &[[f64; L]]) {
        let prog = &self.horner;
        let empty = coeffs[0];
        for (t, &target) in prog.targets.iter().enumerate() {
            let lo = prog.starts[t] as usize;
            let hi = prog.starts[t + 1] as usize;
            let mut acc = empty;
            for op in lo..hi {
                let f = &table[prog.factors[op] as usize];
                let s = &coeffs[prog.sources[op] as usize];
                for l in 0..L {
                    acc[l] = acc[l] * f[l] + s[l];
                }
            }
            coeffs[target as usize] = acc;
        }
    }

    /// Coefficient `i` of the truncated product of two dense coefficient vectors.
    #[inline]
    pub fn mul_entry(&self, a: &[f64], b: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        for &(u, v) in &self.splits[self.split_offsets[i]..self.split_offsets[i + 1]] {
            acc += a[u as usize] * b[v as usize];
        }
        acc
    }

    /// Coefficient `i` of `L` independent products at once.
    #[inline]
    pub fn mul_entry_lanes<const L: usize>(&self, a: &[[f64; L]], b: &[[f64; L]], i: usize) -> [f64; L] {
        let mut acc = [0.0; L];
        for &(u, v) in &self.splits[self.split_offsets[i]..self.split_offsets[i + 1]] {
            let (x, y) = (&a[u as usize], &b[v as usize]);
            for l in 0..L {
                acc[l] += x[l] * y[l];
            }
        }
        acc
    }

    /// `out <- a ⊗ b` lane by lane.
    pub fn mul_into_lanes<const L: usize>(&self, a: &[[f64; L]], b: &[[f64; L]], out: &mut [[f64; L]]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.mul_entry_lanes(a, b, i);
        }
    }

    /// `out <- a ⊗ b` on raw coefficient vectors.
    pub fn mul_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.mul_entry(a, b, i);
        }
    }
}

impl fmt::Debug for WordBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WordBasis")
            .field("dim", &self.dim)
            .field("max_degree", &self.max_degree)
            .field("len", &self.len())
            .finish()
    }
}

/// Truncated tensor with dense coefficients over a shared [`WordBasis`].
#[derive(Clone)]
pub struct GradedTensor {
    basis: Arc<WordBasis>,
    coeffs: Vec<f64>,
}

impl GradedTensor {
    pub fn zero(dim: usize, max_degree: usize) -> Self {
        let basis = WordBasis::get(dim, max_degree);
        let coeffs = vec![0.0; basis.len()];
        Self { basis, coeffs }
    }

    pub fn unit(dim: usize, max_degree: usize) -> Self {
        let mut t = Self::zero(dim, max_degree);
        t.coeffs[0] = 1.0;
        t
    }

    pub fn from_coeffs(basis: Arc<WordBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of {} words",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// Level-one element `Σ_a x[a] e_a`, with `x[0]` the time component.
    pub fn from_increment(increment: &[f64], max_degree: usize) -> Result<Self> {
        if increment.len() < 2 {
            return Err(Error::InvalidArgument("increment needs a time and a space component".into()));
        }
        let mut t = Self::zero(increment.len() - 1, max_degree);
        for (a, &x) in increment.iter().enumerate() {
            if let Some(i) = t.basis.index_of(&[a as u8]) {
                t.coeffs[i] = x;
            }
        }
        Ok(t)
    }

    pub fn basis(&self) -> &Arc<WordBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn max_degree(&self) -> usize {
        self.basis.max_degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `word`; zero for words above the truncation degree.
    pub fn get(&self, word: &[u8]) -> Result<f64> {
        self.basis.check_letters(word)?;
        Ok(self.basis.index_of(word).map_or(0.0, |i| self.coeffs[i]))
    }

    pub fn set(&mut self, word: &[u8], value: f64) -> Result<()> {
        self.basis.check_letters(word)?;
        match self.basis.index_of(word) {
            Some(i) => {
                self.coeffs[i] = value;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!(
                "word {:?} exceeds degree {}",
                Word::from(word),
                self.max_degree()
            ))),
        }
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.basis, &other.basis) {
            return Ok(());
        }
        Err(Error::ShapeMismatch(
            self.dim(),
            self.max_degree(),
            other.dim(),
            other.max_degree(),
        ))
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let b = &self.basis;
        let mut out = vec![0.0; b.len()];
        b.mul_into(&self.coeffs, &other.coeffs, &mut out);
        Ok(Self {
            basis: b.clone(),
            coeffs: out,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self {
            basis: self.basis.clone(),
            coeffs,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Truncated exponential series; the constant term must vanish.
    pub fn exp(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::NonzeroConstant(self.coeffs[0]));
        }
        let (d, deg) = (self.dim(), self.max_degree());
        let mut sum = Self::unit(d, deg);
        let mut term = Self::unit(d, deg);
        for k in 1..=deg {
            term = term.mul(self)?.scale(1.0 / k as f64);
            if term.coeffs.iter().all(|&c| c == 0.0) {
                break;
            }
            sum = sum.add(&term)?;
        }
        Ok(sum)
    }

    /// `self <- self ⊗ exp(x)` for a level-one increment `x` (time first).
    pub fn mul_segment_in_place(&mut self, increment: &[f64]) -> Result<()> {
        let b = self.basis.clone();
        if increment.len() != b.dim + 1 {
            return Err(Error::InvalidArgument(format!(
                "increment of length {} for dimension {}",
                increment.len(),
                b.dim
            )));
        }
        let lanes: Vec<[f64; 1]> = increment.iter().map(|&x| [x]).collect();
        let mut table = vec![[0.0; 1]; (b.dim + 1) * (b.max_degree + 1)];
        b.fill_factors(&lanes, &mut table);
        // Safe reinterpretation would need bytemuck; copying is cheap at this size.
        let mut coeffs: Vec<[f64; 1]> = self.coeffs.iter().map(|&c| [c]).collect();
        b.apply_segment(&mut coeffs, &table);
        for (c, v) in self.coeffs.iter_mut().zip(coeffs) {
            *c = v[0];
        }
        Ok(())
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.basis.word(i), c))
    }
}

impl fmt::Debug for GradedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (w, c) in self.iter().filter(|(_, c)| *c != 0.0) {
            m.entry(&Word::from(w), &c);
        }
        m.finish()
    }
}

/// Signature `exp(x)` of one linear segment with increment `x = (dt, dx_1, .., dx_d)`.
pub fn segment_signature(increment: &[f64], max_degree: usize) -> Result<GradedTensor> {
    if !(increment.first().copied().unwrap_or(0.0) > 0.0) {
        return Err(Error::NonPositiveTimeStep(increment.first().copied().unwrap_or(0.0)));
    }
    if increment.len() < 2 {
        return Err(Error::InvalidArgument("increment needs a space component".into()));
    }
    let mut t = GradedTensor::unit(increment.len() - 1, max_degree);
    let b = t.basis.clone();
    for i in 1..b.len() {
        let w = b.word(i);
        let prefix = b.index[&w[..w.len() - 1]];
        let last = *w.last().unwrap() as usize;
        t.coeffs[i] = t.coeffs[prefix] * increment[last] / w.len() as f64;
    }
    Ok(t)
}

/// Signature of `path` restricted to `[s, t]`; both ends must be knots.
pub fn path_signature(
    path: &PiecewiseLinearPath,
    max_degree: usize,
    interval: (f64, f64),
) -> Result<GradedTensor> {
    let (s, t) = interval;
    let unaligned = || Error::UnalignedInterval { start: s, end: t };
    let i0 = path.knot_index(s).ok_or_else(unaligned)?;
    let i1 = path.knot_index(t).ok_or_else(unaligned)?;
    if i0 >= i1 {
        return Err(unaligned());
    }
    let mut sig = GradedTensor::unit(path.dim(), max_degree);
    let mut inc = vec![0.0; path.dim() + 1];
    for k in i0..i1 {
        path.increment(k, &mut inc);
        sig.mul_segment_in_place(&inc)?;
    }
    Ok(sig)
}

/// Expected signature of time-augmented Brownian motion over a time span `t`:
/// `exp(t e_0 + (t/2) Σ_i e_i ⊗ e_i)`.
pub fn brownian_expected_signature(dim: usize, t: f64, max_degree: usize) -> GradedTensor {
    let mut x = GradedTensor::zero(dim, max_degree);
    if let Some(i) = x.basis.index_of(&[0]) {
        x.coeffs[i] = t;
    }
    for a in 1..=dim as u8 {
        if let Some(i) = x.basis.index_of(&[a, a]) {
            x.coeffs[i] = 0.5 * t;
        }
    }
    x.exp().expect("generator has zero constant term")
}

/// Signatures of many paths that share one knot grid, evaluated `L` at a time.
///
/// Lanes are independent: lane `l` of every coefficient belongs to path `l`.
pub struct SignatureBatch<const L: usize> {
    basis: Arc<WordBasis>,
    coeffs: Vec<[f64; L]>,
    table: Vec<[f64; L]>,
}

impl<const L: usize> SignatureBatch<L> {
    pub fn new(dim: usize, max_degree: usize) -> Self {
        let basis = WordBasis::get(dim, max_degree);
        let coeffs = vec![[0.0; L]; basis.len()];
        let table = vec![[0.0; L]; (dim + 1) * (max_degree + 1)];
        let mut batch = Self {
            basis,
            coeffs,
            table,
        };
        batch.reset();
        batch
    }

    pub fn basis(&self) -> &Arc<WordBasis> {
        &self.basis
    }

    pub fn reset(&mut self) {
        self.coeffs.fill([0.0; L]);
        self.coeffs[0] = [1.0; L];
    }

    /// Appends one segment; `increments[a][l]` is component `a` (0 = time) of lane `l`.
    pub fn push_segment(&mut self, increments: &[[f64; L]]) {
        debug_assert_eq!(increments.len(), self.basis.dim + 1);
        self.basis.fill_factors(increments, &mut self.table);
        self.basis.apply_segment(&mut self.coeffs, &self.table);
    }

    pub fn coeff(&self, index: usize, lane: usize) -> f64 {
        self.coeffs[index][lane]
    }

    pub fn lanes(&self) -> &[[f64; L]] {
        &self.coeffs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn degree_counts_time_letters_twice() {
        assert_eq!(degree(&[]), 0);
        assert_eq!(degree(&[1, 1, 1, 1]), 4);
        assert_eq!(degree(&[0, 1, 0]), 5);
    }

    #[test]
    fn parity() {
        assert!(!is_odd_word(&[1, 1]));
        assert!(is_odd_word(&[0, 1]));
        assert!(!is_odd_word(&[1, 2, 2, 1, 0]));
        assert!(!is_odd_word(&[0, 0]));
    }

    #[test]
    fn basis_ordering_and_sizes() {
        let b = WordBasis::get(1, 5);
        assert_eq!(b.len(), 20);
        assert_eq!(b.word(0), &[] as &[u8]);
        assert_eq!(b.word(1), &[1]);
        assert_eq!(b.word(2), &[0]);
        assert_eq!(b.word(3), &[1, 1]);
        for i in 1..b.len() {
            let (u, v) = (b.word(i - 1), b.word(i));
            assert!((degree(u), u.len(), u) < (degree(v), v.len(), v));
        }
        // Words of exact degree k follow a Fibonacci recursion for d = 1.
        let counts: Vec<usize> = (0..=9).map(|k| WordBasis::get(1, 9).degree_range(k).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 3, 5, 8, 13, 21, 34, 55]);
    }

    #[test]
    fn unit_is_identity() {
        let a = segment_signature(&[0.3, -1.2, 0.7], 5).unwrap();
        let u = GradedTensor::unit(2, 5);
        assert_eq!(u.mul(&a).unwrap().coeffs(), a.coeffs());
        assert_eq!(a.mul(&u).unwrap().coeffs(), a.coeffs());
    }

    #[test]
    fn product_of_exponentials() {
        let e1 = GradedTensor::from_increment(&[0.0, 1.0], 4).unwrap().exp().unwrap();
        let p = e1.mul(&e1).unwrap();
        assert_relative_eq!(p.get(&[1]).unwrap(), 2.0);
        assert_relative_eq!(p.get(&[1, 1]).unwrap(), 2.0);
    }

    #[test]
    fn exponential_examples() {
        let z = GradedTensor::zero(1, 5).exp().unwrap();
        assert_eq!(z.coeffs(), GradedTensor::unit(1, 5).coeffs());
        let v = 1.7;
        let e = GradedTensor::from_increment(&[0.0, v], 5).unwrap().exp().unwrap();
        assert_relative_eq!(e.get(&[1, 1, 1]).unwrap(), v * v * v / 6.0, max_relative = 1e-15);
        let (h, v) = (0.4, -0.9);
        let e = GradedTensor::from_increment(&[h, v], 5).unwrap().exp().unwrap();
        assert_relative_eq!(e.get(&[0, 1]).unwrap(), h * v / 2.0, max_relative = 1e-15);
        assert!(matches!(
            GradedTensor::unit(1, 3).exp(),
            Err(Error::NonzeroConstant(_))
        ));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = GradedTensor::unit(1, 3);
        let b = GradedTensor::unit(1, 5);
        let c = GradedTensor::unit(2, 3);
        assert!(a.mul(&b).is_err());
        assert!(a.mul(&c).is_err());
    }

    #[test]
    fn segment_examples() {
        let s = segment_signature(&[1.0, 0.0], 5).unwrap();
        assert_relative_eq!(s.get(&[0, 0]).unwrap(), 0.5);
        let s = segment_signature(&[1.0, 1.0], 5).unwrap();
        assert_relative_eq!(s.get(&[1, 0]).unwrap(), 0.5);
        assert_relative_eq!(s.get(&[0, 1]).unwrap(), 0.5);
        let s = segment_signature(&[0.5, -0.3], 5).unwrap();
        assert_eq!(s.get(&[1]).unwrap(), -0.3);
        assert!(matches!(
            segment_signature(&[0.0, 1.0], 3),
            Err(Error::NonPositiveTimeStep(_))
        ));
        assert!(matches!(
            s.get(&[2]),
            Err(Error::InvalidLetter { letter: 2, dim: 1 })
        ));
    }

    #[test]
    fn segment_matches_exponential_and_in_place_update() {
        let inc = [0.25, 0.5, -1.5];
        let direct = segment_signature(&inc, 7).unwrap();
        let series = GradedTensor::from_increment(&inc, 7).unwrap().exp().unwrap();
        assert!(direct.max_abs_diff(&series).unwrap() < 1e-14);

        let mut s = segment_signature(&[0.5, 0.3, 0.1], 7).unwrap();
        let expected = s.mul(&direct).unwrap();
        s.mul_segment_in_place(&inc).unwrap();
        assert!(s.max_abs_diff(&expected).unwrap() < 1e-14);
    }

    #[test]
    fn path_signature_examples() {
        let line = PiecewiseLinearPath::from_increments(1, &[1.0]).unwrap();
        let s = path_signature(&line, 5, (0.0, 1.0)).unwrap();
        assert_relative_eq!(s.get(&[1, 1]).unwrap(), 0.5);
        assert_relative_eq!(s.get(&[1, 0]).unwrap(), 0.5);
        assert_relative_eq!(s.get(&[0]).unwrap(), 1.0);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let zigzag = PiecewiseLinearPath::from_increments(1, &[r, -r]).unwrap();
        let s = path_signature(&zigzag, 5, (0.0, 1.0)).unwrap();
        assert_eq!(s.get(&[1]).unwrap(), 0.0);
        assert!(path_signature(&zigzag, 5, (0.0, 0.3)).is_err());
        assert!(path_signature(&zigzag, 5, (0.5, 0.5)).is_err());
    }

    #[test]
    fn expected_signature_examples() {
        let e = brownian_expected_signature(2, 1.0, 4);
        assert_relative_eq!(e.get(&[1, 1]).unwrap(), 0.5);
        assert_relative_eq!(e.get(&[2, 2]).unwrap(), 0.5);
        assert_eq!(e.get(&[1, 2]).unwrap(), 0.0);
        let e = brownian_expected_signature(1, 1.0, 5);
        assert_relative_eq!(e.get(&[1, 1, 1, 1]).unwrap(), 0.125, max_relative = 1e-15);
        assert_relative_eq!(e.get(&[0, 1, 1]).unwrap(), 0.25, max_relative = 1e-15);
        assert_eq!(e.get(&[]).unwrap(), 1.0);
    }

    #[test]
    fn expected_signature_semigroup_and_parity() {
        for d in 1..=2 {
            let a = brownian_expected_signature(d, 0.3, 7);
            let b = brownian_expected_signature(d, 0.45, 7);
            let ab = brownian_expected_signature(d, 0.75, 7);
            assert!(a.mul(&b).unwrap().max_abs_diff(&ab).unwrap() < 1e-15);
            for (w, c) in ab.iter() {
                if is_odd_word(w) {
                    assert_eq!(c, 0.0, "{:?}", Word::from(w));
                }
            }
        }
    }

    #[test]
    fn batch_matches_scalar_path() {
        let incs = [[0.1, 0.2, -0.4], [0.3, -0.5, 0.2], [0.6, 0.05, 0.3]];
        let mut batch = SignatureBatch::<4>::new(2, 6);
        for inc in &incs {
            let lanes: Vec<[f64; 4]> = inc
                .iter()
                .map(|&x| [x, 2.0 * x, -x, 0.0])
                .collect();
            batch.push_segment(&lanes);
        }
        for (lane, scale) in [(0usize, 1.0), (1, 2.0), (2, -1.0)] {
            let mut s = GradedTensor::unit(2, 6);
            for inc in &incs {
                let x: Vec<f64> = inc.iter().map(|v| v * scale).collect();
                s.mul_segment_in_place(&x).unwrap();
            }
            for i in 0..s.basis().len() {
                assert!((s.coeffs()[i] - batch.coeff(i, lane)).abs() < 1e-15);
            }
        }
    }

    fn random_path(increments: &[f64]) -> PiecewiseLinearPath {
        let n = increments.len();
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut values = vec![0.0];
        for &x in increments {
            values.push(values.last().unwrap() + x);
        }
        PiecewiseLinearPath::new(1, times, values).unwrap()
    }

    /// Shuffles of two words, as a multiset.
    fn shuffles(u: &[u8], v: &[u8]) -> Vec<Vec<u8>> {
        if u.is_empty() {
            return vec![v.to_vec()];
        }
        if v.is_empty() {
            return vec![u.to_vec()];
        }
        let mut out = Vec::new();
        for mut w in shuffles(&u[..u.len() - 1], v) {
            w.push(*u.last().unwrap());
            out.push(w);
        }
        for mut w in shuffles(u, &v[..v.len() - 1]) {
            w.push(*v.last().unwrap());
            out.push(w);
        }
        out
    }

    proptest! {
        #[test]
        fn chen_identity(incs in prop::collection::vec(-2.0f64..2.0, 2..8), cut in 1usize..7) {
            let path = random_path(&incs);
            let n = incs.len();
            let cut = cut.min(n - 1);
            let u = cut as f64 / n as f64;
            let whole = path_signature(&path, 7, (0.0, 1.0)).unwrap();
            let left = path_signature(&path, 7, (0.0, u)).unwrap();
            let right = path_signature(&path, 7, (u, 1.0)).unwrap();
            let joined = left.mul(&right).unwrap();
            for (a, b) in whole.coeffs().iter().zip(joined.coeffs()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn shuffle_squares(incs in prop::collection::vec(-1.5f64..1.5, 1..6), pick in 0usize..12) {
            let path = random_path(&incs);
            let sig = path_signature(&path, 8, (0.0, 1.0)).unwrap();
            let basis = sig.basis().clone();
            let candidates = basis.select(1, 4, false);
            let word = basis.word(candidates[pick % candidates.len()]).to_vec();
            let lhs = sig.get(&word).unwrap().powi(2);
            let rhs: f64 = shuffles(&word, &word).iter().map(|w| sig.get(w).unwrap()).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        }
    }
}
