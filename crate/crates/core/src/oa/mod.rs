//! Binary orthogonal arrays from linear codes.
//!
//! Entries are stored as bits: `0` is the sign `+1` and `1` is `-1`, so
//! adding generator rows over GF(2) multiplies signs.

mod field;

pub use field::{is_irreducible, BinaryField, MAX_FIELD_DEGREE};

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Generators with more rows than this are never expanded.
pub const MAX_GENERATOR_ROWS: usize = 40;

/// Default cap on `rows * C(cols, s)` for exhaustive strength checks.
pub const DEFAULT_VERIFY_BUDGET: u128 = 1 << 32;

fn words_for(cols: usize) -> usize {
    cols.div_ceil(64).max(1)
}

fn get_bit(row: &[u64], c: usize) -> bool {
    row[c / 64] >> (c % 64) & 1 == 1
}

/// `k x C` matrix over GF(2), rows bit-packed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorMatrix {
    cols: usize,
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl GeneratorMatrix {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            words: words_for(cols),
            rows: Vec::new(),
        }
    }

    pub fn from_rows(cols: usize, rows: &[Vec<bool>]) -> Result<Self> {
        let mut g = Self::new(cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "generator row of length {} for {cols} columns",
                    r.len()
                )));
            }
            let mut bits = vec![0u64; g.words];
            for (c, &b) in r.iter().enumerate() {
                if b {
                    bits[c / 64] |= 1 << (c % 64);
                }
            }
            g.rows.push(bits);
        }
        Ok(g)
    }

    /// Identity generator: all `2^cols` sign patterns.
    pub fn full_factorial(cols: usize) -> Self {
        let mut g = Self::new(cols);
        for c in 0..cols {
            let mut bits = vec![0u64; g.words];
            bits[c / 64] |= 1 << (c % 64);
            g.rows.push(bits);
        }
        g
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        get_bit(&self.rows[r], c)
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.rows[r]
    }

    /// Appends an all-zero column and an all-ones row.
    pub fn extended(&self) -> Self {
        let cols = self.cols + 1;
        let words = words_for(cols);
        let mut rows: Vec<Vec<u64>> = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.resize(words, 0);
                r
            })
            .collect();
        let mut ones = vec![0u64; words];
        for c in 0..cols {
            ones[c / 64] |= 1 << (c % 64);
        }
        rows.push(ones);
        Self { cols, words, rows }
    }

    /// Keeps the first `cols` columns.
    pub fn truncated(&self, cols: usize) -> Self {
        assert!(cols <= self.cols);
        let words = words_for(cols);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r[..words].to_vec();
                mask_tail(&mut r, cols);
                r
            })
            .collect();
        Self { cols, words, rows }
    }

    /// GF(2) rank, by elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for c in 0..self.cols {
            let Some(p) = (rank..rows.len()).find(|&i| get_bit(&rows[i], c)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (i, r) in rows.iter_mut().enumerate() {
                if i != rank && get_bit(r, c) {
                    for (a, b) in r.iter_mut().zip(&pivot) {
                        *a ^= b;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Drops rows that are GF(2) combinations of earlier rows; the row space
    /// and hence the array (up to row multiplicity) are unchanged.
    pub fn independent_rows(&self) -> Self {
        let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
        let mut kept = Vec::new();
        for r in &self.rows {
            let mut v = r.clone();
            for (c, b) in &basis {
                if get_bit(&v, *c) {
                    for (a, x) in v.iter_mut().zip(b) {
                        *a ^= x;
                    }
                }
            }
            if let Some(c) = (0..self.cols).find(|&c| get_bit(&v, c)) {
                basis.push((c, v));
                kept.push(r.clone());
            }
        }
        Self {
            cols: self.cols,
            words: self.words,
            rows: kept,
        }
    }

    pub fn expand(&self) -> Result<OrthogonalArray> {
        let strength = 0;
        LinearOa::new(self.clone(), strength).expand()
    }
}

fn mask_tail(row: &mut [u64], cols: usize) {
    let rem = cols % 64;
    if rem != 0 {
        let last = cols / 64;
        row[last] &= (1u64 << rem) - 1;
    }
}

/// Generator of the dual BCH code: the column for `x != 0` in GF(2^n) holds
/// the bits of `(x, x^3, .., x^{2u-1})`, giving a `(n u) x (2^n - 1)` matrix
/// whose columns are `2u`-wise linearly independent.
pub fn bch_dual_generator(n: usize, strength: usize) -> Result<GeneratorMatrix> {
    if strength % 2 == 1 {
        return Err(Error::OddStrength(strength));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("field degree {n} below 2")));
    }
    if n > 24 {
        return Err(Error::InvalidArgument(format!(
            "field degree {n} gives more columns than can be stored"
        )));
    }
    let field = BinaryField::new(n)?;
    let u = strength / 2;
    let cols = (1usize << n) - 1;
    let mut g = GeneratorMatrix::new(cols);
    g.rows = vec![vec![0u64; g.words]; n * u];
    for (c, x) in (1..=cols as u64).enumerate() {
        for i in 0..u {
            let y = field.pow(x, 2 * i as u64 + 1);
            for b in 0..n {
                if y >> b & 1 == 1 {
                    g.rows[i * n + b][c / 64] |= 1 << (c % 64);
                }
            }
        }
    }
    Ok(g)
}

/// `R x C` array over `{-1, +1}` with a declared strength.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrthogonalArray {
    rows: usize,
    cols: usize,
    strength: usize,
    words: usize,
    data: Vec<u64>,
}

/// Outcome of an exhaustive strength check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrengthCheck {
    Holds,
    Fails,
    /// `rows * C(cols, s)` exceeds the budget; nothing was checked.
    Unverifiable { cost: u128, budget: u128 },
}

impl StrengthCheck {
    pub fn holds(&self) -> bool {
        matches!(self, StrengthCheck::Holds)
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Rao's lower bound on the rows of a binary array: `Σ_{i ≤ ⌊s/2⌋} C(cols, i)`.
pub fn rao_bound(cols: usize, strength: usize) -> u128 {
    (0..=strength / 2).map(|i| binomial(cols, i)).sum()
}

impl OrthogonalArray {
    /// From a `±1` matrix given row by row.
    pub fn from_signs(rows: &[Vec<i8>], strength: usize) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let words = words_for(cols);
        let mut data = vec![0u64; rows.len() * words];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidArgument("ragged sign matrix".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                match v {
                    1 => {}
                    -1 => data[r * words + c / 64] |= 1 << (c % 64),
                    _ => return Err(Error::InvalidArgument(format!("entry {v} is not a sign"))),
                }
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            strength,
            words,
            data,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn strength(&self) -> usize {
        self.strength
    }

    pub fn with_strength(mut self, strength: usize) -> Self {
        self.strength = strength;
        self
    }

    pub fn row_bits(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        if get_bit(self.row_bits(r), c) {
            -1
        } else {
            1
        }
    }

    pub fn row_signs(&self, r: usize) -> Vec<i8> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    /// Rows over the chosen columns, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let words = words_for(cols.len());
        let mut data = vec![0u64; self.rows * words];
        for r in 0..self.rows {
            let src = self.row_bits(r);
            for (j, &c) in cols.iter().enumerate() {
                if get_bit(src, c) {
                    data[r * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            strength: self.strength.min(cols.len()),
            words,
            data,
        }
    }

    pub fn first_columns(&self, k: usize) -> Self {
        self.select_columns(&(0..k).collect::<Vec<_>>())
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.words..(r + 1) * self.words];
            for w in row.iter_mut() {
                *w = !*w;
            }
            mask_tail(row, self.cols);
        }
        out
    }

    /// Stacks `[A | +1]` over `[-A | -1]`; raises an even strength by one.
    pub fn extend_strength(&self) -> Result<Self> {
        if self.strength % 2 == 1 {
            return Err(Error::InvalidArgument(format!(
                "extension needs an even strength, array has {}",
                self.strength
            )));
        }
        let cols = self.cols + 1;
        let words = words_for(cols);
        let neg = self.negated();
        let mut data = vec![0u64; 2 * self.rows * words];
        for r in 0..self.rows {
            data[r * words..r * words + self.words].copy_from_slice(self.row_bits(r));
            let lo = (self.rows + r) * words;
            data[lo..lo + self.words].copy_from_slice(neg.row_bits(r));
            data[lo + self.cols / 64] |= 1 << (self.cols % 64);
        }
        Ok(Self {
            rows: 2 * self.rows,
            cols,
            strength: self.strength + 1,
            words,
            data,
        })
    }

    /// Negates each column independently with probability 1/2.
    pub fn randomize_columns(&self, seed: u64) -> Self {
        let flip = column_flips(self.cols, seed);
        let mut out = self.clone();
        for r in 0..self.rows {
            for (w, f) in out.data[r * self.words..(r + 1) * self.words].iter_mut().zip(&flip) {
                *w ^= f;
            }
        }
        out
    }

    /// Exhaustive check that every `s`-column projection is balanced.
    pub fn verify_strength(&self, s: usize, budget: u128) -> StrengthCheck {
        if s == 0 {
            return StrengthCheck::Holds;
        }
        if s > self.cols {
            return StrengthCheck::Fails;
        }
        let cost = binomial(self.cols, s).saturating_mul(self.rows as u128);
        if cost > budget {
            return StrengthCheck::Unverifiable { cost, budget };
        }
        if self.rows % (1 << s) != 0 {
            return StrengthCheck::Fails;
        }
        let expected = self.rows >> s;
        let subsets = combinations(self.cols, s);
        let ok = subsets.par_iter().all(|cols| {
            let mut counts = vec![0usize; 1 << s];
            for r in 0..self.rows {
                let row = self.row_bits(r);
                let mut pattern = 0usize;
                for (j, &c) in cols.iter().enumerate() {
                    pattern |= (get_bit(row, c) as usize) << j;
                }
                counts[pattern] += 1;
            }
            counts.iter().all(|&n| n == expected)
        });
        if ok {
            StrengthCheck::Holds
        } else {
            StrengthCheck::Fails
        }
    }

    /// Row count over Rao's bound for the declared strength.
    pub fn rao_ratio(&self) -> f64 {
        self.rows as f64 / rao_bound(self.cols, self.strength) as f64
    }

    /// Writes the array as comma-separated `±1` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::with_capacity(3 * self.cols);
        for r in 0..self.rows {
            line.clear();
            for c in 0..self.cols {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(if self.get(r, c) > 0 { "1" } else { "-1" });
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Seeded column flip mask, one bit per column.
pub fn column_flips(cols: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flip = vec![0u64; words_for(cols)];
    for c in 0..cols {
        if rng.random::<bool>() {
            flip[c / 64] |= 1 << (c % 64);
        }
    }
    flip
}

/// Which construction produced a [`LinearOa`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OaFamily {
    /// Dual BCH code over GF(2^n) of even strength.
    BchDual { n: usize },
    /// Dual BCH code extended by one column and an all-ones row (odd strength).
    ExtendedBchDual { n: usize },
    /// Every sign pattern.
    FullFactorial,
}

impl std::fmt::Display for OaFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OaFamily::BchDual { n } => write!(f, "bch-dual(n={n})"),
            OaFamily::ExtendedBchDual { n } => write!(f, "extended-bch-dual(n={n})"),
            OaFamily::FullFactorial => write!(f, "full-factorial"),
        }
    }
}

/// Linear array described by its generator and a column flip mask; rows are
/// produced on demand so arrays too large to store can still be streamed.
#[derive(Clone, Debug)]
pub struct LinearOa {
    generator: GeneratorMatrix,
    flip: Vec<u64>,
    strength: usize,
    family: OaFamily,
}

impl LinearOa {
    pub fn new(generator: GeneratorMatrix, strength: usize) -> Self {
        let flip = vec![0u64; generator.words];
        Self {
            generator,
            flip,
            strength,
            family: OaFamily::FullFactorial,
        }
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn strength(&self) -> usize {
        self.strength
    }

    pub fn family(&self) -> OaFamily {
        self.family
    }

    pub fn num_cols(&self) -> usize {
        self.generator.cols
    }

    pub fn num_rows(&self) -> u64 {
        1u64 << self.generator.num_rows()
    }

    pub fn words_per_row(&self) -> usize {
        self.generator.words
    }

    pub fn truncated(&self, cols: usize) -> Self {
        let generator = self.generator.truncated(cols);
        let mut flip = self.flip[..generator.words].to_vec();
        mask_tail(&mut flip, cols);
        Self {
            strength: self.strength.min(cols),
            generator,
            flip,
            family: self.family,
        }
    }

    pub fn randomize_columns(mut self, seed: u64) -> Self {
        self.flip = column_flips(self.generator.cols, seed);
        self
    }

    pub fn rao_ratio(&self) -> f64 {
        self.num_rows() as f64 / rao_bound(self.num_cols(), self.strength) as f64
    }

    /// Visits rows `start..end` in Gray-code order: consecutive rows differ by
    /// one generator row.
    pub fn for_each_row(&self, start: u64, end: u64, mut f: impl FnMut(u64, &[u64])) {
        let g = &self.generator;
        if start >= end {
            return;
        }
        let gray = start ^ (start >> 1);
        let mut row = self.flip.clone();
        for (i, gr) in g.rows.iter().enumerate() {
            if gray >> i & 1 == 1 {
                for (a, b) in row.iter_mut().zip(gr) {
                    *a ^= b;
                }
            }
        }
        f(start, &row);
        for r in start + 1..end {
            let i = r.trailing_zeros() as usize;
            for (a, b) in row.iter_mut().zip(&g.rows[i]) {
                *a ^= b;
            }
            f(r, &row);
        }
    }

    pub fn expand(&self) -> Result<OrthogonalArray> {
        let k = self.generator.num_rows();
        if k > MAX_GENERATOR_ROWS {
            return Err(Error::GeneratorTooLarge(k));
        }
        let rows = 1usize << k;
        let words = self.generator.words;
        let mut data = Vec::with_capacity(rows * words);
        self.for_each_row(0, rows as u64, |_, r| data.extend_from_slice(r));
        Ok(OrthogonalArray {
            rows,
            cols: self.generator.cols,
            strength: self.strength,
            words,
            data,
        })
    }
}

/// Expands every GF(2) combination of the generator rows (declared strength 0;
/// the caller certifies the strength).
pub fn expand_generator(g: &GeneratorMatrix) -> Result<OrthogonalArray> {
    g.expand()
}

/// Smallest implemented binary array with at least `cols` columns and
/// strength at least `strength`, truncated to exactly `cols` columns.
///
/// When `cols <= strength` the full factorial array is the only option.
pub fn build_binary_oa(cols: usize, strength: usize) -> Result<LinearOa> {
    if cols == 0 {
        return Err(Error::InvalidArgument("an array needs at least one column".into()));
    }
    let mut best: Option<(u128, OaFamily)> = None;
    let mut consider = |rows_log2: usize, family: OaFamily| {
        let rows = 1u128 << rows_log2.min(127);
        if best.is_none_or(|(r, _)| rows < r) {
            best = Some((rows, family));
        }
    };
    consider(cols, OaFamily::FullFactorial);
    if strength >= 1 && cols > strength {
        let even = strength + strength % 2;
        let odd = strength + 1 - strength % 2;
        if let Some(n) = (2..=MAX_FIELD_DEGREE).find(|&n| (1u64 << n) - 1 >= cols as u64) {
            consider(n * even / 2, OaFamily::BchDual { n });
        }
        if let Some(n) = (2..=MAX_FIELD_DEGREE).find(|&n| 1u64 << n >= cols as u64) {
            consider(1 + n * (odd / 2), OaFamily::ExtendedBchDual { n });
        }
    }
    let (_, family) = best.expect("full factorial always applies");
    let (generator, declared) = match family {
        OaFamily::FullFactorial => (GeneratorMatrix::full_factorial(cols), cols),
        OaFamily::BchDual { n } => {
            let even = strength + strength % 2;
            (bch_dual_generator(n, even)?, even)
        }
        OaFamily::ExtendedBchDual { n } => {
            let odd = strength + 1 - strength % 2;
            (bch_dual_generator(n, odd - 1)?.extended(), odd)
        }
    };
    let generator = generator.independent_rows();
    if generator.num_rows() > MAX_GENERATOR_ROWS {
        return Err(Error::FieldTooLarge { cols, strength });
    }
    let mut oa = LinearOa::new(generator, declared);
    oa.family = family;
    Ok(oa.truncated(cols))
}
