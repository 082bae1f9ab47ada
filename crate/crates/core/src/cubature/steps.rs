//! Signatures of paths made of `N` equal-time steps of size `±1/sqrt(N)`.
//!
//! Every such path is a concatenation of blocks of `b` steps, and a block has
//! only `2^(b d)` possible sign patterns, so the block signatures are
//! tabulated once and a path signature costs `N / b - 1` tensor products.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::oa::LinearOa;
use crate::path::PiecewiseLinearPath;
use crate::tensor::{SignatureBatch, WordBasis};

/// Cap on the size of the block table.
const TABLE_BYTES: usize = 1 << 27;
const MAX_BLOCK_BITS: usize = 16;
const LANES: usize = 8;

/// Bits `off..off + len` of a packed row, `len < 64`.
#[inline]
fn bits(row: &[u64], off: usize, len: usize) -> usize {
    let (w, s) = (off / 64, off % 64);
    let mut v = row[w] >> s;
    if s + len > 64 {
        v |= row[w + 1] << (64 - s);
    }
    (v & ((1u64 << len) - 1)) as usize
}

/// The path whose step `s` moves channel `c` by `-1/sqrt(N)` when bit
/// `s d + c` of `row` is set and by `+1/sqrt(N)` otherwise.
pub fn path_from_bits(row: &[u64], steps: usize, dim: usize) -> PiecewiseLinearPath {
    let h = 1.0 / (steps as f64).sqrt();
    let mut incs = Vec::with_capacity(steps * dim);
    for j in 0..steps * dim {
        let neg = row[j / 64] >> (j % 64) & 1 == 1;
        incs.push(if neg { -h } else { h });
    }
    PiecewiseLinearPath::from_increments(dim, &incs).expect("sign path is well formed")
}

pub struct StepTable {
    basis: Arc<WordBasis>,
    dim: usize,
    steps: usize,
    block: usize,
    table: Vec<f64>,
}

/// Reusable buffers for [`StepTable`] evaluation.
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    la: Vec<[f64; LANES]>,
    lb: Vec<[f64; LANES]>,
    le: Vec<[f64; LANES]>,
}

impl StepTable {
    pub fn new(dim: usize, degree: usize, steps: usize) -> Self {
        assert!(steps >= 1);
        let basis = WordBasis::get(dim, degree);
        let n = basis.len();
        let block = (1..=steps)
            .filter(|b| steps % b == 0)
            .filter(|b| b * dim <= MAX_BLOCK_BITS && (n << (b * dim)) * 8 <= TABLE_BYTES)
            .max()
            .unwrap_or(1);
        let patterns = 1usize << (block * dim);
        let mut table = vec![0.0; patterns * n];
        let dt = 1.0 / steps as f64;
        let h = dt.sqrt();
        table
            .par_chunks_mut(LANES * n)
            .enumerate()
            .for_each(|(chunk, out)| {
                let first = chunk * LANES;
                let lanes = out.len() / n;
                let mut batch = SignatureBatch::<LANES>::new(dim, degree);
                let mut incs = vec![[0.0; LANES]; dim + 1];
                for s in 0..block {
                    incs[0] = [dt; LANES];
                    for c in 0..dim {
                        for l in 0..LANES {
                            let p = first + l.min(lanes - 1);
                            incs[1 + c][l] = if p >> (s * dim + c) & 1 == 1 { -h } else { h };
                        }
                    }
                    batch.push_segment(&incs);
                }
                for l in 0..lanes {
                    for (i, o) in out[l * n..(l + 1) * n].iter_mut().enumerate() {
                        *o = batch.coeff(i, l);
                    }
                }
            });
        Self {
            basis,
            dim,
            steps,
            block,
            table,
        }
    }

    pub fn basis(&self) -> &Arc<WordBasis> {
        &self.basis
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn scratch(&self) -> Scratch {
        let n = self.basis.len();
        Scratch {
            a: vec![0.0; n],
            b: vec![0.0; n],
            la: vec![[0.0; LANES]; n],
            lb: vec![[0.0; LANES]; n],
            le: vec![[0.0; LANES]; n],
        }
    }

    fn entry(&self, row: &[u64], k: usize) -> &[f64] {
        let width = self.block * self.dim;
        let p = bits(row, k * width, width);
        let n = self.basis.len();
        &self.table[p * n..(p + 1) * n]
    }

    /// Product of all blocks but the last, left in `scratch.a`.
    fn prefix(&self, row: &[u64], scratch: &mut Scratch) {
        let blocks = self.steps / self.block;
        scratch.a.copy_from_slice(self.entry(row, 0));
        for k in 1..blocks - 1 {
            self.basis.mul_into(&scratch.a, self.entry(row, k), &mut scratch.b);
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
    }

    /// Full signature over `[0, 1]`.
    pub fn signature(&self, row: &[u64], scratch: &mut Scratch, out: &mut [f64]) {
        let blocks = self.steps / self.block;
        if blocks == 1 {
            out.copy_from_slice(self.entry(row, 0));
            return;
        }
        self.prefix(row, scratch);
        self.basis.mul_into(&scratch.a, self.entry(row, blocks - 1), out);
    }

    /// The signature coefficients listed in `idx` only.
    pub fn features(&self, row: &[u64], idx: &[usize], scratch: &mut Scratch, out: &mut [f64]) {
        let blocks = self.steps / self.block;
        if blocks == 1 {
            let e = self.entry(row, 0);
            for (o, &i) in out.iter_mut().zip(idx) {
                *o = e[i];
            }
            return;
        }
        self.prefix(row, scratch);
        let last = self.entry(row, blocks - 1);
        for (o, &i) in out.iter_mut().zip(idx) {
            *o = self.basis.mul_entry(&scratch.a, last, i);
        }
    }

    /// Block `k` of up to `LANES` rows, one row per lane (short batches repeat the last row).
    fn gather(&self, rows: &[u64], words: usize, count: usize, k: usize, out: &mut [[f64; LANES]]) {
        for l in 0..LANES {
            let r = l.min(count - 1);
            let e = self.entry(&rows[r * words..(r + 1) * words], k);
            for (o, &v) in out.iter_mut().zip(e) {
                o[l] = v;
            }
        }
    }

    /// [`StepTable::features`] for `count <= LANES` packed rows of `words`
    /// words each; `out` holds `count` feature vectors back to back. Each
    /// lane performs the same operations as the scalar version.
    fn features_lanes(
        &self,
        rows: &[u64],
        words: usize,
        count: usize,
        idx: &[usize],
        s: &mut Scratch,
        out: &mut [f64],
    ) {
        let blocks = self.steps / self.block;
        let m = idx.len();
        if blocks == 1 {
            for r in 0..count {
                self.features(&rows[r * words..(r + 1) * words], idx, s, &mut out[r * m..(r + 1) * m]);
            }
            return;
        }
        self.gather(rows, words, count, 0, &mut s.la);
        for k in 1..blocks - 1 {
            self.gather(rows, words, count, k, &mut s.le);
            self.basis.mul_into_lanes(&s.la, &s.le, &mut s.lb);
            std::mem::swap(&mut s.la, &mut s.lb);
        }
        self.gather(rows, words, count, blocks - 1, &mut s.le);
        for (f, &i) in idx.iter().enumerate() {
            let v = self.basis.mul_entry_lanes(&s.la, &s.le, i);
            for l in 0..count {
                out[l * m + f] = v[l];
            }
        }
    }
}

const CHUNK_ROWS: usize = 1 << 14;
const TASK_ROWS: usize = 256;

/// Streams `(row id, features)` for every row of `oa` to `sink`, in row order.
/// Features are computed in parallel; the sink sees a deterministic sequence.
pub fn stream_features(
    oa: &LinearOa,
    table: &StepTable,
    idx: &[usize],
    mut sink: impl FnMut(u64, &[f64]) -> Result<()>,
) -> Result<()> {
    let m = idx.len();
    assert!(m > 0);
    let rows = oa.num_rows();
    let mut buf = vec![0.0; CHUNK_ROWS * m];
    let mut start = 0u64;
    while start < rows {
        let end = (start + CHUNK_ROWS as u64).min(rows);
        let len = (end - start) as usize;
        buf[..len * m]
            .par_chunks_mut(TASK_ROWS * m)
            .enumerate()
            .for_each(|(t, out)| {
                let s = start + (t * TASK_ROWS) as u64;
                let e = s + (out.len() / m) as u64;
                let mut scratch = table.scratch();
                let words = oa.words_per_row();
                let mut pending = vec![0u64; LANES * words];
                let mut count = 0;
                let mut first = s;
                oa.for_each_row(s, e, |r, row| {
                    if count == 0 {
                        first = r;
                    }
                    pending[count * words..(count + 1) * words].copy_from_slice(row);
                    count += 1;
                    if count == LANES || r + 1 == e {
                        let o = (first - s) as usize * m;
                        table.features_lanes(&pending, words, count, idx, &mut scratch, &mut out[o..o + count * m]);
                        count = 0;
                    }
                });
            });
        for i in 0..len {
            sink(start + i as u64, &buf[i * m..(i + 1) * m])?;
        }
        start = end;
    }
    Ok(())
}

/// Uniform average of the full signatures of all rows.
pub fn mean_signature(oa: &LinearOa, table: &StepTable) -> Vec<f64> {
    let n = table.basis.len();
    let rows = oa.num_rows();
    let tasks = rows.div_ceil(TASK_ROWS as u64);
    let partial: Vec<Vec<f64>> = (0..tasks)
        .into_par_iter()
        .map(|t| {
            let s = t * TASK_ROWS as u64;
            let e = (s + TASK_ROWS as u64).min(rows);
            let mut scratch = table.scratch();
            let mut sig = vec![0.0; n];
            let mut acc = vec![0.0; n];
            oa.for_each_row(s, e, |_, row| {
                table.signature(row, &mut scratch, &mut sig);
                for (a, v) in acc.iter_mut().zip(&sig) {
                    *a += v;
                }
            });
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in &partial {
        for (a, v) in total.iter_mut().zip(p) {
            *a += v;
        }
    }
    let inv = 1.0 / rows as f64;
    total.iter().map(|v| v * inv).collect()
}

/// Row `id` of `oa` in the numbering used by [`LinearOa::for_each_row`].
pub fn oa_row(oa: &LinearOa, id: u64) -> Vec<u64> {
    let mut out = Vec::new();
    oa.for_each_row(id, id + 1, |_, row| out = row.to_vec());
    out
}
