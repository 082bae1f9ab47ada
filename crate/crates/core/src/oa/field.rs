//! Arithmetic in GF(2^n), elements as bitmasks in the polynomial basis.

use crate::error::{Error, Result};

/// Lowest-weight irreducible polynomial of each degree 2..=32: the trinomial
/// `x^n + x^k + 1` with the smallest `k` if one exists, otherwise a pentanomial.
const IRREDUCIBLE: [u64; 31] = [
    0x7,
    0xb,
    0x13,
    0x25,
    0x43,
    0x83,
    0x11b,
    0x203,
    0x409,
    0x805,
    0x1009,
    0x201b,
    0x4021,
    0x8003,
    0x1002b,
    0x20009,
    0x40009,
    0x80027,
    0x100009,
    0x200005,
    0x400003,
    0x800021,
    0x100001b,
    0x2000009,
    0x400001b,
    0x8000027,
    0x10000003,
    0x20000005,
    0x40000003,
    0x80000009,
    0x10000008d,
];

pub const MAX_FIELD_DEGREE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryField {
    n: usize,
    modulus: u64,
}

fn poly_degree(p: u64) -> usize {
    63 - p.leading_zeros() as usize
}

fn poly_mod(mut a: u64, m: u64) -> u64 {
    let dm = poly_degree(m);
    while a != 0 && poly_degree(a) >= dm {
        a ^= m << (poly_degree(a) - dm);
    }
    a
}

/// Trial division by every polynomial of degree `1..=n/2`.
pub fn is_irreducible(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let n = poly_degree(p);
    if n == 0 {
        return false;
    }
    for q in 2u64..(1u64 << (n / 2 + 1)) {
        if poly_mod(p, q) == 0 {
            return false;
        }
    }
    true
}

impl BinaryField {
    /// Field with the built-in modulus for degree `n`.
    pub fn new(n: usize) -> Result<Self> {
        if !(1..=MAX_FIELD_DEGREE).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "field degree {n} outside 1..={MAX_FIELD_DEGREE}"
            )));
        }
        if n == 1 {
            return Ok(Self { n, modulus: 0b10 });
        }
        Self::with_modulus(IRREDUCIBLE[n - 2])
    }

    pub fn with_modulus(modulus: u64) -> Result<Self> {
        let n = if modulus < 2 { 0 } else { poly_degree(modulus) };
        if n > MAX_FIELD_DEGREE || !is_irreducible(modulus) {
            return Err(Error::NotIrreducible(modulus));
        }
        Ok(Self { n, modulus })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn order(&self) -> u64 {
        1 << self.n
    }

    pub fn mul(&self, mut a: u64, mut b: u64) -> u64 {
        let top = 1u64 << self.n;
        let mut r = 0;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.modulus;
            }
        }
        r
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a;
        let mut r = 1;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(r, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        r
    }
}
