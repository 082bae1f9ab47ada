//! Word counts that bound the support of a recombined cubature.

/// `counts[k][mask]`: words of degree exactly `k` whose space-letter
/// parities are `mask`.
fn parity_counts(dim: usize, degree: usize) -> Vec<Vec<u128>> {
    assert!(dim >= 1 && dim <= 20, "parity table needs 1 <= d <= 20");
    let states = 1usize << dim;
    let mut counts = vec![vec![0u128; states]; degree + 1];
    counts[0][0] = 1;
    for k in 1..=degree {
        for mask in 0..states {
            let mut c = 0u128;
            if k >= 2 {
                c += counts[k - 2][mask];
            }
            for a in 0..dim {
                c += counts[k - 1][mask ^ (1 << a)];
            }
            counts[k][mask] = c;
        }
    }
    counts
}

/// Number of words of degree exactly `k`.
pub fn count_words(dim: usize, k: usize) -> u128 {
    // c_k = d c_{k-1} + c_{k-2}
    let (mut prev, mut cur) = (0u128, 1u128);
    for _ in 0..k {
        let next = dim as u128 * cur + prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Words of degree `D - 1` or `D`: the number of features a recombination
/// has to preserve, hence the support bound of a degree-`D` cubature.
pub fn count_m(dim: usize, degree: usize) -> u128 {
    if degree == 0 {
        return 1;
    }
    count_words(dim, degree - 1) + count_words(dim, degree)
}

/// Even words of degree `D - 1` or `D`; a symmetrised cubature has at most
/// `2^d` times this many paths.
pub fn count_m_even(dim: usize, degree: usize) -> u128 {
    if degree == 0 {
        return 1;
    }
    let c = parity_counts(dim, degree);
    c[degree - 1][0] + c[degree][0]
}
