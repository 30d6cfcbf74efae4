//! Deterministic low-discrepancy sampling (Halton sequence).
//!
//! Every residual check in the library quantifies over points of a set; a
//! Halton sequence gives a reproducible, well-spread finite stand-in. The
//! `seed` shifts the start index, so two runs with the same seed produce
//! byte-identical samples.

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical-inverse of `index` in the given base, in [0, 1).
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

/// `count` points of the `dim`-dimensional Halton sequence mapped into the
/// box `[lo, hi]^dim`, starting at index `seed + 1`.
pub fn halton_box(count: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "dimension too large for Halton bases");
    (0..count)
        .map(|k| {
            let index = seed + 1 + k as u64;
            (0..dim)
                .map(|d| lo + (hi - lo) * radical_inverse(index, PRIMES[d]))
                .collect()
        })
        .collect()
}
