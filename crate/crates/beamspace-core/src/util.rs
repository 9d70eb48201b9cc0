//! Small numeric helpers shared across the crate.

use crate::C64;

/// Pairwise (cascade) summation of real values.
///
/// Used for every reduction whose result feeds a reproducibility contract:
/// the recursive split gives both a fixed summation tree (bit-deterministic
/// for a given input order) and an error bound that grows only
/// logarithmically with length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise summation of complex values; see [`pairwise_sum`].
pub fn pairwise_sum_c(values: &[C64]) -> C64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = C64::new(0.0, 0.0);
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum_c(&values[..mid]) + pairwise_sum_c(&values[mid..])
}

/// Power ratio in decibels, `10·log10(ratio)`.
pub fn db10(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Inverse of [`db10`].
pub fn from_db10(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Derives a per-record RNG seed from a master seed and two counters.
///
/// SplitMix64-style finalizer over the packed inputs; the mapping is fixed so
/// that ensembles, sweeps and trial blocks are reproducible independently of
/// iteration order or worker count.
pub fn derive_seed(master: u64, index_a: u64, index_b: u64) -> u64 {
    let mut z = master
        .wrapping_add(index_a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index_b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_sequential_on_small_inputs() {
        let xs: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 55.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn pairwise_sum_is_accurate_on_long_alternating_series() {
        // 1e5 terms of (1, 1e-12) pairs; naive forward order already handles
        // this, the point is the pairwise result agrees with the exact value.
        let mut xs = Vec::with_capacity(200_000);
        for _ in 0..100_000 {
            xs.push(1.0);
            xs.push(1e-12);
        }
        let exact = 100_000.0 + 100_000.0 * 1e-12;
        assert!((pairwise_sum(&xs) - exact).abs() < 1e-6);
    }

    #[test]
    fn derived_seeds_differ_across_counters() {
        let a = derive_seed(1, 0, 0);
        let b = derive_seed(1, 1, 0);
        let c = derive_seed(1, 0, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        // and are stable
        assert_eq!(derive_seed(1, 1, 0), b);
    }

    #[test]
    fn db_helpers_round_trip() {
        assert!((db10(100.0) - 20.0).abs() < 1e-12);
        assert!((from_db10(db10(3.5)) - 3.5).abs() < 1e-12);
    }
}
