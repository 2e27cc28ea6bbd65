//! Small statistics helpers shared by the replay and report code.
//!
//! Percentiles use the nearest-rank rule without interpolation: the
//! p-th percentile of `n` sorted samples is the value at 1-based rank
//! `ceil(p/100 * n)` (rank 1 for p = 0).

use crate::Nanos;

/// 1-based nearest rank for percentile `p` (0..=100) over `n` samples.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    assert!(n > 0, "nearest_rank over an empty sample set");
    assert!((0.0..=100.0).contains(&p), "percentile out of range: {p}");
    // Integer form of ceil(p * n / 100) for the common whole-number
    // percentiles avoids float rounding on exact products.
    let rank = if p.fract() == 0.0 {
        let p = p as usize;
        (p * n).div_ceil(100)
    } else {
        (p / 100.0 * n as f64).ceil() as usize
    };
    rank.clamp(1, n)
}

/// Nearest-rank percentile of already sorted samples.
pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> T {
    sorted[nearest_rank(p, sorted.len()) - 1]
}

/// Nearest-rank percentile; sorts a copy of `samples`.
pub fn percentile(samples: &[Nanos], p: f64) -> Nanos {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    percentile_sorted(&sorted, p)
}

/// Nearest-rank median of arbitrary ordered values (lower middle for even
/// counts).
pub fn median_by<T: Copy + PartialOrd>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median over unordered values"));
    Some(percentile_sorted(&sorted, 50.0))
}

pub fn mean(samples: &[Nanos]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let total: u128 = samples.iter().map(|&s| s as u128).sum();
    Some(total as f64 / samples.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Rounds half away from zero to the nearest integer nanosecond.
pub fn round_ns(v: f64) -> Nanos {
    if v <= 0.0 {
        0
    } else {
        v.round() as Nanos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks() {
        assert_eq!(nearest_rank(50.0, 3), 2);
        assert_eq!(nearest_rank(50.0, 4), 2);
        assert_eq!(nearest_rank(5.0, 150), 8);
        assert_eq!(nearest_rank(95.0, 150), 143);
        assert_eq!(nearest_rank(0.0, 10), 1);
        assert_eq!(nearest_rank(100.0, 10), 10);
    }

    #[test]
    fn median_of_odd_and_single() {
        assert_eq!(median_by(&[9.0, 3.0, 5.0]), Some(5.0));
        assert_eq!(median_by(&[4.0]), Some(4.0));
        assert_eq!(median_by::<f64>(&[]), None);
    }

    #[test]
    fn mean_of_two() {
        assert_eq!(mean(&[4000, 5000]), Some(4500.0));
    }

    /// Independent definition: the smallest sample `x` with at least
    /// `p% * n` samples `<= x`.
    fn brute_percentile(samples: &[Nanos], p: u32) -> Nanos {
        let n = samples.len() as u64;
        *samples
            .iter()
            .filter(|&&x| {
                let at_or_below = samples.iter().filter(|&&y| y <= x).count() as u64;
                at_or_below * 100 >= p as u64 * n
            })
            .min()
            .unwrap()
    }

    proptest! {
        #[test]
        fn percentile_agrees_with_brute_force(samples in proptest::collection::vec(0u64..10_000, 1..=20), p in 0u32..=100) {
            prop_assert_eq!(percentile(&samples, p as f64), brute_percentile(&samples, p));
        }
    }
}
