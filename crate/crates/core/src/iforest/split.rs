use rand::Rng;

/// `(min, max)` of a non-empty slice.
pub fn value_range(data: &[f64]) -> Option<(f64, f64)> {
    let mut it = data.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

/// True when the slice holds no two different values.
pub fn distinct_at_most_one(data: &[f64]) -> bool {
    match data.split_first() {
        None => true,
        Some((&first, rest)) => rest.iter().all(|&v| v == first),
    }
}

/// Uniform draw from the open interval `(lo, hi)`; requires `lo < hi`.
///
/// Both children of a split at the returned value are non-empty for any
/// partition whose extremes are `lo` and `hi`.
pub fn draw_open<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo < hi);
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Splits readings into `(x < split, x >= split)`.
pub fn partition_at(data: &[f64], split: f64) -> (Vec<f64>, Vec<f64>) {
    data.iter().partition(|&&v| v < split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn range_and_distinct() {
        assert_eq!(value_range(&[]), None);
        assert_eq!(value_range(&[3.0, -1.0, 2.0]), Some((-1.0, 3.0)));
        assert!(distinct_at_most_one(&[]));
        assert!(distinct_at_most_one(&[20.0, 20.0, 20.0]));
        assert!(!distinct_at_most_one(&[20.0, 20.5]));
    }

    #[test]
    fn open_draw_stays_strictly_inside() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10_000 {
            let v = draw_open(20.0, 24.0, &mut rng);
            assert!(v > 20.0 && v < 24.0);
        }
        // Two ulps wide: exactly one admissible value.
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 2);
        let v = draw_open(lo, hi, &mut rng);
        assert!(v > lo && v < hi);
    }
}
