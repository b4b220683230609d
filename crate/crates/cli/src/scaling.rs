//! Strong-scaling bookkeeping.

/// Parallel efficiency of each `(ranks, gflops)` point relative to the
/// point with the fewest ranks: `perf * P0 / (P * perf0)`.
pub fn parallel_efficiency(points: &[(usize, f64)]) -> Vec<f64> {
    let Some(&(p0, perf0)) = points.iter().min_by_key(|(p, _)| *p) else {
        return Vec::new();
    };
    points
        .iter()
        .map(|&(p, perf)| perf * p0 as f64 / (p as f64 * perf0))
        .collect()
}

/// Smallest rank count whose parallel efficiency falls below one half.
pub fn half_efficiency_marker(points: &[(usize, f64)]) -> Option<usize> {
    points
        .iter()
        .zip(parallel_efficiency(points))
        .filter(|(_, eff)| *eff < 0.5)
        .map(|(&(p, _), _)| p)
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_curve() {
        // Efficiencies 1, 0.9, 0.75, 0.45, 0.3.
        let pts = [(1, 2.0), (2, 3.6), (4, 6.0), (8, 7.2), (16, 9.6)];
        let eff = parallel_efficiency(&pts);
        for (e, want) in eff.iter().zip([1.0, 0.9, 0.75, 0.45, 0.3]) {
            assert!((e - want).abs() < 1e-12);
        }
        assert_eq!(half_efficiency_marker(&pts), Some(8));
    }

    #[test]
    fn exactly_half_is_not_below() {
        assert_eq!(half_efficiency_marker(&[(1, 2.0), (2, 2.0), (4, 3.9)]), Some(4));
        assert_eq!(half_efficiency_marker(&[(1, 2.0), (4, 4.0)]), None);
    }

    #[test]
    fn unordered_and_empty_input() {
        assert_eq!(half_efficiency_marker(&[(8, 1.0), (2, 2.0), (4, 2.2)]), Some(8));
        assert_eq!(half_efficiency_marker(&[]), None);
    }
}
