use rand::Rng;

use super::ArmIndex;

/// Uniform over all `channels` arms.
pub fn ra_select<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> ArmIndex {
    ArmIndex::from_zero_based(rng.random_range(0..channels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(ra_select(1, &mut rng), ArmIndex::from_number(1));
        }
    }

    #[test]
    fn uniform_over_55_channels() {
        let k = 55;
        let draws = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = vec![0u64; k];
        for _ in 0..draws {
            counts[ra_select(k, &mut rng).index()] += 1;
        }
        let p = 1.0 / k as f64;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "count {c} vs {expected}");
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 54 degrees of freedom: the 0.999 quantile is about 94.5.
        assert!(chi2 < 94.5, "chi2 = {chi2}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..64).map(|_| ra_select(55, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..64).map(|_| ra_select(55, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }
}
