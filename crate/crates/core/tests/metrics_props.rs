use focalstream_core::metrics::{bitrate_kbps, code_usage, normalized_entropy, TokenHistogram};
use proptest::prelude::*;

fn histogram() -> impl Strategy<Value = Vec<u64>> {
    (1usize..=8)
        .prop_flat_map(|bits| prop::collection::vec(0u64..50, 1 << bits))
        .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
}

#[test]
fn entropy_oracles() {
    assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![2, 1, 1, 0])).unwrap(), 0.75);
    assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![3; 16])).unwrap(), 1.0);
    assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![0, 9, 0, 0])).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn entropy_at_most_one_and_one_only_when_uniform(counts in histogram()) {
        let h = TokenHistogram::from_counts(counts.clone());
        let e = normalized_entropy(&h).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&e));
        let uniform = counts.iter().all(|&c| c == counts[0]);
        if uniform {
            prop_assert!((e - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(e < 1.0 - 1e-12);
        }
    }

    #[test]
    fn usage_ignores_label_permutation(counts in histogram(), seed in any::<u64>()) {
        let mut permuted = counts.clone();
        // Fisher-Yates with a tiny LCG; any permutation will do.
        let mut s = seed;
        for i in (1..permuted.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            permuted.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = code_usage(&TokenHistogram::from_counts(counts.clone())).unwrap();
        let b = code_usage(&TokenHistogram::from_counts(permuted.clone())).unwrap();
        prop_assert_eq!(a, b);
        let ea = normalized_entropy(&TokenHistogram::from_counts(counts)).unwrap();
        let eb = normalized_entropy(&TokenHistogram::from_counts(permuted)).unwrap();
        prop_assert!((ea - eb).abs() < 1e-12);
    }

    #[test]
    fn bitrate_is_linear_in_token_rate(rate in 0.1f64..1000.0, k in 0.1f64..10.0, bits in 1u32..=24) {
        let size = 1u64 << bits;
        let a = bitrate_kbps(rate, size).unwrap();
        let b = bitrate_kbps(rate * k, size).unwrap();
        prop_assert!((b - a * k).abs() <= 1e-9 * b.abs().max(1.0));
        prop_assert!((a - rate * bits as f64 / 1000.0).abs() < 1e-9 * a.max(1.0));
    }
}
