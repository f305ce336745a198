//! Convolution and max-pooling against literal nested loops.

mod support;

use digit_triad::nn::ConvAlgo;
use proptest::prelude::*;
use support::{rng, ConvCase, PoolCase, ORACLE_TOL};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conv_matches_nested_loops(seed in any::<u64>()) {
        let case = ConvCase::random(seed);
        prop_assert!(case.h <= 8 && case.w <= 8 && case.c <= 3 && case.f <= 4);
        for algo in [ConvAlgo::Direct, ConvAlgo::Im2col] {
            let d = case.max_deviation(algo);
            prop_assert!(d <= ORACLE_TOL, "{:?} deviates by {} on {:?}", algo, d, case);
        }
    }

    #[test]
    fn maxpool_matches_nested_loops(seed in any::<u64>()) {
        let case = PoolCase::random(seed);
        prop_assert!(case.h <= 8 && case.w <= 8);
        let d = case.max_deviation();
        prop_assert!(d <= ORACLE_TOL, "deviates by {} on {:?}", d, case);
    }
}

/// The largest configuration covered, pinned rather than sampled.
#[test]
fn largest_case_8x8x3_with_4_filters() {
    for (stride, padding) in [(1, 1), (1, 0)] {
        let case = ConvCase::with_values(2, 8, 8, 3, 4, 3, stride, padding, &mut rng(9));
        for algo in [ConvAlgo::Direct, ConvAlgo::Im2col] {
            assert!(case.max_deviation(algo) <= ORACLE_TOL);
        }
    }
    let pool = PoolCase {
        n: 1,
        h: 8,
        w: 8,
        c: 3,
        pool: 2,
        stride: 2,
        x: (0..192).map(|i| ((i * 7919) % 193) as f64).collect(),
        grad: (0..48).map(|i| i as f64).collect(),
    };
    assert!(pool.max_deviation() <= ORACLE_TOL);
}
