use proptest::prelude::*;
use rbm_targets::tfic::hadamard;
use rbm_targets::{hook_distribution, mini_pattern_distribution};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hadamard_matches_the_explicit_matrix(k in 0u32..7, v in prop::collection::vec(-1.0f64..1.0, 64)) {
        let n = 1usize << k;
        let x = &v[..n];
        let mut fast = x.to_vec();
        hadamard(&mut fast);
        for (y, f) in fast.iter().enumerate() {
            let slow: f64 = x
                .iter()
                .enumerate()
                .map(|(z, a)| if (y & z).count_ones() % 2 == 0 { *a } else { -*a })
                .sum::<f64>()
                / (n as f64).sqrt();
            prop_assert!((f - slow).abs() < 1e-12);
        }
        hadamard(&mut fast);
        for (a, b) in fast.iter().zip(x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_tables_are_normalized(side in 4usize..6, m in 4usize..6, q in 0.01f64..0.99) {
        let hook = hook_distribution(side, q).unwrap();
        prop_assert!((hook.total() - 1.0).abs() < 1e-10);
        let mini = mini_pattern_distribution(m, q).unwrap();
        prop_assert!((mini.total() - 1.0).abs() < 1e-10);
        prop_assert!(mini.entries().iter().all(|e| e.1 > 0.0));
    }
}
