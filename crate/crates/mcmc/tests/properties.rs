use proptest::prelude::*;
use rbm_mcmc::autocorr::{autocovariance, sokal_tau, CorrelationEstimate};

proptest! {
    #[test]
    fn geometric_correlations_follow_closed_form(rho in 0.0f64..0.97, g0 in 0.01f64..10.0) {
        let g: Vec<f64> = (0..4000).map(|n| g0 * rho.powi(n)).collect();
        let est = CorrelationEstimate { g, variance_g0: g0, n_samples: 1 << 20, degenerate: false };
        let t = sokal_tau(&est, 5.0).unwrap();
        let n = t.n_max_used as i32;
        let closed = 1.0 + 2.0 * rho * (1.0 - rho.powi(n)) / (1.0 - rho);
        prop_assert!(t.reliable);
        prop_assert!((t.tau - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn fft_and_direct_autocovariance_agree(series in prop::collection::vec(-1.0f64..1.0, 300..700)) {
        let fast = autocovariance(&series, 60);
        let k = series.len();
        let mean = series.iter().sum::<f64>() / k as f64;
        for (n, v) in fast.iter().enumerate() {
            let direct: f64 = (0..k - n).map(|t| (series[t] - mean) * (series[t + n] - mean)).sum::<f64>() / k as f64;
            prop_assert!((v - direct).abs() < 1e-12);
        }
        prop_assert!(fast[0] >= fast.iter().skip(1).fold(0.0f64, |a, v| a.max(v.abs())) - 1e-12);
    }
}
