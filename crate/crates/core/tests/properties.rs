//! Randomized checks of the exact evaluators against brute-force joint sums.

use proptest::prelude::*;
use rbm_core::exact::{
    cd_distribution, entropy, exact_loss, log_partition, model_table, model_total_correlation, total_correlation,
};
use rbm_core::state::unpack_into;
use rbm_core::{EnumerationCap, RbmParams, TabulatedDistribution};

fn machine(max_units: usize, scale: f64) -> impl Strategy<Value = RbmParams> {
    (1usize..max_units, 1usize..max_units)
        .prop_filter("m + n within bound", move |(m, n)| m + n <= max_units)
        .prop_flat_map(move |(m, n)| {
            (
                prop::collection::vec(-scale..scale, m * n),
                prop::collection::vec(-scale..scale, m),
                prop::collection::vec(-scale..scale, n),
            )
                .prop_map(move |(w, a, b)| RbmParams::new(m, n, w, a, b).unwrap())
        })
}

fn distribution(m: usize) -> impl Strategy<Value = TabulatedDistribution> {
    prop::collection::vec(0.0f64..1.0, 1 << m).prop_map(move |mut v| {
        v[0] += 1e-3;
        let total: f64 = v.iter().sum();
        let entries = v
            .iter()
            .enumerate()
            .filter(|e| *e.1 > 0.0)
            .map(|(s, p)| (s as u64, p / total))
            .collect();
        TabulatedDistribution::new(m, entries).unwrap()
    })
}

/// `ln Σ_{x,h} e^{-E(x,h)}` straight from the energy function.
fn brute_log_z(p: &RbmParams) -> f64 {
    let mut x = vec![0u8; p.m];
    let mut h = vec![0u8; p.n];
    let mut terms = Vec::new();
    for xs in 0..1u64 << p.m {
        unpack_into(xs, &mut x);
        for hs in 0..1u64 << p.n {
            unpack_into(hs, &mut h);
            terms.push(-p.energy(&x, &h).unwrap());
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn kl(p: &TabulatedDistribution, q: &[f64]) -> f64 {
    p.entries().iter().map(|&(s, v)| v * (v / q[s as usize]).ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn log_partition_matches_joint_sum(p in machine(12, 1.5)) {
        let fast = log_partition(&p, EnumerationCap::default()).unwrap().log_z;
        let slow = brute_log_z(&p);
        prop_assert!(((fast - slow) / slow.abs().max(1.0)).abs() < 1e-10, "{} vs {}", fast, slow);
    }

    #[test]
    fn kl_decomposes_for_product_models(
        target in distribution(5),
        a in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let p = RbmParams::new(5, 1, vec![0.0; 5], a.clone(), vec![0.3]).unwrap();
        let loss = exact_loss(&p, &target, EnumerationCap::default()).unwrap();
        let marg = target.marginals();
        let per_unit: f64 = marg
            .iter()
            .zip(&a)
            .map(|(&pi, &ai)| {
                let qi = rbm_core::params::logistic(ai);
                let t = |u: f64, v: f64| if u > 0.0 { u * (u / v).ln() } else { 0.0 };
                t(pi, qi) + t(1.0 - pi, 1.0 - qi)
            })
            .sum();
        let rhs = total_correlation(&target) + per_unit;
        prop_assert!((loss - rhs).abs() < 1e-10, "{} vs {}", loss, rhs);
        prop_assert!(loss >= total_correlation(&target) - 1e-10);
    }

    #[test]
    fn loss_is_nonnegative_and_matches_table(p in machine(8, 1.0).prop_filter("m = 4", |p| p.m == 4), target in distribution(4)) {
        let loss = exact_loss(&p, &target, EnumerationCap::default()).unwrap();
        let table = model_table(&p, EnumerationCap::default()).unwrap().to_dense();
        prop_assert!(loss >= -1e-12);
        prop_assert!((loss - kl(&target, &table)).abs() < 1e-10);
    }

    #[test]
    fn product_models_have_no_correlation(
        m in 1usize..8,
        n in 1usize..5,
        a in prop::collection::vec(-3.0f64..3.0, 8),
        b in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let p = RbmParams::new(m, n, vec![0.0; m * n], a[..m].to_vec(), b[..n].to_vec()).unwrap();
        prop_assert!(model_total_correlation(&p, EnumerationCap::default()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn long_cd_runs_reach_the_model(p in machine(7, 1.0), seed_state in 0u64..8) {
        let m = p.m;
        let start = TabulatedDistribution::new(m, vec![(seed_state % (1 << m), 1.0)]).unwrap();
        let after = cd_distribution(&p, &start, 1000).unwrap();
        let model = model_table(&p, EnumerationCap::default()).unwrap();
        prop_assert!(after.total_variation(&model) < 1e-8, "tv {}", after.total_variation(&model));
    }

    #[test]
    fn entropy_is_bounded(target in distribution(6)) {
        let s = entropy(&target);
        prop_assert!(s >= -1e-12 && s <= 6.0 * std::f64::consts::LN_2 + 1e-12);
    }
}

#[test]
fn model_total_correlation_matches_joint_enumeration() {
    let p = RbmParams::new(
        3,
        3,
        vec![0.9, -1.2, 0.4, 0.3, 1.1, -0.7, -0.5, 0.8, 1.3],
        vec![0.2, -0.4, 0.1],
        vec![-0.3, 0.5, 0.0],
    )
    .unwrap();
    let mut joint = vec![0.0; 8];
    let mut x = vec![0u8; 3];
    let mut h = vec![0u8; 3];
    for xs in 0..8u64 {
        unpack_into(xs, &mut x);
        for hs in 0..8u64 {
            unpack_into(hs, &mut h);
            joint[xs as usize] += (-p.energy(&x, &h).unwrap()).exp();
        }
    }
    let z: f64 = joint.iter().sum();
    let dense: Vec<f64> = joint.iter().map(|v| v / z).collect();
    let oracle = total_correlation(&TabulatedDistribution::from_dense(3, &dense).unwrap());
    let fast = model_total_correlation(&p, EnumerationCap::default()).unwrap();
    assert!((fast - oracle).abs() < 1e-10);
}
