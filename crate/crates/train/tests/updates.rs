//! Stochastic updates and the exact flow against enumeration oracles.

use proptest::prelude::*;
use rbm_core::exact::{cd_distribution, exact_loss, model_table};
use rbm_core::params::logistic;
use rbm_core::rng::{stream, uniform};
use rbm_core::state::unpack_into;
use rbm_core::{EnumerationCap, RbmParams, SampleSet, TabulatedDistribution};
use rbm_train::flow::FlowOrder;
use rbm_train::update::{cd_increment, pcd_increment};
use rbm_train::{data_average_gradient, flow_rhs, PersistentChains};

fn random_machine(m: usize, n: usize, scale: f64, seed: u64) -> RbmParams {
    let mut r = stream(seed, 77);
    let mut draw = |k: usize| {
        (0..k)
            .map(|_| scale * (2.0 * uniform(&mut r) - 1.0))
            .collect::<Vec<_>>()
    };
    let (w, a, b) = (draw(m * n), draw(m), draw(n));
    RbmParams::new(m, n, w, a, b).unwrap()
}

/// `Σ_x q(x) (x_i σ(u_j), x_i, σ(u_j))`, evaluated term by term.
fn expected_stats(params: &RbmParams, q: &[f64]) -> Vec<f64> {
    let (m, n) = (params.m, params.n);
    let mut g = RbmParams::zeros(m, n);
    let mut x = vec![0u8; m];
    for (s, &qs) in q.iter().enumerate() {
        unpack_into(s as u64, &mut x);
        for j in 0..n {
            let u = params.b[j] + (0..m).map(|i| params.weight(i, j) * x[i] as f64).sum::<f64>();
            let pj = logistic(u);
            g.b[j] += qs * pj;
            for i in 0..m {
                g.w[i * n + j] += qs * x[i] as f64 * pj;
            }
        }
        for i in 0..m {
            g.a[i] += qs * x[i] as f64;
        }
    }
    g.to_vector()
}

#[test]
fn data_average_matches_hidden_enumeration() {
    let p = random_machine(4, 3, 1.5, 1);
    let batch = SampleSet::from_words(4, &[3, 5, 15, 0, 9, 9]);
    let fast = data_average_gradient(&p, &batch).unwrap().to_vector();
    // Σ_h p(h|x) (x_i h_j, x_i, h_j) with p(h|x) from the joint energies.
    let mut slow = vec![0.0; fast.len()];
    let mut h = vec![0u8; 3];
    for x in batch.rows() {
        let weights: Vec<f64> = (0..8u64)
            .map(|hs| {
                unpack_into(hs, &mut h);
                (-p.energy(x, &h).unwrap()).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        for (hs, wgt) in weights.iter().enumerate() {
            unpack_into(hs as u64, &mut h);
            let ph = wgt / z / batch.len() as f64;
            for i in 0..4 {
                for j in 0..3 {
                    slow[i * 3 + j] += ph * (x[i] * h[j]) as f64;
                }
                slow[12 + i] += ph * x[i] as f64;
            }
            for j in 0..3 {
                slow[16 + j] += ph * h[j] as f64;
            }
        }
    }
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = samples.len() as f64;
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|d| samples.iter().map(|s| s[d]).sum::<f64>() / k)
        .collect();
    let se = (0..dim)
        .map(|d| (samples.iter().map(|s| (s[d] - mean[d]).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn cd_increment_is_unbiased_for_the_n_step_distribution() {
    let p = random_machine(2, 2, 1.5, 2);
    let batch = SampleSet::from_words(2, &[0, 3, 3, 1]);
    let empirical = TabulatedDistribution::empirical(&batch).unwrap();
    for n_cd in [1, 3] {
        let mut r = stream(3, n_cd as u64);
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| cd_increment(&p, &batch, n_cd, &mut r).unwrap().to_vector())
            .collect();
        let (mean, se) = mean_and_se(&draws);
        let pos = expected_stats(&p, &empirical.to_dense());
        let neg = expected_stats(&p, &cd_distribution(&p, &empirical, n_cd).unwrap().to_dense());
        for d in 0..mean.len() {
            let exact = pos[d] - neg[d];
            assert!(
                (mean[d] - exact).abs() < 5.0 * se[d] + 1e-12,
                "n_cd {n_cd}, entry {d}: {} vs {exact}",
                mean[d]
            );
        }
    }
}

#[test]
fn first_cd_step_on_correlated_bits_does_not_anticorrelate() {
    let p = RbmParams::zeros(2, 3);
    let target = TabulatedDistribution::new(2, vec![(0, 0.5), (3, 0.5)]).unwrap();
    let pos = expected_stats(&p, &target.to_dense());
    let neg = expected_stats(&p, &cd_distribution(&p, &target, 1).unwrap().to_dense());
    for d in 0..6 {
        assert!(pos[d] - neg[d] >= -1e-12);
    }
}

#[test]
fn pcd_negative_phase_tracks_the_model() {
    let p = random_machine(3, 3, 1.0, 4);
    let batch = SampleSet::from_words(3, &[1, 6, 7, 2]);
    let mut r = stream(5, 0);
    let mut chains = PersistentChains::random(3, 100, &mut r);
    chains.advance(&p, 200, &mut r);
    let draws: Vec<Vec<f64>> = (0..10_000)
        .map(|_| pcd_increment(&p, &mut chains, &batch, 1, &mut r).unwrap().to_vector())
        .collect();
    let (mean, se) = mean_and_se(&draws);
    let model = model_table(&p, EnumerationCap::default()).unwrap().to_dense();
    let pos = data_average_gradient(&p, &batch).unwrap().to_vector();
    let neg = expected_stats(&p, &model);
    for d in 0..mean.len() {
        // Consecutive increments share chains, so allow for their correlation.
        assert!((mean[d] - (pos[d] - neg[d])).abs() < 8.0 * se[d] + 1e-4, "entry {d}");
    }
}

#[test]
fn same_seed_same_trajectory() {
    let p = random_machine(3, 2, 1.0, 6);
    let batch = SampleSet::from_words(3, &[1, 6, 7, 2]);
    let run = || {
        let mut r = stream(9, 0);
        let mut chains = PersistentChains::random(3, 4, &mut r);
        let mut q = p.clone();
        for _ in 0..50 {
            q = rbm_train::pcd_update(&q, &mut chains, &batch, 2, 0.1, &mut r).unwrap();
        }
        (q, chains)
    };
    assert_eq!(run(), run());
}

#[test]
fn flow_is_stationary_at_a_representable_target() {
    let p = random_machine(4, 2, 1.0, 7);
    let target = model_table(&p, EnumerationCap::default()).unwrap().to_dense();
    for order in [FlowOrder::INFINITE, FlowOrder::Steps(1), FlowOrder::Steps(4)] {
        let g = flow_rhs(&p, &target, order).unwrap().to_vector();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "{order:?}: {norm}");
    }
}

fn targets() -> Vec<TabulatedDistribution> {
    let smooth = (0..16u64).map(|s| (s, 1.0 + (s as f64 * 1.3).sin().abs())).collect();
    vec![
        mini_pattern(),
        TabulatedDistribution::new(4, vec![(0, 0.5), (15, 0.5)]).unwrap(),
        TabulatedDistribution::from_weights(4, smooth).unwrap(),
    ]
}

/// The m=4 one-dimensional pattern target, written out by hand.
fn mini_pattern() -> TabulatedDistribution {
    // One white core pixel, black neighbours, and the opposite pixel free.
    let mut e = Vec::new();
    for c in 0..4u64 {
        let core = 1 << c;
        let free = 1 << ((c + 2) % 4);
        e.push((core, 0.25 * 0.9));
        e.push((core | free, 0.25 * 0.1));
    }
    TabulatedDistribution::from_weights(4, e).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn infinite_order_flow_is_minus_loss_gradient(seed in 0u64..1_000_000) {
        let p = random_machine(4, 2, 1.5, seed);
        for target in targets() {
            let dense = target.to_dense();
            let rhs = flow_rhs(&p, &dense, FlowOrder::INFINITE).unwrap().to_vector();
            let v = p.to_vector();
            let h = 1e-5;
            let fd: Vec<f64> = (0..v.len())
                .map(|k| {
                    let mut up = v.clone();
                    let mut dn = v.clone();
                    up[k] += h;
                    dn[k] -= h;
                    let lu = exact_loss(&RbmParams::from_vector(4, 2, &up), &target, EnumerationCap::default()).unwrap();
                    let ld = exact_loss(&RbmParams::from_vector(4, 2, &dn), &target, EnumerationCap::default()).unwrap();
                    -(lu - ld) / (2.0 * h)
                })
                .collect();
            let diff = rhs.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = rhs.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(diff <= 1e-6 * norm, "relative error {}", diff / norm);
        }
    }
}
