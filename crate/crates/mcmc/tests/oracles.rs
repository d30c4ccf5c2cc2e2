//! Autocorrelation estimators against closed forms and exact transition kernels.

use nalgebra::{DMatrix, SymmetricEigen};
use rbm_core::exact::{model_table, visible_kernel};
use rbm_core::rng::{stream, uniform};
use rbm_core::{EnumerationCap, RbmParams, SampleSet};
use rbm_mcmc::autocorr::{
    estimate_tau, exact_unit_tau, observable_iact, series_correlation, sokal_tau, unit_correlation, TauProtocol,
};
use rbm_mcmc::gibbs::run_chain;
use rbm_mcmc::{ChainState, Observable, Sampler};

fn random_machine(m: usize, n: usize, scale: f64, seed: u64) -> RbmParams {
    let mut r = stream(seed, 99);
    let mut draw = |k: usize| {
        (0..k)
            .map(|_| scale * (2.0 * uniform(&mut r) - 1.0))
            .collect::<Vec<_>>()
    };
    let w = draw(m * n);
    let a = draw(m);
    let b = draw(n);
    RbmParams::new(m, n, w, a, b).unwrap()
}

/// Unit-averaged τ from power sums `Σ_n ⟨f, Pⁿ f⟩_π`, without any eigendecomposition.
fn power_sum_tau(params: &RbmParams) -> f64 {
    let size = 1usize << params.m;
    let k = visible_kernel(params).unwrap();
    let pi = model_table(params, EnumerationCap::default()).unwrap().to_dense();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..params.m {
        let mean: f64 = (0..size).filter(|x| x >> i & 1 == 1).map(|x| pi[x]).sum();
        let f: Vec<f64> = (0..size).map(|x| (x >> i & 1) as f64 - mean).collect();
        let inner = |g: &[f64]| -> f64 { (0..size).map(|x| pi[x] * f[x] * g[x]).sum() };
        let g0 = inner(&f);
        den += g0;
        let mut acc = g0;
        let mut g = f.clone();
        for _ in 0..200_000 {
            g = (0..size)
                .map(|a| (0..size).map(|b| k[a * size + b] * g[b]).sum())
                .collect();
            let c = inner(&g);
            acc += 2.0 * c;
            if c.abs() < 1e-16 * g0 {
                break;
            }
        }
        num += acc;
    }
    num / den
}

fn ar1(rho: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut r = stream(seed, 0);
    let mut x = 0.0;
    for _ in 0..1000 {
        x = rho * x + uniform(&mut r) - 0.5;
    }
    (0..len)
        .map(|_| {
            x = rho * x + uniform(&mut r) - 0.5;
            x
        })
        .collect()
}

#[test]
fn ar1_series_recover_geometric_tau() {
    for (k, rho) in [0.5, 0.8, 0.95].into_iter().enumerate() {
        let s = ar1(rho, 1_000_000, 10 + k as u64);
        let t = sokal_tau(&series_correlation(&s).unwrap(), 5.0).unwrap();
        let exact = (1.0 + rho) / (1.0 - rho);
        assert!(t.reliable);
        assert!((t.tau / exact - 1.0).abs() < 0.05, "rho {rho}: {} vs {exact}", t.tau);
    }
}

#[test]
fn white_noise_has_unit_tau() {
    let s = ar1(0.0, 1_000_000, 3);
    let t = sokal_tau(&series_correlation(&s).unwrap(), 5.0).unwrap();
    assert!((t.tau - 1.0).abs() < 0.05);
}

#[test]
fn spectral_and_power_sum_routes_agree() {
    for seed in 0..5 {
        let p = random_machine(3, 3, 2.0, seed);
        let a = exact_unit_tau(&p).unwrap();
        let b = power_sum_tau(&p);
        assert!((a / b - 1.0).abs() < 1e-8, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn estimated_tau_matches_exact_kernel() {
    for seed in 0..3 {
        let p = random_machine(3, 3, 2.5, seed);
        let exact = power_sum_tau(&p);
        let est = estimate_tau(&p, &TauProtocol::default(), 40 + seed).unwrap();
        assert!(est.estimate.reliable, "{:?}", est.diagnostics.note);
        assert!(
            (est.estimate.tau / exact - 1.0).abs() < 0.05,
            "seed {seed}: {} vs {exact}",
            est.estimate.tau
        );
    }
}

#[test]
fn weighted_average_identity() {
    let p = random_machine(4, 2, 2.0, 7);
    let s = run_chain(&p, &[0, 0, 0, 0], 1_000_000, 1, stream(8, 0)).unwrap();
    let unit = sokal_tau(&unit_correlation(&s).unwrap(), 5.0).unwrap().tau;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..4 {
        let series: Vec<f64> = s.rows().map(|x| x[i] as f64).collect();
        let c = series_correlation(&series).unwrap();
        let t = observable_iact(&s, |x| Observable::Unit(i).eval(x), 5.0).unwrap();
        num += c.g[0] * t.tau;
        den += c.g[0];
    }
    assert!((num / den / unit - 1.0).abs() < 0.02, "{} vs {unit}", num / den);
}

#[test]
fn bimodal_machine_is_flagged_unreliable() {
    let w = 30.0;
    let p = RbmParams::new(2, 1, vec![w, w], vec![-w / 2.0; 2], vec![-w]).unwrap();
    let k = visible_kernel(&p).unwrap();
    let pi = model_table(&p, EnumerationCap::default()).unwrap().to_dense();
    let sym = DMatrix::from_fn(4, 4, |a, b| {
        let s = (pi[a] / pi[b]).sqrt() * k[a * 4 + b];
        let t = (pi[b] / pi[a]).sqrt() * k[b * 4 + a];
        0.5 * (s + t)
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(ev[1] > 1.0 - 1e-5, "second eigenvalue {}", ev[1]);
    let protocol = TauProtocol {
        max_steps: 1 << 14,
        ..TauProtocol::default()
    };
    assert!(!estimate_tau(&p, &protocol, 1).unwrap().estimate.reliable);
}

#[test]
fn gibbs_chain_is_stationary_under_chi_square() {
    let p = random_machine(3, 3, 1.5, 21);
    let pi = model_table(&p, EnumerationCap::default()).unwrap().to_dense();
    let n = 200_000;
    let s = run_chain(&p, &[1, 0, 1], n * 20, 20, stream(22, 0)).unwrap();
    let mut counts = [0usize; 8];
    for w in s.words() {
        counts[w as usize] += 1;
    }
    let chi2: f64 = (0..8)
        .map(|x| {
            let e = pi[x] * s.len() as f64;
            (counts[x] as f64 - e).powi(2) / e
        })
        .sum();
    // Upper 1% point of chi-square with 7 degrees of freedom.
    assert!(chi2 < 18.475, "chi2 {chi2}");
}

#[test]
fn sample_mean_variance_follows_tau() {
    let p = random_machine(3, 2, 2.0, 5);
    let pi = model_table(&p, EnumerationCap::default()).unwrap();
    let g0 = {
        let mu = pi.marginals()[0];
        mu * (1.0 - mu)
    };
    let tau = single_unit_tau(&p);
    let (reps, len) = (2000, 2000);
    let mut r = stream(6, 0);
    let starts = pi.sample(reps, &mut r);
    let mut means = Vec::with_capacity(reps);
    let mut sampler = Sampler::new(&p);
    for (k, x0) in starts.rows().enumerate() {
        let mut ch = ChainState::new(x0.to_vec(), p.n, stream(6, 1 + k as u64));
        let rec: SampleSet = sampler.record(&mut ch, len, 1);
        means.push(rec.rows().map(|x| x[0] as f64).sum::<f64>() / len as f64);
    }
    let m = means.iter().sum::<f64>() / reps as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let predicted = g0 * tau / len as f64;
    assert!((var / predicted - 1.0).abs() < 0.1, "{var} vs {predicted}");
}

/// Exact τ of unit 0 by power sums.
fn single_unit_tau(params: &RbmParams) -> f64 {
    let size = 1usize << params.m;
    let k = visible_kernel(params).unwrap();
    let pi = model_table(params, EnumerationCap::default()).unwrap().to_dense();
    let mean: f64 = (0..size).filter(|x| x & 1 == 1).map(|x| pi[x]).sum();
    let f: Vec<f64> = (0..size).map(|x| (x & 1) as f64 - mean).collect();
    let inner = |g: &[f64]| -> f64 { (0..size).map(|x| pi[x] * f[x] * g[x]).sum() };
    let g0 = inner(&f);
    let mut acc = g0;
    let mut g = f.clone();
    for _ in 0..100_000 {
        g = (0..size)
            .map(|a| (0..size).map(|b| k[a * size + b] * g[b]).sum())
            .collect();
        let c = inner(&g);
        acc += 2.0 * c;
        if c.abs() < 1e-16 * g0 {
            break;
        }
    }
    acc / g0
}
