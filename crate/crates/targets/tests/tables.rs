use rbm_core::exact::{entropy, total_correlation};
use rbm_core::rng::stream;
use rbm_core::TabulatedDistribution;
use rbm_targets::patterns::hook_spec;
use rbm_targets::tfic::{distribution_from, ground_state, TficSpectrum};
use rbm_targets::{
    hook_distribution, mini_pattern_distribution, sample, tfic_ground_state, tfic_symmetry_checks, Basis,
};

fn assert_normalized(d: &TabulatedDistribution) {
    assert!((d.total() - 1.0).abs() < 1e-10, "total {}", d.total());
}

#[test]
fn hook_table() {
    let d = hook_distribution(5, 0.1).unwrap();
    assert_normalized(&d);
    // 25 placements times 2^10 free pixels, minus 100 images that show the hook twice.
    assert_eq!(d.support_size(), 25_500);
    let pairs: usize = hook_spec(5, 0.1).unwrap().placements().len() << 10;
    assert_eq!(pairs, 25_600);
    assert!((entropy(&d) - 6.47).abs() < 0.01, "S = {}", entropy(&d));
    assert!(
        (total_correlation(&d) - 4.53).abs() < 0.01,
        "C = {}",
        total_correlation(&d)
    );
}

#[test]
fn mini_patterns() {
    for m in [4, 5] {
        let d = mini_pattern_distribution(m, 0.1).unwrap();
        assert_normalized(&d);
        assert!(total_correlation(&d) > 0.0);
    }
}

#[test]
fn tfic_energy_matches_free_fermions_at_m20() {
    let gs = ground_state(20, 1.0).unwrap();
    let e = TficSpectrum::new(20, 1.0).ground_energy();
    assert!(((gs.energy - e) / e).abs() < 1e-9, "{} vs {e}", gs.energy);
    let z = distribution_from(&gs, Basis::Z).unwrap();
    let x = distribution_from(&gs, Basis::X).unwrap();
    assert_normalized(&z);
    assert_normalized(&x);
    assert!((entropy(&z) - 8.028).abs() < 0.02, "S_z = {}", entropy(&z));
    assert!((total_correlation(&z) - 1.441).abs() < 0.02);
    assert!((entropy(&x) - 8.721).abs() < 0.02, "S_x = {}", entropy(&x));
    assert!((total_correlation(&x) - 5.142).abs() < 0.02);
    assert!(tfic_symmetry_checks(&z, Basis::Z).passed);
    assert!(tfic_symmetry_checks(&x, Basis::X).passed);
}

#[test]
fn tfic_paramagnetic_limit() {
    let d = tfic_ground_state(12, 1e4, Basis::Z).unwrap();
    let point = TabulatedDistribution::new(12, vec![(0, 1.0)]).unwrap();
    assert!(d.total_variation(&point) < 1e-6);
}

#[test]
fn tfic_ordered_x_basis_concentrates_on_aligned_states() {
    let d = tfic_ground_state(20, 0.5, Basis::X).unwrap();
    let up = d.prob(0);
    let down = d.prob((1 << 20) - 1);
    assert!((up - down).abs() < 1e-10);
    assert!((up - 0.36).abs() < 0.03, "p(all-up) = {up}");
}

#[test]
fn hook_samples_pass_chi_square() {
    let d = hook_distribution(4, 0.1).unwrap();
    let n = 1_000_000usize;
    let s = sample(&d, n, &mut stream(5, 0));
    let mut counts = std::collections::HashMap::new();
    for w in s.words() {
        *counts.entry(w).or_insert(0usize) += 1;
    }
    let mut chi2 = 0.0;
    for &(x, p) in d.entries() {
        let e = p * n as f64;
        let o = *counts.get(&x).unwrap_or(&0) as f64;
        chi2 += (o - e).powi(2) / e;
    }
    assert_eq!(counts.len() <= d.support_size(), true);
    // Wilson-Hilferty upper 1% point of the chi-square distribution.
    let k = (d.support_size() - 1) as f64;
    let crit = k * (1.0 - 2.0 / (9.0 * k) + 2.326 * (2.0 / (9.0 * k)).sqrt()).powi(3);
    assert!(chi2 < crit, "chi2 {chi2} above {crit}");
}

#[test]
fn digit_table_counts() {
    let (d, stats) = rbm_targets::digit_distribution_with_stats(0.1).unwrap();
    assert_normalized(&d);
    assert_eq!(
        stats.per_digit_support,
        [8513, 38_558_138, 565_391, 565_391, 56_464, 565_391, 56_464, 66_624, 8513, 56_464]
    );
    assert_eq!(stats.summed_support(), 40_507_353);
    // Some images show more than one digit, so the union is smaller.
    assert_eq!(d.support_size(), 40_501_311);
    for mass in stats.per_digit_mass {
        assert!((mass - 0.1).abs() < 1e-10);
    }
    assert!((entropy(&d) - 8.35).abs() < 0.01);
}
