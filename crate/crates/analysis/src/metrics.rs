//! Accuracy proxies computed from samples alone: a Gaussian-smoothed KL
//! divergence, coarse-grained KL and L¹ distances, and empirical entropies
//! for state spaces too large to tabulate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use rbm_core::exact::binary_entropy;
use rbm_core::rng::{self, Rng};
use rbm_core::sum::{kahan, LogSumExp};
use rbm_core::{Error, Result, SampleSet};

/// Rows packed into 64-bit words, with multiplicities, in sorted order.
fn packed_counts(samples: &SampleSet) -> BTreeMap<Vec<u64>, usize> {
    let words = samples.m().div_ceil(64).max(1);
    let mut out = BTreeMap::new();
    for row in samples.rows() {
        let mut key = vec![0u64; words];
        for (i, &b) in row.iter().enumerate() {
            key[i / 64] |= (b as u64) << (i % 64);
        }
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

fn hamming(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

/// `ln N_σ` with `N_σ = Σ_d C(m,d) e^{-d/2σ²} = (1 + e^{-1/2σ²})^m`.
pub fn log_kernel_norm(m: usize, sigma: f64) -> f64 {
    m as f64 * (-1.0 / (2.0 * sigma * sigma)).exp().ln_1p()
}

/// Hamming-distance histograms between every distinct test state and the
/// model samples. Building it is the expensive part; evaluating the smoothed
/// divergence for another `σ` is then cheap.
#[derive(Debug, Clone)]
pub struct DistanceProfile {
    m: usize,
    /// `(p̃(x;T), histogram of d(x, x̂) over T̂ divided by |T̂|)` per distinct test state.
    rows: Vec<(f64, Vec<(usize, f64)>)>,
}

impl DistanceProfile {
    pub fn new(test: &SampleSet, model: &SampleSet) -> Result<Self> {
        if test.m() != model.m() {
            return Err(Error::DimensionMismatch {
                what: "model sample width",
                expected: test.m(),
                got: model.m(),
            });
        }
        if test.is_empty() || model.is_empty() {
            return Err(Error::invalid("smoothed divergence needs nonempty sample sets"));
        }
        let m = test.m();
        let t_counts = packed_counts(test);
        let mod_counts: Vec<(Vec<u64>, usize)> = packed_counts(model).into_iter().collect();
        let nt = test.len() as f64;
        let nm = model.len() as f64;
        let mut rows = Vec::with_capacity(t_counts.len());
        let mut hist = vec![0usize; m + 1];
        for (x, c) in t_counts {
            hist.iter_mut().for_each(|h| *h = 0);
            for (y, cy) in &mod_counts {
                hist[hamming(&x, y)] += cy;
            }
            let sparse = hist
                .iter()
                .enumerate()
                .filter(|e| *e.1 > 0)
                .map(|(d, &h)| (d, h as f64 / nm))
                .collect();
            rows.push((c as f64 / nt, sparse));
        }
        Ok(Self { m, rows })
    }

    /// `D_KL(p̃(·;T) ‖ p̃_σ(·;T̂))`.
    pub fn kl(&self, sigma: f64) -> f64 {
        let beta = 1.0 / (2.0 * sigma * sigma);
        let ln_norm = log_kernel_norm(self.m, sigma);
        kahan(self.rows.iter().map(|(p, hist)| {
            let mut lse = LogSumExp::new();
            for &(d, h) in hist {
                lse.add(h.ln() - beta * d as f64);
            }
            p * (p.ln() - lse.value() + ln_norm)
        }))
    }
}

/// Gaussian-smoothed empirical divergence of the model samples from the test set.
pub fn gaussian_smoothed_kl(test: &SampleSet, model: &SampleSet, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    Ok(DistanceProfile::new(test, model)?.kl(sigma))
}

/// 64 log-spaced widths on `[0.05, 2]`.
pub fn default_sigma_grid() -> Vec<f64> {
    log_grid(0.05, 2.0, 64)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| match k {
            0 => lo,
            k if k == count - 1 => hi,
            k => (a + (b - a) * k as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Grid minimizer of the smoothed divergence between test and training data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub sigma: f64,
    pub value: f64,
    pub curve: Vec<(f64, f64)>,
}

pub fn calibrate_sigma(test: &SampleSet, train: &SampleSet, grid: &[f64]) -> Result<Calibration> {
    if grid.is_empty() || grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("sigma grid must be nonempty and positive"));
    }
    let profile = DistanceProfile::new(test, train)?;
    let curve: Vec<(f64, f64)> = grid.iter().map(|&s| (s, profile.kl(s))).collect();
    let &(sigma, value) = curve
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty grid");
    Ok(Calibration { sigma, value, curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Local,
    Random,
}

/// Disjoint groups of visible units and the activation threshold `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
    pub kind: PartitionKind,
    pub r: f64,
}

impl Partition {
    /// Checks that the groups are nonempty and cover `0..m` exactly once.
    pub fn validate(&self, m: usize) -> Result<()> {
        let mut seen = vec![false; m];
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::invalid("empty partition group"));
            }
            for &i in g {
                if i >= m || seen[i] {
                    return Err(Error::invalid(format!("unit {i} out of range or assigned twice")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("partition does not cover every unit"));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::invalid("threshold r must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `count` near-equal contiguous ranges of `0..len`.
fn bands(len: usize, count: usize) -> Vec<std::ops::Range<usize>> {
    (0..count).map(|k| k * len / count..(k + 1) * len / count).collect()
}

/// Splits `m` units into `l` groups. Local groups are rectangular blocks of
/// the `shape = (rows, cols)` image grid (or contiguous index ranges without
/// a shape); random groups are a balanced random assignment.
pub fn make_partitions(
    m: usize,
    l: usize,
    kind: PartitionKind,
    shape: Option<(usize, usize)>,
    r: f64,
    rng: &mut Rng,
) -> Result<Partition> {
    if l == 0 || l > m {
        return Err(Error::invalid(format!("group count {l} must be in 1..={m}")));
    }
    let groups = match kind {
        PartitionKind::Random => {
            let mut idx: Vec<usize> = (0..m).collect();
            rng::shuffle(rng, &mut idx);
            let mut groups = vec![Vec::new(); l];
            for (k, i) in idx.into_iter().enumerate() {
                groups[k % l].push(i);
            }
            groups.iter_mut().for_each(|g| g.sort_unstable());
            groups
        }
        PartitionKind::Local => match shape {
            None => bands(m, l).into_iter().map(|r| r.collect()).collect(),
            Some((rows, cols)) => {
                if rows * cols != m {
                    return Err(Error::invalid(format!("shape {rows}x{cols} does not match {m} units")));
                }
                // Block grid gr × gc = l with an aspect close to the image's.
                let ideal = (l as f64 * rows as f64 / cols as f64).sqrt();
                let gr = (1..=l)
                    .filter(|d| l % d == 0 && *d <= rows && l / d <= cols)
                    .min_by(|a, b| {
                        let da = (*a as f64 - ideal).abs();
                        let db = (*b as f64 - ideal).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .ok_or_else(|| Error::invalid(format!("{l} blocks do not tile a {rows}x{cols} grid")))?;
                let gc = l / gr;
                let mut groups = Vec::with_capacity(l);
                for rb in bands(rows, gr) {
                    for cb in bands(cols, gc) {
                        groups.push(rb.clone().flat_map(|r| cb.clone().map(move |c| r * cols + c)).collect());
                    }
                }
                groups
            }
        },
    };
    let p = Partition { groups, kind, r };
    p.validate(m)?;
    Ok(p)
}

/// `y_α = 1` iff at least a fraction `r` of the units in group `α` are active.
pub fn coarse_grain(samples: &SampleSet, partition: &Partition) -> Result<SampleSet> {
    partition.validate(samples.m())?;
    let l = partition.groups.len();
    let thresholds: Vec<f64> = partition.groups.iter().map(|g| partition.r * g.len() as f64).collect();
    let mut out = SampleSet::with_capacity(l, samples.len());
    let mut y = vec![0u8; l];
    for row in samples.rows() {
        for ((g, t), yv) in partition.groups.iter().zip(&thresholds).zip(y.iter_mut()) {
            let active = g.iter().filter(|&&i| row[i] == 1).count() as f64;
            *yv = (active >= *t) as u8;
        }
        out.push(&y);
    }
    Ok(out)
}

fn frequencies(samples: &SampleSet) -> BTreeMap<Vec<u64>, f64> {
    let n = samples.len() as f64;
    packed_counts(samples)
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n))
        .collect()
}

/// Empirical `D_KL(p̃(·;T') ‖ p̃(·;T̂'))`; `+∞` when some test state never
/// occurs among the model samples.
pub fn coarse_kl(test: &SampleSet, model: &SampleSet) -> Result<f64> {
    if test.is_empty() || model.is_empty() {
        return Err(Error::invalid("empirical divergence of an empty sample set"));
    }
    let q = frequencies(model);
    let mut terms = Vec::new();
    for (k, p) in frequencies(test) {
        match q.get(&k) {
            Some(&qv) => terms.push(p * (p / qv).ln()),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(kahan(terms).max(0.0))
}

/// `Σ_y |p̃(y;T') − p̃(y;T̂')|`.
pub fn l1_distance(test: &SampleSet, model: &SampleSet) -> Result<f64> {
    if test.is_empty() || model.is_empty() {
        return Err(Error::invalid("empirical distance of an empty sample set"));
    }
    let p = frequencies(test);
    let q = frequencies(model);
    let mut keys: Vec<&Vec<u64>> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(kahan(keys.into_iter().map(|k| {
        (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs()
    })))
}

/// `σ_w = sqrt(Σ w² / (MN − 1))`.
pub fn weights_std(params: &rbm_core::RbmParams) -> f64 {
    params.weights_std()
}

/// Entropy of the empirical distribution of a sample set of any width.
pub fn empirical_entropy(samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("entropy of an empty sample set"));
    }
    Ok(kahan(frequencies(samples).into_values().map(|p| -p * p.ln())))
}

/// Total correlation of the empirical distribution of a sample set.
pub fn empirical_total_correlation(samples: &SampleSet) -> Result<f64> {
    let s = empirical_entropy(samples)?;
    let marg: f64 = samples.unit_means().into_iter().map(binary_entropy).sum();
    Ok(marg - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rbm_core::rng::stream;

    #[test]
    fn hand_case_divergence_and_distance() {
        let t = SampleSet::from_words(2, &[0, 0, 1]);
        let q = SampleSet::from_words(2, &[0, 1, 1, 1]);
        let want = (2.0f64 / 3.0) * ((2.0 / 3.0) / 0.25f64).ln() + (1.0f64 / 3.0) * ((1.0 / 3.0) / 0.75f64).ln();
        assert!((coarse_kl(&t, &q).unwrap() - want).abs() < 1e-15);
        assert!((l1_distance(&t, &q).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let d = SampleSet::from_words(2, &[3]);
        assert_eq!(coarse_kl(&t, &d).unwrap(), f64::INFINITY);
        assert_eq!(l1_distance(&t, &d).unwrap(), 2.0);
        assert_eq!(coarse_kl(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn majority_rule_thresholds() {
        let p = Partition {
            groups: vec![vec![0, 1, 2]],
            kind: PartitionKind::Local,
            r: 0.5,
        };
        let s = SampleSet::from_flat(3, vec![1, 1, 0, 1, 0, 0]).unwrap();
        let y = coarse_grain(&s, &p).unwrap();
        assert_eq!(y.flat(), &[1, 0]);
        let zero = Partition { r: 0.0, ..p.clone() };
        assert_eq!(
            coarse_grain(&SampleSet::from_words(3, &[0]), &zero).unwrap().flat(),
            &[1]
        );
    }

    #[test]
    fn partitions_cover_units() {
        let mut r = stream(1, 0);
        let local = make_partitions(35, 7, PartitionKind::Local, Some((7, 5)), 1.0, &mut r).unwrap();
        assert_eq!(local.groups.len(), 7);
        let id = make_partitions(35, 35, PartitionKind::Local, Some((7, 5)), 1.0, &mut r).unwrap();
        assert!(id.groups.iter().all(|g| g.len() == 1));
        let rand = make_partitions(10, 3, PartitionKind::Random, None, 1.0, &mut r).unwrap();
        let sizes: Vec<usize> = rand.groups.iter().map(|g| g.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|&s| s == 3 || s == 4));
        assert!(make_partitions(4, 5, PartitionKind::Random, None, 1.0, &mut r).is_err());
        let again = make_partitions(10, 3, PartitionKind::Random, None, 1.0, &mut stream(1, 0)).unwrap();
        let first = make_partitions(10, 3, PartitionKind::Random, None, 1.0, &mut stream(1, 0)).unwrap();
        assert_eq!(again, first);
    }

    #[test]
    fn single_kernel_closed_form() {
        let t = SampleSet::from_words(6, &[0b000111]);
        let q = SampleSet::from_words(6, &[0b100001]);
        let sigma = 0.7;
        let d = 3.0;
        let want = log_kernel_norm(6, sigma) + d / (2.0 * sigma * sigma);
        assert!((gaussian_smoothed_kl(&t, &q, sigma).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn weights_std_formula() {
        let p = rbm_core::RbmParams::new(2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert!((weights_std(&p) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
