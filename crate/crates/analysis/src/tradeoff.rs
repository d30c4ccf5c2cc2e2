//! Power-law bound fits `Δ·τ^α ≥ c`, learning-stage classification and
//! finite-size collapse of learning curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 correlation-regime points, got {0}")]
    TooFewPoints(usize),
    #[error("all correlation-regime points have the same tau")]
    Degenerate,
    #[error("input lengths differ: {0} points, {1} mask entries")]
    Length(usize, usize),
}

/// Slope dispersion (coefficient of variation) above which early points
/// get more weight in the α estimate.
pub const DISPERSION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TAU_TOL: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 5;
/// Relative loss decrease over the look-ahead window below which the loss
/// counts as no longer decreasing.
pub const DEFAULT_STALL_TOL: f64 = 0.01;

fn window(i: usize, n: usize, half: usize) -> std::ops::Range<usize> {
    i.saturating_sub(half)..(i + half + 1).min(n)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// 5-point running median followed by a 5-point running mean, windows
/// shrinking at the ends.
pub fn smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let med: Vec<f64> = (0..n).map(|i| median(&mut values[window(i, n, 2)].to_vec())).collect();
    (0..n)
        .map(|i| {
            let w = &med[window(i, n, 2)];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// [`smooth`] applied to logarithms of positive values.
pub fn smooth_log(values: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    smooth(&logs).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub alpha: f64,
    pub c: f64,
    /// `Δτ^α − c` per input point.
    pub residuals: Vec<f64>,
    /// Coefficient of variation of the finite-difference slopes.
    pub slope_dispersion: f64,
    /// Whether early points were up-weighted because of high dispersion.
    pub weighted: bool,
    /// Direct least-squares fit `ln Δ = ln c′ − α′ ln τ` on the same points.
    pub direct_alpha: f64,
    pub direct_c: f64,
}

/// Largest `c` with `Δτ^α ≥ c` on every finite point.
pub fn bound_constant(points: &[(f64, f64)], alpha: f64) -> f64 {
    points
        .iter()
        .map(|&(d, t)| d * t.powf(alpha))
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min)
}

/// Fits `α` from the correlation-regime points (`mask`) and the tightest
/// `c` over all points. Points are `(delta, tau)` in trajectory order.
pub fn fit_bound(points: &[(f64, f64)], mask: &[bool]) -> Result<BoundFit, FitError> {
    if points.len() != mask.len() {
        return Err(FitError::Length(points.len(), mask.len()));
    }
    let corr: Vec<(f64, f64)> = points
        .iter()
        .zip(mask)
        .filter(|(p, &m)| m && p.0 > 0.0 && p.0.is_finite() && p.1 > 0.0)
        .map(|(p, _)| *p)
        .collect();
    if corr.len() < 3 {
        return Err(FitError::TooFewPoints(corr.len()));
    }
    let ld: Vec<f64> = smooth(&corr.iter().map(|p| p.0.ln()).collect::<Vec<_>>());
    let lt: Vec<f64> = smooth(&corr.iter().map(|p| p.1.ln()).collect::<Vec<_>>());
    let slopes: Vec<f64> = (1..corr.len())
        .filter(|&k| (lt[k] - lt[k - 1]).abs() >= 1e-12)
        .map(|k| -(ld[k] - ld[k - 1]) / (lt[k] - lt[k - 1]))
        .collect();
    if slopes.is_empty() {
        return Err(FitError::Degenerate);
    }
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / slopes.len() as f64;
    let dispersion = if mean.abs() > 0.0 {
        var.sqrt() / mean.abs()
    } else {
        f64::INFINITY
    };
    let weighted = dispersion > DISPERSION_THRESHOLD && slopes.len() > 1;
    let alpha = if weighted {
        // Linear weights from 1 at the first slope down to 0.25 at the last.
        let k = slopes.len() as f64 - 1.0;
        let (mut num, mut den) = (0.0, 0.0);
        for (i, s) in slopes.iter().enumerate() {
            let w = 1.0 - 0.75 * i as f64 / k;
            num += w * s;
            den += w;
        }
        num / den
    } else {
        mean
    };
    let c = bound_constant(points, alpha);
    let residuals = points.iter().map(|&(d, t)| d * t.powf(alpha) - c).collect();

    let rawt: Vec<f64> = corr.iter().map(|p| p.1.ln()).collect();
    let rawd: Vec<f64> = corr.iter().map(|p| p.0.ln()).collect();
    let n = rawt.len() as f64;
    let mt = rawt.iter().sum::<f64>() / n;
    let md = rawd.iter().sum::<f64>() / n;
    let sxx: f64 = rawt.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = rawt.iter().zip(&rawd).map(|(t, d)| (t - mt) * (d - md)).sum();
    let (direct_alpha, direct_c) = if sxx > 0.0 {
        let slope = sxy / sxx;
        (-slope, (md - slope * mt).exp())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(BoundFit {
        alpha,
        c,
        residuals,
        slope_dispersion: dispersion,
        weighted,
        direct_alpha,
        direct_c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Independent,
    Correlation,
    Degradation,
    Unclassified,
}

/// One trajectory point; `train_delta` is the training-set loss when available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePoint {
    pub epoch: f64,
    pub delta: f64,
    pub tau: f64,
    pub train_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub labels: Vec<Stage>,
    pub tau_tol: f64,
    pub window: usize,
    pub ctot_target: f64,
    /// First epoch of the correlation and degradation segments.
    pub correlation_start: Option<f64>,
    pub degradation_start: Option<f64>,
    /// Across the degradation segment the test loss trends up while the
    /// training loss trends down (least-squares slopes against `ln t`).
    pub gap_opened: bool,
}

impl StageReport {
    pub fn count(&self, stage: Stage) -> usize {
        self.labels.iter().filter(|&&l| l == stage).count()
    }

    /// Index of the first point with the given label.
    pub fn first(&self, stage: Stage) -> Option<usize> {
        self.labels.iter().position(|&l| l == stage)
    }
}

/// Labels points as independent while the smoothed `τ ≤ 1 + tau_tol`, then
/// correlation until the smoothed loss stops decreasing over the next
/// `window − 1` points, then degradation.
pub fn classify_stages(points: &[StagePoint], ctot_target: f64, tau_tol: f64, window: usize) -> StageReport {
    classify_stages_with(points, ctot_target, tau_tol, window, DEFAULT_STALL_TOL)
}

/// [`classify_stages`] with an explicit stall tolerance: the loss has
/// stopped decreasing at `k` when none of the next points falls below
/// `(1 − stall_tol)·Δ_k`.
pub fn classify_stages_with(
    points: &[StagePoint],
    ctot_target: f64,
    tau_tol: f64,
    window: usize,
    stall_tol: f64,
) -> StageReport {
    let n = points.len();
    let mut report = StageReport {
        labels: vec![Stage::Unclassified; n],
        tau_tol,
        window,
        ctot_target,
        correlation_start: None,
        degradation_start: None,
        gap_opened: false,
    };
    if n < window.max(3) {
        return report;
    }
    let ds = smooth_log(
        &points
            .iter()
            .map(|p| p.delta.max(f64::MIN_POSITIVE))
            .collect::<Vec<_>>(),
    );
    let ts = smooth_log(&points.iter().map(|p| p.tau.max(f64::MIN_POSITIVE)).collect::<Vec<_>>());
    let i1 = ts.iter().position(|&t| t > 1.0 + tau_tol).unwrap_or(n);
    let ahead = window.saturating_sub(1).max(2);
    let i2 = (i1..n)
        .find(|&k| {
            let end = (k + 1 + ahead).min(n);
            end >= k + 3 && ds[k + 1..end].iter().all(|&d| d >= ds[k] * (1.0 - stall_tol))
        })
        .unwrap_or(n);
    for (k, l) in report.labels.iter_mut().enumerate() {
        *l = if k < i1 {
            Stage::Independent
        } else if k < i2 {
            Stage::Correlation
        } else {
            Stage::Degradation
        };
    }
    report.correlation_start = (i1 < n).then(|| points[i1].epoch);
    report.degradation_start = (i2 < n).then(|| points[i2].epoch);
    let seg = &points[i2.min(n)..];
    if seg.len() >= 3 {
        let train: Option<Vec<f64>> = seg.iter().map(|p| p.train_delta).collect();
        if let Some(tr) = train {
            let t: Vec<f64> = seg.iter().map(|p| p.epoch.max(f64::MIN_POSITIVE).ln()).collect();
            let test: Vec<f64> = seg.iter().map(|p| p.delta).collect();
            report.gap_opened = trend(&t, &test) > 0.0 && trend(&t, &tr) < 0.0;
        }
    }
    report
}

/// Least-squares slope of `y` against `x`.
fn trend(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// A learning curve to be overlaid after rescaling by its target's `C_tot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub label: String,
    pub ctot: f64,
    /// `(tau, delta)` in trajectory order.
    pub points: Vec<(f64, f64)>,
    /// Number of leading points before degradation.
    pub pre_degradation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    /// `(tau, delta / ctot)` per curve.
    pub overlays: Vec<Vec<(f64, f64)>>,
    /// `(i, j, sup-distance)` for every pair with overlapping `τ` range.
    pub pairwise: Vec<(usize, usize, f64)>,
    pub max_distance: Option<f64>,
}

/// Pre-degradation part of a rescaled curve as a function of `ln τ`: keeps
/// the points that set a new running maximum of `τ` above `tau_floor`.
fn monotone_branch(points: &[(f64, f64)], tau_floor: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(t, y) in points {
        if t > tau_floor && out.last().map_or(true, |l| t.ln() > l.0) {
            out.push((t.ln(), y));
        }
    }
    out
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return curve[0].1;
    }
    if k == curve.len() {
        return curve[k - 1].1;
    }
    let (a, b) = (curve[k - 1], curve[k]);
    if b.0 == a.0 {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Overlays curves in `(τ, Δ/C_tot)` and measures their pairwise sup-distance
/// over the shared `τ > tau_floor` range of the pre-degradation regions,
/// interpolating linearly in `ln τ`.
pub fn rescale_collapse(curves: &[CollapseCurve], tau_floor: f64) -> CollapseReport {
    let overlays: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| c.points.iter().map(|&(t, d)| (t, d / c.ctot)).collect())
        .collect();
    let branches: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .zip(&overlays)
        .map(|(c, o)| monotone_branch(&o[..c.pre_degradation.min(o.len())], tau_floor))
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..branches.len() {
        for j in i + 1..branches.len() {
            let (a, b) = (&branches[i], &branches[j]);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let lo = a[0].0.max(b[0].0);
            let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
            if lo > hi {
                continue;
            }
            let d = a
                .iter()
                .chain(b.iter())
                .map(|p| p.0)
                .chain([lo, hi])
                .filter(|&x| x >= lo && x <= hi)
                .map(|x| (interpolate(a, x) - interpolate(b, x)).abs())
                .fold(0.0, f64::max);
            pairwise.push((i, j, d));
        }
    }
    let max_distance = pairwise.iter().map(|p| p.2).reduce(f64::max);
    CollapseReport {
        overlays,
        pairwise,
        max_distance,
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBoundaries {
    pub correlation: Option<f64>,
    pub degradation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub independent: usize,
    pub correlation: usize,
    pub degradation: usize,
    pub unclassified: usize,
}

/// The JSON summary written next to a fitted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub alpha: f64,
    pub c: f64,
    pub ctot_target: f64,
    pub stage_boundaries: StageBoundaries,
    pub stage_counts: StageCounts,
    pub weighted: bool,
    pub direct_alpha: f64,
    pub direct_c: f64,
}

impl FitSummary {
    pub fn new(fit: &BoundFit, stages: &StageReport) -> Self {
        Self {
            alpha: fit.alpha,
            c: fit.c,
            ctot_target: stages.ctot_target,
            stage_boundaries: StageBoundaries {
                correlation: stages.correlation_start,
                degradation: stages.degradation_start,
            },
            stage_counts: StageCounts {
                independent: stages.count(Stage::Independent),
                correlation: stages.count(Stage::Correlation),
                degradation: stages.count(Stage::Degradation),
                unclassified: stages.count(Stage::Unclassified),
            },
            weighted: fit.weighted,
            direct_alpha: fit.direct_alpha,
            direct_c: fit.direct_c,
        }
    }
}

/// Classifies a trajectory and fits the bound on its correlation segment.
pub fn analyze(points: &[StagePoint], ctot_target: f64) -> Result<(BoundFit, StageReport), FitError> {
    let stages = classify_stages(points, ctot_target, DEFAULT_TAU_TOL, DEFAULT_WINDOW);
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.delta, p.tau)).collect();
    let mask: Vec<bool> = stages.labels.iter().map(|&l| l == Stage::Correlation).collect();
    Ok((fit_bound(&pairs, &mask)?, stages))
}
