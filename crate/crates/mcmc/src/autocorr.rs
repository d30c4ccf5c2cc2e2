//! Correlation functions and integrated autocorrelation times.
//!
//! Autocovariances use the biased `1/K` normalization at every lag, with the
//! mean estimated from the same series. The self-consistent Sokal window only
//! looks at lags up to a quarter of the series length; beyond that the
//! biased estimates sum to zero by construction and would fake a window.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::gibbs::{default_burn_in, ChainState, Sampler};
use rbm_core::exact::{model_table, visible_kernel};
use rbm_core::rng;
use rbm_core::{EnumerationCap, Error, RbmParams, Result, SampleSet};

/// Correlation function `g(n)` for lags `0..g.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub g: Vec<f64>,
    pub variance_g0: f64,
    pub n_samples: usize,
    pub degenerate: bool,
}

impl CorrelationEstimate {
    fn from_g(g: Vec<f64>, n_samples: usize) -> Self {
        let g0 = g.first().copied().unwrap_or(0.0);
        Self {
            variance_g0: g0,
            degenerate: !(g0 > 1e-300),
            n_samples,
            g,
        }
    }

    /// Lags usable by the Sokal window.
    pub fn usable_lags(&self) -> usize {
        (self.n_samples / 4).min(self.g.len().saturating_sub(1))
    }

    /// Truncated sum `1 + 2 Σ_{n=1}^{n_max} g(n)/g(0)`.
    pub fn truncated_tau(&self, n_max: usize) -> f64 {
        let g0 = self.g[0];
        1.0 + 2.0 * self.g[1..=n_max.min(self.g.len() - 1)].iter().sum::<f64>() / g0
    }
}

/// Integrated autocorrelation time with its truncation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub n_max_used: usize,
    pub reliable: bool,
    /// Relative min-max width over repeated estimates (0 for a single estimate).
    pub spread: f64,
    pub degenerate: bool,
}

/// Biased autocovariance of `series` at lags `0..=max_lag`.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let k = series.len();
    if k == 0 {
        return Vec::new();
    }
    let max_lag = max_lag.min(k - 1);
    let mean = series.iter().sum::<f64>() / k as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    if k < 256 || max_lag < 32 {
        return (0..=max_lag)
            .map(|n| {
                centered[..k - n]
                    .iter()
                    .zip(&centered[n..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / k as f64
            })
            .collect();
    }
    let len = (2 * k).next_power_of_two();
    let (fwd, inv) = plans(len);
    let mut buf: Vec<Complex<f64>> = centered
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / (len as f64 * k as f64);
    buf[..=max_lag].iter().map(|c| c.re * scale).collect()
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
}

/// Default number of lags kept by the correlation estimators.
fn default_max_lag(k: usize) -> usize {
    (k / 4).max(1).min(k.saturating_sub(1))
}

/// Unit-averaged visible correlation `g(n) = (1/M) Σ_i Cov(x_i^{(k)}, x_i^{(k+n)})`.
pub fn unit_correlation(samples: &SampleSet) -> Result<CorrelationEstimate> {
    unit_correlation_lags(samples, default_max_lag(samples.len()))
}

/// [`unit_correlation`] keeping lags `0..=max_lag`.
pub fn unit_correlation_lags(samples: &SampleSet, max_lag: usize) -> Result<CorrelationEstimate> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let m = samples.m();
    let max_lag = max_lag.min(k - 1);
    let mut g = vec![0.0; max_lag + 1];
    let mut series = vec![0.0; k];
    for i in 0..m {
        for (s, row) in series.iter_mut().zip(samples.rows()) {
            *s = row[i] as f64;
        }
        for (acc, v) in g.iter_mut().zip(autocovariance(&series, max_lag)) {
            *acc += v;
        }
    }
    g.iter_mut().for_each(|v| *v /= m as f64);
    Ok(CorrelationEstimate::from_g(g, k))
}

/// Correlation function of a real-valued series.
pub fn series_correlation(series: &[f64]) -> Result<CorrelationEstimate> {
    if series.len() < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let g = autocovariance(series, default_max_lag(series.len()));
    Ok(CorrelationEstimate::from_g(g, series.len()))
}

/// Lag-wise mean of several estimates (truncated to the shortest).
pub fn average_correlations(parts: &[CorrelationEstimate]) -> Result<CorrelationEstimate> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("no correlation estimates to average"))?;
    let len = parts.iter().map(|p| p.g.len()).min().unwrap_or(0);
    let mut g = vec![0.0; len];
    for p in parts {
        for (a, v) in g.iter_mut().zip(&p.g) {
            *a += v;
        }
    }
    g.iter_mut().for_each(|v| *v /= parts.len() as f64);
    let n = parts.iter().map(|p| p.n_samples).min().unwrap_or(first.n_samples);
    Ok(CorrelationEstimate::from_g(g, n))
}

/// Self-consistent window: the smallest `n_max >= 1` with
/// `n_max >= gamma · τ̃(n_max)`.
pub fn sokal_tau(corr: &CorrelationEstimate, gamma: f64) -> Result<TauEstimate> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if corr.degenerate || corr.g.is_empty() {
        return Ok(TauEstimate {
            tau: f64::NAN,
            n_max_used: 0,
            reliable: false,
            spread: 0.0,
            degenerate: true,
        });
    }
    let g0 = corr.g[0];
    let limit = corr.usable_lags();
    let mut tau = 1.0;
    for n in 1..=limit {
        tau += 2.0 * corr.g[n] / g0;
        if n as f64 >= gamma * tau {
            return Ok(TauEstimate {
                tau,
                n_max_used: n,
                reliable: true,
                spread: 0.0,
                degenerate: false,
            });
        }
    }
    Ok(TauEstimate {
        tau,
        n_max_used: limit,
        reliable: false,
        spread: 0.0,
        degenerate: false,
    })
}

/// Observables of a visible configuration. Index arithmetic is periodic in `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Observable {
    Unit(usize),
    NearestPair(usize),
    NextNearestPair(usize),
    Triple(usize),
    Pair(usize, usize),
    Mean,
}

impl Observable {
    pub fn eval(&self, x: &[u8]) -> f64 {
        let m = x.len();
        let at = |i: usize| x[i % m] as f64;
        match *self {
            Observable::Unit(i) => at(i),
            Observable::NearestPair(i) => at(i) * at(i + 1),
            Observable::NextNearestPair(i) => at(i) * at(i + 2),
            Observable::Triple(i) => at(i) * at(i + 1) * at(i + 2),
            Observable::Pair(i, j) => at(i) * at(j),
            Observable::Mean => x.iter().map(|&v| v as f64).sum::<f64>() / m as f64,
        }
    }
}

/// Families of observables whose autocorrelation times are averaged over
/// their reference indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObservableFamily {
    Unit,
    NearestPair,
    NextNearestPair,
    Triple,
    AllPairs,
    Mean,
}

impl ObservableFamily {
    pub const ALL: [ObservableFamily; 6] = [
        ObservableFamily::Unit,
        ObservableFamily::NearestPair,
        ObservableFamily::NextNearestPair,
        ObservableFamily::Triple,
        ObservableFamily::AllPairs,
        ObservableFamily::Mean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObservableFamily::Unit => "x_i",
            ObservableFamily::NearestPair => "x_i*x_i+1",
            ObservableFamily::NextNearestPair => "x_i*x_i+2",
            ObservableFamily::Triple => "x_i*x_i+1*x_i+2",
            ObservableFamily::AllPairs => "x_i1*x_i2",
            ObservableFamily::Mean => "mean",
        }
    }

    pub fn members(&self, m: usize) -> Vec<Observable> {
        match self {
            ObservableFamily::Unit => (0..m).map(Observable::Unit).collect(),
            ObservableFamily::NearestPair => (0..m).map(Observable::NearestPair).collect(),
            ObservableFamily::NextNearestPair => (0..m).map(Observable::NextNearestPair).collect(),
            ObservableFamily::Triple => (0..m).map(Observable::Triple).collect(),
            ObservableFamily::AllPairs => (0..m)
                .flat_map(|i| (i + 1..m).map(move |j| Observable::Pair(i, j)))
                .collect(),
            ObservableFamily::Mean => vec![Observable::Mean],
        }
    }
}

/// Series `f(x^{(k)})` along a chain.
pub fn observable_series<F: Fn(&[u8]) -> f64>(samples: &SampleSet, f: F) -> Vec<f64> {
    samples.rows().map(f).collect()
}

/// Integrated autocorrelation time of `f` along the recorded chain.
pub fn observable_iact<F: Fn(&[u8]) -> f64>(samples: &SampleSet, f: F, gamma: f64) -> Result<TauEstimate> {
    sokal_tau(&series_correlation(&observable_series(samples, f))?, gamma)
}

/// Mean autocorrelation time over a family's non-degenerate members; `None`
/// if every member is constant along the chain.
pub fn family_iact(samples: &SampleSet, family: ObservableFamily, gamma: f64) -> Result<Option<TauEstimate>> {
    let mut taus = Vec::new();
    let mut reliable = true;
    for ob in family.members(samples.m()) {
        let t = observable_iact(samples, |x| ob.eval(x), gamma)?;
        if t.degenerate {
            continue;
        }
        reliable &= t.reliable;
        taus.push(t);
    }
    if taus.is_empty() {
        return Ok(None);
    }
    let mean = taus.iter().map(|t| t.tau).sum::<f64>() / taus.len() as f64;
    Ok(Some(TauEstimate {
        tau: mean,
        n_max_used: taus.iter().map(|t| t.n_max_used).max().unwrap_or(0),
        reliable,
        spread: 0.0,
        degenerate: false,
    }))
}

/// Settings of the multi-chain estimation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TauProtocol {
    /// Independently initialized chains whose correlation functions are averaged.
    pub r_g: usize,
    /// Independent repetitions of the whole estimate.
    pub r_tau: usize,
    pub gamma: f64,
    /// Per-chain step budget including burn-in.
    pub max_steps: usize,
    /// Fixed burn-in; `None` means `100·τ`, iterated once from an initial guess of τ = 1.
    pub burn_in: Option<usize>,
    /// Recorded steps per chain in the first attempt; doubled until reliable.
    pub initial_steps: usize,
    /// Maximal relative min-max spread of the chain-wise grand means.
    pub mean_spread_tol: f64,
}

impl Default for TauProtocol {
    fn default() -> Self {
        Self {
            r_g: 4,
            r_tau: 3,
            gamma: 5.0,
            max_steps: 1 << 20,
            burn_in: None,
            initial_steps: 4096,
            mean_spread_tol: 0.05,
        }
    }
}

/// Per-lag and per-chain record of an estimate, for audit dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauDiagnostics {
    pub g: Vec<f64>,
    pub n_max: usize,
    pub chain_means: Vec<f64>,
    pub repeat_taus: Vec<f64>,
    pub steps_per_chain: usize,
    pub burn_in: usize,
    pub note: Option<String>,
}

impl TauDiagnostics {
    /// Writes `section,index,value` rows: lags of `g`, chain means, repeat estimates.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "section,index,value")?;
        writeln!(out, "n_max,0,{}", self.n_max)?;
        writeln!(out, "burn_in,0,{}", self.burn_in)?;
        writeln!(out, "steps_per_chain,0,{}", self.steps_per_chain)?;
        for (k, v) in self.g.iter().enumerate() {
            writeln!(out, "g,{k},{v:e}")?;
        }
        for (k, v) in self.chain_means.iter().enumerate() {
            writeln!(out, "chain_mean,{k},{v:e}")?;
        }
        for (k, v) in self.repeat_taus.iter().enumerate() {
            writeln!(out, "repeat_tau,{k},{v:e}")?;
        }
        Ok(())
    }
}

/// Result of [`estimate_tau`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauReport {
    pub estimate: TauEstimate,
    pub diagnostics: TauDiagnostics,
}

fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if max == min {
        0.0
    } else {
        (max - min) / mean.abs().max(1e-12)
    }
}

struct Attempt {
    estimate: TauEstimate,
    corr: CorrelationEstimate,
    chain_means: Vec<f64>,
    steps: usize,
    burn_in: usize,
    note: Option<String>,
}

fn one_estimate(params: &RbmParams, protocol: &TauProtocol, seed: u64, repeat: usize) -> Result<Attempt> {
    let mut sampler = Sampler::new(params);
    let mut chains: Vec<ChainState> = (0..protocol.r_g)
        .map(|c| {
            let id = (repeat * protocol.r_g + c) as u64;
            ChainState::uniform(params.m, params.n, rng::stream(seed, id))
        })
        .collect();
    let mut burn = protocol.burn_in.unwrap_or_else(|| default_burn_in(1.0));
    for ch in chains.iter_mut() {
        sampler.advance(ch, burn as u64);
    }
    let mut reburned = protocol.burn_in.is_some();
    let mut steps = protocol.initial_steps.max(16);
    loop {
        let mut parts = Vec::with_capacity(chains.len());
        let mut means = Vec::with_capacity(chains.len());
        for ch in chains.iter_mut() {
            let rec = sampler.record(ch, steps, 1);
            let um = rec.unit_means();
            means.push(um.iter().sum::<f64>() / um.len() as f64);
            parts.push(unit_correlation(&rec)?);
        }
        let corr = average_correlations(&parts)?;
        let mut est = sokal_tau(&corr, protocol.gamma)?;
        if est.degenerate {
            return Ok(Attempt {
                estimate: est,
                corr,
                chain_means: means,
                steps,
                burn_in: burn,
                note: Some("constant chains".into()),
            });
        }
        let used = chains[0].steps_taken as usize;
        if !reburned && est.reliable {
            reburned = true;
            let wanted = default_burn_in(est.tau);
            if wanted > burn {
                for ch in chains.iter_mut() {
                    sampler.advance(ch, (wanted - burn) as u64);
                }
                burn = wanted;
                continue;
            }
        }
        let spread = relative_spread(&means);
        if est.reliable && spread <= protocol.mean_spread_tol {
            return Ok(Attempt {
                estimate: est,
                corr,
                chain_means: means,
                steps,
                burn_in: burn,
                note: None,
            });
        }
        if used + 2 * steps > protocol.max_steps {
            est.reliable = false;
            let why = if spread > protocol.mean_spread_tol {
                format!("chain means spread {spread:.3} above tolerance")
            } else {
                "no self-consistent window within the step budget".to_string()
            };
            return Ok(Attempt {
                estimate: est,
                corr,
                chain_means: means,
                steps,
                burn_in: burn,
                note: Some(why),
            });
        }
        steps *= 2;
    }
}

/// Multi-chain, repeated estimate of the unit-averaged autocorrelation time.
/// Chains start uniformly at random; the central value is the mean over
/// repeats and `spread` their relative min-max width.
pub fn estimate_tau(params: &RbmParams, protocol: &TauProtocol, seed: u64) -> Result<TauReport> {
    if protocol.r_g == 0 || protocol.r_tau == 0 {
        return Err(Error::invalid("r_g and r_tau must be at least 1"));
    }
    let mut attempts = Vec::with_capacity(protocol.r_tau);
    for r in 0..protocol.r_tau {
        attempts.push(one_estimate(params, protocol, seed, r)?);
    }
    let taus: Vec<f64> = attempts.iter().map(|a| a.estimate.tau).collect();
    let degenerate = attempts.iter().any(|a| a.estimate.degenerate);
    let reliable = !degenerate && attempts.iter().all(|a| a.estimate.reliable);
    let tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let last = attempts.pop().expect("at least one repeat");
    let estimate = TauEstimate {
        tau,
        n_max_used: last.estimate.n_max_used,
        reliable,
        spread: if degenerate { 0.0 } else { relative_spread(&taus) },
        degenerate,
    };
    let keep = (2 * last.estimate.n_max_used + 1).min(last.corr.g.len());
    Ok(TauReport {
        estimate,
        diagnostics: TauDiagnostics {
            g: last.corr.g[..keep].to_vec(),
            n_max: last.estimate.n_max_used,
            chain_means: last.chain_means,
            repeat_taus: taus,
            steps_per_chain: last.steps,
            burn_in: last.burn_in,
            note: last.note,
        },
    })
}

/// Exact unit-averaged autocorrelation time of the stationary chain, from the
/// spectrum of the symmetrized one-step visible kernel (small machines only).
pub fn exact_unit_tau(params: &RbmParams) -> Result<f64> {
    let m = params.m;
    let k = visible_kernel(params)?;
    let pi = model_table(params, EnumerationCap::default())?.to_dense();
    let size = 1usize << m;
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let sym = DMatrix::from_fn(size, size, |a, b| {
        let s = sq[a] * k[a * size + b] / sq[b];
        let t = sq[b] * k[b * size + a] / sq[a];
        0.5 * (s + t)
    });
    let eig = SymmetricEigen::new(sym);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        let mean: f64 = (0..size).filter(|x| x >> i & 1 == 1).map(|x| pi[x]).sum();
        let f: Vec<f64> = (0..size).map(|x| ((x >> i & 1) as f64 - mean) * sq[x]).collect();
        for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(c);
            let proj: f64 = f.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let w = proj * proj;
            if w < 1e-300 {
                continue;
            }
            if lambda >= 1.0 - 1e-14 {
                continue;
            }
            num += w * (1.0 + lambda) / (1.0 - lambda);
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::invalid("all visible units are constant under the model"));
    }
    Ok(num / den)
}
