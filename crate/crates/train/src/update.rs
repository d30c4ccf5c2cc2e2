//! Stochastic parameter updates: contrastive divergence (CD), persistent CD
//! and persistent CD with an order tied to the autocorrelation time.
//!
//! Updates are written as increments `η · (positive phase − negative phase)`
//! and stored in an [`RbmParams`] of the machine's shape.

use serde::{Deserialize, Serialize};

use rbm_core::params::logistic;
use rbm_core::rng::{self, Rng};
use rbm_core::{Error, RbmParams, SampleSet};
use rbm_mcmc::{Sampler, TauEstimate};

use crate::error::Result;

/// Positive phase with conditional probabilities: `w_ij ← ⟨x_i σ(u_j(x))⟩`,
/// `a_i ← ⟨x_i⟩`, `b_j ← ⟨σ(u_j(x))⟩` over the batch.
pub fn data_average_gradient(params: &RbmParams, batch: &SampleSet) -> Result<RbmParams> {
    if batch.is_empty() {
        return Err(Error::invalid("data average of an empty batch").into());
    }
    if batch.m() != params.m {
        return Err(Error::DimensionMismatch {
            what: "batch visible units",
            expected: params.m,
            got: batch.m(),
        }
        .into());
    }
    let n = params.n;
    let mut g = RbmParams::zeros(params.m, n);
    let mut u = vec![0.0; n];
    let scale = 1.0 / batch.len() as f64;
    for x in batch.rows() {
        params.hidden_field_into(x, &mut u);
        u.iter_mut().for_each(|v| *v = logistic(*v));
        accumulate(&mut g, x, &u, scale);
    }
    Ok(g)
}

/// `g += scale · (x ⊗ h, x, h)`.
fn accumulate(g: &mut RbmParams, x: &[u8], h: &[f64], scale: f64) {
    let n = g.n;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            continue;
        }
        g.a[i] += scale;
        for (w, &hj) in g.w[i * n..(i + 1) * n].iter_mut().zip(h) {
            *w += scale * hj;
        }
    }
    for (b, &hj) in g.b.iter_mut().zip(h) {
        *b += scale * hj;
    }
}

fn accumulate_binary(g: &mut RbmParams, x: &[u8], h: &[u8], scale: f64, buf: &mut [f64]) {
    for (d, &v) in buf.iter_mut().zip(h) {
        *d = v as f64;
    }
    accumulate(g, x, buf, scale);
}

fn check_batch(params: &RbmParams, batch: &SampleSet, n_cd: usize) -> Result<()> {
    if n_cd == 0 {
        return Err(Error::invalid("n_cd must be at least 1").into());
    }
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch").into());
    }
    if batch.m() != params.m {
        return Err(Error::DimensionMismatch {
            what: "batch visible units",
            expected: params.m,
            got: batch.m(),
        }
        .into());
    }
    Ok(())
}

/// CD-`n_cd` increment (before scaling by η). Each batch sample starts a chain
/// `x̃ → ĥ⁽⁰⁾ → x̂⁽¹⁾ → … → x̂⁽ⁿ⁾ → ĥ⁽ⁿ⁾`; both phases use the sampled binary
/// hidden states.
pub fn cd_increment(params: &RbmParams, batch: &SampleSet, n_cd: usize, rng: &mut Rng) -> Result<RbmParams> {
    check_batch(params, batch, n_cd)?;
    let (m, n) = (params.m, params.n);
    let mut g = RbmParams::zeros(m, n);
    let mut sampler = Sampler::new(params);
    let mut h = vec![0u8; n];
    let mut x = vec![0u8; m];
    let mut buf = vec![0.0; n];
    let scale = 1.0 / batch.len() as f64;
    for xt in batch.rows() {
        sampler.sample_hidden(xt, &mut h, rng);
        accumulate_binary(&mut g, xt, &h, scale, &mut buf);
        sampler.sample_visible(&h, &mut x, rng);
        for _ in 1..n_cd {
            sampler.sample_hidden(&x, &mut h, rng);
            sampler.sample_visible(&h, &mut x, rng);
        }
        sampler.sample_hidden(&x, &mut h, rng);
        accumulate_binary(&mut g, &x, &h, -scale, &mut buf);
    }
    Ok(g)
}

/// Parameters after one CD update with learning rate `eta`.
pub fn cd_update(params: &RbmParams, batch: &SampleSet, n_cd: usize, eta: f64, rng: &mut Rng) -> Result<RbmParams> {
    let g = cd_increment(params, batch, n_cd, rng)?;
    let mut out = params.clone();
    out.add_scaled(&g, eta);
    Ok(out)
}

/// Visible states of the persistent chains `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistentChains {
    pub states: SampleSet,
}

impl PersistentChains {
    /// `count` independent uniformly random configurations.
    pub fn random(m: usize, count: usize, rng: &mut Rng) -> Self {
        let mut states = SampleSet::with_capacity(m, count);
        let mut x = vec![0u8; m];
        for _ in 0..count {
            for v in x.iter_mut() {
                *v = rng::bernoulli(rng, 0.5);
            }
            states.push(&x);
        }
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Advances every chain by `n_steps` Gibbs steps, chain by chain.
    pub fn advance(&mut self, params: &RbmParams, n_steps: usize, rng: &mut Rng) {
        let m = params.m;
        let mut sampler = Sampler::new(params);
        let mut h = vec![0u8; params.n];
        let mut x = vec![0u8; m];
        let flat = self.states.flat_mut();
        for row in flat.chunks_exact_mut(m) {
            x.copy_from_slice(row);
            for _ in 0..n_steps {
                sampler.sample_hidden(&x, &mut h, rng);
                sampler.sample_visible(&h, &mut x, rng);
            }
            row.copy_from_slice(&x);
        }
    }
}

/// PCD increment (before scaling by η). The chains are first advanced by
/// `n_cd` steps; the negative phase then uses fresh hidden samples of the
/// advanced states, and the positive phase fresh hidden samples of the batch.
pub fn pcd_increment(
    params: &RbmParams,
    chains: &mut PersistentChains,
    batch: &SampleSet,
    n_cd: usize,
    rng: &mut Rng,
) -> Result<RbmParams> {
    check_batch(params, batch, n_cd)?;
    if chains.is_empty() || chains.states.m() != params.m {
        return Err(Error::invalid("persistent chains missing or of the wrong width").into());
    }
    let n = params.n;
    let mut g = RbmParams::zeros(params.m, n);
    let mut sampler = Sampler::new(params);
    let mut h = vec![0u8; n];
    let mut buf = vec![0.0; n];
    let scale = 1.0 / batch.len() as f64;
    for xt in batch.rows() {
        sampler.sample_hidden(xt, &mut h, rng);
        accumulate_binary(&mut g, xt, &h, scale, &mut buf);
    }
    chains.advance(params, n_cd, rng);
    let scale = 1.0 / chains.len() as f64;
    for x in chains.states.rows() {
        sampler.sample_hidden(x, &mut h, rng);
        accumulate_binary(&mut g, x, &h, -scale, &mut buf);
    }
    Ok(g)
}

/// Parameters after one PCD update; `chains` are advanced in place.
pub fn pcd_update(
    params: &RbmParams,
    chains: &mut PersistentChains,
    batch: &SampleSet,
    n_cd: usize,
    eta: f64,
    rng: &mut Rng,
) -> Result<RbmParams> {
    let g = pcd_increment(params, chains, batch, n_cd, rng)?;
    let mut out = params.clone();
    out.add_scaled(&g, eta);
    Ok(out)
}

/// Chain length proportional to the autocorrelation time,
/// `n_cd = max(1, round(κ·τ))`, refreshed every `refresh_epochs` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveNcd {
    pub kappa: f64,
    pub refresh_epochs: u64,
    #[serde(skip, default = "one")]
    pub current: usize,
}

fn one() -> usize {
    1
}

impl AdaptiveNcd {
    pub fn new(kappa: f64, refresh_epochs: u64) -> Self {
        Self {
            kappa,
            refresh_epochs: refresh_epochs.max(1),
            current: 1,
        }
    }

    pub fn n_cd_for(&self, tau: f64) -> usize {
        ((self.kappa * tau).round() as usize).max(1)
    }

    /// Adopts a new estimate. Unreliable or degenerate estimates keep the
    /// previous order and return a warning.
    pub fn update_from(&mut self, est: &TauEstimate) -> Option<String> {
        if !est.reliable || est.degenerate || !est.tau.is_finite() {
            return Some(format!(
                "unreliable tau estimate ({:.3}); keeping n_cd = {}",
                est.tau, self.current
            ));
        }
        self.current = self.n_cd_for(est.tau);
        None
    }
}

/// PCD update with the current adaptive order.
pub fn adaptive_pcd_update(
    params: &RbmParams,
    chains: &mut PersistentChains,
    batch: &SampleSet,
    adaptive: &AdaptiveNcd,
    eta: f64,
    rng: &mut Rng,
) -> Result<RbmParams> {
    pcd_update(params, chains, batch, adaptive.current, eta, rng)
}
