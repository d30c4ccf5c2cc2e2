//! Block Gibbs sampling `x → h → x'`.
//!
//! One step samples the hidden layer from `p(h|x)` and then the visible layer
//! from `p(x|h)`, drawing one uniform per unit in index order. A chain of `n`
//! steps therefore performs `n` visible updates, and recorded states are the
//! visible configurations after each visible update.

use rbm_core::dist::AliasTable;
use rbm_core::exact::LogWeight;
use rbm_core::params::logistic;
use rbm_core::rng::{self, Rng};
use rbm_core::{EnumerationCap, Error, RbmParams, Result, SampleSet};

/// One Gibbs chain: current visible and hidden configuration plus its own
/// random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Vec<u8>,
    pub h: Vec<u8>,
    pub steps_taken: u64,
    pub rng: Rng,
}

impl ChainState {
    pub fn new(x: Vec<u8>, n: usize, rng: Rng) -> Self {
        Self {
            x,
            h: vec![0; n],
            steps_taken: 0,
            rng,
        }
    }

    /// Chain started from a uniformly random visible state.
    pub fn uniform(m: usize, n: usize, mut rng: Rng) -> Self {
        let x = (0..m).map(|_| rng::bernoulli(&mut rng, 0.5)).collect();
        Self::new(x, n, rng)
    }
}

/// Scratch buffers for sampling from one machine.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    params: &'a RbmParams,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(params: &'a RbmParams) -> Self {
        Self {
            params,
            u: vec![0.0; params.n],
            v: vec![0.0; params.m],
        }
    }

    pub fn params(&self) -> &RbmParams {
        self.params
    }

    /// Draws `h ~ p(h|x)` into `h`.
    #[inline]
    pub fn sample_hidden(&mut self, x: &[u8], h: &mut [u8], rng: &mut Rng) {
        self.params.hidden_field_into(x, &mut self.u);
        for (hj, &u) in h.iter_mut().zip(&self.u) {
            *hj = rng::bernoulli(rng, logistic(u));
        }
    }

    /// Draws `x ~ p(x|h)` into `x`.
    #[inline]
    pub fn sample_visible(&mut self, h: &[u8], x: &mut [u8], rng: &mut Rng) {
        self.params.visible_field_into(h, &mut self.v);
        for (xi, &v) in x.iter_mut().zip(&self.v) {
            *xi = rng::bernoulli(rng, logistic(v));
        }
    }

    /// One step `x → h → x'` of `state`.
    #[inline]
    pub fn step(&mut self, state: &mut ChainState) {
        let ChainState { x, h, rng, .. } = state;
        self.sample_hidden(x, h, rng);
        self.sample_visible(h, x, rng);
        state.steps_taken += 1;
    }

    /// `n` steps without recording.
    pub fn advance(&mut self, state: &mut ChainState, n: u64) {
        for _ in 0..n {
            self.step(state);
        }
    }

    /// Runs `n_steps` steps and records every `thin`-th visible state.
    pub fn record(&mut self, state: &mut ChainState, n_steps: usize, thin: usize) -> SampleSet {
        assert!(thin >= 1, "thin must be at least 1");
        let mut out = SampleSet::with_capacity(self.params.m, n_steps / thin);
        for k in 1..=n_steps {
            self.step(state);
            if k % thin == 0 {
                out.push(&state.x);
            }
        }
        out
    }
}

/// One Gibbs step of `state` under `params`.
pub fn gibbs_step(params: &RbmParams, state: &mut ChainState) {
    Sampler::new(params).step(state);
}

/// Runs a chain from `x0` for `n_steps` steps, returning every `thin`-th
/// visible state (`n_steps / thin` states).
pub fn run_chain(params: &RbmParams, x0: &[u8], n_steps: usize, thin: usize, rng: Rng) -> Result<SampleSet> {
    run_chain_with_burn_in(params, x0, 0, n_steps, thin, rng)
}

/// As [`run_chain`] after discarding `burn_in` initial steps.
pub fn run_chain_with_burn_in(
    params: &RbmParams,
    x0: &[u8],
    burn_in: usize,
    n_steps: usize,
    thin: usize,
    rng: Rng,
) -> Result<SampleSet> {
    if thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    if x0.len() != params.m {
        return Err(Error::DimensionMismatch {
            what: "initial visible state",
            expected: params.m,
            got: x0.len(),
        });
    }
    let mut state = ChainState::new(x0.to_vec(), params.n, rng);
    let mut s = Sampler::new(params);
    s.advance(&mut state, burn_in as u64);
    Ok(s.record(&mut state, n_steps, thin))
}

/// Default burn-in length for a chain with autocorrelation time `tau`.
pub fn default_burn_in(tau: f64) -> usize {
    (100.0 * tau.max(1.0)).ceil() as usize
}

/// Exact i.i.d. samples from `p̂(x)`: `h` from the enumerated hidden
/// marginal, then `x ~ p(x|h)`.
pub fn independent_samples_small_n(
    params: &RbmParams,
    count: usize,
    rng: &mut Rng,
    cap: EnumerationCap,
) -> Result<SampleSet> {
    if params.n > cap.0 || params.n > 63 {
        return Err(Error::Capacity {
            dimension: "hidden layer",
            bits: params.n,
            cap: cap.0.min(63),
        });
    }
    let hidden = hidden_marginal_weights(params);
    let alias = AliasTable::new(hidden);
    let mut sampler = Sampler::new(params);
    let mut out = SampleSet::with_capacity(params.m, count);
    let mut h = vec![0u8; params.n];
    let mut x = vec![0u8; params.m];
    for _ in 0..count {
        let hw = alias.draw(rng) as u64;
        rbm_core::state::unpack_into(hw, &mut h);
        sampler.sample_visible(&h, &mut x, rng);
        out.push(&x);
    }
    Ok(out)
}

/// Unnormalized hidden marginal `p̂(h)` over all `2^n` hidden states,
/// scaled by its maximum.
pub fn hidden_marginal_weights(params: &RbmParams) -> Vec<f64> {
    let t = params.transpose();
    let lw = LogWeight::new(&t);
    let mut u = lw.scratch();
    let logs: Vec<f64> = (0..1u64 << params.n).map(|h| lw.eval(h, &mut u)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logs.into_iter().map(|l| (l - max).exp()).collect()
}
