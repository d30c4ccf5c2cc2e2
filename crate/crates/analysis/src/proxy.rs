//! Proxy losses recorded along a training run when the exact loss is out of reach.

use rbm_core::rng::{self, stream, Rng};
use rbm_core::{EnumerationCap, RbmParams, Result, SampleSet};
use rbm_mcmc::gibbs::{independent_samples_small_n, run_chain_with_burn_in};
use rbm_train::{DeltaKind, Measurer, TrajectoryRecord};
use serde::{Deserialize, Serialize};

use crate::metrics::{
    coarse_grain, coarse_kl, gaussian_smoothed_kl, l1_distance, make_partitions, Partition, PartitionKind,
};

/// Hidden layers up to this size are sampled exactly by enumerating `h`.
const EXACT_SAMPLING_HIDDEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    pub sigma: f64,
    pub groups: usize,
    pub r: f64,
    pub random_partitions: usize,
    /// Image grid `(rows, cols)` for local blocks.
    pub shape: Option<(usize, usize)>,
    pub model_samples: usize,
    /// Gibbs settings used when the hidden layer is too wide to enumerate.
    pub chains: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            sigma: 0.32,
            groups: 7,
            r: 1.0,
            random_partitions: 5,
            shape: None,
            model_samples: 10_000,
            chains: 100,
            burn_in: 1000,
            thin: 10,
        }
    }
}

/// Draws `count` visible samples from the model, exactly when the hidden
/// layer can be enumerated and from independent Gibbs chains otherwise.
pub fn model_samples(params: &RbmParams, config: &ProxyConfig, rng: &mut Rng) -> Result<SampleSet> {
    let count = config.model_samples;
    if params.n <= EXACT_SAMPLING_HIDDEN {
        return independent_samples_small_n(params, count, rng, EnumerationCap(EXACT_SAMPLING_HIDDEN));
    }
    let chains = config.chains.clamp(1, count.max(1));
    let mut out = SampleSet::with_capacity(params.m, count);
    for c in 0..chains {
        let share = count / chains + usize::from(c < count % chains);
        let x0: Vec<u8> = (0..params.m).map(|_| rng::bernoulli(rng, 0.5)).collect();
        let chain_rng = stream(rng::child_seed(rng), 0);
        let s = run_chain_with_burn_in(
            params,
            &x0,
            config.burn_in,
            share * config.thin.max(1),
            config.thin.max(1),
            chain_rng,
        )?;
        for row in s.rows() {
            out.push(row);
        }
    }
    Ok(out)
}

/// Records `delta_sigma`, `delta_cg_random`, `delta_cg_local`, `l1_cg_random`
/// and `l1_cg_local`. The random-partition columns average over the
/// configured number of partitions.
pub struct ProxyMeasurer<'a> {
    test: &'a SampleSet,
    config: ProxyConfig,
    random: Vec<(Partition, SampleSet)>,
    local: (Partition, SampleSet),
    rng: Rng,
}

impl<'a> ProxyMeasurer<'a> {
    pub fn new(test: &'a SampleSet, config: ProxyConfig, seed: u64) -> Result<Self> {
        let m = test.m();
        let mut prng = stream(seed, 10);
        let mut random = Vec::with_capacity(config.random_partitions);
        for _ in 0..config.random_partitions {
            let p = make_partitions(m, config.groups, PartitionKind::Random, None, config.r, &mut prng)?;
            let t = coarse_grain(test, &p)?;
            random.push((p, t));
        }
        let lp = make_partitions(
            m,
            config.groups,
            PartitionKind::Local,
            config.shape,
            config.r,
            &mut prng,
        )?;
        let lt = coarse_grain(test, &lp)?;
        Ok(Self {
            test,
            config,
            random,
            local: (lp, lt),
            rng: stream(seed, 11),
        })
    }

    pub fn partitions(&self) -> impl Iterator<Item = &Partition> {
        self.random.iter().map(|r| &r.0).chain(std::iter::once(&self.local.0))
    }

    /// All five proxy values for the given model samples.
    pub fn evaluate(&self, model: &SampleSet) -> Result<Vec<(&'static str, f64)>> {
        let delta_sigma = gaussian_smoothed_kl(self.test, model, self.config.sigma)?;
        let (mut kl_r, mut l1_r) = (0.0, 0.0);
        for (p, t) in &self.random {
            let y = coarse_grain(model, p)?;
            kl_r += coarse_kl(t, &y)?;
            l1_r += l1_distance(t, &y)?;
        }
        let k = self.random.len().max(1) as f64;
        let y = coarse_grain(model, &self.local.0)?;
        let mut out = vec![
            ("delta_sigma", delta_sigma),
            ("delta_cg_local", coarse_kl(&self.local.1, &y)?),
            ("l1_cg_local", l1_distance(&self.local.1, &y)?),
        ];
        if !self.random.is_empty() {
            out.push(("delta_cg_random", kl_r / k));
            out.push(("l1_cg_random", l1_r / k));
        }
        Ok(out)
    }
}

impl Measurer for ProxyMeasurer<'_> {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        let model = model_samples(params, &self.config, &mut self.rng)?;
        for (name, v) in self.evaluate(&model)? {
            record.proxies.insert(name.to_string(), v);
        }
        if record.delta.is_none() {
            record.delta = record.proxies.get("delta_sigma").copied();
            record.delta_kind = Some(DeltaKind::Proxy);
        }
        Ok(())
    }
}
