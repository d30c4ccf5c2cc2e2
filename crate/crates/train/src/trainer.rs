use serde::{Deserialize, Serialize};

use rbm_core::rng::{self, stream};
use rbm_core::{Error, RbmParams, SampleSet, TabulatedDistribution};
use rbm_mcmc::autocorr::{estimate_tau, TauProtocol};

use crate::error::{Result, TrainError};
use crate::flow::{exact_flow_with, FlowOptions, FlowOrder};
use crate::measure::{Measurer, TrajectoryRecord};
use crate::schedule::Schedule;
use crate::update::{cd_increment, pcd_increment, AdaptiveNcd, PersistentChains};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    Cd,
    Pcd,
    /// PCD with `n_cd = max(1, round(κ·τ))`, τ re-estimated every
    /// `refresh_epochs` epochs.
    AdaptivePcd {
        kappa: f64,
        refresh_epochs: u64,
        #[serde(default = "adaptive_protocol")]
        protocol: TauProtocol,
    },
    /// Continuous-time exact flow; `epochs` is then the final flow time.
    ExactFlow {
        order: FlowOrder,
    },
}

/// A lighter protocol for the in-training refreshes of adaptive PCD.
pub fn adaptive_protocol() -> TauProtocol {
    TauProtocol {
        r_g: 2,
        r_tau: 1,
        max_steps: 1 << 16,
        initial_steps: 1024,
        ..TauProtocol::default()
    }
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Cd => "cd".into(),
            Algorithm::Pcd => "pcd".into(),
            Algorithm::AdaptivePcd { .. } => "adaptive_pcd".into(),
            Algorithm::ExactFlow { order } => format!("exact_flow_{}", order.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub batch_size: usize,
    pub n_cd: usize,
    pub epochs: f64,
    /// Number of persistent chains; defaults to the batch size.
    #[serde(default)]
    pub persistent_chains: Option<usize>,
    #[serde(default)]
    pub schedule: Schedule,
    pub seed: u64,
    #[serde(default)]
    pub flow: FlowOptions,
}

impl TrainConfig {
    pub fn validate(&self) -> rbm_core::Result<()> {
        let flow = matches!(self.algorithm, Algorithm::ExactFlow { .. });
        if !(self.epochs >= 0.0) || !self.epochs.is_finite() {
            return Err(Error::invalid("epochs must be finite and nonnegative"));
        }
        if !flow {
            if !(self.eta > 0.0) {
                return Err(Error::invalid("learning rate must be positive"));
            }
            if self.batch_size == 0 {
                return Err(Error::invalid("batch size must be positive"));
            }
            if self.n_cd == 0 {
                return Err(Error::invalid("n_cd must be at least 1"));
            }
            if self.epochs.fract() != 0.0 {
                return Err(Error::invalid("discrete training needs a whole number of epochs"));
            }
        }
        if let Algorithm::AdaptivePcd { kappa, .. } = self.algorithm {
            if !(kappa > 0.0) {
                return Err(Error::invalid("adaptive multiplier must be positive"));
            }
        }
        Ok(())
    }
}

/// What the machine is trained on.
#[derive(Debug, Clone, Copy)]
pub enum TrainingData<'a> {
    Samples(&'a SampleSet),
    /// Full target table, used by the exact flow.
    Table(&'a TabulatedDistribution),
}

/// Runs the measurers on `params` at `epoch`.
fn measure_point(
    epoch: f64,
    params: &RbmParams,
    n_cd: Option<usize>,
    measurers: &mut [Box<dyn Measurer + '_>],
) -> Result<TrajectoryRecord> {
    let mut rec = TrajectoryRecord::new(epoch, params);
    rec.n_cd = n_cd;
    for m in measurers.iter_mut() {
        m.measure(params, &mut rec)?;
    }
    Ok(rec)
}

/// Trains from `params0` and returns the measured trajectory. `sink` sees
/// every record with the parameters it was measured on as soon as it exists,
/// so partial results survive an abort.
pub fn train<F>(
    config: &TrainConfig,
    data: TrainingData<'_>,
    params0: RbmParams,
    measurers: &mut [Box<dyn Measurer + '_>],
    mut sink: F,
) -> Result<Vec<TrajectoryRecord>>
where
    F: FnMut(&TrajectoryRecord, &RbmParams) -> Result<()>,
{
    config.validate()?;
    let mut out = Vec::new();
    if let Algorithm::ExactFlow { order } = config.algorithm {
        let TrainingData::Table(target) = data else {
            return Err(Error::invalid("the exact flow needs a tabulated target").into());
        };
        let points = config.schedule.points(config.epochs, false);
        exact_flow_with(&params0, target, order, &points[1..], &config.flow, |t, p| {
            if let Some(what) = p.first_non_finite() {
                return Err(TrainError::NonFinite { epoch: t, detail: what });
            }
            let rec = measure_point(t, p, None, measurers)?;
            sink(&rec, p)?;
            out.push(rec);
            Ok(())
        })?;
        return Ok(out);
    }
    let TrainingData::Samples(samples) = data else {
        return Err(Error::invalid("sampling-based training needs a dataset").into());
    };
    if samples.m() != params0.m {
        return Err(Error::DimensionMismatch {
            what: "training data visible units",
            expected: params0.m,
            got: samples.m(),
        }
        .into());
    }
    let b = config.batch_size;
    if b > samples.len() {
        return Err(Error::invalid(format!("batch size {b} exceeds the {} training samples", samples.len())).into());
    }
    let s = samples.len() / b;
    let epochs = config.epochs as u64;
    let points = config.schedule.points(config.epochs, true);
    let mut next_point = 0;
    let mut rng = stream(config.seed, 0);
    let mut params = params0;
    let persistent = !matches!(config.algorithm, Algorithm::Cd);
    let mut chains = persistent.then(|| {
        PersistentChains::random(
            params.m,
            config.persistent_chains.unwrap_or(b),
            &mut stream(config.seed, 1),
        )
    });
    let mut adaptive = match &config.algorithm {
        Algorithm::AdaptivePcd {
            kappa, refresh_epochs, ..
        } => Some(AdaptiveNcd::new(*kappa, *refresh_epochs)),
        _ => None,
    };
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let current_n_cd = |adaptive: &Option<AdaptiveNcd>| adaptive.as_ref().map_or(config.n_cd, |a| a.current);
    for epoch in 0..=epochs {
        if epoch > 0 {
            if let (Some(ad), Algorithm::AdaptivePcd { protocol, .. }) = (adaptive.as_mut(), &config.algorithm) {
                if (epoch - 1) % ad.refresh_epochs == 0 {
                    let seed = rng::child_seed(&mut stream(config.seed, 2 + epoch));
                    let est = estimate_tau(&params, protocol, seed)?.estimate;
                    if let Some(w) = ad.update_from(&est) {
                        eprintln!("warning: epoch {epoch}: {w}");
                    }
                }
            }
            let n_cd = current_n_cd(&adaptive);
            rng::shuffle(&mut rng, &mut indices);
            for r in 0..s {
                let batch = samples.select(&indices[r * b..(r + 1) * b]);
                let g = match chains.as_mut() {
                    Some(ch) => pcd_increment(&params, ch, &batch, n_cd, &mut rng)?,
                    None => cd_increment(&params, &batch, n_cd, &mut rng)?,
                };
                params.add_scaled(&g, config.eta);
            }
            if let Some(what) = params.first_non_finite() {
                return Err(TrainError::NonFinite {
                    epoch: epoch as f64,
                    detail: what,
                });
            }
        }
        if next_point < points.len() && points[next_point] == epoch as f64 {
            next_point += 1;
            let rec = measure_point(epoch as f64, &params, Some(current_n_cd(&adaptive)), measurers)?;
            sink(&rec, &params)?;
            out.push(rec);
        }
    }
    Ok(out)
}
