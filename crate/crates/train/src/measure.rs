//! Quantities recorded along a training run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use rbm_core::exact::{empirical_loss, exact_loss_report, log_partition, model_total_correlation};
use rbm_core::{EnumerationCap, RbmParams, Result, SampleSet, TabulatedDistribution};
use rbm_mcmc::autocorr::{estimate_tau, exact_unit_tau, TauProtocol};
use rbm_mcmc::TauEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    /// `D_KL(p‖p̂)` against the full target table.
    Exact,
    /// The sample-based loss on a finite dataset.
    Empirical,
    /// A smoothed or coarse-grained stand-in.
    Proxy,
}

impl DeltaKind {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaKind::Exact => "exact",
            DeltaKind::Empirical => "empirical",
            DeltaKind::Proxy => "proxy",
        }
    }
}

/// One measurement point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub epoch: f64,
    pub delta: Option<f64>,
    pub delta_kind: Option<DeltaKind>,
    pub tau: Option<TauEstimate>,
    pub ctot_model: Option<f64>,
    pub sigma_w: f64,
    /// Chain length in use at this point (sampling-based algorithms).
    pub n_cd: Option<usize>,
    pub proxies: BTreeMap<String, f64>,
}

impl TrajectoryRecord {
    pub fn new(epoch: f64, params: &RbmParams) -> Self {
        Self {
            epoch,
            delta: None,
            delta_kind: None,
            tau: None,
            ctot_model: None,
            sigma_w: params.weights_std(),
            n_cd: None,
            proxies: BTreeMap::new(),
        }
    }
}

/// Something evaluated on the current machine at each measurement point.
pub trait Measurer {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()>;
}

/// Exact loss against a tabulated target.
pub struct ExactDelta<'a> {
    pub target: &'a TabulatedDistribution,
    pub cap: EnumerationCap,
}

impl Measurer for ExactDelta<'_> {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        let r = exact_loss_report(params, self.target, self.cap)?;
        record.delta = Some(r.delta);
        record.delta_kind = Some(DeltaKind::Exact);
        Ok(())
    }
}

/// Sample-based loss on `data`, stored under `column`; also becomes the
/// primary `delta` when `primary` is set and no exact loss is recorded.
pub struct EmpiricalDelta<'a> {
    pub data: &'a SampleSet,
    pub column: String,
    pub primary: bool,
    pub cap: EnumerationCap,
}

impl Measurer for EmpiricalDelta<'_> {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        let log_z = log_partition(params, self.cap)?;
        let v = empirical_loss(params, self.data, log_z)?;
        record.proxies.insert(self.column.clone(), v);
        if self.primary && record.delta_kind != Some(DeltaKind::Exact) {
            record.delta = Some(v);
            record.delta_kind = Some(DeltaKind::Empirical);
        }
        Ok(())
    }
}

/// Monte-Carlo autocorrelation time; each call uses a fresh derived seed.
pub struct TauMeasurer {
    pub protocol: TauProtocol,
    pub seed: u64,
    calls: u64,
}

impl TauMeasurer {
    pub fn new(protocol: TauProtocol, seed: u64) -> Self {
        Self {
            protocol,
            seed,
            calls: 0,
        }
    }
}

impl Measurer for TauMeasurer {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        let seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.calls;
        self.calls += 1;
        record.tau = Some(estimate_tau(params, &self.protocol, seed)?.estimate);
        Ok(())
    }
}

/// Exact autocorrelation time from the transition kernel (tiny machines).
pub struct ExactTau;

impl Measurer for ExactTau {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        let tau = exact_unit_tau(params)?;
        record.tau = Some(TauEstimate {
            tau,
            n_max_used: 0,
            reliable: true,
            spread: 0.0,
            degenerate: false,
        });
        Ok(())
    }
}

/// Total correlation of the model marginal.
pub struct ModelCtot {
    pub cap: EnumerationCap,
}

impl Measurer for ModelCtot {
    fn measure(&mut self, params: &RbmParams, record: &mut TrajectoryRecord) -> Result<()> {
        record.ctot_model = Some(model_total_correlation(params, self.cap)?);
        Ok(())
    }
}
