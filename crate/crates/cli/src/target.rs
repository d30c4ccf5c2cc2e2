//! Building targets and datasets from a configuration.

use serde::Serialize;

use rbm_core::exact::{entropy, total_correlation};
use rbm_core::rng::stream;
use rbm_core::{SampleSet, TabulatedDistribution};
use rbm_targets::{mnist_load, Split};

use crate::config::{ExperimentConfig, TargetSpec};
use crate::error::Result;

pub fn build_target(spec: &TargetSpec) -> Result<Option<TabulatedDistribution>> {
    Ok(Some(match spec {
        TargetSpec::Tfic { m, g, basis } => rbm_targets::tfic_ground_state(*m, *g, *basis)?,
        TargetSpec::Hook { side, q } => rbm_targets::hook_distribution(*side, *q)?,
        TargetSpec::Digits { q } => rbm_targets::digit_distribution(*q)?,
        TargetSpec::Mini { m, q } => rbm_targets::mini_pattern_distribution(*m, *q)?,
        TargetSpec::Mnist { .. } => return Ok(None),
    }))
}

/// Everything a run needs about its target.
pub struct Prepared {
    pub m: usize,
    pub table: Option<TabulatedDistribution>,
    pub train: Option<SampleSet>,
    pub test: Option<SampleSet>,
    pub ctot: Option<f64>,
}

fn truncate(s: SampleSet, size: Option<usize>) -> SampleSet {
    match size {
        Some(k) if k < s.len() => s.select(&(0..k).collect::<Vec<_>>()),
        _ => s,
    }
}

/// Builds the target table and draws the shared training and test sets.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    if let TargetSpec::Mnist { path } = &cfg.target {
        let train = truncate(mnist_load(path, Split::Train)?, cfg.data.train_size);
        let test = truncate(mnist_load(path, Split::Test)?, cfg.data.test_size);
        return Ok(Prepared {
            m: train.m(),
            table: None,
            train: Some(train),
            test: Some(test),
            ctot: None,
        });
    }
    let table = build_target(&cfg.target)?.expect("tabulated target");
    let draw = |size: Option<usize>, stream_id| {
        size.map(|k| rbm_targets::sample(&table, k, &mut stream(cfg.data.seed, stream_id)))
    };
    let train = draw(cfg.data.train_size, 0);
    let test = draw(cfg.data.test_size, 1);
    Ok(Prepared {
        m: table.m(),
        ctot: Some(total_correlation(&table)),
        table: Some(table),
        train,
        test,
    })
}

/// Summary statistics printed by `target-info`.
#[derive(Debug, Clone, Serialize)]
pub struct TargetInfo {
    pub target: TargetSpec,
    pub m: usize,
    pub support: usize,
    pub entropy: f64,
    pub ctot: f64,
    pub checksum: String,
    /// `(state, probability)` rows for targets of at most 8 units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(String, f64)>>,
    /// Per-split empirical statistics of sample-only targets.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub splits: Vec<SplitInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitInfo {
    pub split: String,
    pub samples: usize,
    pub distinct: usize,
    pub entropy: f64,
    pub ctot: f64,
}

pub fn target_info(spec: &TargetSpec) -> Result<TargetInfo> {
    if let TargetSpec::Mnist { path } = spec {
        let mut splits = Vec::new();
        for (name, split) in [("train", Split::Train), ("test", Split::Test)] {
            let s = mnist_load(path, split)?;
            splits.push(SplitInfo {
                split: name.into(),
                samples: s.len(),
                distinct: s.counts().len(),
                entropy: rbm_analysis::empirical_entropy(&s)?,
                ctot: rbm_analysis::empirical_total_correlation(&s)?,
            });
        }
        let m = 784;
        return Ok(TargetInfo {
            target: spec.clone(),
            m,
            support: splits[0].distinct,
            entropy: splits[0].entropy,
            ctot: splits[0].ctot,
            checksum: String::new(),
            table: None,
            splits,
        });
    }
    let t = build_target(spec)?.expect("tabulated target");
    let table = (t.m() <= 8).then(|| {
        t.entries()
            .iter()
            .map(|&(s, p)| ((0..t.m()).map(|i| if s >> i & 1 == 1 { '1' } else { '0' }).collect(), p))
            .collect()
    });
    Ok(TargetInfo {
        target: spec.clone(),
        m: t.m(),
        support: t.support_size(),
        entropy: entropy(&t),
        ctot: total_correlation(&t),
        checksum: format!("{:016x}", t.checksum()),
        table,
        splits: Vec::new(),
    })
}
