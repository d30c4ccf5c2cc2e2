//! Experiment configuration files and command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rbm_analysis::ProxyConfig;
use rbm_core::InitScheme;
use rbm_mcmc::TauProtocol;
use rbm_targets::Basis;
use rbm_train::{Algorithm, FlowOptions, Schedule};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Tfic {
        m: usize,
        g: f64,
        basis: Basis,
    },
    Hook {
        #[serde(default = "default_side")]
        side: usize,
        #[serde(default = "default_q")]
        q: f64,
    },
    Digits {
        #[serde(default = "default_q")]
        q: f64,
    },
    Mini {
        m: usize,
        #[serde(default = "default_q")]
        q: f64,
    },
    Mnist {
        path: PathBuf,
    },
}

fn default_side() -> usize {
    5
}

fn default_q() -> f64 {
    0.1
}

impl TargetSpec {
    /// Image grid `(rows, cols)` of the target, when it has one.
    pub fn shape(&self) -> Option<(usize, usize)> {
        match self {
            TargetSpec::Hook { side, .. } => Some((*side, *side)),
            TargetSpec::Digits { .. } => Some((rbm_targets::digits::DIGIT_ROWS, rbm_targets::digits::DIGIT_COLS)),
            TargetSpec::Mnist { .. } => Some((28, 28)),
            TargetSpec::Tfic { .. } | TargetSpec::Mini { .. } => None,
        }
    }
}

/// Dataset sizes. Without `train_size` the machine is trained on the exact target.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    /// Seed of the dataset draws, shared by all runs of the experiment.
    #[serde(default)]
    pub seed: u64,
}

/// Hyperparameter grid; every combination is run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: Vec<usize>,
    #[serde(default = "default_n_cd")]
    pub n_cd: Vec<usize>,
    pub algorithm: Vec<Algorithm>,
    pub epochs: f64,
    #[serde(default)]
    pub persistent_chains: Option<usize>,
}

fn default_eta() -> Vec<f64> {
    vec![0.01]
}

fn default_batch() -> Vec<usize> {
    vec![100]
}

fn default_n_cd() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// From the spectrum of the exact transition kernel (tiny machines).
    Exact,
    #[default]
    Sampled,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    #[serde(default)]
    pub mode: TauMode,
    #[serde(default)]
    pub protocol: TauProtocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Exact loss against the tabulated target.
    #[default]
    Exact,
    /// Sample-based loss on the test set.
    Empirical,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default)]
    pub delta: DeltaMode,
    /// Also record the empirical loss on the training set as `delta_train`.
    #[serde(default)]
    pub train_delta: bool,
    #[serde(default = "yes")]
    pub ctot_model: bool,
    #[serde(default)]
    pub snapshots: bool,
    /// Enumeration cap in bits.
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn yes() -> bool {
    true
}

fn default_cap() -> usize {
    rbm_core::EnumerationCap::default().0
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            delta: DeltaMode::Exact,
            train_delta: false,
            ctot_model: true,
            snapshots: false,
            cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub target: TargetSpec,
    #[serde(default)]
    pub data: DataConfig,
    pub grid: GridConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub tau: TauConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    /// Proxy losses are recorded when this section is present.
    #[serde(default)]
    pub proxy: Option<ProxyConfig>,
    #[serde(default)]
    pub flow: FlowOptions,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Names of the shipped presets.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2b_small", include_str!("../presets/fig2b_small.toml")),
    ("fig3b_small", include_str!("../presets/fig3b_small.toml")),
    ("fig3e", include_str!("../presets/fig3e.toml")),
    ("fig4bc_small", include_str!("../presets/fig4bc_small.toml")),
    ("fig2b_full", include_str!("../presets/fig2b_full.toml")),
    ("fig3b_full", include_str!("../presets/fig3b_full.toml")),
    ("fig4bc_full", include_str!("../presets/fig4bc_full.toml")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))
}

/// Applies `key.path=value` overrides to a parsed TOML document. Values are
/// parsed as TOML, falling back to a bare string.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let (last, path) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut *doc;
        for p in path {
            let entry = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("override {key:?}: {p:?} is not a table")))?;
        }
        table.insert(last.to_string(), value);
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses a config document after applying overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.hidden.is_empty()
            || g.eta.is_empty()
            || g.batch_size.is_empty()
            || g.n_cd.is_empty()
            || g.algorithm.is_empty()
        {
            return Err(CliError::Config("every grid axis needs at least one value".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        let sampled = g.algorithm.iter().any(|a| !matches!(a, Algorithm::ExactFlow { .. }));
        if sampled && self.data.train_size.is_none() && !matches!(self.target, TargetSpec::Mnist { .. }) {
            return Err(CliError::Config("sampling-based training needs data.train_size".into()));
        }
        if self.proxy.is_some() && self.data.test_size.is_none() && !matches!(self.target, TargetSpec::Mnist { .. }) {
            return Err(CliError::Config("proxy metrics need data.test_size".into()));
        }
        if self.measure.delta == DeltaMode::Empirical && self.data.test_size.is_none() {
            return Err(CliError::Config("an empirical loss needs data.test_size".into()));
        }
        Ok(())
    }

    /// The resolved configuration, as embedded in run directories.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, text) in PRESETS {
            let c = ExperimentConfig::from_toml(text, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&c.name, name);
            let again = ExperimentConfig::from_toml(&c.to_toml(), &[]).unwrap();
            assert_eq!(again, c);
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = preset("fig3e").unwrap();
        let c = ExperimentConfig::from_toml(
            text,
            &["grid.epochs=7.5".into(), "seeds=[4, 5]".into(), "name=x".into()],
        )
        .unwrap();
        assert_eq!(c.grid.epochs, 7.5);
        assert_eq!(c.seeds, vec![4, 5]);
        assert_eq!(c.name, "x");
        assert!(ExperimentConfig::from_toml(text, &["seeds=[1, 1]".into()]).is_err());
        assert!(ExperimentConfig::from_toml(text, &["nonsense".into()]).is_err());
    }
}
