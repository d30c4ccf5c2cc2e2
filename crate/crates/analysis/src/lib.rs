//! Post-processing of trained machines and learning trajectories.

pub mod metrics;
pub mod proxy;
pub mod tradeoff;

pub use metrics::{
    calibrate_sigma, coarse_grain, coarse_kl, default_sigma_grid, empirical_entropy, empirical_total_correlation,
    gaussian_smoothed_kl, l1_distance, make_partitions, weights_std, Calibration, DistanceProfile, Partition,
    PartitionKind,
};
pub use proxy::{ProxyConfig, ProxyMeasurer};
pub use tradeoff::{
    analyze, classify_stages, fit_bound, rescale_collapse, spearman, BoundFit, CollapseCurve, CollapseReport, FitError,
    FitSummary, Stage, StagePoint, StageReport,
};
