//! Training of binary RBMs: minibatch CD and PCD updates, an adaptive chain
//! length tied to the autocorrelation time, and the exact continuous-time
//! gradient flow for machines small enough to enumerate.

pub mod error;
pub mod flow;
pub mod measure;
pub mod schedule;
pub mod trainer;
pub mod update;

pub use error::{Result, TrainError};
pub use flow::{exact_flow, flow_rhs, FlowOptions, FlowOrder};
pub use measure::{DeltaKind, Measurer, TrajectoryRecord};
pub use schedule::Schedule;
pub use trainer::{train, Algorithm, TrainConfig, TrainingData};
pub use update::{adaptive_pcd_update, cd_update, data_average_gradient, pcd_update, AdaptiveNcd, PersistentChains};
