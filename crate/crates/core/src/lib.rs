//! Binary restricted Boltzmann machines: parameters, conditionals, and exact
//! enumeration-based evaluation of partition functions, marginals and losses.
//!
//! Visible states of up to 63 units are packed into `u64` words with bit `i`
//! holding unit `i`. Larger states (MNIST-sized) live in [`SampleSet`] rows
//! as one byte per unit.

pub mod dist;
pub mod error;
pub mod exact;
pub mod params;
pub mod rng;
pub mod state;
pub mod sum;

pub use dist::TabulatedDistribution;
pub use error::{Error, Result};
pub use exact::{EnumerationCap, LogPartition};
pub use params::{InitScheme, RbmParams};
pub use state::{BinaryState, SampleSet};
