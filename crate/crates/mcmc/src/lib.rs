//! Markov-chain sampling of RBM visible configurations and estimation of
//! integrated autocorrelation times.

pub mod autocorr;
pub mod gibbs;

pub use autocorr::{CorrelationEstimate, Observable, TauEstimate, TauProtocol};
pub use gibbs::{ChainState, Sampler};
