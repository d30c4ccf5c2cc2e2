//! Target distributions: the transverse-field Ising ground state, the hook
//! and digit pattern images, the 1-D mini patterns and binarized MNIST.

pub mod digits;
pub mod mnist;
pub mod patterns;
pub mod tfic;

pub use digits::{digit_distribution, digit_distribution_with_stats, DigitStats};
pub use mnist::{mnist_load, Split};
pub use patterns::{hook_distribution, mini_pattern_distribution, PatternSpec};
pub use tfic::{tfic_ground_state, tfic_symmetry_checks, Basis, TficSpectrum};

use rbm_core::{rng::Rng, SampleSet, TabulatedDistribution};

/// Exact i.i.d. samples from a tabulated target.
pub fn sample(dist: &TabulatedDistribution, count: usize, rng: &mut Rng) -> SampleSet {
    dist.sample(count, rng)
}
