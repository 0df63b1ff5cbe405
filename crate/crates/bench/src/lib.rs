//! Fixtures shared by the benchmarks.

use bvs_core::{synthetic, Dataset, GammaState};

/// Linear data with `p` covariates, five of them causal, and a state that
/// includes those five.
pub fn linear_fixture(n: usize, p: usize, seed: u64) -> (Dataset, GammaState) {
    let causal: Vec<usize> = (0..5).map(|k| k * p / 5).collect();
    let data = synthetic::planted_linear(n, p, &causal, &[1.0, -0.8, 0.6, -0.5, 0.4], 1.0, seed);
    let gamma = GammaState::from_active(p, &causal).expect("causal indices are in range");
    (data, gamma)
}
