//! Fixtures shared by the criterion benches.

use otasplit::{CutOutputs, SplitNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Split shaped like the desk-scale experiment: 16 -> 32 per agent, N_A = 256,
/// 10 classes.
pub fn desk_split(agents: usize, seed: u64) -> SplitNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SplitNetwork::random(agents, 16, 32, 256, 10, &mut rng).expect("valid widths")
}

pub fn random_inputs(agents: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..agents)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_outputs(agents: usize, width: usize, seed: u64) -> CutOutputs {
    CutOutputs::new(random_inputs(agents, width, seed)).expect("non-empty")
}
