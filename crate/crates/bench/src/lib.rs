//! Fixture builders shared by the criterion benches.

use lcnn_core::weights::SplitMix64;
use lcnn_core::Tensor;

/// Tensor of uniform values in `[-1, 1)` from a fixed seed.
pub fn random_tensor(channels: usize, height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn(channels, height, width, |_, _, _| {
        (rng.next_uniform() * 2.0 - 1.0) as f32
    })
    .expect("positive dims")
}

pub fn random_values(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| (rng.next_uniform() * 2.0 - 1.0) as f32)
        .collect()
}
