#![allow(dead_code)]

use lcnn_core::graph::{LayerSpec, NetworkConfig};
use lcnn_core::weights::SplitMix64;
use lcnn_core::Tensor;

pub fn uniform(rng: &mut SplitMix64) -> f32 {
    (rng.next_uniform() * 2.0 - 1.0) as f32
}

pub fn random_tensor(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| uniform(rng)).unwrap()
}

pub fn random_vec(rng: &mut SplitMix64, n: usize) -> Vec<f32> {
    (0..n).map(|_| uniform(rng)).collect()
}

/// Max-norm relative error of `got` against `want`.
pub fn rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(g, w)| (*g as f64 - w).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn config(
    input_size: usize,
    input_channels: usize,
    layers: Vec<LayerSpec>,
    taps: &[usize],
) -> NetworkConfig {
    NetworkConfig {
        input_size,
        input_channels,
        layers,
        tap_indices: taps.iter().copied().collect(),
        num_classes: 21,
        priors_per_location: 6,
    }
}
