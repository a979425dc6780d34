use super::{SplitMix64, WeightStore};
use crate::error::Result;
use crate::graph::{validate_config, NetworkConfig};
use crate::ssd::{head_weight_names, HeadSpec};

/// Every array the detector needs, as `(name, dims)`, in file order:
/// backbone layers first, then the heads of each tap in ascending order.
pub fn parameter_layout(
    config: &NetworkConfig,
    head: &HeadSpec,
) -> Result<Vec<(String, Vec<usize>)>> {
    let shapes = validate_config(config)?;
    head.validate_for(config)?;
    let mut layout = Vec::new();
    for (spec, shape) in config.layers.iter().zip(&shapes.layers) {
        if let Some(dims) = spec.weight_dims(shape.input.0) {
            let n = dims[0];
            layout.push((spec.weight_name(), dims));
            layout.push((spec.bias_name(), vec![n]));
        }
    }
    let per_cell = head.priors_per_location();
    for &tap in &config.tap_indices {
        let channels = shapes.get(tap).expect("validated tap").output.0;
        let [lw, lb, cw, cb] = head_weight_names(tap);
        layout.push((lw, vec![per_cell * 4, channels, 1, 1]));
        layout.push((lb, vec![per_cell * 4]));
        layout.push((cw, vec![per_cell * config.num_classes, channels, 1, 1]));
        layout.push((cb, vec![per_cell * config.num_classes]));
    }
    Ok(layout)
}

/// He-scaled normal weights (`std = sqrt(2 / fan_in)`) and zero biases,
/// drawn from one SplitMix64 stream in file order.
pub fn random_init(config: &NetworkConfig, head: &HeadSpec, seed: u64) -> Result<WeightStore> {
    let mut rng = SplitMix64::new(seed);
    let mut store = WeightStore::new();
    for (name, dims) in parameter_layout(config, head)? {
        let n: usize = dims.iter().product();
        let data = if dims.len() == 1 {
            vec![0.0; n]
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| (rng.next_normal() * std) as f32).collect()
        };
        store.insert(name, dims, data)?;
    }
    Ok(store)
}

/// All-zero weights and biases with the full detector layout.
pub fn zero_init(config: &NetworkConfig, head: &HeadSpec) -> Result<WeightStore> {
    let mut store = WeightStore::new();
    for (name, dims) in parameter_layout(config, head)? {
        let n = dims.iter().product();
        store.insert(name, dims, vec![0.0; n])?;
    }
    Ok(store)
}
