use super::Tensor;
use crate::error::{Error, Result};

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

/// Mean of each channel plane, as a `C x 1 x 1` tensor.
pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let (c, h, w) = input.shape();
    let n = (h * w) as f64;
    let data = (0..c)
        .map(|ch| (input.plane(ch).iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
        .collect();
    Tensor::new(c, 1, 1, data).expect("pooled shape is non-empty")
}

/// Max-shifted softmax computed in `f64`.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(Error::Usage("softmax of an empty vector".into()));
    }
    let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total) as f32).collect())
}
