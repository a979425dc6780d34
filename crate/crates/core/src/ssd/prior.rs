use super::HeadSpec;
use crate::error::{Error, Result};

/// Default box in normalized center form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBox {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

/// Default boxes for every cell of every tap.
///
/// Emission order: taps in the given order, cells row-major, then one box
/// per aspect ratio in declared order, then the extra box whose scale is
/// the geometric mean of this tap's scale and the next one (1.0 after the
/// last tap). Every coordinate is clipped to `[0, 1]`.
pub fn generate_priors(tap_shapes: &[(usize, usize)], head: &HeadSpec) -> Result<Vec<PriorBox>> {
    if tap_shapes.len() != head.scales.len() {
        return Err(Error::Config(format!(
            "{} feature taps but {} prior scales",
            tap_shapes.len(),
            head.scales.len()
        )));
    }
    let per_cell = head.priors_per_location();
    let total: usize = tap_shapes.iter().map(|(h, w)| h * w * per_cell).sum();
    let mut priors = Vec::with_capacity(total);
    let clip = |v: f64| v.clamp(0.0, 1.0) as f32;
    for (k, &(rows, cols)) in tap_shapes.iter().enumerate() {
        let s = head.scales[k] as f64;
        let next = head.scales.get(k + 1).map_or(1.0, |&v| v as f64);
        let extra = (s * next).sqrt();
        for i in 0..rows {
            for j in 0..cols {
                let cx = clip((j as f64 + 0.5) / cols as f64);
                let cy = clip((i as f64 + 0.5) / rows as f64);
                for &ratio in &head.aspect_ratios {
                    let r = (ratio as f64).sqrt();
                    priors.push(PriorBox {
                        cx,
                        cy,
                        w: clip(s * r),
                        h: clip(s / r),
                    });
                }
                priors.push(PriorBox {
                    cx,
                    cy,
                    w: clip(extra),
                    h: clip(extra),
                });
            }
        }
    }
    Ok(priors)
}
