use super::PriorBox;
use crate::error::{Error, Result};

/// `(xmin, ymin, xmax, ymax)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub xmin: f32,
    pub ymin: f32,
    pub xmax: f32,
    pub ymax: f32,
}

impl CornerBox {
    pub fn new(xmin: f32, ymin: f32, xmax: f32, ymax: f32) -> Self {
        CornerBox {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn from_prior(p: &PriorBox) -> Self {
        Self::from_center(p.cx as f64, p.cy as f64, p.w as f64, p.h as f64)
    }

    fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        CornerBox {
            xmin: (cx - w / 2.0) as f32,
            ymin: (cy - h / 2.0) as f32,
            xmax: (cx + w / 2.0) as f32,
            ymax: (cy + h / 2.0) as f32,
        }
    }

    pub fn width(&self) -> f32 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f32 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f32 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.xmin < self.xmax && self.ymin < self.ymax
    }

    pub fn clipped(&self) -> Self {
        CornerBox {
            xmin: self.xmin.clamp(0.0, 1.0),
            ymin: self.ymin.clamp(0.0, 1.0),
            xmax: self.xmax.clamp(0.0, 1.0),
            ymax: self.ymax.clamp(0.0, 1.0),
        }
    }
}

/// Intersection over union; 0 for disjoint or degenerate pairs.
pub fn iou(a: &CornerBox, b: &CornerBox) -> f32 {
    let iw = (a.xmax.min(b.xmax) as f64 - a.xmin.max(b.xmin) as f64).max(0.0);
    let ih = (a.ymax.min(b.ymax) as f64 - a.ymin.max(b.ymin) as f64).max(0.0);
    let inter = iw * ih;
    let area = |r: &CornerBox| {
        (r.xmax as f64 - r.xmin as f64).max(0.0) * (r.ymax as f64 - r.ymin as f64).max(0.0)
    };
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0) as f32
}

/// Applies regression offsets `(tx, ty, tw, th)` to a prior and returns the
/// clipped corner box.
pub fn decode_box(loc: [f32; 4], prior: &PriorBox, variances: [f32; 4]) -> CornerBox {
    let [tx, ty, tw, th] = loc.map(|v| v as f64);
    let [v0, v1, v2, v3] = variances.map(|v| v as f64);
    let (pcx, pcy, pw, ph) = (
        prior.cx as f64,
        prior.cy as f64,
        prior.w as f64,
        prior.h as f64,
    );
    let cx = pcx + tx * v0 * pw;
    let cy = pcy + ty * v1 * ph;
    let w = pw * (tw * v2).exp();
    let h = ph * (th * v3).exp();
    CornerBox::from_center(cx, cy, w, h).clipped()
}

pub fn decode_boxes(
    loc: &[[f32; 4]],
    priors: &[PriorBox],
    variances: [f32; 4],
) -> Result<Vec<CornerBox>> {
    if loc.len() != priors.len() {
        return Err(Error::Usage(format!(
            "{} regression vectors for {} priors",
            loc.len(),
            priors.len()
        )));
    }
    Ok(loc
        .iter()
        .zip(priors)
        .map(|(l, p)| decode_box(*l, p, variances))
        .collect())
}

/// Inverse of [`decode_box`] for boxes that need no clipping.
pub fn encode_box(b: &CornerBox, prior: &PriorBox, variances: [f32; 4]) -> [f32; 4] {
    let [v0, v1, v2, v3] = variances.map(|v| v as f64);
    let (pcx, pcy, pw, ph) = (
        prior.cx as f64,
        prior.cy as f64,
        prior.w as f64,
        prior.h as f64,
    );
    let w = b.xmax as f64 - b.xmin as f64;
    let h = b.ymax as f64 - b.ymin as f64;
    let cx = b.xmin as f64 + w / 2.0;
    let cy = b.ymin as f64 + h / 2.0;
    [
        ((cx - pcx) / (pw * v0)) as f32,
        ((cy - pcy) / (ph * v1)) as f32,
        ((w / pw).ln() / v2) as f32,
        ((h / ph).ln() / v3) as f32,
    ]
}
