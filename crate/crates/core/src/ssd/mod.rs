//! Single-shot detection head: default boxes, box regression, suppression,
//! and the end-to-end detection pipeline.

mod boxes;
mod detect;
mod nms;
mod prior;

pub use boxes::{decode_box, decode_boxes, encode_box, iou, CornerBox};
pub use detect::{detect, head_weight_names, Detector, TapHead};
pub use nms::nms;
pub use prior::{generate_priors, PriorBox};

use crate::error::{Error, Result};
use crate::graph::NetworkConfig;

/// Background occupies class 0; index 15 is "person" in the 21-class VOC
/// label order.
pub const PERSON_CLASS: usize = 15;

/// A scored, labelled box in normalized corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub score: f32,
    pub bbox: CornerBox,
    /// Index of the default box this detection was decoded from; breaks
    /// score ties during suppression.
    pub prior_index: usize,
}

/// Tunables for prior generation and post-processing.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    /// One scale per feature tap, strictly increasing.
    pub scales: Vec<f32>,
    /// An extra ratio-1 box at the geometric-mean scale is always appended.
    pub aspect_ratios: Vec<f32>,
    pub variances: [f32; 4],
    pub confidence_threshold: f32,
    pub nms_iou_threshold: f32,
    pub top_k: usize,
    pub person_class: usize,
    /// Emit every non-background class instead of only `person_class`.
    pub all_classes: bool,
}

pub const DEFAULT_MIN_SCALE: f32 = 0.2;
pub const DEFAULT_MAX_SCALE: f32 = 0.9;

/// `count` scales spaced evenly over `[min, max]`.
pub fn linear_scales(count: usize, min: f32, max: f32) -> Vec<f32> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        n => (0..n)
            .map(|k| (min as f64 + (max as f64 - min as f64) * k as f64 / (n - 1) as f64) as f32)
            .collect(),
    }
}

impl HeadSpec {
    pub fn for_tap_count(taps: usize) -> Self {
        HeadSpec {
            scales: linear_scales(taps, DEFAULT_MIN_SCALE, DEFAULT_MAX_SCALE),
            aspect_ratios: vec![1.0, 2.0, 0.5, 3.0, 1.0 / 3.0],
            variances: [0.1, 0.1, 0.2, 0.2],
            confidence_threshold: 0.5,
            nms_iou_threshold: 0.45,
            top_k: 100,
            person_class: PERSON_CLASS,
            all_classes: false,
        }
    }

    pub fn for_config(config: &NetworkConfig) -> Self {
        Self::for_tap_count(config.tap_indices.len())
    }

    pub fn priors_per_location(&self) -> usize {
        self.aspect_ratios.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config(format!(
                "scales must lie in (0, 1], got {:?}",
                self.scales
            )));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "scales must be strictly increasing, got {:?}",
                self.scales
            )));
        }
        if self
            .aspect_ratios
            .iter()
            .any(|&a| !(a > 0.0 && a.is_finite()))
        {
            return Err(Error::Config(format!(
                "aspect ratios must be positive, got {:?}",
                self.aspect_ratios
            )));
        }
        if self.variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!(
                "variances must be positive, got {:?}",
                self.variances
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(
                "confidence threshold must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.nms_iou_threshold) {
            return Err(Error::Config("NMS IoU threshold must lie in [0, 1]".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks this head against the network it will sit on.
    pub fn validate_for(&self, config: &NetworkConfig) -> Result<()> {
        self.validate()?;
        if self.scales.len() != config.tap_indices.len() {
            return Err(Error::Config(format!(
                "head has {} scales for {} feature taps",
                self.scales.len(),
                config.tap_indices.len()
            )));
        }
        if self.priors_per_location() != config.priors_per_location {
            return Err(Error::Config(format!(
                "head yields {} priors per location, network declares {}",
                self.priors_per_location(),
                config.priors_per_location
            )));
        }
        if self.person_class == 0 || self.person_class >= config.num_classes {
            return Err(Error::Config(format!(
                "person class {} outside 1..{}",
                self.person_class, config.num_classes
            )));
        }
        Ok(())
    }
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self::for_tap_count(4)
    }
}
