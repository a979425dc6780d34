use super::{decode_box, generate_priors, nms, Detection, HeadSpec, PriorBox};
use crate::error::{Error, Result};
use crate::graph::{conv_weights_from_store, validate_config, Network, NetworkConfig};
use crate::nn::{pointwise_conv2d, softmax, ConvKind, ConvWeights, Tensor};
use crate::weights::WeightStore;

/// Names of the `(loc weight, loc bias, conf weight, conf bias)` arrays for
/// the head attached to layer `tap`.
pub fn head_weight_names(tap: usize) -> [String; 4] {
    [
        format!("head{tap}.loc.weight"),
        format!("head{tap}.loc.bias"),
        format!("head{tap}.conf.weight"),
        format!("head{tap}.conf.bias"),
    ]
}

/// Box-regression and class-score predictors for one feature tap. Both are
/// 1x1 convolutions over the tap tensor.
#[derive(Debug, Clone)]
pub struct TapHead {
    pub tap_index: usize,
    pub loc: ConvWeights,
    pub conf: ConvWeights,
}

/// A network with its detection heads and default boxes, ready to run frames.
#[derive(Debug, Clone)]
pub struct Detector {
    network: Network,
    heads: Vec<TapHead>,
    priors: Vec<PriorBox>,
    head: HeadSpec,
}

impl Detector {
    pub fn new(config: &NetworkConfig, store: &WeightStore, head: &HeadSpec) -> Result<Self> {
        head.validate_for(config)?;
        let shapes = validate_config(config)?;
        let network = Network::new(config, store)?;
        let per_cell = head.priors_per_location();
        let mut heads = Vec::new();
        let mut tap_shapes = Vec::new();
        for &tap in &config.tap_indices {
            let (channels, h, w) = shapes.get(tap).expect("validated tap").output;
            tap_shapes.push((h, w));
            let [lw, lb, cw, cb] = head_weight_names(tap);
            let loc = conv_weights_from_store(
                store,
                ConvKind::Pointwise,
                &lw,
                &lb,
                &[per_cell * 4, channels, 1, 1],
            );
            let conf = conv_weights_from_store(
                store,
                ConvKind::Pointwise,
                &cw,
                &cb,
                &[per_cell * config.num_classes, channels, 1, 1],
            );
            let wrap = |e: Error| match e {
                Error::Load(m) => Error::Load(format!("detection head for layer {tap}: {m}")),
                other => other,
            };
            heads.push(TapHead {
                tap_index: tap,
                loc: loc.map_err(wrap)?,
                conf: conf.map_err(wrap)?,
            });
        }
        let priors = generate_priors(&tap_shapes, head)?;
        Ok(Detector {
            network,
            heads,
            priors,
            head: head.clone(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn priors(&self) -> &[PriorBox] {
        &self.priors
    }

    pub fn head(&self) -> &HeadSpec {
        &self.head
    }

    pub fn tap_heads(&self) -> &[TapHead] {
        &self.heads
    }

    /// Runs one normalized frame and returns detections best-first.
    pub fn detect(&self, input: &Tensor) -> Result<Vec<Detection>> {
        let forward = self.network.forward(input)?;
        let num_classes = self.network.config().num_classes;
        let per_cell = self.head.priors_per_location();
        let classes: Vec<usize> = if self.head.all_classes {
            (1..num_classes).collect()
        } else {
            vec![self.head.person_class]
        };

        let mut candidates = Vec::new();
        let mut prior_base = 0;
        for (th, (tap_index, features)) in self.heads.iter().zip(&forward.taps) {
            debug_assert_eq!(th.tap_index, *tap_index);
            let loc = pointwise_conv2d(features, &th.loc)?;
            let conf = pointwise_conv2d(features, &th.conf)?;
            let (_, h, w) = features.shape();
            let mut logits = vec![0.0f32; num_classes];
            for y in 0..h {
                for x in 0..w {
                    for p in 0..per_cell {
                        let prior_index = prior_base + (y * w + x) * per_cell + p;
                        for (c, l) in logits.iter_mut().enumerate() {
                            *l = conf.get(p * num_classes + c, y, x);
                        }
                        let probs = softmax(&logits)?;
                        let offsets = [0, 1, 2, 3].map(|k| loc.get(p * 4 + k, y, x));
                        let mut decoded = None;
                        for &class_id in &classes {
                            let score = probs[class_id];
                            if score < self.head.confidence_threshold || score <= 0.0 {
                                continue;
                            }
                            let bbox = *decoded.get_or_insert_with(|| {
                                decode_box(offsets, &self.priors[prior_index], self.head.variances)
                            });
                            if !bbox.is_valid() {
                                continue;
                            }
                            candidates.push(Detection {
                                class_id,
                                score,
                                bbox,
                                prior_index,
                            });
                        }
                    }
                }
            }
            prior_base += h * w * per_cell;
        }
        Ok(nms(
            candidates,
            self.head.nms_iou_threshold,
            self.head.top_k,
        ))
    }
}

/// One-shot detection; binds weights, runs the frame, and post-processes.
pub fn detect(
    config: &NetworkConfig,
    weights: &WeightStore,
    head: &HeadSpec,
    input: &Tensor,
) -> Result<Vec<Detection>> {
    Detector::new(config, weights, head)?.detect(input)
}
