//! Network configuration, shape propagation, and the forward pass.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, conv_output_dim, ConvKind, ConvWeights, MacSink, Tensor};
use crate::weights::WeightStore;

const DEFAULT_CONFIG_JSON: &str = include_str!("../assets/lcnn_default.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conventional,
    Depthwise,
    Pointwise,
    GlobalPool,
}

impl LayerKind {
    pub fn conv_kind(self) -> Option<ConvKind> {
        match self {
            LayerKind::Conventional => Some(ConvKind::Conventional),
            LayerKind::Depthwise => Some(ConvKind::Depthwise),
            LayerKind::Pointwise => Some(ConvKind::Pointwise),
            LayerKind::GlobalPool => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::GlobalPool => "global_pool",
            other => other.conv_kind().unwrap().as_str(),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    None,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based position in the schedule.
    pub index: usize,
    pub kind: LayerKind,
    /// Ignored for depthwise and pool layers.
    #[serde(default)]
    pub out_channels: usize,
    #[serde(default = "one")]
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Symmetric zero padding; defaults to `(kernel - 1) / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conventional(index: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            index,
            kind: LayerKind::Conventional,
            out_channels,
            kernel,
            stride,
            padding: None,
            activation: Activation::Relu,
        }
    }

    pub fn depthwise(index: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            index,
            kind: LayerKind::Depthwise,
            out_channels: 0,
            kernel,
            stride,
            padding: None,
            activation: Activation::Relu,
        }
    }

    pub fn pointwise(index: usize, out_channels: usize) -> Self {
        LayerSpec {
            index,
            kind: LayerKind::Pointwise,
            out_channels,
            kernel: 1,
            stride: 1,
            padding: None,
            activation: Activation::Relu,
        }
    }

    pub fn global_pool(index: usize) -> Self {
        LayerSpec {
            index,
            kind: LayerKind::GlobalPool,
            out_channels: 0,
            kernel: 1,
            stride: 1,
            padding: None,
            activation: Activation::None,
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = Some(padding);
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn effective_padding(&self) -> usize {
        match self.kind {
            LayerKind::Conventional | LayerKind::Depthwise => {
                self.padding.unwrap_or(self.kernel.saturating_sub(1) / 2)
            }
            _ => 0,
        }
    }

    pub fn is_conv(&self) -> bool {
        self.kind != LayerKind::GlobalPool
    }

    /// Output channel count given the channel count feeding the layer.
    pub fn output_channels(&self, in_channels: usize) -> usize {
        match self.kind {
            LayerKind::Conventional | LayerKind::Pointwise => self.out_channels,
            LayerKind::Depthwise | LayerKind::GlobalPool => in_channels,
        }
    }

    /// Stored shape of this layer's filter array.
    pub fn weight_dims(&self, in_channels: usize) -> Option<Vec<usize>> {
        let k = self.kernel;
        match self.kind {
            LayerKind::Conventional => Some(vec![self.out_channels, in_channels, k, k]),
            LayerKind::Depthwise => Some(vec![in_channels, 1, k, k]),
            LayerKind::Pointwise => Some(vec![self.out_channels, in_channels, 1, 1]),
            LayerKind::GlobalPool => None,
        }
    }

    pub fn weight_name(&self) -> String {
        layer_weight_name(self.index)
    }

    pub fn bias_name(&self) -> String {
        layer_bias_name(self.index)
    }
}

pub fn layer_weight_name(index: usize) -> String {
    format!("layer{index}.weight")
}

pub fn layer_bias_name(index: usize) -> String {
    format!("layer{index}.bias")
}

fn default_input_size() -> usize {
    224
}
fn default_input_channels() -> usize {
    3
}
fn default_num_classes() -> usize {
    21
}
fn default_priors() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub tap_indices: BTreeSet<usize>,
    /// Includes the background class at index 0.
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_priors")]
    pub priors_per_location: usize,
}

impl NetworkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("network config: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.is_conv())
    }
}

/// The built-in detector schedule: one strided 3x3 conventional layer,
/// twelve depthwise/pointwise pairs, and a single global pool at the end.
pub fn build_lcnn_default() -> NetworkConfig {
    NetworkConfig::from_json(DEFAULT_CONFIG_JSON).expect("embedded default config is valid JSON")
}

pub fn default_config_json() -> &'static str {
    DEFAULT_CONFIG_JSON
}

/// `(channels, height, width)`
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub index: usize,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTable {
    pub layers: Vec<LayerShape>,
}

impl ShapeTable {
    pub fn get(&self, index: usize) -> Option<&LayerShape> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// Shape entering the first pool layer, or the last output when there is none.
    pub fn pre_pool(&self) -> Shape {
        self.layers
            .iter()
            .find(|l| l.kind == LayerKind::GlobalPool)
            .map(|l| l.input)
            .unwrap_or_else(|| {
                self.layers
                    .last()
                    .expect("validated table is non-empty")
                    .output
            })
    }

    pub fn final_shape(&self) -> Shape {
        self.layers
            .last()
            .expect("validated table is non-empty")
            .output
    }
}

fn layer_err(index: usize, e: Error) -> Error {
    match e {
        Error::Geometry(m) => Error::Geometry(format!("layer {index}: {m}")),
        Error::Usage(m) | Error::Config(m) => Error::Config(format!("layer {index}: {m}")),
        other => other,
    }
}

/// Propagates shapes through the schedule and checks every structural rule.
pub fn validate_config(config: &NetworkConfig) -> Result<ShapeTable> {
    if config.input_size == 0 || config.input_channels == 0 {
        return Err(Error::Config(
            "input size and channel count must be positive".into(),
        ));
    }
    if config.num_classes < 2 {
        return Err(Error::Config(format!(
            "num_classes must include background plus at least one class, got {}",
            config.num_classes
        )));
    }
    if config.priors_per_location == 0 {
        return Err(Error::Config("priors_per_location must be positive".into()));
    }
    if config.layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }

    let last = config.layers.len();
    let mut shape = (config.input_channels, config.input_size, config.input_size);
    let mut table = Vec::with_capacity(last);
    for (pos, layer) in config.layers.iter().enumerate() {
        let idx = pos + 1;
        if layer.index != idx {
            return Err(Error::Config(format!(
                "layer {idx}: declared index {} is out of sequence",
                layer.index
            )));
        }
        let (c, h, w) = shape;
        let output = match layer.kind {
            LayerKind::GlobalPool => {
                if idx != last {
                    return Err(Error::Config(format!(
                        "layer {idx}: global pool may appear only once, as the final layer"
                    )));
                }
                (c, 1, 1)
            }
            kind => {
                if layer.kernel == 0 || layer.kernel % 2 == 0 {
                    return Err(Error::Config(format!(
                        "layer {idx}: kernel must be a positive odd integer, got {}",
                        layer.kernel
                    )));
                }
                if layer.stride == 0 {
                    return Err(Error::Config(format!(
                        "layer {idx}: stride must be at least 1"
                    )));
                }
                if kind == LayerKind::Pointwise
                    && (layer.kernel != 1 || layer.stride != 1 || layer.padding.unwrap_or(0) != 0)
                {
                    return Err(Error::Config(format!(
                        "layer {idx}: pointwise layers take kernel 1, stride 1, no padding"
                    )));
                }
                if kind != LayerKind::Depthwise && layer.out_channels == 0 {
                    return Err(Error::Config(format!(
                        "layer {idx}: {kind} layer needs a positive out_channels"
                    )));
                }
                let pad = layer.effective_padding();
                let oh = conv_output_dim(h, layer.kernel, layer.stride, pad)
                    .map_err(|e| layer_err(idx, e))?;
                let ow = conv_output_dim(w, layer.kernel, layer.stride, pad)
                    .map_err(|e| layer_err(idx, e))?;
                (layer.output_channels(c), oh, ow)
            }
        };
        table.push(LayerShape {
            index: idx,
            kind: layer.kind,
            input: shape,
            output,
        });
        shape = output;
    }

    for &tap in &config.tap_indices {
        match config.layer(tap) {
            Some(l) if l.is_conv() => {}
            Some(_) => {
                return Err(Error::Config(format!(
                    "tap index {tap} refers to a pool layer, not a convolution"
                )))
            }
            None => {
                return Err(Error::Config(format!(
                    "tap index {tap} refers to no layer (network has {last})"
                )))
            }
        }
    }
    Ok(ShapeTable { layers: table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// `(layer index, output)` in ascending layer order.
    pub taps: Vec<(usize, Tensor)>,
    /// Output of the last layer (the pooled features for the default schedule).
    pub final_output: Tensor,
}

impl ForwardResult {
    pub fn tap(&self, index: usize) -> Option<&Tensor> {
        self.taps.iter().find(|(i, _)| *i == index).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
enum CompiledOp {
    Conv {
        weights: ConvWeights,
        stride: usize,
        pad: usize,
    },
    Pool,
}

#[derive(Debug, Clone)]
struct CompiledLayer {
    index: usize,
    op: CompiledOp,
    relu: bool,
}

/// A validated configuration bound to its weights, ready to run.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    shapes: ShapeTable,
    layers: Vec<CompiledLayer>,
}

/// Reads one convolution's filter and bias arrays out of a store.
pub(crate) fn conv_weights_from_store(
    store: &WeightStore,
    kind: ConvKind,
    weight_name: &str,
    bias_name: &str,
    dims: &[usize],
) -> Result<ConvWeights> {
    let values = store.expect(weight_name, dims)?.data().to_vec();
    let bias = store.expect(bias_name, &[dims[0]])?.data().to_vec();
    match kind {
        ConvKind::Conventional => {
            ConvWeights::conventional(dims[0], dims[1], dims[2], values, Some(bias))
        }
        ConvKind::Depthwise => ConvWeights::depthwise(dims[0], dims[2], values, Some(bias)),
        ConvKind::Pointwise => ConvWeights::pointwise(dims[0], dims[1], values, Some(bias)),
    }
    .map_err(|e| Error::Load(format!("'{weight_name}': {e}")))
}

impl Network {
    pub fn new(config: &NetworkConfig, store: &WeightStore) -> Result<Self> {
        let shapes = validate_config(config)?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (spec, shape) in config.layers.iter().zip(&shapes.layers) {
            let op = match spec.kind.conv_kind() {
                None => CompiledOp::Pool,
                Some(kind) => {
                    let dims = spec
                        .weight_dims(shape.input.0)
                        .expect("conv layer has weights");
                    let weights = conv_weights_from_store(
                        store,
                        kind,
                        &spec.weight_name(),
                        &spec.bias_name(),
                        &dims,
                    )
                    .map_err(|e| match e {
                        Error::Load(m) => Error::Load(format!("layer {}: {m}", spec.index)),
                        other => other,
                    })?;
                    CompiledOp::Conv {
                        weights,
                        stride: spec.stride,
                        pad: spec.effective_padding(),
                    }
                }
            };
            layers.push(CompiledLayer {
                index: spec.index,
                op,
                relu: spec.activation == Activation::Relu,
            });
        }
        Ok(Network {
            config: config.clone(),
            shapes,
            layers,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn shapes(&self) -> &ShapeTable {
        &self.shapes
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardResult> {
        self.forward_counted(input, &mut ())
    }

    pub fn forward_counted<S: MacSink>(
        &self,
        input: &Tensor,
        sink: &mut S,
    ) -> Result<ForwardResult> {
        let expected = (
            self.config.input_channels,
            self.config.input_size,
            self.config.input_size,
        );
        if input.shape() != expected {
            return Err(Error::Usage(format!(
                "input tensor is {:?}, network expects {expected:?}",
                input.shape()
            )));
        }
        let mut taps = Vec::with_capacity(self.config.tap_indices.len());
        let mut current: Option<Tensor> = None;
        for layer in &self.layers {
            let x = current.as_ref().unwrap_or(input);
            let mut y = match &layer.op {
                CompiledOp::Conv {
                    weights,
                    stride,
                    pad,
                } => match weights.kind() {
                    ConvKind::Conventional => {
                        nn::conv2d_direct_counted(x, weights, *stride, *pad, sink)?
                    }
                    ConvKind::Depthwise => {
                        nn::depthwise_conv2d_counted(x, weights, *stride, *pad, sink)?
                    }
                    ConvKind::Pointwise => nn::pointwise_conv2d_counted(x, weights, sink)?,
                },
                CompiledOp::Pool => nn::global_avg_pool(x),
            };
            if layer.relu {
                nn::relu_in_place(&mut y);
            }
            if self.config.tap_indices.contains(&layer.index) {
                taps.push((layer.index, y.clone()));
            }
            current = Some(y);
        }
        Ok(ForwardResult {
            taps,
            final_output: current.expect("validated network has layers"),
        })
    }
}

/// One-shot forward pass; binds the weights and runs.
pub fn forward(
    config: &NetworkConfig,
    weights: &WeightStore,
    input: &Tensor,
) -> Result<ForwardResult> {
    Network::new(config, weights)?.forward(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_26_layers_with_single_final_pool() {
        let cfg = build_lcnn_default();
        assert_eq!(cfg.layers.len(), 26);
        let pools: Vec<_> = cfg
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::GlobalPool)
            .collect();
        assert_eq!(pools.len(), 1);
        assert_eq!(pools[0].index, 26);
        assert_eq!(cfg.layers[0].kind, LayerKind::Conventional);
        assert_eq!(
            cfg.tap_indices.iter().copied().collect::<Vec<_>>(),
            [11, 13, 15, 17]
        );
        assert_eq!(cfg.input_size, 224);
        assert_eq!(cfg.num_classes, 21);
    }

    #[test]
    fn default_matches_declared_schedule() {
        let cfg = build_lcnn_default();
        let l1 = &cfg.layers[0];
        assert_eq!((l1.out_channels, l1.kernel, l1.stride), (32, 3, 2));
        let blocks = [
            (64, 1),
            (128, 2),
            (128, 1),
            (256, 2),
            (256, 1),
            (512, 2),
            (512, 1),
            (512, 1),
            (512, 1),
            (1024, 2),
            (1024, 1),
            (1024, 1),
        ];
        for (b, &(ch, stride)) in blocks.iter().enumerate() {
            let dw = &cfg.layers[1 + 2 * b];
            let pw = &cfg.layers[2 + 2 * b];
            assert_eq!(
                (dw.kind, dw.kernel, dw.stride),
                (LayerKind::Depthwise, 3, stride)
            );
            assert_eq!(
                (pw.kind, pw.out_channels, pw.stride),
                (LayerKind::Pointwise, ch, 1)
            );
        }
    }

    #[test]
    fn default_shapes() {
        let cfg = build_lcnn_default();
        let table = validate_config(&cfg).unwrap();
        assert_eq!(table.get(1).unwrap().output, (32, 112, 112));
        assert_eq!(table.get(11).unwrap().output, (256, 28, 28));
        assert_eq!(table.get(13).unwrap().output, (512, 14, 14));
        assert_eq!(table.get(15).unwrap().output, (512, 14, 14));
        assert_eq!(table.get(17).unwrap().output, (512, 14, 14));
        assert_eq!(table.pre_pool(), (1024, 7, 7));
        assert_eq!(table.final_shape(), (1024, 1, 1));
    }

    #[test]
    fn spatial_size_never_grows() {
        let table = validate_config(&build_lcnn_default()).unwrap();
        for l in &table.layers {
            assert!(l.output.1 <= l.input.1 && l.output.2 <= l.input.2);
        }
    }

    #[test]
    fn pool_mid_network_rejected() {
        let mut cfg = build_lcnn_default();
        cfg.layers[4] = LayerSpec::global_pool(5);
        let err = validate_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("layer 5"), "{err}");
        assert!(err.contains("final layer"), "{err}");
    }

    #[test]
    fn vanishing_dims_rejected() {
        let cfg = NetworkConfig {
            input_size: 1,
            input_channels: 1,
            layers: vec![LayerSpec::conventional(1, 4, 3, 1).with_padding(0)],
            tap_indices: BTreeSet::new(),
            num_classes: 2,
            priors_per_location: 1,
        };
        let err = validate_config(&cfg).unwrap_err();
        assert!(
            matches!(&err, Error::Geometry(m) if m.contains("layer 1")),
            "{err}"
        );
    }

    #[test]
    fn bad_taps_rejected() {
        let mut cfg = build_lcnn_default();
        cfg.tap_indices.insert(26);
        assert!(validate_config(&cfg).is_err());
        let mut cfg = build_lcnn_default();
        cfg.tap_indices.insert(40);
        assert!(validate_config(&cfg).is_err());
    }

    #[test]
    fn out_of_sequence_index_rejected() {
        let mut cfg = build_lcnn_default();
        cfg.layers[3].index = 9;
        let err = validate_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("layer 4"), "{err}");
    }

    #[test]
    fn strided_pointwise_rejected() {
        let mut cfg = build_lcnn_default();
        cfg.layers[2].stride = 2;
        assert!(validate_config(&cfg)
            .unwrap_err()
            .to_string()
            .contains("layer 3"));
    }

    #[test]
    fn json_round_trip() {
        let cfg = build_lcnn_default();
        assert_eq!(NetworkConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn malformed_json_is_config_error() {
        assert!(matches!(
            NetworkConfig::from_json("{\"layers\": 3}"),
            Err(Error::Config(_))
        ));
    }
}
