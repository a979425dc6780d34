use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Conventional,
    Depthwise,
    Pointwise,
}

impl ConvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvKind::Conventional => "conventional",
            ConvKind::Depthwise => "depthwise",
            ConvKind::Pointwise => "pointwise",
        }
    }
}

/// Filter bank for one convolution layer.
///
/// Value layouts, all row-major:
/// - conventional: `[N][M][Dk][Dk]`
/// - depthwise: `[M][Dk][Dk]`, output channel count is `M`
/// - pointwise: `[N][M]`
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    kind: ConvKind,
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    values: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvWeights {
    pub fn conventional(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        values: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        Self::build(
            ConvKind::Conventional,
            out_channels,
            in_channels,
            kernel,
            values,
            bias,
        )
    }

    pub fn depthwise(
        channels: usize,
        kernel: usize,
        values: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        Self::build(
            ConvKind::Depthwise,
            channels,
            channels,
            kernel,
            values,
            bias,
        )
    }

    pub fn pointwise(
        out_channels: usize,
        in_channels: usize,
        values: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        Self::build(
            ConvKind::Pointwise,
            out_channels,
            in_channels,
            1,
            values,
            bias,
        )
    }

    /// Number of filter values a layer of this kind and geometry holds.
    pub fn value_count(
        kind: ConvKind,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
    ) -> usize {
        match kind {
            ConvKind::Conventional => out_channels * in_channels * kernel * kernel,
            ConvKind::Depthwise => in_channels * kernel * kernel,
            ConvKind::Pointwise => out_channels * in_channels,
        }
    }

    fn build(
        kind: ConvKind,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        values: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Config(format!(
                "{} weights need positive channel counts, got N={out_channels} M={in_channels}",
                kind.as_str()
            )));
        }
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{} kernel size must be a positive odd integer, got {kernel}",
                kind.as_str()
            )));
        }
        let expected = Self::value_count(kind, out_channels, in_channels, kernel);
        if values.len() != expected {
            return Err(Error::Config(format!(
                "{} weights N={out_channels} M={in_channels} Dk={kernel} need {expected} values, got {}",
                kind.as_str(),
                values.len()
            )));
        }
        let bias = bias.unwrap_or_else(|| vec![0.0; out_channels]);
        if bias.len() != out_channels {
            return Err(Error::Config(format!(
                "{} bias needs {out_channels} values, got {}",
                kind.as_str(),
                bias.len()
            )));
        }
        Ok(ConvWeights {
            kind,
            out_channels,
            in_channels,
            kernel,
            values,
            bias,
        })
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

/// Receives the number of multiply-accumulates a kernel performs.
///
/// Zero-padded taps are counted: the count is the nominal work of the
/// convolution, not the number of in-bounds products.
pub trait MacSink {
    fn record(&mut self, macs: u64);
}

impl MacSink for () {
    #[inline(always)]
    fn record(&mut self, _macs: u64) {}
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MacCount(pub u64);

impl MacSink for MacCount {
    #[inline]
    fn record(&mut self, macs: u64) {
        self.0 += macs;
    }
}

/// `floor((input + 2 * pad - kernel) / stride) + 1`
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Usage("stride must be at least 1".into()));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Geometry(format!(
            "input extent {input} with padding {pad} is smaller than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output positions `o` whose source `o * stride + tap - pad` lies in `0..input`.
fn valid_outputs(
    output: usize,
    input: usize,
    stride: usize,
    tap: usize,
    pad: usize,
) -> Range<usize> {
    let lo = if tap >= pad {
        0
    } else {
        (pad - tap).div_ceil(stride)
    };
    if input + pad <= tap {
        return 0..0;
    }
    let hi = ((input + pad - tap - 1) / stride + 1).min(output);
    lo.min(hi)..hi
}

fn check_kind(w: &ConvWeights, kind: ConvKind) -> Result<()> {
    if w.kind != kind {
        return Err(Error::Usage(format!(
            "expected {} weights, got {}",
            kind.as_str(),
            w.kind.as_str()
        )));
    }
    Ok(())
}

fn check_channels(input: &Tensor, w: &ConvWeights) -> Result<()> {
    if input.channels() != w.in_channels {
        return Err(Error::Config(format!(
            "{} weights expect {} input channels, tensor has {}",
            w.kind.as_str(),
            w.in_channels,
            input.channels()
        )));
    }
    Ok(())
}

/// Adds `weight * plane` over one kernel tap into the `oh x ow` accumulator.
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_tap(
    acc: &mut [f64],
    plane: &[f32],
    (ih, iw): (usize, usize),
    (oh, ow): (usize, usize),
    (ky, kx): (usize, usize),
    stride: usize,
    pad: usize,
    weight: f64,
) {
    let rows = valid_outputs(oh, ih, stride, ky, pad);
    let cols = valid_outputs(ow, iw, stride, kx, pad);
    if cols.is_empty() {
        return;
    }
    for oy in rows {
        let iy = oy * stride + ky - pad;
        let src = &plane[iy * iw..(iy + 1) * iw];
        let dst = &mut acc[oy * ow..(oy + 1) * ow];
        if stride == 1 {
            let start = cols.start + kx - pad;
            let len = cols.len();
            for (d, &s) in dst[cols.clone()].iter_mut().zip(&src[start..start + len]) {
                *d += weight * s as f64;
            }
        } else {
            for ox in cols.clone() {
                dst[ox] += weight * src[ox * stride + kx - pad] as f64;
            }
        }
    }
}

fn finish(acc: &[f64], bias: f32, out: &mut Vec<f32>) {
    let b = bias as f64;
    out.extend(acc.iter().map(|&a| (a + b) as f32));
}

pub fn conv2d_direct(input: &Tensor, w: &ConvWeights, stride: usize, pad: usize) -> Result<Tensor> {
    conv2d_direct_counted(input, w, stride, pad, &mut ())
}

/// Conventional convolution: every output channel sums a `Dk x Dk` window
/// over all `M` input channels.
pub fn conv2d_direct_counted<S: MacSink>(
    input: &Tensor,
    w: &ConvWeights,
    stride: usize,
    pad: usize,
    sink: &mut S,
) -> Result<Tensor> {
    check_kind(w, ConvKind::Conventional)?;
    check_channels(input, w)?;
    let (m, ih, iw) = input.shape();
    let k = w.kernel;
    let oh = conv_output_dim(ih, k, stride, pad)?;
    let ow = conv_output_dim(iw, k, stride, pad)?;
    let mut out = Vec::with_capacity(w.out_channels * oh * ow);
    let mut acc = vec![0.0f64; oh * ow];
    for n in 0..w.out_channels {
        acc.fill(0.0);
        for c in 0..m {
            let plane = input.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let weight = w.values[((n * m + c) * k + ky) * k + kx] as f64;
                    sink.record((oh * ow) as u64);
                    accumulate_tap(
                        &mut acc,
                        plane,
                        (ih, iw),
                        (oh, ow),
                        (ky, kx),
                        stride,
                        pad,
                        weight,
                    );
                }
            }
        }
        finish(&acc, w.bias[n], &mut out);
    }
    Tensor::new(w.out_channels, oh, ow, out)
}

pub fn depthwise_conv2d(
    input: &Tensor,
    w: &ConvWeights,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    depthwise_conv2d_counted(input, w, stride, pad, &mut ())
}

/// Depthwise convolution: filter `c` sees only input channel `c`.
pub fn depthwise_conv2d_counted<S: MacSink>(
    input: &Tensor,
    w: &ConvWeights,
    stride: usize,
    pad: usize,
    sink: &mut S,
) -> Result<Tensor> {
    check_kind(w, ConvKind::Depthwise)?;
    check_channels(input, w)?;
    let (m, ih, iw) = input.shape();
    let k = w.kernel;
    let oh = conv_output_dim(ih, k, stride, pad)?;
    let ow = conv_output_dim(iw, k, stride, pad)?;
    let mut out = Vec::with_capacity(m * oh * ow);
    let mut acc = vec![0.0f64; oh * ow];
    for c in 0..m {
        acc.fill(0.0);
        let plane = input.plane(c);
        for ky in 0..k {
            for kx in 0..k {
                let weight = w.values[(c * k + ky) * k + kx] as f64;
                sink.record((oh * ow) as u64);
                accumulate_tap(
                    &mut acc,
                    plane,
                    (ih, iw),
                    (oh, ow),
                    (ky, kx),
                    stride,
                    pad,
                    weight,
                );
            }
        }
        finish(&acc, w.bias[c], &mut out);
    }
    Tensor::new(m, oh, ow, out)
}

pub fn pointwise_conv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    pointwise_conv2d_counted(input, w, &mut ())
}

/// 1x1 convolution: an `N x M` matrix applied at every pixel.
pub fn pointwise_conv2d_counted<S: MacSink>(
    input: &Tensor,
    w: &ConvWeights,
    sink: &mut S,
) -> Result<Tensor> {
    check_kind(w, ConvKind::Pointwise)?;
    check_channels(input, w)?;
    let (m, h, wd) = input.shape();
    let hw = h * wd;
    let mut out = Vec::with_capacity(w.out_channels * hw);
    let mut acc = vec![0.0f64; hw];
    for n in 0..w.out_channels {
        acc.fill(0.0);
        let row = &w.values[n * m..(n + 1) * m];
        for (c, &weight) in row.iter().enumerate() {
            let weight = weight as f64;
            sink.record(hw as u64);
            for (a, &x) in acc.iter_mut().zip(input.plane(c)) {
                *a += weight * x as f64;
            }
        }
        finish(&acc, w.bias[n], &mut out);
    }
    Tensor::new(w.out_channels, h, wd, out)
}
