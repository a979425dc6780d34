//! Exact multiply-accumulate and parameter accounting.
//!
//! For a layer with `Dk x Dk` kernels, `M` input channels, `N` output
//! channels and a `Df x Df` output map:
//!
//! - conventional: `Dk*Dk*M*N*Df*Df` MACs
//! - depthwise + pointwise: `Dk*Dk*M*Df*Df + N*M*Df*Df` MACs
//! - ratio separable/conventional: `1/N + 1/Dk^2`
//!
//! `Df` is the layer's *output* extent, so strided layers are charged at the
//! resolution they produce. All counts are exact integers.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::graph::{validate_config, NetworkConfig};
use crate::nn::ConvKind;
use crate::ssd::HeadSpec;

/// Bytes per stored parameter.
pub const BYTES_PER_PARAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub layer_label: String,
    /// `None` for the two-stage separable aggregate.
    pub kind: Option<ConvKind>,
    pub kernel: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    /// Output spatial extent.
    pub out_size: u64,
    pub macs: u64,
    /// Filter values, excluding biases.
    pub params: u64,
    pub bias_params: u64,
}

fn product(label: &str, factors: &[u64]) -> Result<u64> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or_else(|| Error::Usage(format!("{label}: count overflows u64")))
}

fn check_args(args: &[(&str, u64)]) -> Result<()> {
    for (name, v) in args {
        if *v == 0 {
            return Err(Error::Usage(format!("{name} must be at least 1")));
        }
    }
    Ok(())
}

pub fn cost_conventional(dk: u64, m: u64, n: u64, df: u64) -> Result<LayerCost> {
    check_args(&[("Dk", dk), ("M", m), ("N", n), ("Df", df)])?;
    Ok(LayerCost {
        layer_label: "conventional".into(),
        kind: Some(ConvKind::Conventional),
        kernel: dk,
        in_channels: m,
        out_channels: n,
        out_size: df,
        macs: product("conventional", &[dk, dk, m, n, df, df])?,
        params: product("conventional", &[n, m, dk, dk])?,
        bias_params: n,
    })
}

pub fn cost_depthwise(dk: u64, m: u64, df: u64) -> Result<LayerCost> {
    check_args(&[("Dk", dk), ("M", m), ("Df", df)])?;
    Ok(LayerCost {
        layer_label: "depthwise".into(),
        kind: Some(ConvKind::Depthwise),
        kernel: dk,
        in_channels: m,
        out_channels: m,
        out_size: df,
        macs: product("depthwise", &[dk, dk, m, df, df])?,
        params: product("depthwise", &[m, dk, dk])?,
        bias_params: m,
    })
}

pub fn cost_pointwise(m: u64, n: u64, df: u64) -> Result<LayerCost> {
    check_args(&[("M", m), ("N", n), ("Df", df)])?;
    Ok(LayerCost {
        layer_label: "pointwise".into(),
        kind: Some(ConvKind::Pointwise),
        kernel: 1,
        in_channels: m,
        out_channels: n,
        out_size: df,
        macs: product("pointwise", &[n, m, df, df])?,
        params: product("pointwise", &[n, m])?,
        bias_params: n,
    })
}

/// Depthwise stage plus pointwise stage, written as the two-term sum.
pub fn cost_separable(dk: u64, m: u64, n: u64, df: u64) -> Result<LayerCost> {
    check_args(&[("Dk", dk), ("M", m), ("N", n), ("Df", df)])?;
    let spatial = product("separable", &[dk, dk, m, df, df])?;
    let mixing = product("separable", &[n, m, df, df])?;
    let filters = product("separable", &[dk, dk, m])?;
    let matrix = product("separable", &[n, m])?;
    Ok(LayerCost {
        layer_label: "separable".into(),
        kind: None,
        kernel: dk,
        in_channels: m,
        out_channels: n,
        out_size: df,
        macs: spatial
            .checked_add(mixing)
            .ok_or_else(|| Error::Usage("separable: count overflows u64".into()))?,
        params: filters + matrix,
        bias_params: m + n,
    })
}

/// `1/N + 1/Dk^2`, exactly.
pub fn reduction_ratio(dk: u64, n: u64) -> Result<Ratio<u64>> {
    check_args(&[("Dk", dk), ("N", n)])?;
    let dk2 = dk
        .checked_mul(dk)
        .ok_or_else(|| Error::Usage("Dk^2 overflows u64".into()))?;
    Ok(Ratio::new(1, n) + Ratio::new(1, dk2))
}

/// A depthwise layer immediately followed by a pointwise layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparablePair {
    pub depthwise_index: usize,
    pub pointwise_index: usize,
    pub kernel: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    pub out_size: u64,
    pub separable_macs: u64,
    /// Cost of one conventional layer with the same `Dk`, `M`, `N`, `Df`.
    pub conventional_macs: u64,
}

impl SeparablePair {
    pub fn measured_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.separable_macs, self.conventional_macs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProfileTotals {
    pub macs: u64,
    pub params: u64,
    pub bias_params: u64,
    /// `params * 4`
    pub param_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkProfile {
    pub rows: Vec<LayerCost>,
    pub totals: ProfileTotals,
    pub pairs: Vec<SeparablePair>,
}

impl NetworkProfile {
    fn from_rows(rows: Vec<LayerCost>, pairs: Vec<SeparablePair>) -> Self {
        let mut totals = ProfileTotals::default();
        for r in &rows {
            totals.macs += r.macs;
            totals.params += r.params;
            totals.bias_params += r.bias_params;
        }
        totals.param_bytes = totals.params * BYTES_PER_PARAM;
        NetworkProfile {
            rows,
            totals,
            pairs,
        }
    }

    /// `layer,kind,Dk,M,N,Df,macs,params`, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,Dk,M,N,Df,macs,params\n");
        for r in &self.rows {
            let kind = r.kind.map_or("separable", ConvKind::as_str);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.layer_label,
                kind,
                r.kernel,
                r.in_channels,
                r.out_channels,
                r.out_size,
                r.macs,
                r.params
            );
        }
        out
    }
}

/// One row per convolution layer, charged at its propagated output size.
pub fn profile_network(config: &NetworkConfig) -> Result<NetworkProfile> {
    let shapes = validate_config(config)?;
    let mut rows = Vec::new();
    for (spec, shape) in config.layers.iter().zip(&shapes.layers) {
        let Some(kind) = spec.kind.conv_kind() else {
            continue;
        };
        let m = shape.input.0 as u64;
        let n = shape.output.0 as u64;
        let df = shape.output.1 as u64;
        let dk = spec.kernel as u64;
        let mut cost = match kind {
            ConvKind::Conventional => cost_conventional(dk, m, n, df)?,
            ConvKind::Depthwise => cost_depthwise(dk, m, df)?,
            ConvKind::Pointwise => cost_pointwise(m, n, df)?,
        };
        cost.layer_label = spec.index.to_string();
        rows.push(cost);
    }

    let mut pairs = Vec::new();
    for w in config.layers.windows(2) {
        if w[0].kind.conv_kind() == Some(ConvKind::Depthwise)
            && w[1].kind.conv_kind() == Some(ConvKind::Pointwise)
        {
            let dw = shapes.get(w[0].index).expect("validated");
            let pw = shapes.get(w[1].index).expect("validated");
            let (dk, m, n, df) = (
                w[0].kernel as u64,
                dw.input.0 as u64,
                pw.output.0 as u64,
                pw.output.1 as u64,
            );
            pairs.push(SeparablePair {
                depthwise_index: w[0].index,
                pointwise_index: w[1].index,
                kernel: dk,
                in_channels: m,
                out_channels: n,
                out_size: df,
                separable_macs: cost_separable(dk, m, n, df)?.macs,
                conventional_macs: cost_conventional(dk, m, n, df)?.macs,
            });
        }
    }
    Ok(NetworkProfile::from_rows(rows, pairs))
}

/// Backbone rows followed by the 1x1 box and class predictors of each tap.
pub fn profile_detector(config: &NetworkConfig, head: &HeadSpec) -> Result<NetworkProfile> {
    head.validate_for(config)?;
    let backbone = profile_network(config)?;
    let shapes = validate_config(config)?;
    let per_cell = head.priors_per_location() as u64;
    let mut rows = backbone.rows;
    for &tap in &config.tap_indices {
        let (c, h, _) = shapes.get(tap).expect("validated tap").output;
        for (suffix, n) in [
            ("loc", per_cell * 4),
            ("conf", per_cell * config.num_classes as u64),
        ] {
            let mut cost = cost_pointwise(c as u64, n, h as u64)?;
            cost.layer_label = format!("head{tap}.{suffix}");
            rows.push(cost);
        }
    }
    Ok(NetworkProfile::from_rows(rows, backbone.pairs))
}
