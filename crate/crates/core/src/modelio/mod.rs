//! On-disk model format and loaders.
//!
//! A model file is a single UTF-8 JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "input_shape": [1, 1200],
//!   "layers": [
//!     {"type": "regular_conv", "kernel": 3, "out_channels": 32,
//!      "weights": [...], "bias": [...]},
//!     {"type": "relu"}
//!   ]
//! }
//! ```
//!
//! `input_shape` is `[channels, ...spatial]` with one or two spatial extents.
//! Convolutions are valid (no padding). Weight flattening orders:
//! `regular_conv` `[out][in][kh][kw]`, `depthwise_conv` `[in][K][kh][kw]`,
//! `pointwise_conv` `[out][in]`, `dense` `[units][in]`. Numbers are written
//! in decimal with round-trip fidelity for 32-bit IEEE-754 values.
//!
//! [`parse_model`] loads and validates the whole document;
//! [`stream_layers`] walks the same file one layer at a time so that at most
//! one layer's parameters are ever resident.

mod stream;

pub use stream::{stream_layers, LayerStream};

use crate::error::{Error, Result};
use crate::tensor::Shape;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// Kernel or stride extents: a scalar in the file means the same extent on
/// every spatial axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extents {
    Scalar(usize),
    PerAxis(Vec<usize>),
}

impl Extents {
    /// Resolve against the rank of the layer input.
    pub fn resolve(&self, rank: usize) -> Result<Vec<usize>> {
        match self {
            Extents::Scalar(k) => Ok(vec![*k; rank]),
            Extents::PerAxis(v) if v.len() == rank => Ok(v.clone()),
            Extents::PerAxis(v) => Err(Error::Shape(format!(
                "extent list {:?} does not match spatial rank {rank}",
                v
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    RegularConv {
        kernel: Extents,
        #[serde(skip_serializing_if = "Option::is_none")]
        stride: Option<Extents>,
        out_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    DepthwiseConv {
        kernel: Extents,
        #[serde(skip_serializing_if = "Option::is_none")]
        stride: Option<Extents>,
        /// Depthwise multiplier K: output planes per input channel.
        #[serde(default = "default_multiplier")]
        multiplier: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    PointwiseConv {
        out_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    MaxPool {
        kernel: Extents,
        /// Defaults to the kernel extents.
        #[serde(skip_serializing_if = "Option::is_none")]
        stride: Option<Extents>,
    },
    Dense {
        units: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Relu {},
}

fn default_multiplier() -> usize {
    1
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::RegularConv { .. } => "regular_conv",
            LayerSpec::DepthwiseConv { .. } => "depthwise_conv",
            LayerSpec::PointwiseConv { .. } => "pointwise_conv",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu {} => "relu",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(
            self,
            LayerSpec::RegularConv { .. }
                | LayerSpec::DepthwiseConv { .. }
                | LayerSpec::PointwiseConv { .. }
        )
    }

    pub fn is_spatial(&self) -> bool {
        self.is_conv() || matches!(self, LayerSpec::MaxPool { .. })
    }

    /// Learned parameter count, weights and biases reported separately.
    pub fn param_counts(&self) -> (usize, usize) {
        match self {
            LayerSpec::RegularConv { weights, bias, .. }
            | LayerSpec::DepthwiseConv { weights, bias, .. }
            | LayerSpec::PointwiseConv { weights, bias, .. }
            | LayerSpec::Dense { weights, bias, .. } => (weights.len(), bias.len()),
            _ => (0, 0),
        }
    }

    /// Bytes the parameter slot holds while this layer executes (4 per value).
    pub fn param_slot_bytes(&self) -> u64 {
        let (w, b) = self.param_counts();
        4 * (w + b) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub format_version: u32,
    /// `[channels, ...spatial]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn input_shape(&self) -> Result<Shape> {
        if self.input_shape.len() < 2 || self.input_shape.len() > 3 {
            return Err(Error::Shape(format!(
                "input_shape must be [channels, ...spatial] with 1 or 2 spatial extents, got {:?}",
                self.input_shape
            )));
        }
        let shape = Shape {
            channels: self.input_shape[0],
            spatial: self.input_shape[1..].to_vec(),
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// Geometry resolved for one layer of a validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerIo {
    pub input: Shape,
    pub output: Shape,
    /// Kernel extents resolved against the input rank (empty for dense/relu).
    pub kernel: Vec<usize>,
    /// Stride resolved the same way (empty for dense/relu).
    pub stride: Vec<usize>,
}

/// A parsed model together with per-layer inferred shapes.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layer_io: Vec<LayerIo>,
    input: Shape,
}

impl Model {
    pub fn input_shape(&self) -> &Shape {
        &self.input
    }

    pub fn output_shape(&self) -> &Shape {
        self.layer_io.last().map(|io| &io.output).unwrap_or(&self.input)
    }
}

fn valid_out_extent(in_extent: usize, k: usize, s: usize) -> Option<usize> {
    if k == 0 || s == 0 || in_extent < k {
        return None;
    }
    Some((in_extent - k) / s + 1)
}

fn validation(layer: usize, message: impl Into<String>) -> Error {
    Error::Validation { layer, message: message.into() }
}

/// Infer the output shape of one layer, checking weight counts.
pub(crate) fn infer_layer(index: usize, layer: &LayerSpec, input: &Shape) -> Result<LayerIo> {
    let rank = input.rank();
    let n_i = input.channels;
    match layer {
        LayerSpec::RegularConv { kernel, stride, out_channels, weights, bias } => {
            let k = kernel.resolve(rank)?;
            let s = match stride {
                Some(s) => s.resolve(rank)?,
                None => vec![1; rank],
            };
            if *out_channels == 0 {
                return Err(validation(index, "out_channels must be positive"));
            }
            let k_elems: usize = k.iter().product();
            let expect = n_i * out_channels * k_elems;
            if weights.len() != expect {
                return Err(validation(
                    index,
                    format!(
                        "regular_conv expects {expect} weights (n_i={n_i} x n_o={out_channels} x kernel={k_elems}), got {}",
                        weights.len()
                    ),
                ));
            }
            if bias.len() != *out_channels {
                return Err(validation(
                    index,
                    format!("bias length {} != out_channels {out_channels}", bias.len()),
                ));
            }
            let spatial = conv_spatial(index, input, &k, &s)?;
            Ok(LayerIo {
                input: input.clone(),
                output: Shape { channels: *out_channels, spatial },
                kernel: k,
                stride: s,
            })
        }
        LayerSpec::DepthwiseConv { kernel, stride, multiplier, weights, bias } => {
            let k = kernel.resolve(rank)?;
            let s = match stride {
                Some(s) => s.resolve(rank)?,
                None => vec![1; rank],
            };
            if *multiplier == 0 {
                return Err(validation(index, "multiplier must be >= 1"));
            }
            let k_elems: usize = k.iter().product();
            let expect = multiplier * n_i * k_elems;
            if weights.len() != expect {
                return Err(validation(
                    index,
                    format!(
                        "depthwise_conv expects {expect} weights (K={multiplier} x n_i={n_i} x kernel={k_elems}), got {}",
                        weights.len()
                    ),
                ));
            }
            let n_o = multiplier * n_i;
            if bias.len() != n_o {
                return Err(validation(
                    index,
                    format!("bias length {} != K*n_i = {n_o}", bias.len()),
                ));
            }
            let spatial = conv_spatial(index, input, &k, &s)?;
            Ok(LayerIo {
                input: input.clone(),
                output: Shape { channels: n_o, spatial },
                kernel: k,
                stride: s,
            })
        }
        LayerSpec::PointwiseConv { out_channels, weights, bias } => {
            if *out_channels == 0 {
                return Err(validation(index, "out_channels must be positive"));
            }
            let expect = n_i * out_channels;
            if weights.len() != expect {
                return Err(validation(
                    index,
                    format!(
                        "pointwise_conv expects {expect} weights (in={n_i} x out={out_channels}), got {}",
                        weights.len()
                    ),
                ));
            }
            if bias.len() != *out_channels {
                return Err(validation(
                    index,
                    format!("bias length {} != out_channels {out_channels}", bias.len()),
                ));
            }
            Ok(LayerIo {
                input: input.clone(),
                output: Shape { channels: *out_channels, spatial: input.spatial.clone() },
                kernel: vec![1; rank],
                stride: vec![1; rank],
            })
        }
        LayerSpec::MaxPool { kernel, stride } => {
            let k = kernel.resolve(rank)?;
            let s = match stride {
                Some(s) => s.resolve(rank)?,
                None => k.clone(),
            };
            let spatial = conv_spatial(index, input, &k, &s)?;
            Ok(LayerIo {
                input: input.clone(),
                output: Shape { channels: n_i, spatial },
                kernel: k,
                stride: s,
            })
        }
        LayerSpec::Dense { units, weights, bias } => {
            if *units == 0 {
                return Err(validation(index, "units must be positive"));
            }
            let in_count = input.element_count();
            let expect = in_count * units;
            if weights.len() != expect {
                return Err(validation(
                    index,
                    format!(
                        "dense expects {expect} weights (in={in_count} x units={units}), got {}",
                        weights.len()
                    ),
                ));
            }
            if bias.len() != *units {
                return Err(validation(
                    index,
                    format!("bias length {} != units {units}", bias.len()),
                ));
            }
            Ok(LayerIo {
                input: input.clone(),
                output: Shape { channels: *units, spatial: vec![1] },
                kernel: vec![],
                stride: vec![],
            })
        }
        LayerSpec::Relu {} => Ok(LayerIo {
            input: input.clone(),
            output: input.clone(),
            kernel: vec![],
            stride: vec![],
        }),
    }
}

fn conv_spatial(index: usize, input: &Shape, k: &[usize], s: &[usize]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(k.len());
    for (axis, ((&e, &kk), &ss)) in input.spatial.iter().zip(k).zip(s).enumerate() {
        match valid_out_extent(e, kk, ss) {
            Some(o) => out.push(o),
            None => {
                return Err(Error::Shape(format!(
                    "layer {index}: kernel {kk} (stride {ss}) does not fit extent {e} on axis {axis}"
                )))
            }
        }
    }
    Ok(out)
}

/// Validate a spec and attach inferred shapes.
pub fn validate(spec: ModelSpec) -> Result<Model> {
    if spec.format_version != FORMAT_VERSION {
        return Err(Error::Validation {
            layer: 0,
            message: format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                spec.format_version
            ),
        });
    }
    let mut cursor = spec.input_shape()?;
    let mut layer_io = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let io = infer_layer(i, layer, &cursor)?;
        cursor = io.output.clone();
        layer_io.push(io);
    }
    let input = spec.input_shape()?;
    Ok(Model { spec, layer_io, input })
}

/// Parse and validate a model document from a string.
pub fn parse_model_str(text: &str) -> Result<Model> {
    let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(spec)
}

/// Parse and validate a model file.
pub fn parse_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    parse_model_str(&text)
}

/// Serialize a spec back to the on-disk format.
pub fn serialize_model(spec: &ModelSpec) -> String {
    serde_json::to_string_pretty(spec).expect("model specs always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn zeros(n: usize) -> Vec<f32> {
        vec![0.0; n]
    }

    fn swat2_trunk() -> ModelSpec {
        ModelSpec {
            format_version: 1,
            input_shape: vec![1, 1200],
            layers: vec![
                LayerSpec::RegularConv {
                    kernel: Extents::Scalar(3),
                    stride: None,
                    out_channels: 32,
                    weights: zeros(1 * 32 * 3),
                    bias: zeros(32),
                },
                LayerSpec::DepthwiseConv {
                    kernel: Extents::Scalar(3),
                    stride: None,
                    multiplier: 1,
                    weights: zeros(32 * 3),
                    bias: zeros(32),
                },
                LayerSpec::PointwiseConv {
                    out_channels: 64,
                    weights: zeros(32 * 64),
                    bias: zeros(64),
                },
            ],
        }
    }

    #[test]
    fn minimal_relu_model() {
        let text = r#"{"format_version":1,"input_shape":[1,8],"layers":[{"type":"relu"}]}"#;
        let model = parse_model_str(text).unwrap();
        assert_eq!(model.spec.layers.len(), 1);
        assert_eq!(model.output_shape(), &Shape::new_1d(1, 8));
    }

    #[test]
    fn depthwise_weight_count_mismatch() {
        let spec = ModelSpec {
            format_version: 1,
            input_shape: vec![2, 8],
            layers: vec![LayerSpec::DepthwiseConv {
                kernel: Extents::Scalar(3),
                stride: None,
                multiplier: 1,
                weights: zeros(5),
                bias: zeros(2),
            }],
        };
        match validate(spec) {
            Err(Error::Validation { layer: 0, message }) => {
                assert!(message.contains("expects 6"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn swat2_trunk_extent_chain() {
        let model = validate(swat2_trunk()).unwrap();
        let extents: Vec<usize> = model.layer_io.iter().map(|io| io.output.spatial[0]).collect();
        assert_eq!(extents, vec![1198, 1196, 1196]);
        assert_eq!(model.output_shape(), &Shape::new_1d(64, 1196));
    }

    #[test]
    fn impossible_shape_chain() {
        let spec = ModelSpec {
            format_version: 1,
            input_shape: vec![1, 4],
            layers: vec![LayerSpec::MaxPool { kernel: Extents::Scalar(5), stride: None }],
        };
        assert!(matches!(validate(spec), Err(Error::Shape(_))));
    }

    #[test]
    fn parse_error_carries_position() {
        match parse_model_str("{\"format_version\":1,\n  \"input_shape\": oops}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn serialize_round_trip_is_identity() {
        let mut spec = swat2_trunk();
        // awkward but representable values must survive bit-exactly
        if let LayerSpec::RegularConv { weights, .. } = &mut spec.layers[0] {
            weights[0] = 0.1;
            weights[1] = f32::MIN_POSITIVE;
            weights[2] = -1.234_567_9e-12;
            weights[3] = 16_777_215.0;
        }
        let text = serialize_model(&spec);
        let back = parse_model_str(&text).unwrap();
        assert_eq!(back.spec, spec);
    }

    #[test]
    fn stream_yields_same_sequence_as_parse() {
        let spec = swat2_trunk();
        let text = serialize_model(&spec);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();

        let model = parse_model(&path).unwrap();
        let stream = stream_layers(&path).unwrap();
        let items: Vec<(LayerSpec, u64)> = stream.map(|r| r.unwrap()).collect();
        assert_eq!(items.len(), 3);
        for (i, (layer, _)) in items.iter().enumerate() {
            assert_eq!(layer, &model.spec.layers[i]);
        }
        // param byte counts measure the serialized weights+bias text
        for (layer, bytes) in &items {
            let (w, b) = layer.param_counts();
            assert!(w + b > 0);
            assert!(*bytes > (w + b) as u64, "array text is longer than one byte per value");
        }
    }

    #[test]
    fn stream_residency_is_max_not_sum() {
        let spec = swat2_trunk();
        let text = serialize_model(&spec);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, &text).unwrap();

        let mut stream = stream_layers(&path).unwrap();
        let mut spans = Vec::new();
        while let Some(item) = stream.next() {
            item.unwrap();
            spans.push(*stream.resident_trace().last().unwrap());
        }
        let max = *spans.iter().max().unwrap();
        let sum: u64 = spans.iter().sum();
        assert_eq!(stream.peak_resident(), max);
        assert!(max < sum);
    }

    #[test]
    fn stream_empty_layer_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        std::fs::write(&path, r#"{"format_version":1,"input_shape":[1,4],"layers":[]}"#).unwrap();
        let mut stream = stream_layers(&path).unwrap();
        assert!(stream.next().is_none());
        assert_eq!(stream.peak_resident(), 0);
    }

    #[test]
    fn stream_param_bytes_page_arithmetic() {
        // weights arrays rendered at known byte widths: 100 and 300 bytes of
        // serialized parameters map onto 1 flash page each (8 kB pages)
        let page = 8192u64;
        for target in [100u64, 300] {
            assert_eq!((target + page - 1) / page, 1);
        }
    }

    #[test]
    fn pointwise_weight_validation() {
        let mut spec = swat2_trunk();
        if let LayerSpec::PointwiseConv { weights, .. } = &mut spec.layers[2] {
            weights.pop();
        }
        match validate(spec) {
            Err(Error::Validation { layer: 2, .. }) => {}
            other => panic!("expected validation error at layer 2, got {other:?}"),
        }
    }

    #[test]
    fn dense_output_shape_and_validation() {
        let spec = ModelSpec {
            format_version: 1,
            input_shape: vec![2, 3],
            layers: vec![LayerSpec::Dense { units: 4, weights: zeros(24), bias: zeros(4) }],
        };
        let model = validate(spec).unwrap();
        assert_eq!(model.output_shape(), &Shape::new_1d(4, 1));
    }
}
