//! Convolution, pooling, dense and activation primitives.
//!
//! Regular convolutions gather their receptive patches into an
//! [`Im2colMatrix`] and run as a matrix multiplication. Pointwise convolution
//! needs no gather at all: with channel-major layout the input already is a
//! `channels x positions` matrix. Depthwise convolution runs per channel,
//! which is what the in-place scheduler needs anyway.
//!
//! All kernels accumulate in f64 and round once on store.

use crate::error::{Error, Result};
use crate::modelio::{infer_layer, LayerIo, LayerSpec};
use crate::tensor::Tensor;
#[cfg(test)]
use crate::tensor::Shape;

/// Multiply-accumulate counter threaded through every kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounter(pub u64);

impl MacCounter {
    pub fn new() -> Self {
        MacCounter(0)
    }

    pub fn count(&self) -> u64 {
        self.0
    }
}

/// Receptive patches laid out one per row, `cols = n_i * kh * kw`.
#[derive(Debug, Clone, PartialEq)]
pub struct Im2colMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

fn resolve(layer: &LayerSpec, x: &Tensor) -> Result<LayerIo> {
    infer_layer(0, layer, x.shape())
}

/// Gather receptive patches for a valid convolution.
///
/// Row order matches the output position order (height-major for 2-D); entry
/// order within a row is `[channel][kh][kw]`, matching the weight flattening
/// of `regular_conv`.
pub fn im2col(x: &Tensor, kernel: &[usize], stride: &[usize]) -> Result<Im2colMatrix> {
    let shape = x.shape();
    let n_i = shape.channels;
    match shape.rank() {
        1 => {
            let (l, k, s) = (shape.spatial[0], kernel[0], stride[0]);
            if k == 0 || s == 0 || l < k {
                return Err(Error::Shape(format!("kernel {k} does not fit extent {l}")));
            }
            let out_l = (l - k) / s + 1;
            let cols = n_i * k;
            let mut data = Vec::with_capacity(out_l * cols);
            for p in 0..out_l {
                for c in 0..n_i {
                    let base = c * l + p * s;
                    data.extend_from_slice(&x.data()[base..base + k]);
                }
            }
            Ok(Im2colMatrix { rows: out_l, cols, data })
        }
        2 => {
            let (h, w) = (shape.spatial[0], shape.spatial[1]);
            let (kh, kw) = (kernel[0], kernel[1]);
            let (sh, sw) = (stride[0], stride[1]);
            if kh == 0 || kw == 0 || sh == 0 || sw == 0 || h < kh || w < kw {
                return Err(Error::Shape(format!(
                    "kernel ({kh}, {kw}) does not fit extents ({h}, {w})"
                )));
            }
            let out_h = (h - kh) / sh + 1;
            let out_w = (w - kw) / sw + 1;
            let cols = n_i * kh * kw;
            let mut data = Vec::with_capacity(out_h * out_w * cols);
            for ph in 0..out_h {
                for pw in 0..out_w {
                    for c in 0..n_i {
                        let plane = c * h * w;
                        for dh in 0..kh {
                            let row = plane + (ph * sh + dh) * w + pw * sw;
                            data.extend_from_slice(&x.data()[row..row + kw]);
                        }
                    }
                }
            }
            Ok(Im2colMatrix { rows: out_h * out_w, cols, data })
        }
        _ => unreachable!(),
    }
}

/// Regular convolution as im2col followed by matrix multiply.
pub fn regular_conv_counted(
    x: &Tensor,
    layer: &LayerSpec,
    macs: &mut MacCounter,
) -> Result<Tensor> {
    let LayerSpec::RegularConv { out_channels, weights, bias, .. } = layer else {
        return Err(Error::Shape("expected a regular_conv layer".into()));
    };
    let io = resolve(layer, x)?;
    let m = im2col(x, &io.kernel, &io.stride)?;
    let n_o = *out_channels;
    let mut out = vec![0.0f32; n_o * m.rows];
    for o in 0..n_o {
        let w_row = &weights[o * m.cols..(o + 1) * m.cols];
        let b = f64::from(bias[o]);
        let out_plane = &mut out[o * m.rows..(o + 1) * m.rows];
        for (r, slot) in out_plane.iter_mut().enumerate() {
            let patch = &m.data[r * m.cols..(r + 1) * m.cols];
            let mut acc = b;
            for (wv, xv) in w_row.iter().zip(patch) {
                acc += f64::from(*wv) * f64::from(*xv);
            }
            *slot = acc as f32;
        }
        macs.0 += (m.rows * m.cols) as u64;
    }
    Tensor::new(io.output, out)
}

pub fn regular_conv(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    regular_conv_counted(x, layer, &mut MacCounter::new())
}

/// One depthwise plane: channel `i` filtered by kernel `(i, k)`.
///
/// `x_plane` is the input channel plane, `out` the destination plane. Shared
/// by the straight kernel and the in-place scheduler so both produce
/// bit-identical values.
pub(crate) fn depthwise_plane_into(
    x_plane: &[f32],
    in_spatial: &[usize],
    kernel: &[usize],
    stride: &[usize],
    taps: &[f32],
    bias: f32,
    out: &mut [f32],
    macs: &mut MacCounter,
) {
    let b = f64::from(bias);
    match in_spatial.len() {
        1 => {
            let (k, s) = (kernel[0], stride[0]);
            let out_l = (in_spatial[0] - k) / s + 1;
            debug_assert_eq!(out.len(), out_l);
            for (p, slot) in out.iter_mut().enumerate() {
                let window = &x_plane[p * s..p * s + k];
                let mut acc = b;
                for (t, v) in taps.iter().zip(window) {
                    acc += f64::from(*t) * f64::from(*v);
                }
                *slot = acc as f32;
            }
            macs.0 += (out_l * k) as u64;
        }
        2 => {
            let (h, w) = (in_spatial[0], in_spatial[1]);
            let (kh, kw) = (kernel[0], kernel[1]);
            let (sh, sw) = (stride[0], stride[1]);
            let out_h = (h - kh) / sh + 1;
            let out_w = (w - kw) / sw + 1;
            debug_assert_eq!(out.len(), out_h * out_w);
            for ph in 0..out_h {
                for pw in 0..out_w {
                    let mut acc = b;
                    for dh in 0..kh {
                        let row = (ph * sh + dh) * w + pw * sw;
                        let taps_row = &taps[dh * kw..(dh + 1) * kw];
                        for (t, v) in taps_row.iter().zip(&x_plane[row..row + kw]) {
                            acc += f64::from(*t) * f64::from(*v);
                        }
                    }
                    out[ph * out_w + pw] = acc as f32;
                }
            }
            macs.0 += (out_h * out_w * kh * kw) as u64;
        }
        _ => unreachable!(),
    }
}

/// Depthwise convolution. Output channel `(k-1)*n_i + i` holds kernel
/// `(i, k)` applied to input channel `i` (1-based in that formula), i.e. all
/// first-copy planes come first, then all second-copy planes.
pub fn depthwise_conv_counted(
    x: &Tensor,
    layer: &LayerSpec,
    macs: &mut MacCounter,
) -> Result<Tensor> {
    let LayerSpec::DepthwiseConv { multiplier, weights, bias, .. } = layer else {
        return Err(Error::Shape("expected a depthwise_conv layer".into()));
    };
    let io = resolve(layer, x)?;
    let n_i = x.shape().channels;
    let k_elems: usize = io.kernel.iter().product();
    let plane = io.output.plane_elems();
    let in_plane = x.shape().plane_elems();
    let mut out = vec![0.0f32; io.output.element_count()];
    for kk in 0..*multiplier {
        for i in 0..n_i {
            let oc = kk * n_i + i;
            let taps = &weights[(i * multiplier + kk) * k_elems..(i * multiplier + kk + 1) * k_elems];
            depthwise_plane_into(
                &x.data()[i * in_plane..(i + 1) * in_plane],
                &x.shape().spatial,
                &io.kernel,
                &io.stride,
                taps,
                bias[oc],
                &mut out[oc * plane..(oc + 1) * plane],
                macs,
            );
        }
    }
    Tensor::new(io.output, out)
}

pub fn depthwise_conv(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    depthwise_conv_counted(x, layer, &mut MacCounter::new())
}

/// Pointwise (1x1) convolution: a direct `n_o x C` by `C x positions` matmul
/// on the channel-major input.
pub fn pointwise_conv_counted(
    x: &Tensor,
    layer: &LayerSpec,
    macs: &mut MacCounter,
) -> Result<Tensor> {
    let LayerSpec::PointwiseConv { out_channels, weights, bias, .. } = layer else {
        return Err(Error::Shape("expected a pointwise_conv layer".into()));
    };
    let io = resolve(layer, x)?;
    let c_in = x.shape().channels;
    let plane = x.shape().plane_elems();
    let n_o = *out_channels;
    let mut out = vec![0.0f32; n_o * plane];
    for o in 0..n_o {
        let w_row = &weights[o * c_in..(o + 1) * c_in];
        let b = f64::from(bias[o]);
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        for (p, slot) in out_plane.iter_mut().enumerate() {
            let mut acc = b;
            for (c, wv) in w_row.iter().enumerate() {
                acc += f64::from(*wv) * f64::from(x.data()[c * plane + p]);
            }
            *slot = acc as f32;
        }
        macs.0 += (plane * c_in) as u64;
    }
    Tensor::new(io.output, out)
}

pub fn pointwise_conv(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    pointwise_conv_counted(x, layer, &mut MacCounter::new())
}

/// Fused depthwise-then-pointwise convenience with identical numerics.
pub fn depthwise_separable(x: &Tensor, dw: &LayerSpec, pw: &LayerSpec) -> Result<Tensor> {
    pointwise_conv(&depthwise_conv(x, dw)?, pw)
}

pub fn maxpool(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    let LayerSpec::MaxPool { .. } = layer else {
        return Err(Error::Shape("expected a max_pool layer".into()));
    };
    let io = resolve(layer, x)?;
    let n = x.shape().channels;
    let in_plane = x.shape().plane_elems();
    let out_plane = io.output.plane_elems();
    let mut out = vec![0.0f32; n * out_plane];
    match x.shape().rank() {
        1 => {
            let (k, s) = (io.kernel[0], io.stride[0]);
            for c in 0..n {
                let src = &x.data()[c * in_plane..(c + 1) * in_plane];
                for p in 0..out_plane {
                    let window = &src[p * s..p * s + k];
                    out[c * out_plane + p] =
                        window.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                }
            }
        }
        2 => {
            let w = x.shape().spatial[1];
            let (kh, kw) = (io.kernel[0], io.kernel[1]);
            let (sh, sw) = (io.stride[0], io.stride[1]);
            let (oh, ow) = (io.output.spatial[0], io.output.spatial[1]);
            for c in 0..n {
                let src = &x.data()[c * in_plane..(c + 1) * in_plane];
                for ph in 0..oh {
                    for pw in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        for dh in 0..kh {
                            let row = (ph * sh + dh) * w + pw * sw;
                            for v in &src[row..row + kw] {
                                best = best.max(*v);
                            }
                        }
                        out[c * out_plane + ph * ow + pw] = best;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Tensor::new(io.output, out)
}

/// Dense layer: channel-major flatten, then an affine map.
pub fn dense_counted(x: &Tensor, layer: &LayerSpec, macs: &mut MacCounter) -> Result<Tensor> {
    let LayerSpec::Dense { units, weights, bias } = layer else {
        return Err(Error::Shape("expected a dense layer".into()));
    };
    let io = resolve(layer, x)?;
    let flat = x.data();
    let n_in = flat.len();
    let mut out = vec![0.0f32; *units];
    for (u, slot) in out.iter_mut().enumerate() {
        let w_row = &weights[u * n_in..(u + 1) * n_in];
        let mut acc = f64::from(bias[u]);
        for (wv, xv) in w_row.iter().zip(flat) {
            acc += f64::from(*wv) * f64::from(*xv);
        }
        *slot = acc as f32;
    }
    macs.0 += (units * n_in) as u64;
    Tensor::new(io.output, out)
}

pub fn dense(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    dense_counted(x, layer, &mut MacCounter::new())
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().clone(), data).expect("relu preserves shape")
}

/// Run any layer, counting MACs.
pub fn apply_counted(x: &Tensor, layer: &LayerSpec, macs: &mut MacCounter) -> Result<Tensor> {
    match layer {
        LayerSpec::RegularConv { .. } => regular_conv_counted(x, layer, macs),
        LayerSpec::DepthwiseConv { .. } => depthwise_conv_counted(x, layer, macs),
        LayerSpec::PointwiseConv { .. } => pointwise_conv_counted(x, layer, macs),
        LayerSpec::MaxPool { .. } => maxpool(x, layer),
        LayerSpec::Dense { .. } => dense_counted(x, layer, macs),
        LayerSpec::Relu {} => Ok(relu(x)),
    }
}

pub fn apply(x: &Tensor, layer: &LayerSpec) -> Result<Tensor> {
    apply_counted(x, layer, &mut MacCounter::new())
}
