//! In-place rescheduling of depthwise convolution.
//!
//! The input's N channel planes sit in N slots, each sized
//! `max(s_i, K*s_o)` elements so a slot can hold either its input plane or
//! the K output planes derived from it. One extra slot of the same size is
//! the transfer buffer: channel c's outputs are computed into the buffer
//! while the input plane is still being read, then block-copied back over
//! slot c. Total live elements never exceed `(N+1) * max(s_i, K*s_o)` plus
//! the kernel parameters.
//!
//! The result leaves the K planes of each input channel grouped together
//! (slot order), which is a permutation of the output channel order the
//! straight kernel produces. [`InplaceLayout`] describes it; the executor
//! reads through the permutation when presenting the canonical tensor, which
//! costs no extra slot.

use crate::error::{Error, Result};
use crate::kernels::{depthwise_plane_into, MacCounter};
use crate::modelio::{infer_layer, LayerSpec};
use crate::tensor::{Shape, Tensor};

/// Maps canonical output channels to (slot, plane) positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InplaceLayout {
    pub channels: usize,
    pub multiplier: usize,
}

impl InplaceLayout {
    /// Slot and plane holding canonical output channel `k*N + i`.
    pub fn source_of(&self, canonical: usize) -> (usize, usize) {
        let k = canonical / self.channels;
        let i = canonical % self.channels;
        (i, k)
    }
}

#[derive(Debug)]
pub struct InplaceRun {
    /// Output in canonical channel order, equal to the straight kernel.
    pub output: Tensor,
    /// Elements of one slot: `max(s_i, K*s_o)`.
    pub slot_elems: usize,
    /// Peak live elements: `(N+1) * slot_elems`.
    pub peak_elems: u64,
    /// Bytes moved through the transfer buffer.
    pub copied_bytes: u64,
    pub layout: InplaceLayout,
}

/// Required buffer (and slot) size in elements.
pub fn required_buffer_elems(s_i: usize, multiplier: usize, s_o: usize) -> usize {
    s_i.max(multiplier * s_o)
}

/// Run a depthwise convolution through the slot-and-buffer schedule.
///
/// `buffer_elems` is the caller-provided buffer size; it must be at least
/// `max(s_i, K*s_o)`.
pub fn inplace_depthwise_with_buffer(
    x: &Tensor,
    layer: &LayerSpec,
    buffer_elems: usize,
    macs: &mut MacCounter,
) -> Result<InplaceRun> {
    let LayerSpec::DepthwiseConv { multiplier, weights, bias, .. } = layer else {
        return Err(Error::Shape("expected a depthwise_conv layer".into()));
    };
    let io = infer_layer(0, layer, x.shape())?;
    let n = x.shape().channels;
    let k_mult = *multiplier;
    let s_i = x.shape().plane_elems();
    let s_o = io.output.plane_elems();
    let need = required_buffer_elems(s_i, k_mult, s_o);
    if buffer_elems < need {
        return Err(Error::Plan(format!(
            "buffer of {buffer_elems} elements is smaller than max(s_i, K*s_o) = {need}"
        )));
    }
    let stride = need;
    let k_elems: usize = io.kernel.iter().product();

    // N slots followed by the buffer, one contiguous region
    let mut region = vec![0.0f32; n * stride + stride];
    for c in 0..n {
        region[c * stride..c * stride + s_i]
            .copy_from_slice(&x.data()[c * s_i..(c + 1) * s_i]);
    }

    let mut copied = 0u64;
    for c in 0..n {
        let (slots, buffer) = region.split_at_mut(n * stride);
        let slot = &slots[c * stride..c * stride + s_i];
        for k in 0..k_mult {
            let taps = &weights[(c * k_mult + k) * k_elems..(c * k_mult + k + 1) * k_elems];
            depthwise_plane_into(
                slot,
                &x.shape().spatial,
                &io.kernel,
                &io.stride,
                taps,
                bias[k * n + c],
                &mut buffer[k * s_o..(k + 1) * s_o],
                macs,
            );
        }
        // the input plane is consumed; overwrite slot c with its outputs
        let (slots, buffer) = region.split_at_mut(n * stride);
        slots[c * stride..c * stride + k_mult * s_o]
            .copy_from_slice(&buffer[..k_mult * s_o]);
        copied += 4 * (k_mult * s_o) as u64;
    }

    // canonical presentation: channel k*N + c reads slot c, plane k
    let layout = InplaceLayout { channels: n, multiplier: k_mult };
    let mut out = vec![0.0f32; k_mult * n * s_o];
    for canonical in 0..k_mult * n {
        let (slot, plane) = layout.source_of(canonical);
        let src = slot * stride + plane * s_o;
        out[canonical * s_o..(canonical + 1) * s_o]
            .copy_from_slice(&region[src..src + s_o]);
    }
    let output = Tensor::new(
        Shape { channels: k_mult * n, spatial: io.output.spatial.clone() },
        out,
    )?;
    Ok(InplaceRun {
        output,
        slot_elems: stride,
        peak_elems: ((n + 1) * stride) as u64,
        copied_bytes: copied,
        layout,
    })
}

/// As [`inplace_depthwise_with_buffer`] with the buffer sized exactly.
pub fn inplace_depthwise(
    x: &Tensor,
    layer: &LayerSpec,
    macs: &mut MacCounter,
) -> Result<InplaceRun> {
    let LayerSpec::DepthwiseConv { multiplier, .. } = layer else {
        return Err(Error::Shape("expected a depthwise_conv layer".into()));
    };
    let io = infer_layer(0, layer, x.shape())?;
    let need = required_buffer_elems(x.shape().plane_elems(), *multiplier, io.output.plane_elems());
    inplace_depthwise_with_buffer(x, layer, need, macs)
}

/// Whether in-place rescheduling does not increase this layer's live bytes:
/// `(N+1) * max(s_i, K*s_o) <= N*s_i + K*N*s_o`.
pub fn inplace_pays_off(n: usize, s_i: usize, multiplier: usize, s_o: usize) -> bool {
    let slot = required_buffer_elems(s_i, multiplier, s_o) as u64;
    (n as u64 + 1) * slot <= (n * s_i + multiplier * n * s_o) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::depthwise_conv;
    use crate::modelio::Extents;
    use crate::tensor::max_abs_diff;

    fn dw(kernel: usize, multiplier: usize, weights: Vec<f32>, bias: Vec<f32>) -> LayerSpec {
        LayerSpec::DepthwiseConv {
            kernel: Extents::Scalar(kernel),
            stride: None,
            multiplier,
            weights,
            bias,
        }
    }

    fn rand_vec(n: usize, seed: &mut u64) -> Vec<f32> {
        (0..n)
            .map(|_| {
                *seed ^= *seed << 13;
                *seed ^= *seed >> 7;
                *seed ^= *seed << 17;
                (*seed >> 40) as f32 / 16777216.0 - 0.5
            })
            .collect()
    }

    #[test]
    fn single_channel_matches_kernel_bit_for_bit() {
        let mut seed = 7;
        let x = Tensor::new(Shape::new_1d(1, 12), rand_vec(12, &mut seed)).unwrap();
        let layer = dw(3, 1, rand_vec(3, &mut seed), rand_vec(1, &mut seed));
        let run = inplace_depthwise(&x, &layer, &mut MacCounter::new()).unwrap();
        let straight = depthwise_conv(&x, &layer).unwrap();
        assert_eq!(run.output, straight);
        assert_eq!(run.peak_elems, 2 * 12);
    }

    #[test]
    fn multi_channel_multiplier_matches_kernel() {
        let mut seed = 99;
        for (n, k_mult, len) in [(4, 1, 10), (3, 2, 9), (5, 3, 8)] {
            let x = Tensor::new(Shape::new_1d(n, len), rand_vec(n * len, &mut seed)).unwrap();
            let layer = dw(
                3,
                k_mult,
                rand_vec(n * k_mult * 3, &mut seed),
                rand_vec(n * k_mult, &mut seed),
            );
            let run = inplace_depthwise(&x, &layer, &mut MacCounter::new()).unwrap();
            let straight = depthwise_conv(&x, &layer).unwrap();
            assert_eq!(max_abs_diff(&run.output, &straight).unwrap(), 0.0);
            let s_o = len - 2;
            assert_eq!(run.slot_elems, len.max(k_mult * s_o));
        }
    }

    #[test]
    fn undersized_buffer_is_plan_error() {
        let x = Tensor::new(Shape::new_1d(2, 8), vec![0.0; 16]).unwrap();
        let layer = dw(3, 2, vec![0.0; 12], vec![0.0; 4]);
        // max(8, 2*6) = 12
        let err = inplace_depthwise_with_buffer(&x, &layer, 11, &mut MacCounter::new());
        assert!(matches!(err, Err(Error::Plan(_))));
        assert!(inplace_depthwise_with_buffer(&x, &layer, 12, &mut MacCounter::new()).is_ok());
    }

    #[test]
    fn memory_formula_case() {
        // N=4, K=1, s_i=10, s_o=8, s_k=3: naive 84 live elements, in-place 62
        let n = 4u64;
        let (s_i, s_o, s_k) = (10u64, 8u64, 3u64);
        let naive = n * s_i + n * s_o + n * s_k;
        let inplace = (n + 1) * s_i.max(s_o) + n * s_k;
        assert_eq!(naive, 84);
        assert_eq!(inplace, 62);
    }

    #[test]
    fn layout_permutation() {
        let layout = InplaceLayout { channels: 3, multiplier: 2 };
        assert_eq!(layout.source_of(0), (0, 0));
        assert_eq!(layout.source_of(2), (2, 0));
        assert_eq!(layout.source_of(3), (0, 1));
        assert_eq!(layout.source_of(5), (2, 1));
    }

    #[test]
    fn pays_off_gate() {
        // classic case: s_o close to s_i, K=1, many channels
        assert!(inplace_pays_off(4, 10, 1, 8));
        // pathological shrink: tiny output, few channels
        assert!(!inplace_pays_off(2, 9, 1, 1));
    }
}
