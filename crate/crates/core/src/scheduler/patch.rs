//! Patch planning: split the final convolution output into spatial patches
//! and back-compute every layer's receptive field.
//!
//! The trunk is the layer prefix ending at the last convolutional layer;
//! pooling and activations between convolutions belong to it, anything after
//! the last convolution runs once on the stitched output. Patches split the
//! time axis only (the sole axis of 1-D tensors, the last axis of 2-D ones).
//! For a layer with kernel `k` and stride `s`, an output range `[a, b)` needs
//! input `[a*s, (b-1)*s + k)`.

use crate::error::{Error, Result};
use crate::modelio::Model;
use crate::tensor::{Region, Tensor};
use std::ops::Range;

#[derive(Debug, Clone)]
pub struct PatchPlan {
    /// Patch count m.
    pub patches: usize,
    /// Index of the split axis in the spatial vector (0 for 1-D, 1 for 2-D).
    pub split_axis: usize,
    /// Layers `[0, trunk_len)` execute per patch.
    pub trunk_len: usize,
    /// Final-conv output ranges along the split axis, one per patch:
    /// contiguous, disjoint, covering.
    pub output_ranges: Vec<Range<usize>>,
    /// Input region of every trunk layer, per patch: `layer_inputs[p][i]`.
    pub layer_inputs: Vec<Vec<Region>>,
    /// Model-input elements a patch re-reads from earlier patches.
    pub overlap_elems: Vec<u64>,
}

impl PatchPlan {
    /// Input-region extent of trunk layer `i` for patch `p` in elements.
    pub fn input_elems(&self, model: &Model, p: usize, i: usize) -> u64 {
        let channels = model.layer_io[i].input.channels as u64;
        channels * self.layer_inputs[p][i].elems() as u64
    }

    /// Output elements of trunk layer `i` for patch `p`.
    pub fn output_elems(&self, model: &Model, p: usize, i: usize) -> u64 {
        let io = &model.layer_io[i];
        io.output.channels as u64 * self.output_spatial(model, p, i)
    }

    /// Output spatial positions of trunk layer `i` for patch `p`.
    pub fn output_spatial(&self, model: &Model, p: usize, i: usize) -> u64 {
        let io = &model.layer_io[i];
        let split = if i + 1 < self.trunk_len {
            let r = &self.layer_inputs[p][i + 1].ranges[self.split_axis];
            r.end - r.start
        } else {
            let r = &self.output_ranges[p];
            r.end - r.start
        };
        let mut spatial = split as u64;
        for (axis, &e) in io.output.spatial.iter().enumerate() {
            if axis != self.split_axis {
                spatial *= e as u64;
            }
        }
        spatial
    }
}

/// Index of the layer prefix that executes per patch: one past the last
/// convolutional layer. `None` when the model has no convolutions.
pub fn trunk_len(model: &Model) -> Option<usize> {
    model
        .spec
        .layers
        .iter()
        .rposition(|l| l.is_conv())
        .map(|last| last + 1)
}

fn back_through(range: &Range<usize>, k: usize, s: usize) -> Range<usize> {
    range.start * s..(range.end - 1) * s + k
}

/// Build the patch plan for `m` patches.
pub fn plan_patches(model: &Model, m: usize) -> Result<PatchPlan> {
    if m == 0 {
        return Err(Error::Plan("patch count must be >= 1".into()));
    }
    let Some(trunk) = trunk_len(model) else {
        return Err(Error::Plan("model has no convolutional layer to patch".into()));
    };
    for (i, layer) in model.spec.layers[..trunk].iter().enumerate() {
        if !layer.is_spatial() && !matches!(layer, crate::modelio::LayerSpec::Relu {}) {
            return Err(Error::Plan(format!(
                "layer {i} ({}) sits before the last convolution and cannot be patched",
                layer.kind()
            )));
        }
    }
    let final_io = &model.layer_io[trunk - 1];
    let split_axis = final_io.output.rank() - 1;
    let extent = final_io.output.spatial[split_axis];
    if extent < m {
        return Err(Error::Plan(format!(
            "{m} patches exceed the final convolution output extent {extent}"
        )));
    }

    // split as evenly as possible; the first (extent mod m) patches take one
    // extra element
    let base = extent / m;
    let rem = extent % m;
    let mut output_ranges = Vec::with_capacity(m);
    let mut pos = 0;
    for p in 0..m {
        let len = base + usize::from(p < rem);
        output_ranges.push(pos..pos + len);
        pos += len;
    }
    debug_assert_eq!(pos, extent);

    let mut layer_inputs = Vec::with_capacity(m);
    for range in &output_ranges {
        let mut per_layer = vec![Region { ranges: vec![] }; trunk];
        let mut need = range.clone();
        for i in (0..trunk).rev() {
            let io = &model.layer_io[i];
            let input_range = if io.kernel.is_empty() {
                need.clone() // relu
            } else {
                back_through(&need, io.kernel[split_axis], io.stride[split_axis])
            };
            let mut ranges: Vec<Range<usize>> = io
                .input
                .spatial
                .iter()
                .map(|&e| 0..e)
                .collect();
            ranges[split_axis] = input_range.clone();
            per_layer[i] = Region { ranges };
            need = input_range;
        }
        layer_inputs.push(per_layer);
    }

    // overlap against the union of earlier patches, counted at the model input
    let in_shape = model.input_shape();
    let other: u64 = in_shape
        .spatial
        .iter()
        .enumerate()
        .filter(|&(axis, _)| axis != split_axis)
        .map(|(_, &e)| e as u64)
        .product::<u64>()
        * in_shape.channels as u64;
    let mut overlap_elems = Vec::with_capacity(m);
    let mut prev_end = 0usize;
    for per_layer in &layer_inputs {
        let r = &per_layer[0].ranges[split_axis];
        let overlap = prev_end.saturating_sub(r.start) as u64;
        overlap_elems.push(overlap * other);
        prev_end = prev_end.max(r.end);
    }

    Ok(PatchPlan { patches: m, split_axis, trunk_len: trunk, output_ranges, layer_inputs, overlap_elems })
}

/// Concatenate per-patch outputs along the split axis.
pub fn stitch_outputs(patch_outputs: &[Tensor], plan: &PatchPlan) -> Result<Tensor> {
    if patch_outputs.len() != plan.patches {
        return Err(Error::Shape(format!(
            "expected {} patch outputs, got {}",
            plan.patches,
            patch_outputs.len()
        )));
    }
    let first = &patch_outputs[0];
    let mut shape = first.shape().clone();
    let total: usize = plan.output_ranges.last().map(|r| r.end).unwrap_or(0);
    shape.spatial[plan.split_axis] = total;
    let mut out = Tensor::zeros(shape.clone());
    for (t, range) in patch_outputs.iter().zip(&plan.output_ranges) {
        let extent = range.end - range.start;
        if t.shape().spatial[plan.split_axis] != extent || t.shape().channels != shape.channels {
            return Err(Error::Shape(format!(
                "patch output {} does not match planned extent {extent}",
                t.shape()
            )));
        }
        let mut ranges: Vec<Range<usize>> = shape.spatial.iter().map(|&e| 0..e).collect();
        ranges[plan.split_axis] = range.clone();
        out.write_region(&Region { ranges }, t)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::{validate, Extents, LayerSpec, ModelSpec};

    fn conv1d(k: usize, n_i: usize, n_o: usize) -> LayerSpec {
        LayerSpec::RegularConv {
            kernel: Extents::Scalar(k),
            stride: None,
            out_channels: n_o,
            weights: vec![0.0; n_i * n_o * k],
            bias: vec![0.0; n_o],
        }
    }

    fn model_1d(len: usize, layers: Vec<LayerSpec>) -> Model {
        validate(ModelSpec { format_version: 1, input_shape: vec![1, len], layers }).unwrap()
    }

    #[test]
    fn single_conv_two_patches() {
        let model = model_1d(10, vec![conv1d(3, 1, 1)]);
        let plan = plan_patches(&model, 2).unwrap();
        assert_eq!(plan.output_ranges, vec![0..4, 4..8]);
        assert_eq!(plan.layer_inputs[0][0].ranges[0], 0..6);
        assert_eq!(plan.layer_inputs[1][0].ranges[0], 4..10);
        assert_eq!(plan.overlap_elems, vec![0, 2]);
    }

    #[test]
    fn two_conv_trunk_at_1200() {
        let model = model_1d(1200, vec![conv1d(3, 1, 4), conv1d(3, 4, 4)]);
        let plan = plan_patches(&model, 3).unwrap();
        assert_eq!(plan.output_ranges, vec![0..399, 399..798, 798..1196]);
        let fields: Vec<Range<usize>> =
            (0..3).map(|p| plan.layer_inputs[p][0].ranges[0].clone()).collect();
        assert_eq!(fields, vec![0..403, 399..802, 798..1200]);
    }

    #[test]
    fn single_patch_covers_everything() {
        let model = model_1d(10, vec![conv1d(3, 1, 1)]);
        let plan = plan_patches(&model, 1).unwrap();
        assert_eq!(plan.output_ranges, vec![0..8]);
        assert_eq!(plan.layer_inputs[0][0].ranges[0], 0..10);
        assert_eq!(plan.overlap_elems, vec![0]);
    }

    #[test]
    fn too_many_patches_is_plan_error() {
        let model = model_1d(10, vec![conv1d(3, 1, 1)]);
        assert!(matches!(plan_patches(&model, 9), Err(Error::Plan(_))));
    }

    #[test]
    fn remainder_goes_to_early_patches() {
        let model = model_1d(12, vec![conv1d(3, 1, 1)]); // output extent 10
        let plan = plan_patches(&model, 3).unwrap();
        assert_eq!(plan.output_ranges, vec![0..4, 4..7, 7..10]);
    }

    #[test]
    fn stitch_concatenates_in_order() {
        let model = model_1d(10, vec![conv1d(3, 1, 1)]);
        let plan = plan_patches(&model, 2).unwrap();
        let a = Tensor::new(crate::tensor::Shape::new_1d(1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(crate::tensor::Shape::new_1d(1, 4), vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let out = stitch_outputs(&[a, b], &plan).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn trunk_excludes_layers_after_last_conv() {
        let model = model_1d(
            16,
            vec![
                conv1d(3, 1, 2),
                LayerSpec::Relu {},
                conv1d(3, 2, 2),
                LayerSpec::MaxPool { kernel: Extents::Scalar(2), stride: None },
                LayerSpec::Dense { units: 1, weights: vec![0.0; 12], bias: vec![0.0] },
            ],
        );
        assert_eq!(trunk_len(&model), Some(3));
        let plan = plan_patches(&model, 2).unwrap();
        assert_eq!(plan.trunk_len, 3);
        // relu passes ranges through unchanged
        assert_eq!(
            plan.layer_inputs[0][1].ranges[0],
            plan.layer_inputs[0][2].ranges[0]
        );
    }
}
