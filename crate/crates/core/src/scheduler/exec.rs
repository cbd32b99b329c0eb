//! Model execution under the four memory modes.
//!
//! All modes produce the same output values; they differ in which slots hold
//! activations and therefore in the arena's measured high-water mark.
//!
//! - `Naive`: the input and every intermediate live whole, ping-ponging
//!   between the exchange slots.
//! - `InPlace`: as naive, but depthwise layers run through the
//!   slot-and-buffer schedule when that does not increase their live bytes.
//! - `PatchOnly`: the convolutional trunk executes per receptive-field
//!   patch; patch outputs accumulate in the holding slot, which grows as
//!   patches complete, and the final trunk layer writes straight into it.
//!   The tail (after the last convolution) runs once on the stitched tensor.
//! - `TinyAd`: patch execution with in-place depthwise rescheduling inside
//!   each patch.
//!
//! Activations and relu outputs overwrite their own slot (element maps and
//! valid pooling write behind their read cursor), so those layers charge
//! only their input.

use super::arena::{Arena, Slot};
use super::inplace::{inplace_depthwise, inplace_pays_off, required_buffer_elems};
use super::patch::{plan_patches, trunk_len, PatchPlan};
use crate::error::{Error, Result};
use crate::kernels::{apply_counted, MacCounter};
use crate::modelio::{LayerSpec, Model};
use crate::tensor::{Region, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExecMode {
    Naive,
    InPlace,
    PatchOnly { patches: usize },
    TinyAd { patches: usize },
}

impl ExecMode {
    pub fn patches(&self) -> usize {
        match self {
            ExecMode::Naive | ExecMode::InPlace => 1,
            ExecMode::PatchOnly { patches } | ExecMode::TinyAd { patches } => *patches,
        }
    }

    pub fn uses_inplace(&self) -> bool {
        matches!(self, ExecMode::InPlace | ExecMode::TinyAd { .. })
    }

    pub fn uses_patches(&self) -> bool {
        matches!(self, ExecMode::PatchOnly { .. } | ExecMode::TinyAd { .. })
    }
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecMode::Naive => write!(f, "naive"),
            ExecMode::InPlace => write!(f, "inplace"),
            ExecMode::PatchOnly { patches } => write!(f, "patch(m={patches})"),
            ExecMode::TinyAd { patches } => write!(f, "tinyad(m={patches})"),
        }
    }
}

#[derive(Debug)]
pub struct ExecReport {
    pub output: Tensor,
    /// Arena high-water mark in bytes.
    pub peak_bytes: u64,
    /// High-water mark excluding the holding slot (the per-patch working
    /// set).
    pub working_peak_bytes: u64,
    /// Multiply-accumulates actually performed.
    pub macs: u64,
    /// High-water mark of the parameter slot (one layer resident).
    pub param_slot_peak: u64,
    /// Layers where in-place rescheduling engaged.
    pub inplace_layers: Vec<usize>,
    /// Bytes moved through the in-place transfer buffer.
    pub copied_bytes: u64,
}

fn tensor_bytes(t: &Tensor) -> u64 {
    4 * t.shape().element_count() as u64
}

struct Exec<'a> {
    model: &'a Model,
    arena: &'a mut Arena,
    macs: MacCounter,
    use_inplace: bool,
    inplace_layers: Vec<usize>,
    copied_bytes: u64,
}

impl<'a> Exec<'a> {
    fn next_slot(slot: Slot) -> Slot {
        match slot {
            Slot::ExchangeA => Slot::ExchangeB,
            _ => Slot::ExchangeA,
        }
    }

    /// Depthwise output plane size for the tensor actually being executed
    /// (the patch, in patch modes).
    fn dw_out_plane(&self, cur: &Tensor, index: usize) -> Result<usize> {
        let io = crate::modelio::infer_layer(index, &self.model.spec.layers[index], cur.shape())?;
        Ok(io.output.plane_elems())
    }

    /// One layer under the exchange-slot discipline. Returns the new
    /// current tensor and slot.
    fn step(&mut self, cur: Tensor, cur_slot: Slot, index: usize) -> Result<(Tensor, Slot)> {
        let layer = &self.model.spec.layers[index];
        self.arena.set(Slot::Params, layer.param_slot_bytes(), index)?;
        let dw_inplace = match layer {
            LayerSpec::DepthwiseConv { multiplier, .. } if self.use_inplace => {
                let s_o = self.dw_out_plane(&cur, index)?;
                inplace_pays_off(cur.shape().channels, cur.shape().plane_elems(), *multiplier, s_o)
                    .then_some((*multiplier, s_o))
            }
            _ => None,
        };
        let out = match layer {
            LayerSpec::Relu {} | LayerSpec::MaxPool { .. } => {
                let out = apply_counted(&cur, layer, &mut self.macs)?;
                self.arena.set(cur_slot, tensor_bytes(&out), index)?;
                (out, cur_slot)
            }
            LayerSpec::DepthwiseConv { .. } if dw_inplace.is_some() => {
                let (multiplier, s_o) = dw_inplace.unwrap();
                let n = cur.shape().channels;
                let slot_elems = required_buffer_elems(cur.shape().plane_elems(), multiplier, s_o);
                self.arena.set(cur_slot, 4 * (n * slot_elems) as u64, index)?;
                self.arena.set(Slot::Buffer, 4 * slot_elems as u64, index)?;
                let run = inplace_depthwise(&cur, layer, &mut self.macs)?;
                self.arena.set(Slot::Buffer, 0, index)?;
                self.arena.set(cur_slot, tensor_bytes(&run.output), index)?;
                self.inplace_layers.push(index);
                self.copied_bytes += run.copied_bytes;
                (run.output, cur_slot)
            }
            _ => {
                let out = apply_counted(&cur, layer, &mut self.macs)?;
                let out_slot = Self::next_slot(cur_slot);
                self.arena.set(out_slot, tensor_bytes(&out), index)?;
                self.arena.set(cur_slot, 0, index)?;
                (out, out_slot)
            }
        };
        self.arena.set(Slot::Params, 0, index)?;
        Ok(out)
    }

    fn run_linear(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut cur = input.clone();
        self.arena.set(Slot::InputPatch, tensor_bytes(&cur), 0)?;
        let mut cur_slot = Slot::InputPatch;
        for index in 0..self.model.spec.layers.len() {
            (cur, cur_slot) = self.step(cur, cur_slot, index)?;
        }
        Ok(cur)
    }

    fn run_patched(&mut self, input: &Tensor, plan: &PatchPlan) -> Result<Tensor> {
        let trunk = plan.trunk_len;
        let final_io = &self.model.layer_io[trunk - 1];
        let mut holding = Tensor::zeros(final_io.output.clone());
        let mut holding_bytes = 0u64;

        for p in 0..plan.patches {
            let field = &plan.layer_inputs[p][0];
            let mut cur = input.slice(field)?;
            self.arena.set(Slot::InputPatch, tensor_bytes(&cur), 0)?;
            let mut cur_slot = Slot::InputPatch;
            for index in 0..trunk - 1 {
                (cur, cur_slot) = self.step(cur, cur_slot, index)?;
            }
            // final trunk layer writes straight into the holding slot
            let index = trunk - 1;
            let layer = &self.model.spec.layers[index];
            self.arena.set(Slot::Params, layer.param_slot_bytes(), index)?;
            let out = apply_counted(&cur, layer, &mut self.macs)?;
            holding_bytes += tensor_bytes(&out);
            self.arena.set(Slot::Holding, holding_bytes, index)?;
            let mut ranges: Vec<std::ops::Range<usize>> =
                final_io.output.spatial.iter().map(|&e| 0..e).collect();
            ranges[plan.split_axis] = plan.output_ranges[p].clone();
            holding.write_region(&Region { ranges }, &out)?;
            self.arena.set(cur_slot, 0, index)?;
            self.arena.set(Slot::Params, 0, index)?;
        }

        // tail runs once on the stitched tensor
        let mut cur = holding;
        let mut cur_slot = Slot::Holding;
        for index in trunk..self.model.spec.layers.len() {
            (cur, cur_slot) = self.step(cur, cur_slot, index)?;
        }
        Ok(cur)
    }
}

/// Execute a model inside the arena under the given mode.
pub fn execute(
    model: &Model,
    input: &Tensor,
    mode: ExecMode,
    arena: &mut Arena,
) -> Result<ExecReport> {
    if input.shape() != model.input_shape() {
        return Err(Error::Shape(format!(
            "input shape {} does not match model input {}",
            input.shape(),
            model.input_shape()
        )));
    }
    let mut exec = Exec {
        model,
        arena,
        macs: MacCounter::new(),
        use_inplace: mode.uses_inplace(),
        inplace_layers: Vec::new(),
        copied_bytes: 0,
    };
    let output = if mode.uses_patches() && trunk_len(model).is_some() {
        let plan = plan_patches(model, mode.patches())?;
        exec.run_patched(input, &plan)?
    } else {
        // patch modes degrade to linear execution when there is nothing to
        // patch
        exec.run_linear(input)?
    };
    Ok(ExecReport {
        output,
        peak_bytes: exec.arena.peak_bytes(),
        working_peak_bytes: exec.arena.working_peak_bytes(),
        macs: exec.macs.count(),
        param_slot_peak: exec.arena.slot_peak(Slot::Params),
        inplace_layers: exec.inplace_layers,
        copied_bytes: exec.copied_bytes,
    })
}
