//! Analytic accounting: MACs, parameters, and per-mode activation memory.
//!
//! Everything here is computed from shape arithmetic and the patch plan,
//! never by executing the model. The memory plan follows the same slot
//! discipline as the executor, so its analytic peak must equal the measured
//! arena high-water mark exactly; the equivalence suite asserts as much.
//!
//! Byte figures are 4 bytes per element (float32). Reports that print kB use
//! decimal kilobytes (1000 bytes) and say so.

use crate::error::Result;
use crate::modelio::{LayerSpec, Model};
use crate::scheduler::{
    inplace_pays_off, plan_patches, required_buffer_elems, trunk_len, ExecMode, PatchPlan,
};
use serde::Serialize;

/// Closed-form live-element expressions for a depthwise layer with N
/// channels, multiplier K, per-channel activation sizes `s_i`/`s_o` and
/// per-kernel size `s_k`. These count activations plus kernel weights.
pub mod formulas {
    /// Naive live elements: `N*s_i + N*K*s_o + N*K*s_k`.
    pub fn dw_naive_elems(n: u64, k: u64, s_i: u64, s_o: u64, s_k: u64) -> u64 {
        n * s_i + n * k * s_o + n * k * s_k
    }

    /// In-place live elements: `(N+1)*max(s_i, K*s_o) + N*K*s_k`.
    pub fn dw_inplace_elems(n: u64, k: u64, s_i: u64, s_o: u64, s_k: u64) -> u64 {
        (n + 1) * s_i.max(k * s_o) + n * k * s_k
    }

    /// Combined in-place plus m-patch live elements:
    /// `((N+1)*max(s_i, K*s_o))/m + N*K*s_k`. Real-valued because of the
    /// division.
    pub fn dw_combined_elems(n: u64, k: u64, s_i: u64, s_o: u64, s_k: u64, m: u64) -> f64 {
        ((n + 1) * s_i.max(k * s_o)) as f64 / m as f64 + (n * k * s_k) as f64
    }

    /// Weights of a regular convolution: `n_i * n_o * k_elems`.
    pub fn regular_weights(n_i: u64, n_o: u64, k_elems: u64) -> u64 {
        n_i * n_o * k_elems
    }

    /// Weights of a depthwise-separable pair: `K * n_i * (n_o + k_elems)`.
    pub fn separable_pair_weights(n_i: u64, multiplier: u64, n_o: u64, k_elems: u64) -> u64 {
        multiplier * n_i * (n_o + k_elems)
    }

    /// MACs of a regular convolution over `out_spatial` output positions.
    pub fn regular_macs(out_spatial: u64, n_i: u64, n_o: u64, k_elems: u64) -> u64 {
        out_spatial * n_o * n_i * k_elems
    }

    /// MACs of a depthwise-separable pair over `out_spatial` positions:
    /// depthwise stage plus pointwise stage.
    pub fn separable_pair_macs(
        out_spatial: u64,
        n_i: u64,
        multiplier: u64,
        n_o: u64,
        k_elems: u64,
    ) -> u64 {
        out_spatial * multiplier * n_i * k_elems + out_spatial * n_o * multiplier * n_i
    }
}

/// Per-layer accounting entry.
#[derive(Debug, Clone, Serialize)]
pub struct LayerAudit {
    pub index: usize,
    pub kind: String,
    /// MACs in this mode (patched layers include the per-patch overlap).
    pub macs: u64,
    pub weight_count: u64,
    pub bias_count: u64,
    /// SRAM bytes of the parameter slot while this layer runs.
    pub param_bytes: u64,
    pub in_elems: u64,
    pub out_elems: u64,
    /// Worst-case live bytes while this layer executes in this mode.
    pub live_bytes: u64,
    /// Whether in-place rescheduling engaged (on any patch).
    pub inplace: bool,
}

/// Analytic memory plan for one execution mode.
#[derive(Debug, Clone, Serialize)]
pub struct MemoryPlan {
    pub mode: ExecMode,
    pub input_bytes: u64,
    pub layers: Vec<LayerAudit>,
    /// Largest in-place transfer buffer engaged anywhere (bytes).
    pub buffer_bytes: u64,
    /// Full stitched trunk output held across patches (bytes, patch modes).
    pub holding_bytes: u64,
    /// Peak live bytes; equals the executor's measured arena high-water mark.
    pub peak_bytes: u64,
    /// Peak excluding the holding slot, the per-patch working set; equals
    /// the measured working-set mark.
    pub working_peak_bytes: u64,
    pub dominant_layer: Option<usize>,
    pub total_macs: u64,
    pub total_weights: u64,
    pub total_bias: u64,
    /// Closed-form view: per-layer activations plus kernel weights, with the
    /// activation part divided by m in patch modes. No holding buffer, no
    /// bias, no parameter slot. Elements, not bytes.
    pub formula_peak_elems: f64,
}

impl MemoryPlan {
    /// Total parameter bytes at 4 bytes per value.
    pub fn model_bytes(&self) -> u64 {
        4 * (self.total_weights + self.total_bias)
    }
}

/// MACs per output spatial position (all output channels at that position).
fn per_position_macs(layer: &LayerSpec, n_i: u64) -> u64 {
    match layer {
        // weights = n_i * n_o * k_elems: exactly the MACs of one position
        LayerSpec::RegularConv { weights, .. } => weights.len() as u64,
        // weights = K * n_i * k_elems
        LayerSpec::DepthwiseConv { weights, .. } => weights.len() as u64,
        LayerSpec::PointwiseConv { out_channels, .. } => *out_channels as u64 * n_i,
        _ => 0,
    }
}

/// Naive per-layer MAC counts.
pub fn count_macs(model: &Model) -> Vec<u64> {
    model
        .spec
        .layers
        .iter()
        .zip(&model.layer_io)
        .map(|(layer, io)| match layer {
            LayerSpec::Dense { units, .. } => (io.input.element_count() * units) as u64,
            _ => {
                io.output.plane_elems() as u64 * per_position_macs(layer, io.input.channels as u64)
            }
        })
        .collect()
}

/// Per-layer MAC counts under a mode; patched trunk layers pay for every
/// patch including receptive-field overlap.
pub fn mode_macs(model: &Model, mode: ExecMode) -> Result<Vec<u64>> {
    let mut macs = count_macs(model);
    if !mode.uses_patches() || trunk_len(model).is_none() {
        return Ok(macs);
    }
    let plan = plan_patches(model, mode.patches())?;
    for (i, item) in macs.iter_mut().enumerate().take(plan.trunk_len) {
        let per_pos = per_position_macs(&model.spec.layers[i], model.layer_io[i].input.channels as u64);
        *item = (0..plan.patches)
            .map(|p| plan.output_spatial(model, p, i) * per_pos)
            .sum();
    }
    Ok(macs)
}

/// Per-layer output elements actually produced under a mode; patched trunk
/// layers count every patch (overlap included).
pub fn mode_output_elems(model: &Model, mode: ExecMode) -> Result<Vec<u64>> {
    let mut elems: Vec<u64> = model
        .layer_io
        .iter()
        .map(|io| io.output.element_count() as u64)
        .collect();
    if !mode.uses_patches() || trunk_len(model).is_none() {
        return Ok(elems);
    }
    let plan = plan_patches(model, mode.patches())?;
    for (i, item) in elems.iter_mut().enumerate().take(plan.trunk_len) {
        *item = (0..plan.patches).map(|p| plan.output_elems(model, p, i)).sum();
    }
    Ok(elems)
}

/// Extra MACs an m-patch plan costs over naive execution. Usually positive
/// (receptive-field overlap); negative when strided layers leave trailing
/// positions that naive execution computes but no patch ever needs.
pub fn overlap_macs(model: &Model, m: usize) -> Result<i64> {
    let naive: u64 = count_macs(model).iter().sum();
    let patched: u64 = mode_macs(model, ExecMode::PatchOnly { patches: m })?.iter().sum();
    Ok(patched as i64 - naive as i64)
}

/// Weight and bias totals across the model.
pub fn count_params(model: &Model) -> (u64, u64) {
    model.spec.layers.iter().fold((0, 0), |(w, b), layer| {
        let (lw, lb) = layer.param_counts();
        (w + lw as u64, b + lb as u64)
    })
}

struct LayerLive {
    live_bytes: u64,
    /// The holding-slot bytes included in `live_bytes`.
    hold_bytes: u64,
    inplace: bool,
    buffer_bytes: u64,
}

/// Live bytes of one layer under the linear (exchange-slot) discipline.
fn linear_live(model: &Model, index: usize, use_inplace: bool) -> LayerLive {
    let layer = &model.spec.layers[index];
    let io = &model.layer_io[index];
    let pb = layer.param_slot_bytes();
    let in_b = 4 * io.input.element_count() as u64;
    let out_b = 4 * io.output.element_count() as u64;
    match layer {
        LayerSpec::Relu {} | LayerSpec::MaxPool { .. } => {
            LayerLive { live_bytes: in_b + pb, hold_bytes: 0, inplace: false, buffer_bytes: 0 }
        }
        LayerSpec::DepthwiseConv { multiplier, .. }
            if use_inplace
                && inplace_pays_off(
                    io.input.channels,
                    io.input.plane_elems(),
                    *multiplier,
                    io.output.plane_elems(),
                ) =>
        {
            let n = io.input.channels as u64;
            let slot =
                required_buffer_elems(io.input.plane_elems(), *multiplier, io.output.plane_elems())
                    as u64;
            LayerLive {
                live_bytes: 4 * (n + 1) * slot + pb,
                hold_bytes: 0,
                inplace: true,
                buffer_bytes: 4 * slot,
            }
        }
        _ => LayerLive { live_bytes: in_b + out_b + pb, hold_bytes: 0, inplace: false, buffer_bytes: 0 },
    }
}

/// Live bytes of trunk layer `index` while patch `p` runs through it.
fn patched_live(
    model: &Model,
    plan: &PatchPlan,
    p: usize,
    index: usize,
    use_inplace: bool,
    hold_prefix: u64,
    hold_incl: u64,
) -> LayerLive {
    let layer = &model.spec.layers[index];
    let pb = layer.param_slot_bytes();
    let pin = 4 * plan.input_elems(model, p, index);
    if index == plan.trunk_len - 1 {
        // final trunk layer writes straight into the holding slot
        return LayerLive {
            live_bytes: pin + pb + hold_incl,
            hold_bytes: hold_incl,
            inplace: false,
            buffer_bytes: 0,
        };
    }
    let pout = 4 * plan.output_elems(model, p, index);
    match layer {
        LayerSpec::Relu {} | LayerSpec::MaxPool { .. } => LayerLive {
            live_bytes: pin + pb + hold_prefix,
            hold_bytes: hold_prefix,
            inplace: false,
            buffer_bytes: 0,
        },
        LayerSpec::DepthwiseConv { multiplier, .. } if use_inplace => {
            let n = model.layer_io[index].input.channels;
            let s_i = plan.layer_inputs[p][index].elems();
            let s_o = plan.output_spatial(model, p, index) as usize;
            if inplace_pays_off(n, s_i, *multiplier, s_o) {
                let slot = required_buffer_elems(s_i, *multiplier, s_o) as u64;
                LayerLive {
                    live_bytes: 4 * (n as u64 + 1) * slot + pb + hold_prefix,
                    hold_bytes: hold_prefix,
                    inplace: true,
                    buffer_bytes: 4 * slot,
                }
            } else {
                LayerLive {
                    live_bytes: pin + pout + pb + hold_prefix,
                    hold_bytes: hold_prefix,
                    inplace: false,
                    buffer_bytes: 0,
                }
            }
        }
        _ => LayerLive {
            live_bytes: pin + pout + pb + hold_prefix,
            hold_bytes: hold_prefix,
            inplace: false,
            buffer_bytes: 0,
        },
    }
}

/// Closed-form per-layer live elements (activations plus kernel weights);
/// the activation term is divided by m for patched trunk layers.
fn formula_elems(model: &Model, index: usize, mode: ExecMode, in_trunk: bool) -> f64 {
    let layer = &model.spec.layers[index];
    let io = &model.layer_io[index];
    let in_e = io.input.element_count() as f64;
    let out_e = io.output.element_count() as f64;
    let weights = layer.param_counts().0 as f64;
    let m = if mode.uses_patches() && in_trunk { mode.patches() as f64 } else { 1.0 };
    let act = match layer {
        LayerSpec::Relu {} | LayerSpec::MaxPool { .. } => in_e,
        LayerSpec::DepthwiseConv { multiplier, .. } if mode.uses_inplace() => {
            let n = io.input.channels as f64;
            let slot = required_buffer_elems(
                io.input.plane_elems(),
                *multiplier,
                io.output.plane_elems(),
            ) as f64;
            ((n + 1.0) * slot).min(in_e + out_e)
        }
        _ => in_e + out_e,
    };
    act / m + weights
}

/// Per-layer live bytes, analytic peak, and dominant layer for a mode.
pub fn activation_memory(model: &Model, mode: ExecMode) -> Result<MemoryPlan> {
    let macs = mode_macs(model, mode)?;
    let input_bytes = 4 * model.input_shape().element_count() as u64;
    let use_patches = mode.uses_patches() && trunk_len(model).is_some();

    // (live, holding share of live, inplace) per layer, worst patch
    let mut per_layer: Vec<(u64, u64, bool)> = Vec::with_capacity(model.spec.layers.len());
    let mut buffer_bytes = 0u64;
    let mut holding_bytes = 0u64;

    if !use_patches {
        for index in 0..model.spec.layers.len() {
            let ll = linear_live(model, index, mode.uses_inplace());
            buffer_bytes = buffer_bytes.max(ll.buffer_bytes);
            per_layer.push((ll.live_bytes, 0, ll.inplace));
        }
    } else {
        let plan = plan_patches(model, mode.patches())?;
        let out_bytes: Vec<u64> = (0..plan.patches)
            .map(|p| 4 * plan.output_elems(model, p, plan.trunk_len - 1))
            .collect();
        holding_bytes = out_bytes.iter().sum();
        for index in 0..plan.trunk_len {
            let mut worst_live = 0u64;
            let mut worst_working = 0u64;
            let mut engaged = false;
            let mut hold_prefix = 0u64;
            for p in 0..plan.patches {
                let hold_incl = hold_prefix + out_bytes[p];
                let ll = patched_live(
                    model,
                    &plan,
                    p,
                    index,
                    mode.uses_inplace(),
                    hold_prefix,
                    hold_incl,
                );
                worst_live = worst_live.max(ll.live_bytes);
                worst_working = worst_working.max(ll.live_bytes - ll.hold_bytes);
                engaged |= ll.inplace;
                buffer_bytes = buffer_bytes.max(ll.buffer_bytes);
                hold_prefix = hold_incl;
            }
            // the worst live event and the worst working set may come from
            // different patches
            per_layer.push((worst_live, worst_live - worst_working, engaged));
        }
        // the stitched tensor stays in the holding slot until a dense layer
        // moves it to an exchange slot
        let mut in_holding = true;
        for index in plan.trunk_len..model.spec.layers.len() {
            let ll = linear_live(model, index, mode.uses_inplace());
            buffer_bytes = buffer_bytes.max(ll.buffer_bytes);
            let hold = if in_holding {
                4 * model.layer_io[index].input.element_count() as u64
            } else {
                0
            };
            per_layer.push((ll.live_bytes, hold, ll.inplace));
            if !matches!(
                model.spec.layers[index],
                LayerSpec::Relu {} | LayerSpec::MaxPool { .. }
            ) {
                in_holding = false;
            }
        }
    }

    // the bare input load is an event of its own in the unpatched modes
    let mut peak_bytes = if use_patches { 0 } else { input_bytes };
    let mut working_peak_bytes = if use_patches { 0 } else { input_bytes };
    let mut dominant_layer = None;
    for (index, (live, hold, _)) in per_layer.iter().enumerate() {
        let best = dominant_layer.map(|d: usize| per_layer[d].0).unwrap_or(0);
        if *live > best {
            dominant_layer = Some(index);
        }
        peak_bytes = peak_bytes.max(*live);
        working_peak_bytes = working_peak_bytes.max(*live - *hold);
    }

    let trunk = trunk_len(model).unwrap_or(0);
    let formula_peak_elems = (0..model.spec.layers.len())
        .map(|i| formula_elems(model, i, mode, i < trunk))
        .fold(0.0f64, f64::max);

    let audits = per_layer
        .iter()
        .enumerate()
        .map(|(index, (live, _, inplace))| {
            let layer = &model.spec.layers[index];
            let io = &model.layer_io[index];
            let (w, b) = layer.param_counts();
            LayerAudit {
                index,
                kind: layer.kind().to_string(),
                macs: macs[index],
                weight_count: w as u64,
                bias_count: b as u64,
                param_bytes: layer.param_slot_bytes(),
                in_elems: io.input.element_count() as u64,
                out_elems: io.output.element_count() as u64,
                live_bytes: *live,
                inplace: *inplace,
            }
        })
        .collect();

    let (total_weights, total_bias) = count_params(model);
    Ok(MemoryPlan {
        mode,
        input_bytes,
        layers: audits,
        buffer_bytes,
        holding_bytes,
        peak_bytes,
        working_peak_bytes,
        dominant_layer,
        total_macs: macs.iter().sum(),
        total_weights,
        total_bias,
        formula_peak_elems,
    })
}
