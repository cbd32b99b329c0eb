//! Flash/SRAM inference-latency simulation.
//!
//! Per layer, preparation time covers flash page reads plus decoding the
//! serialized parameters; forward time covers the layer's MACs plus the
//! in-place copy traffic. Two regimes: single-thread (load then compute,
//! strictly serial) and multi-thread (one loader resource, one compute
//! resource; the next layer's parameters load during the current layer's
//! compute).
//!
//! Absolute times are simulated with calibrated per-unit costs; the defaults
//! are documented knobs, not measurements.

use crate::audit;
use crate::error::{Error, Result};
use crate::modelio::Model;
use crate::scheduler::{trunk_len, ExecMode};
use serde::Serialize;

/// Cost model for flash reads, decoding, and compute.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlashModel {
    pub page_size_bytes: u64,
    /// Read latency per page, microseconds.
    pub t_read_us: f64,
    /// Decode cost per serialized parameter byte, microseconds.
    pub decode_us_per_byte: f64,
    /// Compute cost per MAC, microseconds.
    pub mac_us: f64,
    /// Cost per byte moved by in-place rescheduling, folded into forward
    /// time.
    pub copy_us_per_byte: f64,
}

impl Default for FlashModel {
    fn default() -> Self {
        // page size and read latency from the target flash part; decode and
        // MAC costs calibrated so a 1-D three-conv trunk lands near a
        // mid-tens-of-ms forward time
        FlashModel {
            page_size_bytes: 8192,
            t_read_us: 25.0,
            decode_us_per_byte: 2.5,
            mac_us: 0.016,
            copy_us_per_byte: 0.002,
        }
    }
}

impl FlashModel {
    pub fn validate(&self) -> Result<()> {
        if self.page_size_bytes == 0
            || self.t_read_us <= 0.0
            || self.decode_us_per_byte <= 0.0
            || self.mac_us <= 0.0
            || self.copy_us_per_byte < 0.0
        {
            return Err(Error::Plan("flash model parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Preparation time for one layer: `ceil(bytes/page) * t_read + bytes *
/// decode`.
pub fn layer_prep(param_bytes: u64, flash: &FlashModel) -> f64 {
    let pages = param_bytes.div_ceil(flash.page_size_bytes);
    pages as f64 * flash.t_read_us + param_bytes as f64 * flash.decode_us_per_byte
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerTiming {
    pub layer: usize,
    pub kind: String,
    pub prep_us: f64,
    pub fwd_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Load,
    Compute,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineEntry {
    pub layer: usize,
    pub resource: Resource,
    pub start_us: f64,
    pub end_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timeline {
    pub threads: usize,
    pub entries: Vec<TimelineEntry>,
    pub total_us: f64,
}

/// Run the event timeline for `(prep, fwd)` pairs.
///
/// One thread: compute starts when its own load finished, strictly serial.
/// Two threads: loads chain on the loader resource, compute `i` starts at
/// `max(load_done_i, compute_done_{i-1})`.
pub fn simulate(layers: &[(f64, f64)], threads: usize) -> Result<Timeline> {
    if layers.is_empty() {
        return Err(Error::Plan("latency simulation needs at least one layer".into()));
    }
    if threads != 1 && threads != 2 {
        return Err(Error::Plan(format!("threads must be 1 or 2, got {threads}")));
    }
    let mut entries = Vec::with_capacity(layers.len() * 2);
    let total = if threads == 1 {
        let mut t = 0.0;
        for (i, &(prep, fwd)) in layers.iter().enumerate() {
            entries.push(TimelineEntry { layer: i, resource: Resource::Load, start_us: t, end_us: t + prep });
            t += prep;
            entries.push(TimelineEntry { layer: i, resource: Resource::Compute, start_us: t, end_us: t + fwd });
            t += fwd;
        }
        t
    } else {
        let mut load_done = 0.0f64;
        let mut compute_done = 0.0f64;
        for (i, &(prep, fwd)) in layers.iter().enumerate() {
            let load_start = load_done;
            load_done += prep;
            entries.push(TimelineEntry {
                layer: i,
                resource: Resource::Load,
                start_us: load_start,
                end_us: load_done,
            });
            let start = load_done.max(compute_done);
            compute_done = start + fwd;
            entries.push(TimelineEntry {
                layer: i,
                resource: Resource::Compute,
                start_us: start,
                end_us: compute_done,
            });
        }
        compute_done
    };
    Ok(Timeline { threads, entries, total_us: total })
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyProfile {
    pub mode: ExecMode,
    /// Whether trunk parameters are re-read from flash for every patch
    /// instead of staying resident per layer.
    pub reload_per_patch: bool,
    pub flash: FlashModel,
    pub layers: Vec<LayerTiming>,
    pub single_total_us: f64,
    pub multi_total_us: f64,
    pub single: Timeline,
    pub multi: Timeline,
}

/// Build per-layer timings for a model and mode.
///
/// `serialized_param_bytes` comes from the layer stream (the exact
/// weights+bias byte spans in the model file). Patched trunk layers pay the
/// per-patch MAC overlap in forward time; preparation is charged once per
/// layer unless `reload_per_patch` is set.
pub fn profile(
    model: &Model,
    serialized_param_bytes: &[u64],
    flash: &FlashModel,
    mode: ExecMode,
    reload_per_patch: bool,
) -> Result<LatencyProfile> {
    flash.validate()?;
    if serialized_param_bytes.len() != model.spec.layers.len() {
        return Err(Error::Plan(format!(
            "{} serialized byte counts for {} layers",
            serialized_param_bytes.len(),
            model.spec.layers.len()
        )));
    }
    if model.spec.layers.is_empty() {
        return Err(Error::Plan("latency simulation needs at least one layer".into()));
    }
    let macs = audit::mode_macs(model, mode)?;
    let plan = audit::activation_memory(model, mode)?;
    let out_elems = audit::mode_output_elems(model, mode)?;
    let trunk = if mode.uses_patches() { trunk_len(model).unwrap_or(0) } else { 0 };

    let mut layers = Vec::with_capacity(model.spec.layers.len());
    for (i, layer) in model.spec.layers.iter().enumerate() {
        let mut prep = layer_prep(serialized_param_bytes[i], flash);
        if reload_per_patch && i < trunk {
            prep *= mode.patches() as f64;
        }
        let mut fwd = macs[i] as f64 * flash.mac_us;
        if plan.layers[i].inplace {
            fwd += (4 * out_elems[i]) as f64 * flash.copy_us_per_byte;
        }
        layers.push(LayerTiming { layer: i, kind: layer.kind().to_string(), prep_us: prep, fwd_us: fwd });
    }
    let pairs: Vec<(f64, f64)> = layers.iter().map(|l| (l.prep_us, l.fwd_us)).collect();
    let single = simulate(&pairs, 1)?;
    let multi = simulate(&pairs, 2)?;
    Ok(LatencyProfile {
        mode,
        reload_per_patch,
        flash: *flash,
        single_total_us: single.total_us,
        multi_total_us: multi.total_us,
        layers,
        single,
        multi,
    })
}
