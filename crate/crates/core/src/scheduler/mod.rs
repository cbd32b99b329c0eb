//! Memory-scheduled model execution inside a simulated SRAM arena.

mod arena;
mod exec;
mod inplace;
mod patch;

pub use arena::{Arena, Slot};
pub use exec::{execute, ExecMode, ExecReport};
pub use inplace::{
    inplace_depthwise, inplace_depthwise_with_buffer, inplace_pays_off, required_buffer_elems,
    InplaceLayout, InplaceRun,
};
pub use patch::{plan_patches, stitch_outputs, trunk_len, PatchPlan};
