//! Simulated SRAM arena.
//!
//! The arena is a byte-accounting model of the device's working memory, not
//! a real allocator: the executor reports every slot transition and the arena
//! tracks the live total, its high-water mark, and an optional budget.
//! Because the numbers come from slot bookkeeping rather than host
//! allocations, they are deterministic and platform-independent.

use crate::error::{Error, Result};

/// Named allocation slots. Every activation the executor holds is charged to
/// exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// The receptive field currently loaded from flash (the whole input in
    /// the unpatched modes).
    InputPatch,
    /// Exchange slots holding intermediate results alternately.
    ExchangeA,
    ExchangeB,
    /// Temporary buffer for in-place depthwise rescheduling.
    Buffer,
    /// The current layer's parameters.
    Params,
    /// Stitched trunk outputs accumulated across patches.
    Holding,
}

pub const SLOT_COUNT: usize = 6;

impl Slot {
    fn index(self) -> usize {
        match self {
            Slot::InputPatch => 0,
            Slot::ExchangeA => 1,
            Slot::ExchangeB => 2,
            Slot::Buffer => 3,
            Slot::Params => 4,
            Slot::Holding => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::InputPatch => "input_patch",
            Slot::ExchangeA => "exchange_a",
            Slot::ExchangeB => "exchange_b",
            Slot::Buffer => "buffer",
            Slot::Params => "params",
            Slot::Holding => "holding",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Arena {
    budget: Option<u64>,
    sizes: [u64; SLOT_COUNT],
    live: u64,
    peak: u64,
    working_peak: u64,
    slot_peak: [u64; SLOT_COUNT],
}

impl Arena {
    pub fn new() -> Self {
        Arena::default()
    }

    /// Arena with a byte budget; exceeding it fails the offending layer.
    pub fn with_budget(budget: u64) -> Self {
        Arena { budget: Some(budget), ..Arena::default() }
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    /// Resize a slot. `layer` names the layer being executed so budget
    /// violations can be attributed.
    pub fn set(&mut self, slot: Slot, bytes: u64, layer: usize) -> Result<()> {
        let i = slot.index();
        self.live = self.live - self.sizes[i] + bytes;
        self.sizes[i] = bytes;
        self.slot_peak[i] = self.slot_peak[i].max(bytes);
        self.peak = self.peak.max(self.live);
        self.working_peak = self.working_peak.max(self.live - self.sizes[Slot::Holding.index()]);
        if let Some(budget) = self.budget {
            if self.live > budget {
                return Err(Error::Budget { layer, live: self.live, budget });
            }
        }
        Ok(())
    }

    pub fn live_bytes(&self) -> u64 {
        self.live
    }

    pub fn peak_bytes(&self) -> u64 {
        self.peak
    }

    /// High-water mark of everything except the holding slot: the working
    /// set that patching divides by m.
    pub fn working_peak_bytes(&self) -> u64 {
        self.working_peak
    }

    pub fn slot_peak(&self, slot: Slot) -> u64 {
        self.slot_peak[slot.index()]
    }
}
