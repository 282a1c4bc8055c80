//! ThreadPool: processing elements, their register windows, and dispatch.
//!
//! A loaded design is a pool of processing elements (PEs), each an instance
//! of one kernel, laid out in a flat register address space. The host talks
//! to a PE through its window:
//!
//! ```text
//! +0x00  CTRL     bit 0: start (edge-triggered on write; ignored while busy)
//! +0x08  STATUS   bit 0: done, bit 1: fault (cleared when a run starts)
//! +0x10  RETURN   64-bit result, valid while STATUS.done is set
//! +0x20  ARG[i]   argument slots, 8 bytes apart
//! ```
//!
//! Window sizes are the next power of two covering the largest argument
//! list in the design, so PE base addresses can be computed by shifting.
//! Job dispatch is FIFO per kernel id: a launched job goes to the
//! lowest-indexed idle PE of its kernel, or waits in that kernel's queue
//! until one finishes.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::composer::Composition;
use crate::error::{Error, Result};
use crate::kernels::{KernelRegistry, KernelSpec};
use crate::platform::PlatformModel;

/// Register offsets within a PE window plus the design-wide window size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterMap {
    pub window_size: u64,
}

impl RegisterMap {
    pub const CTRL: u64 = 0x00;
    pub const STATUS: u64 = 0x08;
    pub const RETURN: u64 = 0x10;
    pub const ARG_BASE: u64 = 0x20;

    pub const CTRL_START: u64 = 1;
    pub const STATUS_DONE: u64 = 1;
    pub const STATUS_FAULT: u64 = 1 << 1;

    /// Window size for a design whose widest kernel takes `max_arity` args:
    /// the fixed header (0x20) plus one 8-byte slot per argument, rounded up
    /// to a power of two.
    pub fn for_max_arity(max_arity: usize) -> Self {
        let needed = Self::ARG_BASE + 8 * max_arity as u64;
        Self {
            window_size: needed.next_power_of_two(),
        }
    }

    /// Byte offset of argument slot `i` within a window.
    pub fn arg_offset(i: usize) -> u64 {
        Self::ARG_BASE + 8 * i as u64
    }

    /// Base address of PE `pe_index`.
    pub fn pe_base(&self, pe_index: usize) -> u64 {
        self.window_size * pe_index as u64
    }

    /// Total register span for `pe_count` PEs.
    pub fn span(&self, pe_count: usize) -> u64 {
        self.window_size * pe_count as u64
    }
}

/// One PE's place in the design: which kernel it instantiates and where its
/// register window sits. Field order is alphabetical because these rows are
/// serialized verbatim into design artifacts, which promise stable key
/// ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeLayout {
    pub arity: usize,
    pub base_offset: u64,
    pub kernel_id: u32,
    pub pe_index: usize,
    pub return_width: usize,
}

/// Per-kernel PE request an architecture has to place.
#[derive(Debug, Clone)]
pub struct LayoutRequest {
    pub kernel_id: u32,
    pub count: usize,
    pub arity: usize,
    pub return_width: usize,
}

/// An architecture decides how composed kernels are ordered and placed in
/// the register address space. Exactly one ships today; the seam exists so
/// alternative layouts slot in without touching the composer.
pub trait Architecture: Send + Sync {
    fn name(&self) -> &str;
    fn lay_out(&self, requests: &[LayoutRequest]) -> (RegisterMap, Vec<PeLayout>);
}

/// The baseline architecture: PEs sorted by ascending kernel id, instances
/// in request order, windows contiguous from offset 0.
pub struct FlatArchitecture;

impl Architecture for FlatArchitecture {
    fn name(&self) -> &str {
        "flat"
    }

    fn lay_out(&self, requests: &[LayoutRequest]) -> (RegisterMap, Vec<PeLayout>) {
        let mut ordered: Vec<&LayoutRequest> = requests.iter().collect();
        ordered.sort_by_key(|r| r.kernel_id);
        let max_arity = ordered.iter().map(|r| r.arity).max().unwrap_or(0);
        let map = RegisterMap::for_max_arity(max_arity);
        let mut pes = Vec::new();
        for req in ordered {
            for _ in 0..req.count {
                let pe_index = pes.len();
                pes.push(PeLayout {
                    arity: req.arity,
                    base_offset: map.pe_base(pe_index),
                    kernel_id: req.kernel_id,
                    pe_index,
                    return_width: req.return_width,
                });
            }
        }
        (map, pes)
    }
}

/// Look an architecture up by name.
pub fn architecture_by_name(name: &str) -> Option<Box<dyn Architecture>> {
    match name {
        "flat" => Some(Box::new(FlatArchitecture)),
        _ => None,
    }
}

/// The instantiated (but not yet loaded) pool: the placement of every PE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadPool {
    pub architecture: String,
    pub register_map: RegisterMap,
    pub pes: Vec<PeLayout>,
}

/// Build the PE placement for a composition on a platform.
///
/// The composition must already be structurally sound (the parser enforces
/// that); this checks the pieces that depend on platform and registry: the
/// architecture must exist, every kernel id must be registered, and the
/// total PE count must fit the platform's slot budget.
pub fn instantiate(
    composition: &Composition,
    architecture: &str,
    platform: &PlatformModel,
    kernels: &KernelRegistry,
) -> Result<ThreadPool> {
    if composition.kernels.is_empty() {
        return Err(Error::EmptyComposition);
    }
    let arch =
        architecture_by_name(architecture).ok_or_else(|| Error::UnknownArchitecture(architecture.into()))?;
    let required: usize = composition.kernels.iter().map(|k| k.count as usize).sum();
    if required > platform.slot_budget {
        return Err(Error::SlotBudgetExceeded {
            required,
            budget: platform.slot_budget,
        });
    }
    let mut requests = Vec::new();
    for entry in &composition.kernels {
        let spec = kernels.lookup(entry.id)?;
        requests.push(LayoutRequest {
            kernel_id: entry.id,
            count: entry.count as usize,
            arity: spec.arity(),
            return_width: spec.return_width,
        });
    }
    let (register_map, pes) = arch.lay_out(&requests);
    Ok(ThreadPool {
        architecture: arch.name().to_string(),
        register_map,
        pes,
    })
}

// ---------------------------------------------------------------------------
// Runtime state, driven by the simulator core.
// ---------------------------------------------------------------------------

/// A run in flight on a PE. Arguments are latched at start time; the kernel
/// function itself executes when the PE's completion event fires.
#[derive(Debug)]
pub(crate) struct ActiveRun {
    /// Job bound to this run; `None` for runs triggered by raw CTRL writes.
    pub job: Option<u64>,
    pub args: Vec<u64>,
    /// Fault detected before execution (e.g. a stale handle at dispatch).
    pub pre_fault: Option<crate::kernels::KernelFault>,
}

#[derive(Debug)]
pub(crate) struct PeRuntime {
    pub layout: PeLayout,
    pub spec: Arc<KernelSpec>,
    pub run: Option<ActiveRun>,
}

impl PeRuntime {
    pub fn is_idle(&self) -> bool {
        self.run.is_none()
    }
}

/// The live pool inside a device: PE states plus per-kernel dispatch queues.
#[derive(Debug)]
pub(crate) struct PoolRuntime {
    pub architecture: String,
    pub map: RegisterMap,
    pub pes: Vec<PeRuntime>,
    pub queues: BTreeMap<u32, VecDeque<u64>>,
}

impl PoolRuntime {
    /// Materialize runtime state from an artifact's PE table, binding each
    /// PE to its kernel implementation.
    pub fn from_pe_table(
        architecture: &str,
        window_size: u64,
        table: &[PeLayout],
        kernels: &KernelRegistry,
    ) -> Result<Self> {
        let map = RegisterMap { window_size };
        let mut pes = Vec::with_capacity(table.len());
        let mut queues = BTreeMap::new();
        for (i, layout) in table.iter().enumerate() {
            let spec = kernels.lookup(layout.kernel_id)?.clone();
            if spec.arity() != layout.arity || spec.return_width != layout.return_width {
                return Err(Error::InvalidConfig(format!(
                    "design disagrees with kernel registry for kernel {}: \
                     arity/return width {}x{} vs registered {}x{}",
                    layout.kernel_id,
                    layout.arity,
                    layout.return_width,
                    spec.arity(),
                    spec.return_width
                )));
            }
            if layout.pe_index != i || layout.base_offset != map.pe_base(i) {
                return Err(Error::InvalidConfig(format!(
                    "PE {} window at {:#x} does not match its index under window size {:#x}",
                    layout.pe_index, layout.base_offset, window_size
                )));
            }
            queues.entry(layout.kernel_id).or_insert_with(VecDeque::new);
            pes.push(PeRuntime {
                layout: layout.clone(),
                spec,
                run: None,
            });
        }
        Ok(Self {
            architecture: architecture.to_string(),
            map,
            pes,
            queues,
        })
    }

    /// Lowest-indexed idle PE implementing `kernel_id`.
    pub fn idle_pe_for(&self, kernel_id: u32) -> Option<usize> {
        self.pes
            .iter()
            .position(|pe| pe.layout.kernel_id == kernel_id && pe.is_idle())
    }

    /// Does any PE implement `kernel_id`?
    pub fn has_kernel(&self, kernel_id: u32) -> bool {
        self.pes.iter().any(|pe| pe.layout.kernel_id == kernel_id)
    }

    /// Map a register offset to the PE whose CTRL register it is.
    pub fn pe_for_ctrl_offset(&self, offset: u64) -> Option<usize> {
        if offset % self.map.window_size != RegisterMap::CTRL {
            return None;
        }
        let idx = (offset / self.map.window_size) as usize;
        (idx < self.pes.len()).then_some(idx)
    }
}
