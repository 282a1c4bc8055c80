//! Platform layer: the low-level contract between host and device.
//!
//! Everything the higher-level device API does decomposes into the four
//! primitives exposed here — device memory management, register file
//! access, DMA transfers, and completion interrupts — so alternative
//! backends can be swapped in below the device API without touching it.
//! All backends are simulated; which board a [`Platform`] imitates is
//! decided at runtime by the platform model it is opened with.

pub(crate) mod alloc;
mod model;
pub(crate) mod regfile;

use std::sync::Arc;

use crate::error::Result;
use crate::sim::SimCore;

pub use model::{ChunkRate, InterruptModel, PlatformModel, PlatformRegistry, TransferModel};

/// Whether an operation returns once the modeled work is finished or hands
/// back something to wait on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    Blocking,
    NonBlocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDirection {
    ToDevice,
    FromDevice,
}

impl TransferDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferDirection::ToDevice => "to_device",
            TransferDirection::FromDevice => "from_device",
        }
    }
}

/// Ticket for a non-blocking transfer, redeemable exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferToken(pub(crate) u64);

/// What a finished transfer did. `data` holds the payload for
/// device-to-host reads and is empty for writes.
#[derive(Debug, Clone)]
pub struct TransferResult {
    pub direction: TransferDirection,
    pub size_bytes: u64,
    pub duration_us: f64,
    pub rate_mib_s: f64,
    pub data: Vec<u8>,
}

/// Outcome of issuing a transfer: blocking mode yields the result inline,
/// non-blocking mode yields a token for a later wait.
#[derive(Debug)]
pub enum TransferStatus {
    Done(TransferResult),
    Pending(TransferToken),
}

impl TransferStatus {
    pub fn done(self) -> Option<TransferResult> {
        match self {
            TransferStatus::Done(r) => Some(r),
            TransferStatus::Pending(_) => None,
        }
    }

    pub fn token(&self) -> Option<TransferToken> {
        match self {
            TransferStatus::Done(_) => None,
            TransferStatus::Pending(t) => Some(*t),
        }
    }
}

/// A completion interrupt as seen by the host: which PE finished and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletionEvent {
    pub event_id: u64,
    pub pe_index: usize,
    pub timestamp_ps: u64,
}

/// One observed interrupt round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct InterruptMeasurement {
    pub pe_index: usize,
    /// When the device raised the interrupt (virtual time).
    pub raised_ps: u64,
    /// Sampled delivery latency.
    pub latency_us: f64,
    /// When the host observed the completion: raised + latency.
    pub acked_ps: u64,
}

/// A handle on one simulated board, exposing the raw platform API.
///
/// Cloning is cheap and shares the underlying device state — the same
/// board viewed twice, not two boards.
#[derive(Clone)]
pub struct Platform {
    core: Arc<SimCore>,
}

impl Platform {
    /// Open a simulated board for `name` with the default random seed.
    pub fn open(name: &str, registry: &PlatformRegistry) -> Result<Self> {
        Self::open_seeded(name, registry, crate::sim::DEFAULT_SEED)
    }

    /// Open a simulated board with an explicit seed for its latency
    /// sampler. Same seed, same model ⇒ same behavior, bit for bit.
    pub fn open_seeded(name: &str, registry: &PlatformRegistry, seed: u64) -> Result<Self> {
        let model = registry.model(name)?.clone();
        Ok(Self {
            core: Arc::new(SimCore::new(model, seed)),
        })
    }

    pub(crate) fn from_core(core: Arc<SimCore>) -> Self {
        Self { core }
    }

    pub fn name(&self) -> &str {
        &self.core.model().name
    }

    pub fn model(&self) -> &PlatformModel {
        self.core.model()
    }

    /// Allocate `size` bytes of device memory, returning its address.
    pub fn mem_alloc(&self, size: u64) -> Result<u64> {
        self.core.alloc_raw(size)
    }

    /// Free a region previously returned by [`Platform::mem_alloc`].
    pub fn mem_free(&self, addr: u64) -> Result<()> {
        self.core.free_raw(addr)
    }

    pub fn free_bytes(&self) -> u64 {
        self.core.free_bytes()
    }

    /// Live allocations as (address, size) pairs, ascending by address.
    pub fn live_regions(&self) -> Vec<(u64, u64)> {
        self.core.live_regions()
    }

    pub fn read_reg(&self, offset: u64) -> Result<u64> {
        self.core.read_reg(offset)
    }

    pub fn write_reg(&self, offset: u64, value: u64) -> Result<()> {
        self.core.write_reg(offset, value)
    }

    pub fn dma_to_device(&self, dst: u64, data: &[u8], mode: SyncMode) -> Result<TransferStatus> {
        self.core.dma_write(dst, data, mode)
    }

    pub fn dma_from_device(&self, src: u64, len: u64, mode: SyncMode) -> Result<TransferStatus> {
        self.core.dma_read(src, len, mode)
    }

    /// Redeem a non-blocking transfer's token. Each token resolves once.
    pub fn transfer_wait(&self, token: TransferToken) -> Result<TransferResult> {
        self.core.transfer_wait(token)
    }

    /// Test hook: raise a completion interrupt for a PE by hand.
    pub fn raise_interrupt(&self, pe_index: usize) -> Result<()> {
        self.core.raise_interrupt(pe_index)
    }

    /// Block until a completion interrupt is available and take it.
    pub fn await_event(&self) -> CompletionEvent {
        self.core.await_event()
    }

    /// Acknowledge a completion interrupt, sampling its delivery latency.
    pub fn ack_interrupt(&self, event: &CompletionEvent) -> Result<InterruptMeasurement> {
        self.core.ack_interrupt(event)
    }

    /// Process every scheduled PE completion.
    pub fn run_until_idle(&self) {
        self.core.run_until_idle()
    }

    /// Current virtual time in picoseconds.
    pub fn modeled_time_ps(&self) -> u64 {
        self.core.clock_ps()
    }

    pub fn modeled_time_us(&self) -> f64 {
        crate::time::us_from_ps(self.core.clock_ps())
    }
}
