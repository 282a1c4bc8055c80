//! Device layer: the TPC API most applications program against.
//!
//! This is the portable offload interface. It corresponds one-to-one with
//! the C-style entry points of the original runtime; the table below maps
//! those names to their methods here.
//!
//! | C-style call            | Here                         |
//! |-------------------------|------------------------------|
//! | `tpc_device_alloc`      | [`Device::alloc`]            |
//! | `tpc_device_free`       | [`Device::free`]             |
//! | `tpc_device_copy_to`    | [`Device::copy_to`]          |
//! | `tpc_device_copy_from`  | [`Device::copy_from`]        |
//! | `tpc_transfer_wait`     | [`Device::transfer_wait`]    |
//! | `tpc_acquire_job_id`    | [`Device::acquire_job_id`]   |
//! | `tpc_job_set_arg`       | [`Device::job_set_arg`]      |
//! | `tpc_job_launch`        | [`Device::job_launch`]       |
//! | `tpc_job_get_return`    | [`Device::job_get_return`]   |
//! | `tpc_release_job_id`    | [`Device::release_job_id`]   |
//! | `tpc_load_design`       | [`Device::load_design`]      |
//! | `tpc_enum_devices`      | [`enumerate_devices`]        |
//!
//! A job moves through prepared → launched → completed and disappears on
//! release (a prepared job may be released without ever launching). Using a
//! released or otherwise unknown id reports an invalid-job-state error.
//! Everything below the job abstraction — registers, DMA, interrupts — is
//! reachable through [`Device::platform`], which views the same simulated
//! board through the platform API.

use std::sync::Arc;

use crate::composer::DesignArtifact;
use crate::error::{Error, Result};
use crate::kernels::KernelRegistry;
use crate::platform::{
    InterruptMeasurement, Platform, PlatformModel, PlatformRegistry, SyncMode, TransferResult,
    TransferStatus, TransferToken,
};
use crate::sim::{JobArg, SimCore, DEFAULT_SEED};

/// A device visible to enumeration, before it is opened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceInfo {
    pub device_id: usize,
    pub platform_name: String,
    pub device_memory_size: u64,
}

/// List the simulated devices available through a platform registry: one
/// per platform model, ids assigned in registry order.
pub fn enumerate_devices(registry: &PlatformRegistry) -> Vec<DeviceInfo> {
    registry
        .models()
        .iter()
        .enumerate()
        .map(|(device_id, model)| DeviceInfo {
            device_id,
            platform_name: model.name.clone(),
            device_memory_size: model.device_memory_size,
        })
        .collect()
}

/// An opaque reference to one device-memory allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryHandle {
    pub(crate) id: u64,
    size: u64,
}

impl MemoryHandle {
    /// Size of the region this handle refers to, in bytes.
    pub fn size(&self) -> u64 {
        self.size
    }
}

/// One job argument: an immediate scalar (1–8 little-endian bytes,
/// zero-extended) or a device-memory handle, which the runtime resolves to
/// the buffer's device address when the job starts.
#[derive(Debug, Clone)]
pub enum Arg {
    Scalar(Vec<u8>),
    Handle(MemoryHandle),
}

impl Arg {
    pub fn from_u64(v: u64) -> Self {
        Arg::Scalar(v.to_le_bytes().to_vec())
    }

    pub fn from_u32(v: u32) -> Self {
        Arg::Scalar(v.to_le_bytes().to_vec())
    }
}

/// Externally visible job lifecycle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Prepared,
    Launched,
    Completed,
}

/// Virtual-time milestones of a job. Fields fill in as the job progresses;
/// a completed job has all of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobTiming {
    /// PE the job ran on.
    pub pe_index: Option<usize>,
    /// When the PE started executing.
    pub start_ps: Option<u64>,
    /// When the PE finished.
    pub finish_ps: Option<u64>,
    /// When the completion became host-visible (finish + interrupt latency).
    pub acked_ps: Option<u64>,
}

/// An opened device. Cloning shares the underlying board.
#[derive(Clone)]
pub struct Device {
    core: Arc<SimCore>,
}

impl Device {
    /// Open a device by its enumeration id.
    pub fn open(device_id: usize, registry: &PlatformRegistry) -> Result<Self> {
        Self::open_seeded(device_id, registry, DEFAULT_SEED)
    }

    pub fn open_seeded(device_id: usize, registry: &PlatformRegistry, seed: u64) -> Result<Self> {
        let model = registry
            .models()
            .get(device_id)
            .ok_or(Error::UnknownDevice(device_id))?
            .clone();
        Ok(Self::from_model(model, seed))
    }

    /// Open a device by platform name.
    pub fn open_named(name: &str, registry: &PlatformRegistry) -> Result<Self> {
        Self::open_named_seeded(name, registry, DEFAULT_SEED)
    }

    pub fn open_named_seeded(name: &str, registry: &PlatformRegistry, seed: u64) -> Result<Self> {
        Ok(Self::from_model(registry.model(name)?.clone(), seed))
    }

    /// Open a device for an ad-hoc platform model (useful for calibration
    /// experiments; the model must already be validated or come from a
    /// registry).
    pub fn from_model(model: PlatformModel, seed: u64) -> Self {
        Self {
            core: Arc::new(SimCore::new(model, seed)),
        }
    }

    /// The same board, seen through the low-level platform API.
    pub fn platform(&self) -> Platform {
        Platform::from_core(self.core.clone())
    }

    pub fn platform_name(&self) -> &str {
        &self.core.model().name
    }

    pub fn model(&self) -> &PlatformModel {
        self.core.model()
    }

    // -- design -------------------------------------------------------------

    /// Load a design artifact onto the device, replacing any loaded design.
    /// Jobs belonging to the previous design become invalid; memory
    /// allocations, pending transfer results, and the virtual clock carry
    /// over.
    pub fn load_design(&self, artifact: &DesignArtifact, kernels: &KernelRegistry) -> Result<()> {
        self.core.load_design(artifact, kernels)
    }

    pub fn design_loaded(&self) -> bool {
        self.core.design_loaded()
    }

    /// Kernel ids available in the loaded design, ascending.
    pub fn design_kernel_ids(&self) -> Vec<u32> {
        self.core.design_kernel_ids()
    }

    /// (architecture, window size, PE count) of the loaded design.
    pub fn design_summary(&self) -> Option<(String, u64, usize)> {
        self.core.design_summary()
    }

    // -- memory -------------------------------------------------------------

    /// Allocate `size` bytes of device memory.
    pub fn alloc(&self, size: u64) -> Result<MemoryHandle> {
        let (id, _) = self.core.alloc_handle(size)?;
        Ok(MemoryHandle { id, size })
    }

    /// Release a handle's region. The handle and any copies of it become
    /// invalid.
    pub fn free(&self, handle: MemoryHandle) -> Result<()> {
        self.core.free_handle(handle.id)
    }

    /// Live allocations as (address, size) pairs, ascending by address.
    pub fn live_regions(&self) -> Vec<(u64, u64)> {
        self.core.live_regions()
    }

    /// Copy host data into a device buffer. The buffer must be at least as
    /// large as the data.
    pub fn copy_to(&self, data: &[u8], handle: MemoryHandle, mode: SyncMode) -> Result<TransferStatus> {
        let (addr, region) = self.core.handle_info(handle.id)?;
        if data.len() as u64 > region {
            return Err(Error::SizeExceedsRegion {
                requested: data.len() as u64,
                region,
            });
        }
        self.core.dma_write(addr, data, mode)
    }

    /// Copy `size` bytes from a device buffer back to the host.
    pub fn copy_from(&self, handle: MemoryHandle, size: u64, mode: SyncMode) -> Result<TransferStatus> {
        let (addr, region) = self.core.handle_info(handle.id)?;
        if size > region {
            return Err(Error::SizeExceedsRegion {
                requested: size,
                region,
            });
        }
        self.core.dma_read(addr, size, mode)
    }

    /// Redeem a non-blocking transfer's token. Each token resolves once.
    pub fn transfer_wait(&self, token: TransferToken) -> Result<TransferResult> {
        self.core.transfer_wait(token)
    }

    // -- jobs ----------------------------------------------------------------

    /// Reserve a job id for a kernel present in the loaded design.
    pub fn acquire_job_id(&self, kernel_id: u32) -> Result<u64> {
        self.core.acquire_job_id(kernel_id)
    }

    /// Bind argument slot `index` of a prepared job.
    pub fn job_set_arg(&self, job: u64, index: usize, arg: &Arg) -> Result<()> {
        let stored = match arg {
            Arg::Scalar(bytes) => {
                if bytes.is_empty() || bytes.len() > 8 {
                    return Err(Error::ArgSizeMismatch(bytes.len()));
                }
                let mut buf = [0u8; 8];
                buf[..bytes.len()].copy_from_slice(bytes);
                JobArg::Scalar(u64::from_le_bytes(buf))
            }
            Arg::Handle(h) => JobArg::Handle(h.id),
        };
        self.core.job_set_arg(job, index, stored)
    }

    /// Launch a prepared job. All argument slots must be bound. In blocking
    /// mode this also waits for host-visible completion; a kernel fault
    /// still completes the job and surfaces at [`Device::job_get_return`].
    pub fn job_launch(&self, job: u64, mode: SyncMode) -> Result<()> {
        self.core.job_launch(job, mode)
    }

    /// Wait until a launched job's completion is host-visible.
    pub fn job_wait(&self, job: u64) -> Result<()> {
        self.core.job_wait(job)
    }

    /// Read the low `size` bytes (little-endian) of a completed job's
    /// return value. `size` must not exceed the kernel's declared return
    /// width. A job that faulted reports the fault here.
    pub fn job_get_return(&self, job: u64, size: usize) -> Result<Vec<u8>> {
        self.core.job_get_return(job, size)
    }

    /// A completed job's return value at its declared width, zero-extended.
    pub fn job_return_value(&self, job: u64) -> Result<u64> {
        let declared = {
            let kernel_id = self.core.job_kernel_id(job)?;
            self.design_kernel_return_width(kernel_id)?
        };
        let bytes = self.core.job_get_return(job, declared)?;
        let mut buf = [0u8; 8];
        buf[..bytes.len()].copy_from_slice(&bytes);
        Ok(u64::from_le_bytes(buf))
    }

    fn design_kernel_return_width(&self, kernel_id: u32) -> Result<usize> {
        self.core.design_return_width(kernel_id)
    }

    /// Retire a job id. Launched jobs must complete first; prepared and
    /// completed jobs release immediately.
    pub fn release_job_id(&self, job: u64) -> Result<()> {
        self.core.release_job_id(job)
    }

    pub fn job_state(&self, job: u64) -> Result<JobState> {
        self.core.job_state(job)
    }

    pub fn job_timing(&self, job: u64) -> Result<JobTiming> {
        self.core.job_timing(job)
    }

    /// Acquire, bind, launch (blocking), read, and release in one call.
    pub fn run_job(&self, kernel_id: u32, args: &[Arg]) -> Result<u64> {
        let job = self.acquire_job_id(kernel_id)?;
        let outcome = (|| {
            for (i, arg) in args.iter().enumerate() {
                self.job_set_arg(job, i, arg)?;
            }
            self.job_launch(job, SyncMode::Blocking)?;
            self.job_return_value(job)
        })();
        // Release regardless; a launched-but-failed release would only hide
        // the original error, so it is best-effort.
        let _ = self.release_job_id(job);
        outcome
    }

    pub fn has_inflight_jobs(&self) -> bool {
        self.core.has_inflight_jobs()
    }

    /// Process every scheduled PE completion.
    pub fn run_until_idle(&self) {
        self.core.run_until_idle()
    }

    /// Drain the interrupt measurements recorded since the last call.
    pub fn take_interrupt_measurements(&self) -> Vec<InterruptMeasurement> {
        self.core.take_measurements()
    }

    /// Current virtual time in picoseconds.
    pub fn modeled_time_ps(&self) -> u64 {
        self.core.clock_ps()
    }

    pub fn modeled_time_us(&self) -> f64 {
        crate::time::us_from_ps(self.core.clock_ps())
    }
}

impl TransferStatus {
    /// Collapse to the transfer's result: immediate for blocking transfers,
    /// waited via `device` for pending ones.
    pub fn resolve(self, device: &Device) -> Result<TransferResult> {
        match self {
            TransferStatus::Done(r) => Ok(r),
            TransferStatus::Pending(t) => device.transfer_wait(t),
        }
    }
}
