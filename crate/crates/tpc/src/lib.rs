//! TPC: a simulated FPGA accelerator offload runtime.
//!
//! The stack mirrors a real heterogeneous offload system, minus the
//! hardware. At the bottom, a [`platform::Platform`] models one board —
//! device memory, a register file, DMA with a calibrated cost model, and
//! completion interrupts with sampled latency. Above it, a
//! [`device::Device`] provides the portable job-oriented TPC API. The
//! [`composer`] turns a kernel composition into a deterministic design
//! artifact, which loads onto a device as a ThreadPool of processing
//! elements. [`bench`] reproduces the standard throughput and latency
//! characterization runs.
//!
//! Time is virtual throughout: every duration comes from the platform's
//! calibration model and is tracked in integer picoseconds, so runs are
//! exactly reproducible — same inputs, same seed, same timeline.
//!
//! ```
//! use tpc::{compose, enumerate_devices, Arg, Composition, Device,
//!           KernelRegistry, PlatformRegistry, SyncMode, KERNEL_ARRAYSUM};
//!
//! let platforms = PlatformRegistry::builtin();
//! let kernels = KernelRegistry::with_builtins();
//!
//! // Build a design with two arraysum PEs for the first device.
//! let info = &enumerate_devices(&platforms)[0];
//! let composition: Composition = serde_json::from_str(r#"{
//!     "architecture": "flat",
//!     "kernels": [{ "id": 3, "name": "arraysum", "count": 2 }]
//! }"#).unwrap();
//! let artifact = compose(&composition, platforms.model(&info.platform_name).unwrap(), &kernels).unwrap();
//!
//! // Load it, stage data, run a job.
//! let device = Device::open(info.device_id, &platforms).unwrap();
//! device.load_design(&artifact, &kernels).unwrap();
//! let data: Vec<u8> = (1..=10u32).flat_map(u32::to_le_bytes).collect();
//! let buf = device.alloc(data.len() as u64).unwrap();
//! device.copy_to(&data, buf, SyncMode::Blocking).unwrap();
//! let sum = device.run_job(KERNEL_ARRAYSUM, &[Arg::Handle(buf), Arg::from_u64(10)]).unwrap();
//! println!("result of job: {sum}");
//! assert_eq!(sum, 55);
//! ```

pub mod bench;
pub mod composer;
pub mod device;
mod error;
pub mod kernels;
pub mod platform;
mod sim;
pub mod threadpool;
mod time;

pub use composer::{
    compose, validate, Composition, CompositionEntry, DesignArtifact, ValidationReport, Violation,
    FORMAT_VERSION,
};
pub use device::{
    enumerate_devices, Arg, Device, DeviceInfo, JobState, JobTiming, MemoryHandle,
};
pub use error::{Error, Result};
pub use kernels::{
    builtin_kernels, ArgKind, KernelRegistry, KernelSpec, KERNEL_ARRAYSUM, KERNEL_IDENTITY,
    KERNEL_LATENCY_PROBE, KERNEL_MAGIC, KERNEL_MEMCPY_DEV,
};
pub use platform::{
    CompletionEvent, InterruptMeasurement, InterruptModel, Platform, PlatformModel,
    PlatformRegistry, SyncMode, TransferDirection, TransferModel, TransferResult, TransferStatus,
    TransferToken,
};
pub use threadpool::{
    instantiate, Architecture, FlatArchitecture, PeLayout, RegisterMap, ThreadPool,
};
