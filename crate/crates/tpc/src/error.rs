//! Crate-wide error type.
//!
//! Every fallible operation in the runtime returns a variant of [`Error`].
//! The enumeration is closed on purpose: callers (most importantly the CLI,
//! which has to map failures onto process exit codes) can match exhaustively
//! instead of string-sniffing.

use crate::composer::ValidationReport;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ---- memory management ----------------------------------------------
    /// Allocation or copy of zero bytes was requested.
    #[error("zero-sized request")]
    ZeroSize,
    /// The device memory arena has no free region large enough.
    #[error("out of device memory (requested {0} bytes)")]
    OutOfDeviceMemory(u64),
    /// The handle is unknown to this device (never issued, or already freed).
    #[error("invalid memory handle")]
    InvalidHandle,
    /// A copy was larger than the region behind the handle.
    #[error("transfer of {requested} bytes exceeds region of {region} bytes")]
    SizeExceedsRegion { requested: u64, region: u64 },
    /// A raw device address passed to the platform layer is not an allocated
    /// region start.
    #[error("invalid device address {0:#x}")]
    InvalidAddress(u64),

    // ---- register file ---------------------------------------------------
    /// Register access outside the register file span.
    #[error("register offset {0:#x} out of range")]
    OffsetOutOfRange(u64),
    /// Register offsets must be 8-byte aligned.
    #[error("unaligned register offset {0:#x}")]
    UnalignedAccess(u64),

    // ---- interrupts -------------------------------------------------------
    /// PE index outside the loaded design.
    #[error("invalid PE index {0}")]
    InvalidPE(usize),
    /// An interrupt was acknowledged that was never raised (or twice).
    #[error("acknowledge without a matching raise")]
    AckWithoutRaise,

    // ---- jobs --------------------------------------------------------------
    /// No kernel with this id exists in the loaded design / registry.
    #[error("unknown kernel id {0}")]
    UnknownKernel(u32),
    /// The job is not in a state that permits the requested operation.
    #[error("job is in state {found}, operation requires {required}")]
    InvalidJobState {
        required: &'static str,
        found: &'static str,
    },
    /// Argument slot index is at or beyond the kernel's arity.
    #[error("argument index {index} out of range for arity {arity}")]
    ArgIndexOutOfRange { index: usize, arity: usize },
    /// Scalar payload width not representable in a 64-bit slot.
    #[error("argument payload of {0} bytes does not fit a 64-bit slot")]
    ArgSizeMismatch(usize),
    /// Scalar passed to a handle slot or vice versa.
    #[error("argument {index} expects a {expected} value")]
    ArgKindMismatch {
        index: usize,
        expected: &'static str,
    },
    /// Launch attempted with at least one unset argument slot.
    #[error("argument slot {index} not set before launch")]
    MissingArguments { index: usize },
    /// `job_get_return` size does not equal the kernel's declared width.
    #[error("return size {requested} does not match declared width {declared}")]
    ReturnSizeMismatch { requested: usize, declared: usize },
    /// The kernel signalled a fault while executing.
    #[error("kernel fault: {0}")]
    KernelFault(String),

    // ---- transfers ---------------------------------------------------------
    /// The transfer token is unknown or was already resolved.
    #[error("invalid or already resolved transfer token")]
    InvalidTransfer,

    // ---- platform / registry ----------------------------------------------
    /// No platform with this name in the registry.
    #[error("unknown platform {0:?}")]
    UnknownPlatform(String),
    /// No device with this id in the registry.
    #[error("unknown device id {0}")]
    UnknownDevice(usize),
    /// A registry or model failed semantic validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // ---- composer ----------------------------------------------------------
    /// Composition or artifact text is not well-formed JSON.
    #[error("syntax error at line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    /// The same kernel id appears twice in a composition.
    #[error("duplicate kernel id {0} in composition")]
    DuplicateKernel(u32),
    /// A composition entry requests zero processing elements.
    #[error("kernel id {0} requests zero processing elements")]
    ZeroPECount(u32),
    /// The composition lists no kernels at all.
    #[error("composition is empty")]
    EmptyComposition,
    /// No architecture generator with this name.
    #[error("unknown architecture {0:?}")]
    UnknownArchitecture(String),
    /// The composition needs more PEs than the platform offers.
    #[error("slot budget exceeded: need {required}, platform offers {budget}")]
    SlotBudgetExceeded { required: usize, budget: usize },
    /// Composition failed validation against a platform model.
    #[error("validation failed:\n{0}")]
    ValidationFailed(ValidationReport),
    /// The artifact was composed for a different platform.
    #[error("design targets platform {artifact:?}, device is {device:?}")]
    PlatformMismatch { artifact: String, device: String },
    /// The artifact format version is not understood.
    #[error("unsupported design format version {0}")]
    UnsupportedVersion(u32),

    // ---- bench / misc -------------------------------------------------------
    /// Benchmarks refuse to run while jobs are in flight.
    #[error("device busy: jobs in flight")]
    DeviceBusy,
    /// Underlying I/O failure (file registry, CSV emission, ...).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
