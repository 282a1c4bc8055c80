//! Modeled-time arithmetic.
//!
//! All simulated durations are tracked in integer picoseconds on a virtual
//! clock so that scheduling math is exact (no float accumulation drift).
//! Microsecond floats only appear at the reporting boundary.

/// Picoseconds per microsecond.
pub(crate) const PS_PER_US: u64 = 1_000_000;

/// Convert a microsecond figure (config files, reports) to picoseconds.
pub(crate) fn ps_from_us(us: f64) -> u64 {
    debug_assert!(us >= 0.0, "negative duration");
    (us * PS_PER_US as f64).round() as u64
}

/// Convert picoseconds back to microseconds for reporting.
pub(crate) fn us_from_ps(ps: u64) -> f64 {
    ps as f64 / PS_PER_US as f64
}

/// Modeled execution time of `cycles` fabric clock cycles at `mhz`.
///
/// One cycle at `f` MHz lasts `1e6 / f` ps; the product is computed in
/// 128-bit and truncated to whole picoseconds.
pub(crate) fn kernel_duration_ps(cycles: u64, mhz: u32) -> u64 {
    debug_assert!(mhz > 0);
    (cycles as u128 * 1_000_000u128 / mhz as u128) as u64
}
