//! Benchmarks over the virtual clock.
//!
//! These reproduce the two standard characterization experiments — DMA
//! throughput across chunk sizes, and interrupt latency — against the
//! simulated board. All rates and latencies come from the device's modeled
//! time, never the wall clock, so results are exactly reproducible for a
//! given platform model and seed.

use std::io::Write;

use crate::composer::{compose, Composition, CompositionEntry};
use crate::device::Device;
use crate::error::{Error, Result};
use crate::kernels::{KernelRegistry, KERNEL_LATENCY_PROBE};
use crate::platform::SyncMode;
use crate::time::{kernel_duration_ps, us_from_ps};

/// Threshold separating the two kernel runtime classes, in microseconds.
/// Completions of kernels at or under it are handled without putting the
/// host to sleep; longer kernels pay the platform's wake penalty on top of
/// raw interrupt latency.
pub const RUNTIME_CLASS_THRESHOLD_US: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchDirection {
    ToDevice,
    FromDevice,
    Bidirectional,
}

impl BenchDirection {
    pub const ALL: [BenchDirection; 3] = [
        BenchDirection::ToDevice,
        BenchDirection::FromDevice,
        BenchDirection::Bidirectional,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchDirection::ToDevice => "to_device",
            BenchDirection::FromDevice => "from_device",
            BenchDirection::Bidirectional => "bidirectional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeClass {
    Le10us,
    Gt10us,
}

impl RuntimeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuntimeClass::Le10us => "le_10us",
            RuntimeClass::Gt10us => "gt_10us",
        }
    }
}

/// One measured (chunk size, direction) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRow {
    pub platform: String,
    pub chunk_size_bytes: u64,
    pub direction: BenchDirection,
    pub rate_mib_s: f64,
    pub repetitions: u32,
}

/// Summary of an interrupt latency run.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub platform: String,
    pub samples: usize,
    pub min_us: f64,
    pub avg_us: f64,
    pub max_us: f64,
    pub runtime_class: RuntimeClass,
}

/// The standard chunk sweep: powers of two from 4 KiB through 1 MiB.
pub fn default_chunk_sweep() -> Vec<u64> {
    (12..=20).map(|p| 1u64 << p).collect()
}

/// Measure DMA throughput for each (chunk size, direction) combination.
///
/// Each combination allocates a device buffer, moves `repetitions` chunks
/// through it, and derives the rate from the virtual-clock delta. The
/// device must have no jobs in flight. No design is required.
pub fn run_throughput(
    device: &Device,
    chunks: &[u64],
    repetitions: u32,
    directions: &[BenchDirection],
) -> Result<Vec<ThroughputRow>> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be positive".into()));
    }
    if device.has_inflight_jobs() {
        return Err(Error::DeviceBusy);
    }
    let platform = device.platform_name().to_string();
    let mut rows = Vec::with_capacity(chunks.len() * directions.len());
    for &chunk in chunks {
        let handle = device.alloc(chunk)?;
        let payload: Vec<u8> = (0..chunk).map(|i| (i % 251) as u8).collect();
        for &direction in directions {
            let start_ps = device.modeled_time_ps();
            let mut moved = 0u64;
            for _ in 0..repetitions {
                match direction {
                    BenchDirection::ToDevice => {
                        device.copy_to(&payload, handle, SyncMode::Blocking)?;
                        moved += chunk;
                    }
                    BenchDirection::FromDevice => {
                        device.copy_from(handle, chunk, SyncMode::Blocking)?;
                        moved += chunk;
                    }
                    BenchDirection::Bidirectional => {
                        device.copy_to(&payload, handle, SyncMode::Blocking)?;
                        device.copy_from(handle, chunk, SyncMode::Blocking)?;
                        moved += 2 * chunk;
                    }
                }
            }
            // Same unit convention as the calibration files: bytes moved
            // per microsecond of modeled time.
            let elapsed_us = us_from_ps(device.modeled_time_ps() - start_ps);
            let rate_mib_s = moved as f64 / elapsed_us;
            rows.push(ThroughputRow {
                platform: platform.clone(),
                chunk_size_bytes: chunk,
                direction,
                rate_mib_s,
                repetitions,
            });
        }
        device.free(handle)?;
    }
    Ok(rows)
}

/// Measure interrupt latency by running `samples` jobs of a zero-argument
/// probe kernel and collecting the sampled delivery latencies.
///
/// The probe kernel's modeled runtime decides its runtime class; kernels
/// above [`RUNTIME_CLASS_THRESHOLD_US`] report latencies with the
/// platform's wake penalty added, modeling a host that went to sleep.
///
/// This composes and loads a single-PE design for the probe kernel,
/// replacing whatever design the device had loaded.
pub fn run_latency(
    device: &Device,
    kernels: &KernelRegistry,
    kernel_id: u32,
    samples: usize,
) -> Result<LatencyReport> {
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be positive".into()));
    }
    if device.has_inflight_jobs() {
        return Err(Error::DeviceBusy);
    }
    let spec = kernels.lookup(kernel_id)?;
    if spec.arity() != 0 {
        return Err(Error::InvalidConfig(format!(
            "latency probe kernel must take no arguments, {} takes {}",
            spec.name,
            spec.arity()
        )));
    }
    let model = device.model().clone();
    let runtime_us = us_from_ps(kernel_duration_ps(spec.cycles_estimate, model.fabric_clock_mhz));
    let runtime_class = if runtime_us <= RUNTIME_CLASS_THRESHOLD_US {
        RuntimeClass::Le10us
    } else {
        RuntimeClass::Gt10us
    };

    let composition = Composition {
        architecture: "flat".into(),
        kernels: vec![CompositionEntry {
            id: kernel_id,
            name: spec.name.clone(),
            count: 1,
        }],
    };
    let artifact = compose(&composition, &model, kernels)?;
    device.load_design(&artifact, kernels)?;

    device.take_interrupt_measurements(); // discard anything stale
    for _ in 0..samples {
        device.run_job(kernel_id, &[])?;
    }
    let measurements = device.take_interrupt_measurements();
    debug_assert_eq!(measurements.len(), samples);

    let penalty = match runtime_class {
        RuntimeClass::Le10us => 0.0,
        RuntimeClass::Gt10us => model.interrupt.wake_penalty_us,
    };
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for m in &measurements {
        let us = m.latency_us + penalty;
        min = min.min(us);
        max = max.max(us);
        sum += us;
    }
    Ok(LatencyReport {
        platform: device.platform_name().to_string(),
        samples,
        min_us: min,
        avg_us: sum / samples as f64,
        max_us: max,
        runtime_class,
    })
}

/// Convenience: run the latency benchmark with the builtin probe kernel.
pub fn run_latency_default(
    device: &Device,
    kernels: &KernelRegistry,
    samples: usize,
) -> Result<LatencyReport> {
    run_latency(device, kernels, KERNEL_LATENCY_PROBE, samples)
}

pub fn write_throughput_csv<W: Write>(out: &mut W, rows: &[ThroughputRow]) -> Result<()> {
    writeln!(out, "platform,chunk_size_bytes,direction,rate_mib_s,repetitions")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3},{}",
            r.platform,
            r.chunk_size_bytes,
            r.direction.as_str(),
            r.rate_mib_s,
            r.repetitions
        )?;
    }
    Ok(())
}

pub fn write_latency_csv<W: Write>(out: &mut W, reports: &[LatencyReport]) -> Result<()> {
    writeln!(out, "platform,samples,min_us,avg_us,max_us,runtime_class")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{}",
            r.platform,
            r.samples,
            r.min_us,
            r.avg_us,
            r.max_us,
            r.runtime_class.as_str()
        )?;
    }
    Ok(())
}
