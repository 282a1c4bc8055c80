//! Platform models and the platform registry.
//!
//! A [`PlatformModel`] is the complete description of one simulated device:
//! memory arena size, fabric clock, PE slot budget, plus the two timing
//! models (DMA transfers and completion interrupts). Models are ordinarily
//! loaded from a JSON registry file; the copy shipped in
//! `config/platforms.json` is compiled in as [`PlatformRegistry::builtin`].
//!
//! Calibration values carry `estimated: true` flags: they were chosen to
//! reproduce published throughput/latency figures for these boards, not
//! measured on hardware.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time;

const MIB: f64 = 1024.0 * 1024.0;

/// One row of an optional measured-rate table, mapping a chunk size to the
/// transfer rate observed at that size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkRate {
    pub chunk_size: u64,
    pub rate_mib_s: f64,
}

/// DMA transfer timing model.
///
/// The modeled duration of moving `size` bytes is
///
/// ```text
/// setup_overhead_us + dma_buffer_penalty_us_per_mib * (size / 1 MiB) + size / bandwidth_mib_s
/// ```
///
/// where the bandwidth figure divides raw bytes per microsecond (so a 1 MiB
/// transfer at bandwidth 1000 pays 1048.576 us of wire time). The penalty
/// term models kernel DMA buffer allocation on Zynq-class hosts, which slows
/// down proportionally to the buffer being staged; PCIe-class hosts set it
/// to zero.
///
/// If a `per_chunk` table is present it overrides the affine formula
/// entirely: the rate is linearly interpolated between listed chunk sizes
/// (clamped at both ends) and the duration is `size / rate`.
/// A zero-size transfer always costs exactly the setup overhead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferModel {
    pub setup_overhead_us: f64,
    pub bandwidth_mib_s: f64,
    #[serde(default)]
    pub dma_buffer_penalty_us_per_mib: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_chunk: Option<Vec<ChunkRate>>,
    #[serde(default)]
    pub estimated: bool,
}

impl TransferModel {
    /// Modeled duration in microseconds for a transfer of `size` bytes.
    pub fn duration_us(&self, size: u64) -> f64 {
        if size == 0 {
            return self.setup_overhead_us;
        }
        if let Some(table) = &self.per_chunk {
            return size as f64 / interpolate_rate(table, size);
        }
        self.setup_overhead_us
            + self.dma_buffer_penalty_us_per_mib * (size as f64 / MIB)
            + size as f64 / self.bandwidth_mib_s
    }

    /// Same duration on the virtual clock, in picoseconds.
    pub(crate) fn duration_ps(&self, size: u64) -> u64 {
        time::ps_from_us(self.duration_us(size))
    }

    /// Effective rate (bytes per microsecond) at a given chunk size.
    pub fn effective_rate(&self, size: u64) -> f64 {
        assert!(size > 0, "rate undefined for empty transfers");
        size as f64 / self.duration_us(size)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.setup_overhead_us < 0.0 {
            return Err("setup_overhead_us must be >= 0".into());
        }
        if !(self.bandwidth_mib_s > 0.0) {
            return Err("bandwidth_mib_s must be > 0".into());
        }
        if self.dma_buffer_penalty_us_per_mib < 0.0 {
            return Err("dma_buffer_penalty_us_per_mib must be >= 0".into());
        }
        if let Some(table) = &self.per_chunk {
            if table.is_empty() {
                return Err("per_chunk table must not be empty".into());
            }
            for pair in table.windows(2) {
                if pair[1].chunk_size <= pair[0].chunk_size {
                    return Err("per_chunk sizes must be strictly ascending".into());
                }
            }
            if table.iter().any(|r| !(r.rate_mib_s > 0.0)) {
                return Err("per_chunk rates must be > 0".into());
            }
        }
        Ok(())
    }
}

/// Piecewise-linear rate lookup, clamped to the table ends.
fn interpolate_rate(table: &[ChunkRate], size: u64) -> f64 {
    let first = table.first().expect("validated non-empty");
    let last = table.last().expect("validated non-empty");
    if size <= first.chunk_size {
        return first.rate_mib_s;
    }
    if size >= last.chunk_size {
        return last.rate_mib_s;
    }
    for pair in table.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if size >= lo.chunk_size && size <= hi.chunk_size {
            let t = (size - lo.chunk_size) as f64 / (hi.chunk_size - lo.chunk_size) as f64;
            return lo.rate_mib_s + t * (hi.rate_mib_s - lo.rate_mib_s);
        }
    }
    unreachable!("size bracketed by table ends")
}

/// Completion interrupt latency model.
///
/// Round-trip latencies (interrupt raise to host acknowledge) are drawn from
/// a triangular distribution on `[latency_min_us, latency_max_us]`. The mode
/// is placed at `3 * avg - min - max` so that the distribution mean equals
/// the configured average; validation rejects averages for which that mode
/// would fall outside the interval.
///
/// `wake_penalty_us` is the extra cost paid when the calling thread was put
/// to sleep while waiting; it applies to kernels running longer than the
/// 10 us spin threshold and is added by the latency benchmark, not by the
/// sampler itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterruptModel {
    pub latency_min_us: f64,
    pub latency_avg_us: f64,
    pub latency_max_us: f64,
    #[serde(default)]
    pub wake_penalty_us: f64,
    #[serde(default)]
    pub estimated: bool,
}

impl InterruptModel {
    /// Mode of the triangular distribution (solved from the mean).
    pub fn mode_us(&self) -> f64 {
        3.0 * self.latency_avg_us - self.latency_min_us - self.latency_max_us
    }

    /// Draw one round-trip latency in microseconds.
    pub fn sample_us<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let (min, max) = (self.latency_min_us, self.latency_max_us);
        if max <= min {
            return min;
        }
        let mode = self.mode_us();
        let span = max - min;
        let cut = (mode - min) / span;
        let u: f64 = rng.gen();
        let x = if u < cut {
            min + (u * span * (mode - min)).sqrt()
        } else {
            max - ((1.0 - u) * span * (max - mode)).sqrt()
        };
        x.clamp(min, max)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.latency_min_us < 0.0 {
            return Err("latency_min_us must be >= 0".into());
        }
        if !(self.latency_min_us <= self.latency_avg_us
            && self.latency_avg_us <= self.latency_max_us)
        {
            return Err("interrupt latencies must satisfy min <= avg <= max".into());
        }
        let mode = self.mode_us();
        if mode < self.latency_min_us - 1e-9 || mode > self.latency_max_us + 1e-9 {
            return Err(format!(
                "latency_avg_us {} not reachable on [{}, {}] (triangular mode {} out of range)",
                self.latency_avg_us, self.latency_min_us, self.latency_max_us, mode
            ));
        }
        if self.wake_penalty_us < 0.0 {
            return Err("wake_penalty_us must be >= 0".into());
        }
        Ok(())
    }
}

/// Full description of one simulated platform backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformModel {
    pub name: String,
    pub device_memory_size: u64,
    pub fabric_clock_mhz: u32,
    pub slot_budget: usize,
    #[serde(default)]
    pub slot_budget_estimated: bool,
    pub transfer: TransferModel,
    pub interrupt: InterruptModel,
}

impl PlatformModel {
    pub(crate) fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::InvalidConfig(format!("platform {:?}: {msg}", self.name));
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("platform name must not be empty".into()));
        }
        if self.device_memory_size == 0 {
            return Err(fail("device_memory_size must be > 0".into()));
        }
        if self.fabric_clock_mhz == 0 {
            return Err(fail("fabric_clock_mhz must be > 0".into()));
        }
        if self.slot_budget == 0 {
            return Err(fail("slot_budget must be >= 1".into()));
        }
        self.transfer.validate().map_err(&fail)?;
        self.interrupt.validate().map_err(&fail)?;
        Ok(())
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    platforms: Vec<PlatformModel>,
}

/// Ordered collection of platform models; the position of a model in the
/// registry is its device id for enumeration and `Device::open`.
#[derive(Debug, Clone)]
pub struct PlatformRegistry {
    models: Vec<PlatformModel>,
}

impl PlatformRegistry {
    /// The registry compiled in from `config/platforms.json`
    /// (zedboard, zc706, vc709).
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../config/platforms.json"))
            .expect("builtin platform registry is valid")
    }

    /// Parse a registry from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| Error::SyntaxError {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_models(file.platforms)
    }

    /// Read and parse a registry file.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Build a registry from already-constructed models (mostly for tests
    /// and tools); performs the same semantic validation as file loading.
    pub fn from_models(models: Vec<PlatformModel>) -> Result<Self> {
        for model in &models {
            model.validate()?;
        }
        for (i, model) in models.iter().enumerate() {
            if models[..i].iter().any(|m| m.name == model.name) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate platform name {:?}",
                    model.name
                )));
            }
        }
        Ok(Self { models })
    }

    /// All models in registry (= device id) order.
    pub fn models(&self) -> &[PlatformModel] {
        &self.models
    }

    /// Look a model up by platform name.
    pub fn model(&self, name: &str) -> Result<&PlatformModel> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnknownPlatform(name.to_string()))
    }
}
