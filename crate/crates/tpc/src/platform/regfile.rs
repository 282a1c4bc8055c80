//! Memory-mapped register file.
//!
//! A flat array of 64-bit registers addressed by byte offset, as a host
//! would see a PE's control window through MMIO. Offsets must be 8-byte
//! aligned; registers that were never written read as zero.

use crate::error::{Error, Result};

/// Default register span when no design is loaded (one 4 KiB page).
pub const DEFAULT_SPAN_BYTES: u64 = 4096;

#[derive(Debug, Clone)]
pub struct RegisterFile {
    regs: Vec<u64>,
}

impl RegisterFile {
    pub fn new(span_bytes: u64) -> Self {
        Self {
            regs: vec![0; (span_bytes / 8) as usize],
        }
    }

    /// Total addressable span in bytes.
    pub fn span(&self) -> u64 {
        self.regs.len() as u64 * 8
    }

    /// Replace the file with a zeroed one of at least `span_bytes` bytes.
    pub fn reset(&mut self, span_bytes: u64) {
        let span = span_bytes.max(DEFAULT_SPAN_BYTES);
        self.regs.clear();
        self.regs.resize((span.div_ceil(8)) as usize, 0);
    }

    fn index(&self, offset: u64) -> Result<usize> {
        if offset % 8 != 0 {
            return Err(Error::UnalignedAccess(offset));
        }
        let idx = (offset / 8) as usize;
        if idx >= self.regs.len() {
            return Err(Error::OffsetOutOfRange(offset));
        }
        Ok(idx)
    }

    pub fn read(&self, offset: u64) -> Result<u64> {
        Ok(self.regs[self.index(offset)?])
    }

    pub fn write(&mut self, offset: u64, value: u64) -> Result<()> {
        let idx = self.index(offset)?;
        self.regs[idx] = value;
        Ok(())
    }
}
