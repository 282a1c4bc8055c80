//! Device memory manager: first-fit over a sorted free list.
//!
//! Allocation is byte-granular and the free list is kept sorted by address
//! with adjacent blocks coalesced on free, so the allocator's behaviour is
//! canonical first-fit: a request is satisfied from the lowest-addressed
//! free block that fits. Tests compare it operation-for-operation against a
//! naive bitmap allocator.

use std::collections::BTreeMap;

/// First-fit free-list allocator over a fixed-size arena.
#[derive(Debug, Clone)]
pub struct FreeListAllocator {
    /// Free blocks as (address, size), sorted by address, never adjacent.
    free: Vec<(u64, u64)>,
    /// Live allocations, address -> size.
    allocated: BTreeMap<u64, u64>,
}

impl FreeListAllocator {
    pub fn new(capacity: u64) -> Self {
        let free = if capacity > 0 { vec![(0, capacity)] } else { vec![] };
        Self {
            free,
            allocated: BTreeMap::new(),
        }
    }

    /// Allocate `size` bytes; returns the region's device address, or `None`
    /// if no free block is large enough. `size` must be non-zero (checked by
    /// the callers, which own the error vocabulary).
    pub fn alloc(&mut self, size: u64) -> Option<u64> {
        debug_assert!(size > 0);
        let idx = self.free.iter().position(|&(_, len)| len >= size)?;
        let (addr, len) = self.free[idx];
        if len == size {
            self.free.remove(idx);
        } else {
            self.free[idx] = (addr + size, len - size);
        }
        self.allocated.insert(addr, size);
        Some(addr)
    }

    /// Free the region starting at `addr`. Returns the freed size, or `None`
    /// if `addr` is not the start of a live allocation.
    pub fn free(&mut self, addr: u64) -> Option<u64> {
        let size = self.allocated.remove(&addr)?;
        let at = self
            .free
            .partition_point(|&(block_addr, _)| block_addr < addr);
        self.free.insert(at, (addr, size));
        // Coalesce with the successor, then the predecessor.
        if at + 1 < self.free.len() && self.free[at].0 + self.free[at].1 == self.free[at + 1].0 {
            self.free[at].1 += self.free[at + 1].1;
            self.free.remove(at + 1);
        }
        if at > 0 && self.free[at - 1].0 + self.free[at - 1].1 == self.free[at].0 {
            self.free[at - 1].1 += self.free[at].1;
            self.free.remove(at);
        }
        Some(size)
    }

    /// Live regions in address order, as (address, size).
    pub fn live_regions(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.allocated.iter().map(|(&a, &s)| (a, s))
    }

    /// The live-allocation map, used for bounds-checked kernel memory views.
    pub(crate) fn region_map(&self) -> &BTreeMap<u64, u64> {
        &self.allocated
    }

    /// Total bytes currently free.
    pub fn free_bytes(&self) -> u64 {
        self.free.iter().map(|&(_, len)| len).sum()
    }
}
