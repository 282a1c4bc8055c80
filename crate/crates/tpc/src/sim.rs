//! The simulated device core.
//!
//! One `SimCore` stands in for one FPGA board. All state — virtual clock,
//! register file, device memory, PE pool, job table, pending completion
//! events — lives behind a single mutex, with a condvar for blocking waits.
//!
//! Time is virtual and measured in integer picoseconds. Nothing here ever
//! consults the wall clock. Kernel runs are scheduled as completion events
//! in a priority queue ordered by (time, insertion sequence); the queue is
//! drained lazily by whichever thread is blocked waiting for something
//! (a job, an interrupt), or explicitly via `run_until_idle`. Host-side
//! operations take effect at the current virtual time when they acquire the
//! lock, so any interleaving the scheduler produces is a valid timeline.
//!
//! Two details carry the timing model's guarantees:
//!
//! * The dispatcher refills a PE from its kernel's queue *at the finish
//!   instant*, so back-to-back runs leave no virtual gap: N identical PEs
//!   complete J equal jobs in exactly ceil(J/N) kernel durations.
//! * Interrupt latency delays only the *host-visible* completion of a job
//!   (its acked time), never the PE becoming free again.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};
use std::sync::{Condvar, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::composer::{DesignArtifact, FORMAT_VERSION};
use crate::device::{JobState, JobTiming};
use crate::error::{Error, Result};
use crate::kernels::{DeviceMemView, KernelFault, KernelRegistry};
use crate::platform::alloc::FreeListAllocator;
use crate::platform::regfile::{RegisterFile, DEFAULT_SPAN_BYTES};
use crate::platform::{
    CompletionEvent, InterruptMeasurement, PlatformModel, SyncMode, TransferDirection,
    TransferResult, TransferStatus, TransferToken,
};
use crate::threadpool::{PoolRuntime, RegisterMap};
use crate::time::{kernel_duration_ps, ps_from_us};

/// Seed used when the caller does not supply one.
pub(crate) const DEFAULT_SEED: u64 = 0xC0FFEE;

/// A job argument as stored until dispatch. Handles are resolved to device
/// addresses when the PE starts, so freeing a buffer between set and start
/// surfaces as a kernel fault rather than silently reading stale memory.
#[derive(Debug, Clone, Copy)]
pub(crate) enum JobArg {
    Scalar(u64),
    Handle(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobPhase {
    Prepared,
    Launched,
    Completed,
}

impl JobPhase {
    fn name(self) -> &'static str {
        match self {
            JobPhase::Prepared => "prepared",
            JobPhase::Launched => "launched",
            JobPhase::Completed => "completed",
        }
    }
}

#[derive(Debug)]
struct Job {
    kernel_id: u32,
    phase: JobPhase,
    args: BTreeMap<usize, JobArg>,
    timing: JobTiming,
    return_value: u64,
    fault: Option<String>,
}

/// A scheduled PE completion. Ordering is (time, sequence): simultaneous
/// events resolve in insertion order, which keeps the simulation
/// deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PendingEvent {
    at_ps: u64,
    seq: u64,
    pe_index: usize,
}

struct SimState {
    clock_ps: u64,
    regs: RegisterFile,
    mem: Vec<u8>,
    allocator: FreeListAllocator,
    handles: BTreeMap<u64, (u64, u64)>, // handle id -> (addr, size)
    pool: Option<PoolRuntime>,
    jobs: BTreeMap<u64, Job>,
    events: BinaryHeap<Reverse<PendingEvent>>,
    irq_fifo: VecDeque<CompletionEvent>,
    outstanding: HashSet<u64>,
    transfers: BTreeMap<u64, TransferResult>,
    measurements: Vec<InterruptMeasurement>,
    rng: ChaCha8Rng,
    next_handle: u64,
    next_job: u64,
    next_transfer: u64,
    next_event: u64,
    next_seq: u64,
}

pub(crate) struct SimCore {
    model: PlatformModel,
    state: Mutex<SimState>,
    cv: Condvar,
}

fn bad_state(required: &'static str, found: &'static str) -> Error {
    Error::InvalidJobState { required, found }
}

impl SimCore {
    pub fn new(model: PlatformModel, seed: u64) -> Self {
        let mem_size = model.device_memory_size;
        let state = SimState {
            clock_ps: 0,
            regs: RegisterFile::new(DEFAULT_SPAN_BYTES),
            mem: vec![0u8; mem_size as usize],
            allocator: FreeListAllocator::new(mem_size),
            handles: BTreeMap::new(),
            pool: None,
            jobs: BTreeMap::new(),
            events: BinaryHeap::new(),
            irq_fifo: VecDeque::new(),
            outstanding: HashSet::new(),
            transfers: BTreeMap::new(),
            measurements: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_handle: 1,
            next_job: 1,
            next_transfer: 1,
            next_event: 1,
            next_seq: 0,
        };
        Self {
            model,
            state: Mutex::new(state),
            cv: Condvar::new(),
        }
    }

    pub fn model(&self) -> &PlatformModel {
        &self.model
    }

    pub fn clock_ps(&self) -> u64 {
        self.state.lock().unwrap().clock_ps
    }

    // -- event engine -------------------------------------------------------

    /// Block until `pred` yields a value, processing due completion events
    /// while waiting. Whichever thread is blocked drives the simulation; if
    /// no events are pending, the thread parks on the condvar until another
    /// thread changes state.
    fn drive<T>(&self, mut pred: impl FnMut(&mut SimState, &PlatformModel) -> Option<T>) -> T {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(out) = pred(&mut st, &self.model) {
                self.cv.notify_all();
                return out;
            }
            if st.events.is_empty() {
                st = self.cv.wait(st).unwrap();
            } else {
                Self::process_next_event(&mut st, &self.model);
                self.cv.notify_all();
            }
        }
    }

    /// Advance the clock to `target_ps`, processing every event due on the
    /// way. The clock never moves backwards.
    fn advance_clock(st: &mut SimState, model: &PlatformModel, target_ps: u64) {
        while let Some(Reverse(ev)) = st.events.peek() {
            if ev.at_ps > target_ps {
                break;
            }
            Self::process_next_event(st, model);
        }
        st.clock_ps = st.clock_ps.max(target_ps);
    }

    fn process_next_event(st: &mut SimState, model: &PlatformModel) {
        let Reverse(ev) = st.events.pop().expect("event queue is non-empty");
        st.clock_ps = st.clock_ps.max(ev.at_ps);
        Self::finish_pe(st, model, ev.pe_index);
    }

    /// Handle a PE reaching the end of its run: execute the kernel against
    /// device memory, publish STATUS/RETURN, complete the bound job (or
    /// raise a completion event for poked runs), and refill the PE from its
    /// kernel's queue at this same instant.
    fn finish_pe(st: &mut SimState, model: &PlatformModel, pe_index: usize) {
        let now = st.clock_ps;
        let (run, spec, base, kernel_id) = {
            let pool = st.pool.as_mut().expect("design is loaded");
            let pe = &mut pool.pes[pe_index];
            let run = pe.run.take().expect("finished PE was busy");
            (run, pe.spec.clone(), pool.map.pe_base(pe_index), pe.layout.kernel_id)
        };

        let outcome: std::result::Result<u64, KernelFault> = match run.pre_fault {
            Some(fault) => Err(fault),
            None => {
                let mut view = DeviceMemView::new(&mut st.mem, st.allocator.region_map());
                (spec.func)(&run.args, &mut view)
            }
        };

        let width = spec.return_width.min(8);
        let mask = if width >= 8 { u64::MAX } else { (1u64 << (8 * width)) - 1 };
        let (ret, status, fault_msg) = match outcome {
            Ok(v) => (v & mask, RegisterMap::STATUS_DONE, None),
            Err(KernelFault(msg)) => (0, RegisterMap::STATUS_DONE | RegisterMap::STATUS_FAULT, Some(msg)),
        };
        st.regs
            .write(base + RegisterMap::RETURN, ret)
            .expect("PE RETURN register is in span");
        st.regs
            .write(base + RegisterMap::STATUS, status)
            .expect("PE STATUS register is in span");

        match run.job {
            Some(job_id) => {
                let latency_us = model.interrupt.sample_us(&mut st.rng);
                let latency_ps = ps_from_us(latency_us);
                if let Some(job) = st.jobs.get_mut(&job_id) {
                    job.phase = JobPhase::Completed;
                    job.return_value = ret;
                    job.fault = fault_msg;
                    job.timing.finish_ps = Some(now);
                    job.timing.acked_ps = Some(now + latency_ps);
                    st.measurements.push(InterruptMeasurement {
                        pe_index,
                        raised_ps: now,
                        latency_us,
                        acked_ps: now + latency_ps,
                    });
                }
                // If the job vanished (design reloaded mid-flight) there is
                // nobody left to tell; the latency sample is still consumed
                // so the random stream does not depend on job liveness.
            }
            None => {
                let event_id = st.next_event;
                st.next_event += 1;
                st.outstanding.insert(event_id);
                st.irq_fifo.push_back(CompletionEvent {
                    event_id,
                    pe_index,
                    timestamp_ps: now,
                });
            }
        }

        let refill = st
            .pool
            .as_mut()
            .and_then(|pool| pool.queues.get_mut(&kernel_id))
            .and_then(|q| q.pop_front());
        if let Some(next_job) = refill {
            Self::start_pe(st, model, pe_index, Some(next_job));
        }
    }

    /// Begin a run on an idle PE at the current instant. For job-bound runs
    /// the latched arguments come from the job (handles resolved to device
    /// addresses here); for poked runs they are read from the PE's ARG
    /// registers as-is. The register window mirrors the latch: ARG slots,
    /// cleared STATUS/RETURN, CTRL start bit.
    fn start_pe(st: &mut SimState, model: &PlatformModel, pe_index: usize, job: Option<u64>) {
        let now = st.clock_ps;
        let (arity, base, cycles) = {
            let pool = st.pool.as_ref().expect("design is loaded");
            let pe = &pool.pes[pe_index];
            debug_assert!(pe.is_idle(), "start_pe on a busy PE");
            (pe.layout.arity, pool.map.pe_base(pe_index), pe.spec.cycles_estimate)
        };

        let mut args = Vec::with_capacity(arity);
        let mut pre_fault = None;
        match job {
            Some(job_id) => {
                let stored: Vec<JobArg> = {
                    let j = st.jobs.get(&job_id).expect("dispatched job exists");
                    (0..arity)
                        .map(|i| *j.args.get(&i).expect("arguments checked at launch"))
                        .collect()
                };
                for arg in stored {
                    match arg {
                        JobArg::Scalar(v) => args.push(v),
                        JobArg::Handle(h) => match st.handles.get(&h) {
                            Some(&(addr, _)) => args.push(addr),
                            None => {
                                pre_fault = Some(KernelFault(format!(
                                    "argument references freed memory handle {h}"
                                )));
                                args.push(0);
                            }
                        },
                    }
                }
            }
            None => {
                for i in 0..arity {
                    let v = st
                        .regs
                        .read(base + RegisterMap::arg_offset(i))
                        .expect("PE ARG register is in span");
                    args.push(v);
                }
            }
        }

        for (i, v) in args.iter().enumerate() {
            st.regs
                .write(base + RegisterMap::arg_offset(i), *v)
                .expect("PE ARG register is in span");
        }
        st.regs
            .write(base + RegisterMap::STATUS, 0)
            .expect("PE STATUS register is in span");
        st.regs
            .write(base + RegisterMap::RETURN, 0)
            .expect("PE RETURN register is in span");
        st.regs
            .write(base + RegisterMap::CTRL, RegisterMap::CTRL_START)
            .expect("PE CTRL register is in span");

        if let Some(job_id) = job {
            if let Some(j) = st.jobs.get_mut(&job_id) {
                j.timing.pe_index = Some(pe_index);
                j.timing.start_ps = Some(now);
            }
        }

        let finish_at = now + kernel_duration_ps(cycles, model.fabric_clock_mhz);
        let seq = st.next_seq;
        st.next_seq += 1;
        st.events.push(Reverse(PendingEvent {
            at_ps: finish_at,
            seq,
            pe_index,
        }));
        st.pool.as_mut().unwrap().pes[pe_index].run = Some(crate::threadpool::ActiveRun {
            job,
            args,
            pre_fault,
        });
    }

    // -- device memory ------------------------------------------------------

    pub fn alloc_handle(&self, size: u64) -> Result<(u64, u64)> {
        let mut st = self.state.lock().unwrap();
        let addr = Self::alloc_in(&mut st, size)?;
        let id = st.next_handle;
        st.next_handle += 1;
        st.handles.insert(id, (addr, size));
        Ok((id, addr))
    }

    pub fn free_handle(&self, handle: u64) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        let (addr, _) = st.handles.remove(&handle).ok_or(Error::InvalidHandle)?;
        st.allocator
            .free(addr)
            .expect("handle pointed at a live region");
        Ok(())
    }

    pub fn handle_info(&self, handle: u64) -> Result<(u64, u64)> {
        let st = self.state.lock().unwrap();
        st.handles.get(&handle).copied().ok_or(Error::InvalidHandle)
    }

    pub fn alloc_raw(&self, size: u64) -> Result<u64> {
        let mut st = self.state.lock().unwrap();
        Self::alloc_in(&mut st, size)
    }

    fn alloc_in(st: &mut SimState, size: u64) -> Result<u64> {
        if size == 0 {
            return Err(Error::ZeroSize);
        }
        st.allocator.alloc(size).ok_or(Error::OutOfDeviceMemory(size))
    }

    pub fn free_raw(&self, addr: u64) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        st.allocator.free(addr).ok_or(Error::InvalidAddress(addr))?;
        Ok(())
    }

    pub fn live_regions(&self) -> Vec<(u64, u64)> {
        self.state.lock().unwrap().allocator.live_regions().collect()
    }

    pub fn free_bytes(&self) -> u64 {
        self.state.lock().unwrap().allocator.free_bytes()
    }

    // -- register file ------------------------------------------------------

    pub fn read_reg(&self, offset: u64) -> Result<u64> {
        self.state.lock().unwrap().regs.read(offset)
    }

    /// Write a register. Writing the start bit to an idle PE's CTRL register
    /// begins a run with whatever its ARG registers hold; the same write to
    /// a busy PE changes the stored value but triggers nothing.
    pub fn write_reg(&self, offset: u64, value: u64) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        st.regs.write(offset, value)?;
        if value & RegisterMap::CTRL_START != 0 {
            let target = st.pool.as_ref().and_then(|pool| {
                pool.pe_for_ctrl_offset(offset)
                    .filter(|&pe| pool.pes[pe].is_idle())
            });
            if let Some(pe) = target {
                Self::start_pe(&mut st, &self.model, pe, None);
            }
        }
        self.cv.notify_all();
        Ok(())
    }

    // -- DMA ----------------------------------------------------------------

    pub fn dma_write(&self, dst: u64, data: &[u8], mode: SyncMode) -> Result<TransferStatus> {
        let mut st = self.state.lock().unwrap();
        let len = data.len() as u64;
        let end = dst.checked_add(len).ok_or(Error::OffsetOutOfRange(dst))?;
        if end > st.mem.len() as u64 {
            return Err(Error::OffsetOutOfRange(end));
        }
        // Data lands at issue time; completion events inside the transfer
        // window observe the new contents.
        st.mem[dst as usize..end as usize].copy_from_slice(data);
        let result = Self::advance_for_transfer(&mut st, &self.model, TransferDirection::ToDevice, len, Vec::new());
        let status = Self::finish_transfer(&mut st, mode, result);
        self.cv.notify_all();
        Ok(status)
    }

    pub fn dma_read(&self, src: u64, len: u64, mode: SyncMode) -> Result<TransferStatus> {
        let mut st = self.state.lock().unwrap();
        let end = src.checked_add(len).ok_or(Error::OffsetOutOfRange(src))?;
        if end > st.mem.len() as u64 {
            return Err(Error::OffsetOutOfRange(end));
        }
        // Snapshot at completion time: runs finishing inside the transfer
        // window contribute their writes.
        let result = Self::advance_for_transfer(&mut st, &self.model, TransferDirection::FromDevice, len, Vec::new());
        let data = st.mem[src as usize..end as usize].to_vec();
        let result = TransferResult { data, ..result };
        let status = Self::finish_transfer(&mut st, mode, result);
        self.cv.notify_all();
        Ok(status)
    }

    fn advance_for_transfer(
        st: &mut SimState,
        model: &PlatformModel,
        direction: TransferDirection,
        size_bytes: u64,
        data: Vec<u8>,
    ) -> TransferResult {
        let duration_us = model.transfer.duration_us(size_bytes);
        let duration_ps = model.transfer.duration_ps(size_bytes);
        let rate_mib_s = model.transfer.effective_rate(size_bytes);
        let target = st.clock_ps + duration_ps;
        Self::advance_clock(st, model, target);
        TransferResult {
            direction,
            size_bytes,
            duration_us,
            rate_mib_s,
            data,
        }
    }

    fn finish_transfer(st: &mut SimState, mode: SyncMode, result: TransferResult) -> TransferStatus {
        match mode {
            SyncMode::Blocking => TransferStatus::Done(result),
            SyncMode::NonBlocking => {
                let id = st.next_transfer;
                st.next_transfer += 1;
                st.transfers.insert(id, result);
                TransferStatus::Pending(TransferToken(id))
            }
        }
    }

    pub fn transfer_wait(&self, token: TransferToken) -> Result<TransferResult> {
        let mut st = self.state.lock().unwrap();
        st.transfers.remove(&token.0).ok_or(Error::InvalidTransfer)
    }

    // -- interrupts ---------------------------------------------------------

    /// Manually raise a completion event for a PE, as a doorbell test hook.
    pub fn raise_interrupt(&self, pe_index: usize) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        let pe_count = st.pool.as_ref().map(|p| p.pes.len()).unwrap_or(0);
        if pe_index >= pe_count {
            return Err(Error::InvalidPE(pe_index));
        }
        let event_id = st.next_event;
        st.next_event += 1;
        st.outstanding.insert(event_id);
        let ev = CompletionEvent {
            event_id,
            pe_index,
            timestamp_ps: st.clock_ps,
        };
        st.irq_fifo.push_back(ev);
        self.cv.notify_all();
        Ok(())
    }

    /// Block until a completion event is available and dequeue it.
    pub fn await_event(&self) -> CompletionEvent {
        self.drive(|st, _| st.irq_fifo.pop_front())
    }

    /// Acknowledge a completion event: samples interrupt latency, advances
    /// the clock to the acknowledgement instant, and records a measurement.
    pub fn ack_interrupt(&self, event: &CompletionEvent) -> Result<InterruptMeasurement> {
        let mut st = self.state.lock().unwrap();
        if !st.outstanding.remove(&event.event_id) {
            return Err(Error::AckWithoutRaise);
        }
        let latency_us = self.model.interrupt.sample_us(&mut st.rng);
        let acked_ps = event.timestamp_ps + ps_from_us(latency_us);
        Self::advance_clock(&mut st, &self.model, acked_ps);
        let m = InterruptMeasurement {
            pe_index: event.pe_index,
            raised_ps: event.timestamp_ps,
            latency_us,
            acked_ps,
        };
        st.measurements.push(m.clone());
        self.cv.notify_all();
        Ok(m)
    }

    pub fn take_measurements(&self) -> Vec<InterruptMeasurement> {
        std::mem::take(&mut self.state.lock().unwrap().measurements)
    }

    // -- design loading -----------------------------------------------------

    /// Load a design artifact, replacing any current pool. Jobs from the
    /// previous design are invalidated (threads waiting on them observe an
    /// invalid-job-state error); memory allocations and pending transfer
    /// results survive, as does the virtual clock.
    pub fn load_design(&self, artifact: &DesignArtifact, kernels: &KernelRegistry) -> Result<()> {
        if artifact.platform_name != self.model.name {
            return Err(Error::PlatformMismatch {
                artifact: artifact.platform_name.clone(),
                device: self.model.name.clone(),
            });
        }
        if artifact.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(artifact.format_version));
        }
        if artifact.pe_table.len() > self.model.slot_budget {
            return Err(Error::SlotBudgetExceeded {
                required: artifact.pe_table.len(),
                budget: self.model.slot_budget,
            });
        }
        if crate::threadpool::architecture_by_name(&artifact.architecture).is_none() {
            return Err(Error::UnknownArchitecture(artifact.architecture.clone()));
        }
        let pool = PoolRuntime::from_pe_table(
            &artifact.architecture,
            artifact.window_size,
            &artifact.pe_table,
            kernels,
        )?;
        let span = DEFAULT_SPAN_BYTES.max(pool.map.span(pool.pes.len()));

        let mut st = self.state.lock().unwrap();
        st.jobs.clear();
        st.events.clear();
        st.irq_fifo.clear();
        st.outstanding.clear();
        st.regs.reset(span);
        debug_assert_eq!(st.regs.span(), span);
        st.pool = Some(pool);
        self.cv.notify_all();
        Ok(())
    }

    pub fn design_loaded(&self) -> bool {
        self.state.lock().unwrap().pool.is_some()
    }

    /// (architecture, window size, PE count) of the loaded design.
    pub fn design_summary(&self) -> Option<(String, u64, usize)> {
        let st = self.state.lock().unwrap();
        st.pool
            .as_ref()
            .map(|p| (p.architecture.clone(), p.map.window_size, p.pes.len()))
    }

    pub fn design_kernel_ids(&self) -> Vec<u32> {
        let st = self.state.lock().unwrap();
        match &st.pool {
            Some(p) => p.queues.keys().copied().collect(),
            None => Vec::new(),
        }
    }

    // -- jobs ----------------------------------------------------------------

    pub fn acquire_job_id(&self, kernel_id: u32) -> Result<u64> {
        let mut st = self.state.lock().unwrap();
        let known = st
            .pool
            .as_ref()
            .map(|p| p.has_kernel(kernel_id))
            .unwrap_or(false);
        if !known {
            return Err(Error::UnknownKernel(kernel_id));
        }
        let id = st.next_job;
        st.next_job += 1;
        st.jobs.insert(
            id,
            Job {
                kernel_id,
                phase: JobPhase::Prepared,
                args: BTreeMap::new(),
                timing: JobTiming::default(),
                return_value: 0,
                fault: None,
            },
        );
        Ok(id)
    }

    pub fn job_set_arg(&self, job: u64, index: usize, arg: JobArg) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        // Handle liveness is checked eagerly for a friendly error, and again
        // at dispatch for the free-after-set case.
        if let JobArg::Handle(h) = arg {
            if !st.handles.contains_key(&h) {
                return Err(Error::InvalidHandle);
            }
        }
        let kernel_id = {
            let j = st.jobs.get(&job).ok_or_else(|| bad_state("prepared", "unknown"))?;
            if j.phase != JobPhase::Prepared {
                return Err(bad_state("prepared", j.phase.name()));
            }
            j.kernel_id
        };
        let spec = {
            let pool = st.pool.as_ref().expect("job exists only under a design");
            pool.pes
                .iter()
                .find(|pe| pe.layout.kernel_id == kernel_id)
                .expect("job kernel is in the design")
                .spec
                .clone()
        };
        if index >= spec.arity() {
            return Err(Error::ArgIndexOutOfRange {
                index,
                arity: spec.arity(),
            });
        }
        let expected = spec.arg_kinds[index];
        let matches = matches!(
            (expected, &arg),
            (crate::kernels::ArgKind::Scalar, JobArg::Scalar(_))
                | (crate::kernels::ArgKind::Handle, JobArg::Handle(_))
        );
        if !matches {
            return Err(Error::ArgKindMismatch {
                index,
                expected: match expected {
                    crate::kernels::ArgKind::Scalar => "scalar",
                    crate::kernels::ArgKind::Handle => "memory handle",
                },
            });
        }
        st.jobs.get_mut(&job).unwrap().args.insert(index, arg);
        Ok(())
    }

    pub fn job_launch(&self, job: u64, mode: SyncMode) -> Result<()> {
        {
            let mut st = self.state.lock().unwrap();
            let kernel_id = {
                let j = st.jobs.get(&job).ok_or_else(|| bad_state("prepared", "unknown"))?;
                if j.phase != JobPhase::Prepared {
                    return Err(bad_state("prepared", j.phase.name()));
                }
                let arity = {
                    let pool = st.pool.as_ref().expect("job exists only under a design");
                    pool.pes
                        .iter()
                        .find(|pe| pe.layout.kernel_id == j.kernel_id)
                        .expect("job kernel is in the design")
                        .spec
                        .arity()
                };
                for i in 0..arity {
                    if !j.args.contains_key(&i) {
                        return Err(Error::MissingArguments { index: i });
                    }
                }
                j.kernel_id
            };
            st.jobs.get_mut(&job).unwrap().phase = JobPhase::Launched;
            let idle = st.pool.as_ref().unwrap().idle_pe_for(kernel_id);
            match idle {
                Some(pe) => Self::start_pe(&mut st, &self.model, pe, Some(job)),
                None => st
                    .pool
                    .as_mut()
                    .unwrap()
                    .queues
                    .get_mut(&kernel_id)
                    .expect("queue exists for every design kernel")
                    .push_back(job),
            }
            self.cv.notify_all();
        }
        match mode {
            SyncMode::Blocking => self.job_wait(job),
            SyncMode::NonBlocking => Ok(()),
        }
    }

    /// Block until the job's completion is host-visible (finish plus
    /// interrupt latency). A kernel fault still completes the job; it
    /// surfaces when the return value is read.
    pub fn job_wait(&self, job: u64) -> Result<()> {
        self.drive(|st, model| {
            let acked = match st.jobs.get(&job) {
                None => return Some(Err(bad_state("launched", "unknown"))),
                Some(j) => match j.phase {
                    JobPhase::Prepared => return Some(Err(bad_state("launched", "prepared"))),
                    JobPhase::Launched => return None,
                    JobPhase::Completed => j.timing.acked_ps.expect("completed jobs are acked"),
                },
            };
            Self::advance_clock(st, model, acked);
            Some(Ok(()))
        })
    }

    pub fn job_get_return(&self, job: u64, size: usize) -> Result<Vec<u8>> {
        let st = self.state.lock().unwrap();
        let j = st.jobs.get(&job).ok_or_else(|| bad_state("completed", "unknown"))?;
        if j.phase != JobPhase::Completed {
            return Err(bad_state("completed", j.phase.name()));
        }
        if let Some(msg) = &j.fault {
            return Err(Error::KernelFault(msg.clone()));
        }
        let pool = st.pool.as_ref().expect("job exists only under a design");
        let declared = pool
            .pes
            .iter()
            .find(|pe| pe.layout.kernel_id == j.kernel_id)
            .expect("job kernel is in the design")
            .spec
            .return_width;
        if size > declared {
            return Err(Error::ReturnSizeMismatch {
                requested: size,
                declared,
            });
        }
        Ok(j.return_value.to_le_bytes()[..size].to_vec())
    }

    pub fn release_job_id(&self, job: u64) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        match st.jobs.get(&job) {
            None => Err(bad_state("prepared or completed", "unknown")),
            Some(j) if j.phase == JobPhase::Launched => {
                Err(bad_state("prepared or completed", "launched"))
            }
            Some(_) => {
                st.jobs.remove(&job);
                Ok(())
            }
        }
    }

    pub fn job_kernel_id(&self, job: u64) -> Result<u32> {
        let st = self.state.lock().unwrap();
        st.jobs
            .get(&job)
            .map(|j| j.kernel_id)
            .ok_or_else(|| bad_state("any", "unknown"))
    }

    pub fn design_return_width(&self, kernel_id: u32) -> Result<usize> {
        let st = self.state.lock().unwrap();
        st.pool
            .as_ref()
            .and_then(|pool| {
                pool.pes
                    .iter()
                    .find(|pe| pe.layout.kernel_id == kernel_id)
                    .map(|pe| pe.spec.return_width)
            })
            .ok_or(Error::UnknownKernel(kernel_id))
    }

    pub fn job_state(&self, job: u64) -> Result<JobState> {
        let st = self.state.lock().unwrap();
        let j = st.jobs.get(&job).ok_or_else(|| bad_state("any", "unknown"))?;
        Ok(match j.phase {
            JobPhase::Prepared => JobState::Prepared,
            JobPhase::Launched => JobState::Launched,
            JobPhase::Completed => JobState::Completed,
        })
    }

    pub fn job_timing(&self, job: u64) -> Result<JobTiming> {
        let st = self.state.lock().unwrap();
        let j = st.jobs.get(&job).ok_or_else(|| bad_state("any", "unknown"))?;
        Ok(j.timing.clone())
    }

    pub fn has_inflight_jobs(&self) -> bool {
        let st = self.state.lock().unwrap();
        st.jobs.values().any(|j| j.phase == JobPhase::Launched)
    }

    /// Process every scheduled completion event. Afterwards all PEs are idle
    /// and all queues are empty (a queued job always implies a busy PE).
    pub fn run_until_idle(&self) {
        self.drive(|st, _| st.events.is_empty().then_some(()))
    }
}
