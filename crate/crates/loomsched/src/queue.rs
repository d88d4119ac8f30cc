//! Two-level hierarchical work-queue state machine.
//!
//! One [`GlobalQueue`] covers the whole iteration space and hands chunks to
//! nodes; one [`LocalQueue`] per node sub-schedules the node's current
//! chunk across its workers. Each queue level is a single packed
//! `(step, scheduled)` word updated by compare-and-swap, so a claim has
//! exactly one linearization point and any worker can claim without a
//! master entity.
//!
//! The sub-claim protocol is two-stage: try the local queue first; if the
//! local chunk is absent or exhausted, race to refill it from the global
//! queue. Whichever worker wins the race installs the new chunk and takes
//! its first sub-chunk in the same protocol action; losers retry stage one
//! against the newly installed chunk. A node holds at most one active
//! chunk, and global exhaustion is latched per node so late claimers stop
//! touching the global queue.

use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, Ordering};
use std::sync::{Mutex, TryLockError};
use std::time::{Duration, Instant};

use crate::chunking::{compute_chunk_size, SchedulerState, Technique};
use crate::error::Error;
use crate::trace::IterRange;
use crate::Result;

/// A contiguous block of iterations claimed from the global queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    /// First iteration index (inclusive).
    pub start: u64,
    /// Number of iterations; >= 1.
    pub size: u64,
    /// Global scheduling step that produced this chunk (also its id).
    pub step: u64,
}

impl Chunk {
    pub fn range(&self) -> IterRange {
        IterRange::new(self.start, self.start + self.size)
    }
}

/// A sub-chunk handed to one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubClaim {
    pub range: IterRange,
    /// Global step of the chunk this sub-chunk came from.
    pub chunk_step: u64,
    /// Local scheduling step within that chunk.
    pub sub_step: u64,
}

/// Outcome of the two-stage claim protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimResult {
    /// Stage one succeeded: a sub-chunk of the current local chunk.
    SubChunk(SubClaim),
    /// Stage two: this worker fetched a fresh global chunk, installed it,
    /// and immediately took its first sub-chunk.
    RefilledThenSubChunk { chunk: Chunk, sub: SubClaim },
    /// Both levels are out of iterations.
    Exhausted,
}

#[inline]
fn pack(step: u32, scheduled: u32) -> u64 {
    ((step as u64) << 32) | scheduled as u64
}

#[inline]
fn unpack(v: u64) -> (u32, u32) {
    ((v >> 32) as u32, v as u32)
}

fn spin_for(ns: u64) {
    let end = Instant::now() + Duration::from_nanos(ns);
    while Instant::now() < end {
        std::hint::spin_loop();
    }
}

/// The inter-node work queue over the whole iteration space.
#[derive(Debug)]
pub struct GlobalQueue {
    total: u64,
    technique: Technique,
    node_count: u64,
    claim_latency_ns: u64,
    state: AtomicU64,
}

impl GlobalQueue {
    /// `total` is capped at `u32::MAX` so the `(step, scheduled)` pair fits
    /// one atomic word.
    pub fn new(total: u64, technique: Technique, node_count: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidConfig("loop must have >= 1 iteration".into()));
        }
        if total > u32::MAX as u64 {
            return Err(Error::InvalidConfig(format!(
                "loop size {total} exceeds the supported maximum {}",
                u32::MAX
            )));
        }
        if node_count == 0 {
            return Err(Error::InvalidConfig("node_count must be >= 1".into()));
        }
        technique.validate()?;
        Ok(GlobalQueue {
            total,
            technique,
            node_count,
            claim_latency_ns: 0,
            state: AtomicU64::new(0),
        })
    }

    /// Injects a busy-wait of `ns` into every successful claim, standing in
    /// for inter-node fabric latency.
    pub fn with_claim_latency(mut self, ns: u64) -> Self {
        self.claim_latency_ns = ns;
        self
    }

    /// Atomically claims the next chunk, or reports exhaustion. The
    /// read-compute-update is a single compare-and-swap.
    pub fn claim(&self) -> Option<Chunk> {
        loop {
            let packed = self.state.load(Ordering::Acquire);
            let (step, scheduled) = unpack(packed);
            if scheduled as u64 >= self.total {
                return None;
            }
            let state = SchedulerState {
                step: step as u64,
                scheduled: scheduled as u64,
            };
            let size = compute_chunk_size(self.technique, state, self.total, self.node_count)
                .expect("scheduled < total implies a valid chunk");
            let next = pack(step + 1, scheduled + size as u32);
            if self
                .state
                .compare_exchange_weak(packed, next, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                if self.claim_latency_ns > 0 {
                    spin_for(self.claim_latency_ns);
                }
                return Some(Chunk {
                    start: scheduled as u64,
                    size,
                    step: step as u64,
                });
            }
        }
    }

    pub fn state(&self) -> SchedulerState {
        let (step, scheduled) = unpack(self.state.load(Ordering::Acquire));
        SchedulerState {
            step: step as u64,
            scheduled: scheduled as u64,
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.state().scheduled >= self.total
    }

    pub fn total_iterations(&self) -> u64 {
        self.total
    }

    pub fn node_count(&self) -> u64 {
        self.node_count
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }
}

impl Clone for GlobalQueue {
    /// Point-in-time snapshot; intended for quiescent states (testing).
    fn clone(&self) -> Self {
        GlobalQueue {
            total: self.total,
            technique: self.technique,
            node_count: self.node_count,
            claim_latency_ns: self.claim_latency_ns,
            state: AtomicU64::new(self.state.load(Ordering::Acquire)),
        }
    }
}

/// State of one installed chunk. Never reset or reused: every install
/// allocates a fresh one, so a stale pointer can only observe an already
/// exhausted chunk.
#[derive(Debug)]
struct ChunkState {
    chunk: Chunk,
    /// Packed (sub_step, sub_scheduled) within `chunk`.
    state: AtomicU64,
}

/// The intra-node work queue over the node's current chunk.
#[derive(Debug)]
pub struct LocalQueue {
    node: u32,
    technique: Technique,
    worker_count: u64,
    current: AtomicPtr<ChunkState>,
    /// Owns every ChunkState ever installed; keeps stale pointers valid
    /// until the queue drops.
    chunks: Mutex<Vec<Box<ChunkState>>>,
    refill: Mutex<()>,
    exhausted: AtomicBool,
    installed: AtomicU64,
}

// `current` points into boxes owned by `chunks`, which outlive all access.
unsafe impl Send for LocalQueue {}
unsafe impl Sync for LocalQueue {}

impl LocalQueue {
    pub fn new(node: u32, technique: Technique, worker_count: u64) -> Result<Self> {
        if worker_count == 0 {
            return Err(Error::InvalidConfig("worker_count must be >= 1".into()));
        }
        technique.validate()?;
        Ok(LocalQueue {
            node,
            technique,
            worker_count,
            current: AtomicPtr::new(std::ptr::null_mut()),
            chunks: Mutex::new(Vec::new()),
            refill: Mutex::new(()),
            exhausted: AtomicBool::new(false),
            installed: AtomicU64::new(0),
        })
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn worker_count(&self) -> u64 {
        self.worker_count
    }

    /// Stage one alone: one atomic sub-claim from the current chunk, or
    /// `None` if there is no chunk or it is exhausted. Never touches the
    /// global queue.
    pub fn try_claim_sub(&self) -> Option<SubClaim> {
        let ptr = self.current.load(Ordering::Acquire);
        if ptr.is_null() {
            return None;
        }
        let cs = unsafe { &*ptr };
        loop {
            let packed = cs.state.load(Ordering::Acquire);
            let (step, scheduled) = unpack(packed);
            if scheduled as u64 >= cs.chunk.size {
                return None;
            }
            let state = SchedulerState {
                step: step as u64,
                scheduled: scheduled as u64,
            };
            let size =
                compute_chunk_size(self.technique, state, cs.chunk.size, self.worker_count)
                    .expect("sub-scheduled < chunk size implies a valid sub-chunk");
            let next = pack(step + 1, scheduled + size as u32);
            if cs
                .state
                .compare_exchange_weak(packed, next, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                let start = cs.chunk.start + scheduled as u64;
                return Some(SubClaim {
                    range: IterRange::new(start, start + size),
                    chunk_step: cs.chunk.step,
                    sub_step: step as u64,
                });
            }
        }
    }

    /// The full two-stage protocol. Callers are workers of this node.
    pub fn claim_sub(&self, global: &GlobalQueue) -> ClaimResult {
        loop {
            if self.exhausted.load(Ordering::Acquire) {
                return ClaimResult::Exhausted;
            }
            if let Some(sub) = self.try_claim_sub() {
                return ClaimResult::SubChunk(sub);
            }
            // Refill election: exactly one worker fetches; losers retry
            // stage one against whatever the winner installs.
            let _guard = match self.refill.try_lock() {
                Ok(g) => g,
                Err(TryLockError::WouldBlock) => {
                    std::thread::yield_now();
                    continue;
                }
                Err(TryLockError::Poisoned(p)) => p.into_inner(),
            };
            if let Some(sub) = self.try_claim_sub() {
                // Another refill landed while we raced for the lock.
                return ClaimResult::SubChunk(sub);
            }
            match global.claim() {
                Some(chunk) => {
                    let sub = self.install_claimed(chunk);
                    return ClaimResult::RefilledThenSubChunk { chunk, sub };
                }
                None => {
                    self.exhausted.store(true, Ordering::Release);
                    return ClaimResult::Exhausted;
                }
            }
        }
    }

    /// Installs a chunk and takes its first sub-chunk in one action, so
    /// the refilling worker never idles after fetching.
    fn install_claimed(&self, chunk: Chunk) -> SubClaim {
        let first = compute_chunk_size(
            self.technique,
            SchedulerState::default(),
            chunk.size,
            self.worker_count,
        )
        .expect("fresh chunk has size >= 1");
        self.install_state(chunk, pack(1, first as u32));
        SubClaim {
            range: IterRange::new(chunk.start, chunk.start + first),
            chunk_step: chunk.step,
            sub_step: 0,
        }
    }

    /// Installs a chunk without sub-claiming (barrier mode: the lead
    /// fetches, then all workers sub-schedule). Callers must ensure the
    /// previous chunk is exhausted and no sub-claims are in flight.
    pub fn install(&self, chunk: Chunk) {
        self.install_state(chunk, pack(0, 0));
    }

    fn install_state(&self, chunk: Chunk, packed: u64) {
        debug_assert!(chunk.size >= 1);
        let boxed = Box::new(ChunkState {
            chunk,
            state: AtomicU64::new(packed),
        });
        let raw = &*boxed as *const ChunkState as *mut ChunkState;
        self.chunks.lock().unwrap().push(boxed);
        self.installed.fetch_add(chunk.size, Ordering::Relaxed);
        self.current.store(raw, Ordering::Release);
    }

    /// The node's most recently installed chunk, if any.
    pub fn current_chunk(&self) -> Option<Chunk> {
        let ptr = self.current.load(Ordering::Acquire);
        if ptr.is_null() {
            None
        } else {
            Some(unsafe { &*ptr }.chunk)
        }
    }

    /// Scheduling state within the current chunk.
    pub fn sub_state(&self) -> Option<SchedulerState> {
        let ptr = self.current.load(Ordering::Acquire);
        if ptr.is_null() {
            return None;
        }
        let (step, scheduled) = unpack(unsafe { &*ptr }.state.load(Ordering::Acquire));
        Some(SchedulerState {
            step: step as u64,
            scheduled: scheduled as u64,
        })
    }

    /// Total iterations ever installed into this node's local queue.
    pub fn installed_iterations(&self) -> u64 {
        self.installed.load(Ordering::Relaxed)
    }

    /// Whether global exhaustion has been observed and latched here.
    pub fn is_exhausted_latched(&self) -> bool {
        self.exhausted.load(Ordering::Acquire)
    }
}

impl Clone for LocalQueue {
    /// Point-in-time snapshot; intended for quiescent states (testing).
    fn clone(&self) -> Self {
        let fresh = LocalQueue::new(self.node, self.technique, self.worker_count)
            .expect("source queue was valid");
        let ptr = self.current.load(Ordering::Acquire);
        if !ptr.is_null() {
            let cs = unsafe { &*ptr };
            fresh.install_state(cs.chunk, cs.state.load(Ordering::Acquire));
        }
        fresh
            .installed
            .store(self.installed.load(Ordering::Relaxed), Ordering::Relaxed);
        fresh
            .exhausted
            .store(self.exhausted.load(Ordering::Acquire), Ordering::Release);
        fresh
    }
}

/// Cost model for lock-polling claims: a granted lock costs
/// `granted_ns`, and every concurrent waiter polling at the linearization
/// instant adds `attempt_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LockModel {
    pub attempt_ns: u64,
    pub granted_ns: u64,
}

impl LockModel {
    pub fn overhead_ns(&self, waiters: u64) -> u64 {
        self.granted_ns + self.attempt_ns * waiters
    }
}

/// Claim with a modeled lock-polling cost, for the simulator backend: the
/// logical result is exactly [`LocalQueue::claim_sub`], plus a synthetic
/// overhead of `granted_ns + attempt_ns * concurrent_waiters`.
pub fn lock_model_claim(
    local: &LocalQueue,
    global: &GlobalQueue,
    lock: &LockModel,
    concurrent_waiters: u64,
) -> (ClaimResult, u64) {
    (local.claim_sub(global), lock.overhead_ns(concurrent_waiters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::chunk_sequence_oracle;
    use std::sync::Arc;

    #[test]
    fn global_gss_first_claim() {
        let q = GlobalQueue::new(100, Technique::Gss, 4).unwrap();
        let c = q.claim().unwrap();
        assert_eq!((c.start, c.size, c.step), (0, 25, 0));
        let c = q.claim().unwrap();
        assert_eq!((c.start, c.size, c.step), (25, 19, 1));
    }

    #[test]
    fn global_sequential_matches_oracle() {
        for t in Technique::all() {
            let q = GlobalQueue::new(100, t, 4).unwrap();
            let mut sizes = Vec::new();
            while let Some(c) = q.claim() {
                sizes.push(c.size);
            }
            assert_eq!(sizes, chunk_sequence_oracle(t, 100, 4).unwrap());
            assert!(q.is_exhausted());
            assert!(q.claim().is_none());
        }
    }

    #[test]
    fn global_ss_all_interleavings_partition() {
        // Two claimants, three claims total: every assignment of claims to
        // claimants yields the same three chunks with no duplicate or gap.
        for order in 0u8..8 {
            let q = GlobalQueue::new(3, Technique::Ss, 2).unwrap();
            let mut got = Vec::new();
            for bit in 0..3 {
                let _claimant = (order >> bit) & 1; // which claimant moves
                let c = q.claim().unwrap();
                got.push((c.start, c.size));
            }
            got.sort_unstable();
            assert_eq!(got, vec![(0, 1), (1, 1), (2, 1)]);
            assert!(q.claim().is_none());
        }
    }

    #[test]
    fn sub_claims_partition_the_chunk() {
        let local = LocalQueue::new(0, Technique::Static, 4).unwrap();
        local.install(Chunk {
            start: 0,
            size: 25,
            step: 0,
        });
        let mut sizes = Vec::new();
        while let Some(sub) = local.try_claim_sub() {
            sizes.push(sub.range.len());
        }
        assert_eq!(sizes, vec![7, 7, 7, 4]);
        assert_eq!(local.sub_state().unwrap().scheduled, 25);
    }

    #[test]
    fn refill_then_subchunk_starts_at_chunk_start() {
        let global = GlobalQueue::new(100, Technique::Gss, 4).unwrap();
        let local = LocalQueue::new(0, Technique::Static, 4).unwrap();
        match local.claim_sub(&global) {
            ClaimResult::RefilledThenSubChunk { chunk, sub } => {
                assert_eq!(chunk.start, 0);
                assert_eq!(chunk.size, 25);
                assert_eq!(sub.range.start, 0);
                assert_eq!(sub.range.len(), 7);
                assert_eq!(sub.sub_step, 0);
            }
            other => panic!("expected refill, got {other:?}"),
        }
        // Next claim is a plain sub-chunk from the installed chunk.
        match local.claim_sub(&global) {
            ClaimResult::SubChunk(sub) => assert_eq!(sub.range, IterRange::new(7, 14)),
            other => panic!("expected sub-chunk, got {other:?}"),
        }
    }

    #[test]
    fn exhaustion_is_latched() {
        let global = GlobalQueue::new(2, Technique::Ss, 1).unwrap();
        let local = LocalQueue::new(0, Technique::Ss, 1).unwrap();
        let mut executed = 0;
        loop {
            match local.claim_sub(&global) {
                ClaimResult::SubChunk(s) | ClaimResult::RefilledThenSubChunk { sub: s, .. } => {
                    executed += s.range.len()
                }
                ClaimResult::Exhausted => break,
            }
        }
        assert_eq!(executed, 2);
        assert!(local.is_exhausted_latched());
        assert!(matches!(local.claim_sub(&global), ClaimResult::Exhausted));
    }

    #[test]
    fn lock_model_overhead_formula() {
        let lm = LockModel {
            attempt_ns: 500,
            granted_ns: 1000,
        };
        assert_eq!(lm.overhead_ns(0), 1000);
        assert_eq!(lm.overhead_ns(3), 2500);

        let global = GlobalQueue::new(4, Technique::Ss, 1).unwrap();
        let local = LocalQueue::new(0, Technique::Ss, 2).unwrap();
        let (res, overhead) = lock_model_claim(&local, &global, &lm, 3);
        assert!(matches!(res, ClaimResult::RefilledThenSubChunk { .. }));
        assert_eq!(overhead, 2500);
    }

    #[test]
    fn concurrent_claims_partition_iteration_space() {
        for inter in Technique::all() {
            for intra in [Technique::Ss, Technique::Gss, Technique::Static] {
                let n = 500u64;
                let global = Arc::new(GlobalQueue::new(n, inter, 2).unwrap());
                let locals: Vec<_> = (0..2)
                    .map(|node| Arc::new(LocalQueue::new(node, intra, 3).unwrap()))
                    .collect();
                let mut handles = Vec::new();
                for node in 0..2usize {
                    for _worker in 0..3 {
                        let g = Arc::clone(&global);
                        let l = Arc::clone(&locals[node]);
                        handles.push(std::thread::spawn(move || {
                            let mut ranges = Vec::new();
                            loop {
                                match l.claim_sub(&g) {
                                    ClaimResult::SubChunk(s)
                                    | ClaimResult::RefilledThenSubChunk { sub: s, .. } => {
                                        ranges.push(s.range)
                                    }
                                    ClaimResult::Exhausted => return ranges,
                                }
                            }
                        }));
                    }
                }
                let mut all: Vec<IterRange> =
                    handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
                all.sort_by_key(|r| r.start);
                let mut next = 0;
                for r in &all {
                    assert_eq!(r.start, next, "gap or overlap at {next} ({inter}+{intra})");
                    next = r.end;
                }
                assert_eq!(next, n);
                // Hierarchy conservation at quiescence.
                let installed: u64 = locals.iter().map(|l| l.installed_iterations()).sum();
                assert_eq!(installed, global.state().scheduled);
            }
        }
    }
}
