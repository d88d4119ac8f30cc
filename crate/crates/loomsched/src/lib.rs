//! Hierarchical dynamic loop self-scheduling (DLS).
//!
//! Loop iterations are handed out in chunks at two levels: a global work
//! queue splits the iteration space across node groups, and a local work
//! queue per node splits each fetched chunk across that node's workers.
//! Both queues are a single atomically-updated `(step, scheduled)` pair, so
//! any worker can compute and claim the next chunk without a master entity.
//!
//! The crate ships two interchangeable backends over the same queue
//! protocol:
//!
//! * [`runtime`] — real threads executing real kernels, with wall-clock
//!   traces;
//! * [`simulator`] — a deterministic discrete-event replica in virtual
//!   nanoseconds, driven by a per-iteration cost vector, with parameterized
//!   claim overheads and lock contention.
//!
//! [`chunking`] holds the five chunk-size rules (STATIC, SS, GSS, TSS,
//! FAC2), [`queue`] the two-level claim protocol, [`workloads`] the kernels
//! and cost generators, and [`trace`] the event model, metrics, and
//! CSV/JSON/SVG exporters.

pub mod chunking;
pub mod error;
pub mod queue;
pub mod runtime;
pub mod simulator;
pub mod trace;
pub mod workloads;

pub use chunking::{chunk_sequence_oracle, compute_chunk_size, LoopSpec, Technique};
pub use error::Error;
pub use queue::{Chunk, ClaimResult, GlobalQueue, LocalQueue, LockModel, SchedulerState, SubClaim};
pub use runtime::{run, ClusterConfig, ExecutionMode};
pub use simulator::{simulate, sweep, OverheadModel, SimOutcome};
pub use trace::{compute_metrics, ExecutionTrace, IterRange, Metrics, TraceEvent};
pub use workloads::{generate_costs, mandelbrot_kernel, WorkloadSpec};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
