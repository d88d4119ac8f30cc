//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A chunk was requested from a loop whose iterations are all assigned.
    #[error("loop exhausted: {scheduled} of {total} iterations already scheduled")]
    LoopExhausted { scheduled: u64, total: u64 },

    /// Technique name not one of `static`, `ss`, `gss`, `tss`, `fac2`.
    #[error("unknown technique `{0}` (accepted: static, ss, gss, tss, fac2)")]
    UnknownTechnique(String),

    /// Configuration rejected before any work started.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A trace violated well-formedness (overlapping events or a coverage
    /// gap); names the offending worker and instant.
    #[error("malformed trace: worker {worker} at {instant}: {reason}")]
    MalformedTrace {
        worker: u32,
        instant: u64,
        reason: String,
    },

    /// A workload kernel failed; the run is aborted.
    #[error("kernel failed at iteration {iteration}: {message}")]
    KernelFailure { iteration: u64, message: String },

    /// Problem reading a cost-vector file.
    #[error("cost file {path}, line {line}: {reason}")]
    CostFile {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
