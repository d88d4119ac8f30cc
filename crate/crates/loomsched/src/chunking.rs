//! Chunk-size calculators for the five self-scheduling techniques.
//!
//! Every rule is a pure function of the queue state `(step, scheduled)`
//! plus the loop size `n` and worker count `p`. Computing from the pair
//! rather than from step-only closed forms keeps concurrent executions
//! exactly equivalent to the sequential recurrence: the claim at step `i`
//! observes the same `(i, scheduled)` in every linearizable history, so it
//! produces the same size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::workloads::WorkloadSpec;
use crate::Result;

/// A chunk-size rule, optionally carrying TSS first/last overrides.
///
/// * `Static` — equal shares of `ceil(n/p)`, claimed on demand.
/// * `Ss` — self-scheduling, one iteration per claim.
/// * `Gss` — guided self-scheduling, `ceil(remaining/p)` per claim.
/// * `Tss` — trapezoid self-scheduling, linearly decreasing sizes from a
///   first chunk `F` down to a last chunk `L`.
/// * `Fac2` — factoring, batches of `p` equal chunks covering half of the
///   remaining iterations per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Technique {
    Static,
    Ss,
    Gss,
    Tss {
        /// Override for the first chunk size `F`; defaults to `ceil(n/(2p))`.
        first: Option<u64>,
        /// Override for the last chunk size `L`; defaults to 1.
        last: Option<u64>,
    },
    Fac2,
}

impl Technique {
    /// Plain TSS with default `F = ceil(n/(2p))`, `L = 1`.
    pub const TSS: Technique = Technique::Tss {
        first: None,
        last: None,
    };

    /// TSS with explicit first/last chunk sizes; requires `F >= L >= 1`.
    pub fn tss_with(first: u64, last: u64) -> Result<Technique> {
        if last < 1 || first < last {
            return Err(Error::InvalidConfig(format!(
                "tss overrides must satisfy first >= last >= 1, got ({first}, {last})"
            )));
        }
        Ok(Technique::Tss {
            first: Some(first),
            last: Some(last),
        })
    }

    /// Checks parameter invariants (TSS overrides).
    pub fn validate(&self) -> Result<()> {
        if let Technique::Tss {
            first: Some(f),
            last: Some(l),
        } = self
        {
            if *l < 1 || f < l {
                return Err(Error::InvalidConfig(format!(
                    "tss overrides must satisfy first >= last >= 1, got ({f}, {l})"
                )));
            }
        }
        if let Technique::Tss { last: Some(0), .. } = self {
            return Err(Error::InvalidConfig("tss last chunk must be >= 1".into()));
        }
        Ok(())
    }

    /// All five techniques with default parameters, in canonical order.
    pub fn all() -> [Technique; 5] {
        [
            Technique::Static,
            Technique::Ss,
            Technique::Gss,
            Technique::TSS,
            Technique::Fac2,
        ]
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technique::Static => write!(f, "static"),
            Technique::Ss => write!(f, "ss"),
            Technique::Gss => write!(f, "gss"),
            Technique::Tss { .. } => write!(f, "tss"),
            Technique::Fac2 => write!(f, "fac2"),
        }
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Technique::Static),
            "ss" => Ok(Technique::Ss),
            "gss" => Ok(Technique::Gss),
            "tss" => Ok(Technique::TSS),
            "fac2" => Ok(Technique::Fac2),
            _ => Err(Error::UnknownTechnique(s.to_string())),
        }
    }
}

/// The iteration space: how many iterations there are and what each one runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopSpec {
    /// Total iteration count `N`; must be >= 1.
    pub total_iterations: u64,
    /// The kernel executed per iteration (or the cost model standing in
    /// for it).
    pub workload: WorkloadSpec,
}

impl LoopSpec {
    pub fn new(total_iterations: u64, workload: WorkloadSpec) -> Result<Self> {
        if total_iterations == 0 {
            return Err(Error::InvalidConfig("total_iterations must be >= 1".into()));
        }
        Ok(LoopSpec {
            total_iterations,
            workload,
        })
    }
}

/// The atomically-updated pair both queue levels store: the index of the
/// next scheduling step and the total iterations already assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchedulerState {
    pub step: u64,
    pub scheduled: u64,
}

#[inline]
fn ceil_div(a: u64, b: u64) -> u64 {
    debug_assert!(b > 0);
    a.div_ceil(b)
}

/// Size of the chunk claimed at `state` for a loop of `n` iterations split
/// among `p` workers.
///
/// Returns a size in `1..=n - state.scheduled`. Errors if the loop is
/// already exhausted or if `n`/`p` is zero.
pub fn compute_chunk_size(
    technique: Technique,
    state: SchedulerState,
    n: u64,
    p: u64,
) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidConfig("loop size n must be >= 1".into()));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("worker count p must be >= 1".into()));
    }
    if state.scheduled >= n {
        return Err(Error::LoopExhausted {
            scheduled: state.scheduled,
            total: n,
        });
    }
    technique.validate()?;

    let remaining = n - state.scheduled;
    let size = match technique {
        Technique::Static => ceil_div(n, p),
        Technique::Ss => 1,
        Technique::Gss => ceil_div(remaining, p),
        Technique::Tss { first, last } => {
            let f = first.unwrap_or_else(|| ceil_div(n, 2 * p)).max(1);
            let l = last.unwrap_or(1);
            let steps = ceil_div(2 * n, f + l);
            let delta = if steps > 1 { (f - l) / (steps - 1) } else { 0 };
            f.saturating_sub(state.step.saturating_mul(delta)).max(l)
        }
        Technique::Fac2 => {
            // A batch is p consecutive steps sharing one size, fixed at the
            // batch start as half the then-remaining iterations split p
            // ways. Replaying the batch recurrence from the loop start
            // reconstructs that size for any step; remaining halves per
            // batch, so the replay is O(log n).
            let batch = state.step / p;
            let mut at_batch_start = n;
            let mut batch_size = 1;
            for _ in 0..=batch {
                batch_size = ceil_div(at_batch_start, 2 * p).max(1);
                at_batch_start = at_batch_start.saturating_sub(batch_size * p);
            }
            batch_size
        }
    };
    Ok(size.max(1).min(remaining))
}

/// Sequential reference schedule: the full chunk-size list a single
/// claimant produces by repeatedly claiming until the loop is exhausted.
///
/// Deterministic; the sizes always sum to `n`. Any linearizable concurrent
/// execution yields the same sizes in the same step order, because each
/// size depends only on `(step, scheduled)`.
pub fn chunk_sequence_oracle(technique: Technique, n: u64, p: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidConfig("loop size n must be >= 1".into()));
    }
    let mut state = SchedulerState::default();
    let mut sizes = Vec::new();
    while state.scheduled < n {
        let size = compute_chunk_size(technique, state, n, p)?;
        sizes.push(size);
        state.step += 1;
        state.scheduled += size;
    }
    Ok(sizes)
}
