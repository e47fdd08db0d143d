//! Tiered-memory page migration simulator with subpage-aware THP splitting
//! and duplex-aware migration admission.
//!
//! The policy layer ([`profiling`], [`rwsketch`], [`split`], [`admission`])
//! is pure and usable on its own; [`memsim`] wires it into a deterministic
//! two-tier machine driven by traces from [`workload`].

pub mod admission;
pub mod memsim;
pub mod model;
pub mod profiling;
pub mod rwsketch;
pub mod split;
pub mod workload;

pub use admission::{admit, classify_page, classify_traffic, Admission, TrafficWindow};
pub use memsim::{
    run_scenario, AllocError, EventLog, FaultOutcome, FaultRecord, Fragmentation, HookRegistry, MemoryState,
    Policy, RunReport, SimError, SimParams, TierState, TlbModel, CSV_COLUMNS,
};
pub use model::{
    subpage_index, AccessEvent, Address, ConfigError, DuplexMode, Folio, FolioOrder, PolicyConfig, RwClass, TierId,
    TrafficClass,
};
pub use profiling::{HistogramSnapshot, Sampler, SubpageHistogram};
pub use rwsketch::{BlockedCbf, DualBcbf};
pub use split::{decide_split, hot_threshold, normalized_entropy, SplitDecision, SplitReason};
pub use workload::{generate, read_trace, write_trace, TraceKind, TraceSpec, WorkloadError};
