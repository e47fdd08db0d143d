//! Shared inputs for the criterion benches.

use tiersim_core::{generate, AccessEvent, SimParams, TraceKind, TraceSpec};

/// Histogram with a 128-slot hot run, a cold background and a few
/// scattered spikes.
pub fn skewed_histogram() -> [u64; 512] {
    let mut h = [1u64; 512];
    for c in &mut h[128..256] {
        *c = 200;
    }
    for i in (0..512).step_by(61) {
        h[i] += 40;
    }
    h
}

pub fn uniform_histogram() -> [u64; 512] {
    [25; 512]
}

/// 32 MB hot-block trace small enough to iterate on.
pub fn small_trace(n_events: u64) -> Vec<AccessEvent> {
    let spec = TraceSpec {
        kind: TraceKind::HotBlocks { block_bytes: 512 << 10, hot_fraction: 1.0, hot_weight: 0.9 },
        n_events,
        region_bytes: 32 << 20,
        write_fraction: 0.2,
        seed: 42,
        base_vaddr: 0,
    };
    generate(&spec).expect("valid spec")
}

pub fn small_params(contention_pct: f64) -> SimParams {
    SimParams { fast_frames: 4096, slow_frames: 16384, epoch_events: 8192, contention_pct, ..SimParams::default() }
}
