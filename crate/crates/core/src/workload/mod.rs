//! Synthetic trace generators.

pub mod trace;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AccessEvent, HUGE_PAGE_SIZE, PAGE_SIZE};

pub use trace::{read_trace, read_trace_from, write_trace, write_trace_to, TraceError, TRACE_MAGIC};

/// Highest address representable in the trace format.
pub const MAX_VADDR: u64 = (1 << 56) - 1;

const LINE: u64 = 64;
const LINES_PER_PAGE: u64 = PAGE_SIZE / LINE;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid trace spec: {0}")]
    InvalidSpec(String),
}

fn default_zipf_s() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    Uniform,
    /// Rank `r` (1-based) maps to the `r - 1`th 4 KB page of the region.
    Zipfian {
        #[serde(default = "default_zipf_s")]
        s: f64,
    },
    /// One aligned hot window of `block_bytes` at the same offset in every
    /// 2 MB region. Hot regions (a `hot_fraction` share) draw `hot_weight`
    /// of all events, and within a region `hot_weight` of accesses land in
    /// the window.
    HotBlocks { block_bytes: u64, hot_fraction: f64, hot_weight: f64 },
    /// Sequential sweep with a fixed byte stride, wrapping at the region end.
    Strided { stride: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    #[serde(flatten)]
    pub kind: TraceKind,
    pub n_events: u64,
    pub region_bytes: u64,
    #[serde(default)]
    pub write_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Start of the traced range; 2 MB aligned.
    #[serde(default)]
    pub base_vaddr: u64,
}

impl TraceSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidSpec(m));
        if self.region_bytes == 0 || !self.region_bytes.is_multiple_of(HUGE_PAGE_SIZE) {
            return bad(format!("region_bytes {} is not a positive multiple of 2 MB", self.region_bytes));
        }
        if !self.base_vaddr.is_multiple_of(HUGE_PAGE_SIZE) {
            return bad(format!("base_vaddr {:#x} is not 2 MB aligned", self.base_vaddr));
        }
        if self.base_vaddr.checked_add(self.region_bytes).is_none_or(|end| end - 1 > MAX_VADDR) {
            return bad("traced range exceeds 56-bit addresses".into());
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return bad(format!("write_fraction {} outside [0, 1]", self.write_fraction));
        }
        match self.kind {
            TraceKind::Uniform => {}
            TraceKind::Zipfian { s } => {
                if !(s.is_finite() && s > 0.0) {
                    return bad(format!("zipf exponent {s} must be positive"));
                }
            }
            TraceKind::HotBlocks { block_bytes, hot_fraction, hot_weight } => {
                if !block_bytes.is_power_of_two() || !(PAGE_SIZE..=HUGE_PAGE_SIZE).contains(&block_bytes) {
                    return bad(format!("block_bytes {block_bytes} must be a power of two in 4 KB..=2 MB"));
                }
                if !(hot_fraction > 0.0 && hot_fraction <= 1.0) {
                    return bad(format!("hot_fraction {hot_fraction} outside (0, 1]"));
                }
                if !(0.0..=1.0).contains(&hot_weight) {
                    return bad(format!("hot_weight {hot_weight} outside [0, 1]"));
                }
            }
            TraceKind::Strided { stride } => {
                if stride == 0 {
                    return bad("stride must be nonzero".into());
                }
            }
        }
        Ok(())
    }

    pub fn regions(&self) -> u64 {
        self.region_bytes / HUGE_PAGE_SIZE
    }

    /// Offset of the HotBlocks window inside each 2 MB region.
    pub fn hot_window_offset(&self) -> Option<u64> {
        match self.kind {
            TraceKind::HotBlocks { block_bytes, .. } => {
                let windows = HUGE_PAGE_SIZE / block_bytes;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x686f_745f_7769_6e64);
                Some(rng.random_range(0..windows) * block_bytes)
            }
            _ => None,
        }
    }
}

/// Expands `spec` into its event sequence. Ticks are event indices.
pub fn generate(spec: &TraceSpec) -> Result<Vec<AccessEvent>, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_events;
    let pages = spec.region_bytes / PAGE_SIZE;
    let mut out = Vec::with_capacity(n as usize);

    let line_in_page = |rng: &mut ChaCha8Rng| rng.random_range(0..LINES_PER_PAGE) * LINE;

    match spec.kind {
        TraceKind::Uniform => {
            for tick in 0..n {
                let off = rng.random_range(0..pages) * PAGE_SIZE + line_in_page(&mut rng);
                let w = rng.random_bool(spec.write_fraction);
                out.push(AccessEvent::new(tick, spec.base_vaddr + off, w));
            }
        }
        TraceKind::Zipfian { s } => {
            let zipf = Zipf::new(pages as f64, s).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?;
            for tick in 0..n {
                let rank = zipf.sample(&mut rng) as u64;
                let off = (rank - 1).min(pages - 1) * PAGE_SIZE + line_in_page(&mut rng);
                let w = rng.random_bool(spec.write_fraction);
                out.push(AccessEvent::new(tick, spec.base_vaddr + off, w));
            }
        }
        TraceKind::HotBlocks { block_bytes, hot_fraction, hot_weight } => {
            let regions = spec.regions();
            let window = spec.hot_window_offset().expect("hot blocks");
            let n_hot = ((regions as f64 * hot_fraction).round() as u64).clamp(1, regions);
            let hot: Vec<u64> = if n_hot == regions {
                (0..regions).collect()
            } else {
                let mut v: Vec<u64> =
                    index::sample(&mut rng, regions as usize, n_hot as usize).into_iter().map(|i| i as u64).collect();
                v.sort_unstable();
                v
            };
            let block_pages = block_bytes / PAGE_SIZE;
            let region_pages = HUGE_PAGE_SIZE / PAGE_SIZE;
            for tick in 0..n {
                let region = if n_hot < regions && !rng.random_bool(hot_weight) {
                    rng.random_range(0..regions)
                } else if n_hot < regions {
                    hot[rng.random_range(0..hot.len())]
                } else {
                    rng.random_range(0..regions)
                };
                let in_region = if rng.random_bool(hot_weight) {
                    window + rng.random_range(0..block_pages) * PAGE_SIZE
                } else {
                    rng.random_range(0..region_pages) * PAGE_SIZE
                };
                let off = region * HUGE_PAGE_SIZE + in_region + line_in_page(&mut rng);
                let w = rng.random_bool(spec.write_fraction);
                out.push(AccessEvent::new(tick, spec.base_vaddr + off, w));
            }
        }
        TraceKind::Strided { stride } => {
            let mut off = 0u64;
            for tick in 0..n {
                let w = rng.random_bool(spec.write_fraction);
                out.push(AccessEvent::new(tick, spec.base_vaddr + off, w));
                off = ((off as u128 + stride as u128) % spec.region_bytes as u128) as u64;
            }
        }
    }
    Ok(out)
}
