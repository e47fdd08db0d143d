//! mTHP split-size selection from a subpage histogram snapshot.
//!
//! The pipeline: a flat-distribution check on normalized entropy, then a
//! coverage-based hot threshold, a hot/cold map, a largest-first heat
//! density scan over aligned subfolio windows, and finally target selection
//! combining dense windows with the window holding the faulting address.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FolioOrder, PolicyConfig, SUBPAGES};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SplitError {
    #[error("histogram has no samples")]
    AllZeroHistogram,
    #[error("window at offset {offset} is not aligned to length {len} or overruns the huge page")]
    MisalignedWindow { offset: usize, len: usize },
}

/// Coverage ratios are compared in parts per million with integer math.
const COVERAGE_SCALE: u128 = 1_000_000;

/// `(-sum p_i log2 p_i) / log2 512`, zero-count slots contribute nothing.
pub fn normalized_entropy(counts: &[u64; SUBPAGES]) -> Result<f64, SplitError> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    if total == 0.0 {
        return Err(SplitError::AllZeroHistogram);
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * (1.0 / p).log2()
        })
        .sum();
    Ok((h / (SUBPAGES as f64).log2()).clamp(0.0, 1.0))
}

/// Hot threshold `T` and the rank `K*` at which coverage is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotThreshold {
    pub threshold: u64,
    pub kstar: usize,
}

/// Smallest rank `K*` (0-based, descending order) such that the top `K*+1`
/// counts cover at least `coverage` of the total. `T` is the count at that
/// rank; ties at `T` all end up hot.
pub fn hot_threshold(counts: &[u64; SUBPAGES], coverage: f64) -> Result<HotThreshold, SplitError> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(SplitError::AllZeroHistogram);
    }
    let ppm = (coverage.clamp(0.0, 1.0) * COVERAGE_SCALE as f64).round() as u128;
    let target = ppm * total;
    let mut sorted = *counts;
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut acc: u128 = 0;
    for (rank, &c) in sorted.iter().enumerate() {
        acc += c as u128;
        if acc * COVERAGE_SCALE >= target {
            return Ok(HotThreshold { threshold: c, kstar: rank });
        }
    }
    // Unreachable for coverage <= 1: the full prefix equals the total.
    Ok(HotThreshold { threshold: sorted[SUBPAGES - 1], kstar: SUBPAGES - 1 })
}

/// 512-bit hot/cold map of one huge page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotMap {
    words: [u64; SUBPAGES / 64],
    pub threshold: u64,
    pub kstar: Option<usize>,
}

impl HotMap {
    pub fn from_bits(bits: &[bool; SUBPAGES]) -> Self {
        let mut words = [0u64; SUBPAGES / 64];
        for (i, &hot) in bits.iter().enumerate() {
            if hot {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self { words, threshold: 1, kstar: None }
    }

    pub fn is_hot(&self, subpage: usize) -> bool {
        self.words[subpage / 64] & (1 << (subpage % 64)) != 0
    }

    pub fn hot_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Hot subpages in `[offset, offset + len)`.
    pub fn hot_in(&self, offset: usize, len: usize) -> usize {
        (offset..offset + len).filter(|&i| self.is_hot(i)).count()
    }

    pub fn bits(&self) -> [bool; SUBPAGES] {
        std::array::from_fn(|i| self.is_hot(i))
    }
}

pub fn classify_hot(counts: &[u64; SUBPAGES], threshold: u64) -> HotMap {
    let bits: [bool; SUBPAGES] = std::array::from_fn(|i| counts[i] >= threshold);
    HotMap { threshold, ..HotMap::from_bits(&bits) }
}

/// Fraction of hot subpages in the aligned window `[offset, offset + len)`.
pub fn heat_density(map: &HotMap, offset: usize, len: usize) -> Result<f64, SplitError> {
    if len == 0 || !offset.is_multiple_of(len) || offset + len > SUBPAGES {
        return Err(SplitError::MisalignedWindow { offset, len });
    }
    Ok(map.hot_in(offset, len) as f64 / len as f64)
}

fn window_is_dense(map: &HotMap, offset: usize, len: usize, tau: f64) -> bool {
    map.hot_in(offset, len) as f64 / len as f64 >= tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitReason {
    FlatDistribution,
    DensityPick,
    FallbackSmallest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderPick {
    pub order: FolioOrder,
    pub reason: SplitReason,
}

/// Largest candidate order with at least one aligned window whose heat
/// density reaches `tau`; 64 KB when none does.
pub fn pick_split_order(map: &HotMap, tau: f64) -> OrderPick {
    for order in FolioOrder::SPLIT_CANDIDATES {
        let len = order.subpages();
        if (0..order.windows_per_thp()).any(|w| window_is_dense(map, w * len, len, tau)) {
            return OrderPick { order, reason: SplitReason::DensityPick };
        }
    }
    OrderPick { order: FolioOrder::O64K, reason: SplitReason::FallbackSmallest }
}

/// Windows of `order` that are `tau`-dense, plus the window holding
/// `fault_subpage`. Never empty.
pub fn select_targets(map: &HotMap, order: FolioOrder, fault_subpage: usize, tau: f64) -> BTreeSet<usize> {
    let len = order.subpages();
    let mut targets: BTreeSet<usize> =
        (0..order.windows_per_thp()).filter(|&w| window_is_dense(map, w * len, len, tau)).collect();
    targets.insert((fault_subpage % SUBPAGES) / len);
    targets
}

/// Outcome of the split analysis for one faulting huge page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    /// Chosen subfolio order; 2 MB means migrate without splitting.
    pub order: FolioOrder,
    /// Window indices (in units of `order`) to migrate.
    pub targets: BTreeSet<usize>,
    /// Normalized entropy, absent when the histogram had no samples.
    pub entropy: Option<f64>,
    pub threshold: Option<u64>,
    pub kstar: Option<usize>,
    pub hot_subpages: usize,
    pub reason: SplitReason,
}

impl SplitDecision {
    pub fn is_split(&self) -> bool {
        !self.order.is_thp()
    }

    fn whole(entropy: Option<f64>, reason: SplitReason) -> Self {
        Self {
            order: FolioOrder::THP,
            targets: BTreeSet::new(),
            entropy,
            threshold: None,
            kstar: None,
            hot_subpages: 0,
            reason,
        }
    }
}

/// Full decision pipeline over a snapshot of the histogram.
pub fn decide_split(counts: &[u64; SUBPAGES], cfg: &PolicyConfig, fault_subpage: usize) -> SplitDecision {
    let entropy = match normalized_entropy(counts) {
        Ok(h) => h,
        Err(_) => return SplitDecision::whole(None, SplitReason::FlatDistribution),
    };
    if entropy >= cfg.entropy_gate {
        return SplitDecision::whole(Some(entropy), SplitReason::FlatDistribution);
    }
    let ht = hot_threshold(counts, cfg.coverage_p).expect("nonzero histogram");
    let mut map = classify_hot(counts, ht.threshold);
    map.kstar = Some(ht.kstar);
    let pick = pick_split_order(&map, cfg.tau_h);
    let targets = if pick.order.is_thp() {
        BTreeSet::new()
    } else {
        select_targets(&map, pick.order, fault_subpage, cfg.tau_h)
    };
    SplitDecision {
        order: pick.order,
        targets,
        entropy: Some(entropy),
        threshold: Some(ht.threshold),
        kstar: Some(ht.kstar),
        hot_subpages: map.hot_count(),
        reason: pick.reason,
    }
}
