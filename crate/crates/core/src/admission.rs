//! Duplex-aware migration admission.
//!
//! On a full-duplex slow tier, promotions read from the slow tier; letting
//! pages through whose read/write mix matches the dominant traffic keeps the
//! link's two directions balanced. On a half-duplex tier everything is
//! admitted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Address, DuplexMode, RwClass, TrafficClass};
use crate::rwsketch::DualBcbf;

pub const DEFAULT_WINDOW_BUCKETS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Admission {
    Allow,
    Prevent,
}

/// Sliding window of per-epoch slow-tier read/write byte counts. The front
/// bucket is the epoch in progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficWindow {
    buckets: VecDeque<(u64, u64)>,
    capacity: usize,
}

impl Default for TrafficWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_BUCKETS)
    }
}

impl TrafficWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let mut buckets = VecDeque::with_capacity(capacity);
        buckets.push_front((0, 0));
        Self { buckets, capacity }
    }

    pub fn record(&mut self, read_bytes: u64, write_bytes: u64) {
        let cur = self.buckets.front_mut().expect("window always has a current bucket");
        cur.0 = cur.0.saturating_add(read_bytes);
        cur.1 = cur.1.saturating_add(write_bytes);
    }

    /// Opens a fresh bucket, dropping the oldest past capacity.
    pub fn rotate(&mut self) {
        self.buckets.push_front((0, 0));
        self.buckets.truncate(self.capacity);
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals() == (0, 0)
    }

    pub fn totals(&self) -> (u64, u64) {
        self.buckets.iter().fold((0u64, 0u64), |(r, w), &(br, bw)| (r.saturating_add(br), w.saturating_add(bw)))
    }
}

/// Read share at or above `theta` is read dominant, at or below `1 - theta`
/// write dominant, anything between (or no traffic) balanced.
pub fn classify_traffic(window: &TrafficWindow, theta: f64) -> TrafficClass {
    let (r, w) = window.totals();
    classify_bytes(r, w, theta)
}

pub fn classify_bytes(read_bytes: u64, write_bytes: u64, theta: f64) -> TrafficClass {
    let sum = read_bytes as f64 + write_bytes as f64;
    if sum == 0.0 {
        return TrafficClass::Balanced;
    }
    let r_share = read_bytes as f64 / sum;
    if r_share >= theta {
        TrafficClass::ReadDominant
    } else if r_share <= 1.0 - theta {
        TrafficClass::WriteDominant
    } else {
        TrafficClass::Balanced
    }
}

pub fn classify_page(sketch: &DualBcbf, page: Address, cut: f64) -> RwClass {
    sketch.classify(page, cut)
}

/// The admission matrix.
///
/// | page \ traffic | read dominant | balanced | write dominant |
/// |----------------|---------------|----------|----------------|
/// | read heavy     | allow         | allow    | prevent        |
/// | write heavy    | prevent       | allow    | allow          |
pub fn admit(page: RwClass, traffic: TrafficClass, duplex: DuplexMode) -> Admission {
    if duplex == DuplexMode::HalfDuplex {
        return Admission::Allow;
    }
    match (page, traffic) {
        (RwClass::ReadHeavy, TrafficClass::WriteDominant) | (RwClass::WriteHeavy, TrafficClass::ReadDominant) => {
            Admission::Prevent
        }
        _ => Admission::Allow,
    }
}
