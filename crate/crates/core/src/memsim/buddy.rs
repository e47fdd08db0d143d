//! Per-tier frame allocator with buddy splitting and coalescing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FolioOrder, TierId};

/// Largest buddy order tracked (2 MB of 4 KB frames).
pub const MAX_ORDER: u8 = 9;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AllocError {
    #[error("no free contiguous block of order {order} on the {tier:?} tier")]
    NoContiguousBlock { tier: TierId, order: u8 },
    #[error("block at frame {frame} (order {order}) is not allocated")]
    DoubleFree { frame: u64, order: u8 },
    #[error("frame {0} is already in use")]
    FrameInUse(u64),
    #[error("frame {0} is out of range")]
    OutOfRange(u64),
}

/// Pattern of pinned order-0 frames used to pre-fragment a tier.
///
/// Pinned frames are neither folios nor movable; they only take space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fragmentation {
    #[default]
    None,
    /// Every even-indexed frame pinned: nothing above order 0 survives.
    Checkerboard,
    /// One pinned frame at the start of every `stride_frames` frames.
    /// A stride of 512 poisons every 2 MB block while leaving all smaller
    /// orders available.
    Pinned { stride_frames: u64 },
}

impl Fragmentation {
    pub fn stride(self) -> Option<u64> {
        match self {
            Fragmentation::None => None,
            Fragmentation::Checkerboard => Some(2),
            Fragmentation::Pinned { stride_frames } => Some(stride_frames.max(1)),
        }
    }
}

/// Frame allocator and bandwidth meter for one memory tier.
#[derive(Debug, Clone)]
pub struct TierState {
    pub tier: TierId,
    frame_count: u64,
    free: [BTreeSet<u64>; MAX_ORDER as usize + 1],
    allocated: BTreeMap<u64, u8>,
    used_frames: u64,
    /// Bytes per epoch at which utilization reaches 1.0.
    pub peak_bandwidth: u64,
    /// Bytes moved through this tier in the current epoch.
    pub consumed_bandwidth: u64,
    pub base_latency: f64,
}

impl TierState {
    pub fn new(tier: TierId, frame_count: u64, peak_bandwidth: u64, base_latency: f64) -> Self {
        let mut free: [BTreeSet<u64>; MAX_ORDER as usize + 1] = Default::default();
        let mut frame = 0u64;
        while frame < frame_count {
            let mut order = MAX_ORDER;
            while order > 0 && (!frame.is_multiple_of(1 << order) || frame + (1 << order) > frame_count) {
                order -= 1;
            }
            free[order as usize].insert(frame);
            frame += 1 << order;
        }
        Self {
            tier,
            frame_count,
            free,
            allocated: BTreeMap::new(),
            used_frames: 0,
            peak_bandwidth,
            consumed_bandwidth: 0,
            base_latency,
        }
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn used_frames(&self) -> u64 {
        self.used_frames
    }

    pub fn free_frames(&self) -> u64 {
        self.frame_count - self.used_frames
    }

    pub fn used_fraction(&self) -> f64 {
        if self.frame_count == 0 {
            1.0
        } else {
            self.used_frames as f64 / self.frame_count as f64
        }
    }

    /// Free blocks currently on the list for `order`.
    pub fn free_blocks(&self, order: u8) -> usize {
        self.free[order as usize].len()
    }

    /// Sum of frames across all free lists; equals [`free_frames`](Self::free_frames).
    pub fn free_list_frames(&self) -> u64 {
        self.free.iter().enumerate().map(|(o, set)| (set.len() as u64) << o).sum()
    }

    pub fn largest_free_order(&self) -> Option<u8> {
        (0..=MAX_ORDER).rev().find(|&o| !self.free[o as usize].is_empty())
    }

    /// Allocation order of the block based at `frame`, if allocated.
    pub fn allocated_order(&self, frame: u64) -> Option<u8> {
        self.allocated.get(&frame).copied()
    }

    /// Takes the lowest-addressed free block of the smallest sufficient
    /// order and splits it down to `order`.
    pub fn alloc_contiguous(&mut self, order: FolioOrder) -> Result<u64, AllocError> {
        self.alloc_order(order.get())
    }

    pub(crate) fn alloc_order(&mut self, order: u8) -> Result<u64, AllocError> {
        let source = (order..=MAX_ORDER)
            .find(|&o| !self.free[o as usize].is_empty())
            .ok_or(AllocError::NoContiguousBlock { tier: self.tier, order })?;
        let base = self.free[source as usize].pop_first().expect("nonempty list");
        let mut o = source;
        while o > order {
            o -= 1;
            self.free[o as usize].insert(base + (1 << o));
        }
        self.allocated.insert(base, order);
        self.used_frames += 1 << order;
        Ok(base)
    }

    /// Returns a block to the free lists, merging with free buddies.
    pub fn free_folio(&mut self, frame: u64, order: FolioOrder) -> Result<(), AllocError> {
        self.free_order(frame, order.get())
    }

    pub(crate) fn free_order(&mut self, frame: u64, order: u8) -> Result<(), AllocError> {
        match self.allocated.get(&frame) {
            Some(&o) if o == order => {}
            _ => return Err(AllocError::DoubleFree { frame, order }),
        }
        self.allocated.remove(&frame);
        self.used_frames -= 1 << order;
        let mut base = frame;
        let mut o = order;
        while o < MAX_ORDER {
            let buddy = base ^ (1 << o);
            if !self.free[o as usize].remove(&buddy) {
                break;
            }
            base = base.min(buddy);
            o += 1;
        }
        self.free[o as usize].insert(base);
        Ok(())
    }

    /// Allocates exactly the order-0 frame `frame`.
    pub fn claim_frame(&mut self, frame: u64) -> Result<(), AllocError> {
        if frame >= self.frame_count {
            return Err(AllocError::OutOfRange(frame));
        }
        let (mut o, mut base) = (0..=MAX_ORDER)
            .map(|o| (o, frame & !((1u64 << o) - 1)))
            .find(|&(o, b)| self.free[o as usize].contains(&b))
            .ok_or(AllocError::FrameInUse(frame))?;
        self.free[o as usize].remove(&base);
        while o > 0 {
            o -= 1;
            let half = 1u64 << o;
            if frame >= base + half {
                self.free[o as usize].insert(base);
                base += half;
            } else {
                self.free[o as usize].insert(base + half);
            }
        }
        self.allocated.insert(frame, 0);
        self.used_frames += 1;
        Ok(())
    }

    /// Pins frames per `pattern`; returns how many were pinned.
    pub fn fragment(&mut self, pattern: Fragmentation) -> Result<u64, AllocError> {
        let Some(stride) = pattern.stride() else { return Ok(0) };
        let mut pinned = 0;
        let mut frame = 0;
        while frame < self.frame_count {
            self.claim_frame(frame)?;
            pinned += 1;
            frame += stride;
        }
        Ok(pinned)
    }

    /// Re-labels an allocated block as `2^(from - to)` allocated blocks of
    /// order `to`. Frames stay in use.
    pub fn split_allocation(&mut self, frame: u64, from: u8, to: u8) -> Result<(), AllocError> {
        debug_assert!(to <= from);
        match self.allocated.get(&frame) {
            Some(&o) if o == from => {}
            _ => return Err(AllocError::DoubleFree { frame, order: from }),
        }
        self.allocated.remove(&frame);
        for i in 0..(1u64 << (from - to)) {
            self.allocated.insert(frame + (i << to), to);
        }
        Ok(())
    }

    /// Current utilization, `consumed / peak`, clamped to `[0, 2]`.
    pub fn utilization(&self) -> f64 {
        if self.peak_bandwidth == 0 {
            return 0.0;
        }
        (self.consumed_bandwidth as f64 / self.peak_bandwidth as f64).clamp(0.0, 2.0)
    }

    pub fn consume(&mut self, bytes: u64) {
        self.consumed_bandwidth = self.consumed_bandwidth.saturating_add(bytes);
    }

    /// Checks the structural buddy invariants. Used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.free_list_frames() + self.used_frames != self.frame_count {
            return Err(format!(
                "free {} + used {} != {}",
                self.free_list_frames(),
                self.used_frames,
                self.frame_count
            ));
        }
        let mut spans: Vec<(u64, u64)> = Vec::new();
        for (o, set) in self.free.iter().enumerate() {
            for &b in set {
                if b % (1 << o) != 0 {
                    return Err(format!("free block {b} misaligned for order {o}"));
                }
                spans.push((b, b + (1 << o)));
            }
        }
        let used: u64 = self.allocated.values().map(|&o| 1u64 << o).sum();
        if used != self.used_frames {
            return Err(format!("allocated map holds {used} frames, counter says {}", self.used_frames));
        }
        for (&b, &o) in &self.allocated {
            spans.push((b, b + (1 << o)));
        }
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[0].1 > pair[1].0 {
                return Err(format!("overlap between {:?} and {:?}", pair[0], pair[1]));
            }
        }
        if spans.last().is_some_and(|s| s.1 > self.frame_count) {
            return Err("block past end of tier".into());
        }
        Ok(())
    }
}
