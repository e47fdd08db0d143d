//! Dual blocked counting Bloom filter for per-page read/write estimates.
//!
//! Each key hashes to one 64-byte block and to `k` distinct 8-bit counters
//! inside it, so a lookup or update touches a single cache line. `get`
//! returns the minimum of the key's counters and `update` increments only
//! the counters currently at that minimum (conservative update), which keeps
//! the estimate an upper bound of the true count until saturation.

use std::sync::atomic::{AtomicU8, Ordering};

use crate::model::{Address, RwClass};

/// Counters per block: one 64-byte cache line of 8-bit counters.
pub const BLOCK_COUNTERS: usize = 64;
pub const DEFAULT_BLOCKS: usize = 4096;
pub const DEFAULT_HASHES: usize = 4;

const READ_SEED: u64 = 0x9ae1_6a3b_2f90_404f;
const WRITE_SEED: u64 = 0xc3a5_c85c_97cb_3127;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug)]
pub struct BlockedCbf {
    blocks: Box<[[AtomicU8; BLOCK_COUNTERS]]>,
    k: usize,
    hash_seed: u64,
}

impl Clone for BlockedCbf {
    fn clone(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| std::array::from_fn(|i| AtomicU8::new(b[i].load(Ordering::Relaxed))))
            .collect();
        Self { blocks, k: self.k, hash_seed: self.hash_seed }
    }
}

impl BlockedCbf {
    /// # Panics
    ///
    /// If `blocks` is zero or `k` is not in `1..=64`.
    pub fn new(blocks: usize, k: usize, hash_seed: u64) -> Self {
        assert!(blocks > 0, "bCBF needs at least one block");
        assert!((1..=BLOCK_COUNTERS).contains(&k), "k must be in 1..=64");
        let blocks = (0..blocks).map(|_| std::array::from_fn(|_| AtomicU8::new(0))).collect();
        Self { blocks, k, hash_seed }
    }

    pub fn with_defaults(hash_seed: u64) -> Self {
        Self::new(DEFAULT_BLOCKS, DEFAULT_HASHES, hash_seed)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn hashes(&self) -> usize {
        self.k
    }

    pub fn size_bytes(&self) -> usize {
        self.blocks.len() * BLOCK_COUNTERS
    }

    /// Block index and the `k` distinct in-block counter indices for `page`.
    pub(crate) fn locate(&self, page: Address) -> (usize, [u8; BLOCK_COUNTERS]) {
        let key = page.page_number();
        let h1 = mix64(key ^ self.hash_seed);
        let block = (h1 % self.blocks.len() as u64) as usize;
        let mut h2 = mix64(h1 ^ 0x2545_f491_4f6c_dd1d);
        let mut idx = [0u8; BLOCK_COUNTERS];
        let mut used = 0u64;
        for slot in idx.iter_mut().take(self.k) {
            if h2 == 0 {
                h2 = mix64(h1.wrapping_add(used));
            }
            let mut i = (h2 & 63) as u8;
            h2 >>= 6;
            while used & (1 << i) != 0 {
                i = (i + 1) & 63;
            }
            used |= 1 << i;
            *slot = i;
        }
        (block, idx)
    }

    /// Conservative update: increments the key's counters that sit at the
    /// current minimum. Saturates silently at 255.
    pub fn update(&self, page: Address) {
        let (b, idx) = self.locate(page);
        let block = &self.blocks[b];
        let idx = &idx[..self.k];
        let min = idx.iter().map(|&i| block[i as usize].load(Ordering::Relaxed)).min().unwrap_or(0);
        if min == u8::MAX {
            return;
        }
        for &i in idx {
            // A failed exchange means a concurrent update already raised it.
            let _ = block[i as usize].compare_exchange(min, min + 1, Ordering::Relaxed, Ordering::Relaxed);
        }
    }

    pub fn get(&self, page: Address) -> u8 {
        let (b, idx) = self.locate(page);
        let block = &self.blocks[b];
        idx[..self.k].iter().map(|&i| block[i as usize].load(Ordering::Relaxed)).min().unwrap_or(0)
    }

    /// Halves every counter.
    pub fn decay(&self) {
        for block in self.blocks.iter() {
            for c in block {
                let _ = c.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |v| Some(v >> 1));
            }
        }
    }

    /// Fraction of counters that are nonzero.
    pub fn load_factor(&self) -> f64 {
        let nonzero: usize = self
            .blocks
            .iter()
            .map(|b| b.iter().filter(|c| c.load(Ordering::Relaxed) != 0).count())
            .sum();
        nonzero as f64 / self.size_bytes() as f64
    }

    #[cfg(test)]
    fn set_counter(&self, block: usize, idx: usize, value: u8) {
        self.blocks[block][idx].store(value, Ordering::Relaxed);
    }

    #[cfg(test)]
    fn update_all(&self, page: Address) {
        let (b, idx) = self.locate(page);
        for &i in &idx[..self.k] {
            let _ = self.blocks[b][i as usize].fetch_update(Ordering::Relaxed, Ordering::Relaxed, |v| v.checked_add(1));
        }
    }
}

/// Paired read and write filters with distinct hash seeds.
#[derive(Debug, Clone)]
pub struct DualBcbf {
    pub reads: BlockedCbf,
    pub writes: BlockedCbf,
}

impl Default for DualBcbf {
    fn default() -> Self {
        Self::new(DEFAULT_BLOCKS, DEFAULT_HASHES)
    }
}

impl DualBcbf {
    pub fn new(blocks: usize, k: usize) -> Self {
        Self { reads: BlockedCbf::new(blocks, k, READ_SEED), writes: BlockedCbf::new(blocks, k, WRITE_SEED) }
    }

    pub fn record(&self, page: Address, is_write: bool) {
        if is_write {
            self.writes.update(page);
        } else {
            self.reads.update(page);
        }
    }

    /// `w_min / (w_min + r_min)`; a page never seen counts as read-only.
    pub fn write_ratio(&self, page: Address) -> f64 {
        ratio(self.writes.get(page), self.reads.get(page))
    }

    pub fn classify(&self, page: Address, cut: f64) -> RwClass {
        classify_ratio(self.write_ratio(page), cut)
    }

    pub fn decay(&self) {
        self.reads.decay();
        self.writes.decay();
    }
}

pub(crate) fn ratio(w_min: u8, r_min: u8) -> f64 {
    let sum = w_min as u32 + r_min as u32;
    if sum == 0 {
        0.0
    } else {
        w_min as f64 / sum as f64
    }
}

pub(crate) fn classify_ratio(write_ratio: f64, cut: f64) -> RwClass {
    if write_ratio >= cut {
        RwClass::WriteHeavy
    } else {
        RwClass::ReadHeavy
    }
}
