//! Sampling-based access profiling.
//!
//! Sampled accesses from every huge page of a workload are folded into one
//! fixed 512-slot histogram indexed by subpage offset. The histogram never
//! grows with the working set: it is always 512 counters of 8 bytes.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{subpage_index, AccessEvent, Address, SUBPAGES};

/// Cap on shifts applied by a single [`SubpageHistogram::decay`] call.
pub const MAX_DECAY_SHIFT: u32 = 10;

/// Bernoulli sampler standing in for a hardware event sampler.
#[derive(Debug, Clone)]
pub struct Sampler {
    sample_prob: f64,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(sample_prob: f64, seed: u64) -> Self {
        Self { sample_prob: sample_prob.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample_prob(&self) -> f64 {
        self.sample_prob
    }

    /// Decides whether `ev` is sampled. One PRNG draw per call, whatever the
    /// probability, so equal seeds give equal sequences.
    pub fn sample(&mut self, _ev: &AccessEvent) -> bool {
        let draw: f64 = self.rng.random();
        draw < self.sample_prob
    }
}

/// Global subpage histogram.
///
/// Counters are atomics so concurrent recorders are tolerated; the simulator
/// drives it from one thread.
#[derive(Debug)]
pub struct SubpageHistogram {
    counts: Box<[AtomicU64; SUBPAGES]>,
    total: AtomicU64,
}

impl Default for SubpageHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for SubpageHistogram {
    fn clone(&self) -> Self {
        Self::from_counts(&self.snapshot().counts)
    }
}

fn saturating_inc(counter: &AtomicU64) {
    let _ = counter.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |c| c.checked_add(1));
}

impl SubpageHistogram {
    pub fn new() -> Self {
        Self { counts: Box::new(std::array::from_fn(|_| AtomicU64::new(0))), total: AtomicU64::new(0) }
    }

    pub fn from_counts(counts: &[u64; SUBPAGES]) -> Self {
        let hist = Self::new();
        for (slot, &c) in hist.counts.iter().zip(counts.iter()) {
            slot.store(c, Ordering::Relaxed);
        }
        hist.recompute_total();
        hist
    }

    pub fn record_sample(&self, vaddr: Address) {
        saturating_inc(&self.counts[subpage_index(vaddr)]);
        saturating_inc(&self.total);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn count(&self, slot: usize) -> u64 {
        self.counts[slot].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> HistogramSnapshot {
        let counts: [u64; SUBPAGES] = std::array::from_fn(|i| self.counts[i].load(Ordering::Relaxed));
        HistogramSnapshot::new(counts)
    }

    /// Right-shifts every counter by `min(shift, 10)` and recomputes the total.
    pub fn decay(&self, shift: u32) {
        let shift = shift.min(MAX_DECAY_SHIFT);
        if shift == 0 {
            return;
        }
        for c in self.counts.iter() {
            let _ = c.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |v| Some(v >> shift));
        }
        self.recompute_total();
    }

    pub fn reset(&self) {
        for c in self.counts.iter() {
            c.store(0, Ordering::Relaxed);
        }
        self.total.store(0, Ordering::Relaxed);
    }

    fn recompute_total(&self) {
        let sum = self
            .counts
            .iter()
            .fold(0u64, |acc, c| acc.saturating_add(c.load(Ordering::Relaxed)));
        self.total.store(sum, Ordering::Relaxed);
    }

    /// Serialized form: the 512 counters as little-endian `u64`, 4096 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.snapshot().to_bytes()
    }
}

/// Point-in-time copy of the histogram counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramSnapshot {
    pub counts: [u64; SUBPAGES],
    pub total: u64,
}

#[derive(Debug, Error)]
pub enum HistogramCsvError {
    #[error("histogram CSV is empty")]
    Empty,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("expected {SUBPAGES} slots, found {0}")]
    WrongRowCount(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HistogramSnapshot {
    pub fn new(counts: [u64; SUBPAGES]) -> Self {
        let total = counts.iter().fold(0u64, |acc, &c| acc.saturating_add(c));
        Self { counts, total }
    }

    pub fn zeroed() -> Self {
        Self::new([0; SUBPAGES])
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.counts.iter().flat_map(|c| c.to_le_bytes()).collect()
    }

    /// Writes `slot,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "slot,count")?;
        for (slot, count) in self.counts.iter().enumerate() {
            writeln!(out, "{slot},{count}")?;
        }
        Ok(())
    }

    /// Parses the format produced by [`write_csv`](Self::write_csv). The
    /// header line is optional; all 512 slots must appear exactly once.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, HistogramCsvError> {
        let mut counts = [0u64; SUBPAGES];
        let mut seen = [false; SUBPAGES];
        let mut rows = 0usize;
        let mut any_line = false;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            any_line = true;
            if idx == 0 && trimmed.eq_ignore_ascii_case("slot,count") {
                continue;
            }
            let (slot, count) = trimmed
                .split_once(',')
                .ok_or_else(|| HistogramCsvError::Malformed { line: lineno, msg: "expected slot,count".into() })?;
            let slot: usize = slot.trim().parse().map_err(|e| HistogramCsvError::Malformed {
                line: lineno,
                msg: format!("bad slot {slot:?}: {e}"),
            })?;
            let count: u64 = count.trim().parse().map_err(|e| HistogramCsvError::Malformed {
                line: lineno,
                msg: format!("bad count {count:?}: {e}"),
            })?;
            if slot >= SUBPAGES {
                return Err(HistogramCsvError::Malformed { line: lineno, msg: format!("slot {slot} out of range") });
            }
            if seen[slot] {
                return Err(HistogramCsvError::Malformed { line: lineno, msg: format!("duplicate slot {slot}") });
            }
            seen[slot] = true;
            counts[slot] = count;
            rows += 1;
        }
        if !any_line {
            return Err(HistogramCsvError::Empty);
        }
        if rows != SUBPAGES {
            return Err(HistogramCsvError::WrongRowCount(rows));
        }
        Ok(Self::new(counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HUGE_PAGE_SIZE;

    fn ev(vaddr: u64) -> AccessEvent {
        AccessEvent::new(0, vaddr, false)
    }

    #[test]
    fn sampler_extremes() {
        let mut always = Sampler::new(1.0, 3);
        let mut never = Sampler::new(0.0, 3);
        for i in 0..1000 {
            assert!(always.sample(&ev(i)));
            assert!(!never.sample(&ev(i)));
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let mut a = Sampler::new(0.3, 11);
        let mut b = Sampler::new(0.3, 11);
        let xs: Vec<bool> = (0..500).map(|i| a.sample(&ev(i))).collect();
        let ys: Vec<bool> = (0..500).map(|i| b.sample(&ev(i))).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn record_sample_examples() {
        let h = SubpageHistogram::new();
        h.record_sample(Address(0x4000));
        assert_eq!(h.count(4), 1);
        assert_eq!(h.total(), 1);

        let h = SubpageHistogram::new();
        h.record_sample(Address(0));
        h.record_sample(Address(HUGE_PAGE_SIZE));
        assert_eq!(h.count(0), 2);
    }

    #[test]
    fn record_conserves_total() {
        let h = SubpageHistogram::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            h.record_sample(Address(rng.random_range(0..HUGE_PAGE_SIZE)));
        }
        assert_eq!(h.total(), 1000);
        assert_eq!(h.snapshot().counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn counters_saturate() {
        let mut counts = [0u64; SUBPAGES];
        counts[3] = u64::MAX;
        let h = SubpageHistogram::from_counts(&counts);
        h.record_sample(Address(3 * 4096));
        assert_eq!(h.count(3), u64::MAX);
        assert_eq!(h.total(), u64::MAX);
    }

    #[test]
    fn snapshot_is_a_copy() {
        let h = SubpageHistogram::new();
        let empty = h.snapshot();
        assert!(empty.counts.iter().all(|&c| c == 0));
        assert_eq!(empty.total, 0);

        h.record_sample(Address(4 * 4096));
        let snap = h.snapshot();
        assert_eq!(snap.counts[4], 1);
        h.record_sample(Address(4 * 4096));
        assert_eq!(snap.counts[4], 1);
        assert_eq!(h.count(4), 2);
    }

    #[test]
    fn decay_examples() {
        let h = SubpageHistogram::from_counts(&[8; SUBPAGES]);
        h.decay(1);
        assert!(h.snapshot().counts.iter().all(|&c| c == 4));
        assert_eq!(h.total(), 2048);

        h.decay(0);
        assert_eq!(h.total(), 2048);

        let mut counts = [0u64; SUBPAGES];
        counts[0] = 1;
        let h = SubpageHistogram::from_counts(&counts);
        h.decay(3);
        assert_eq!(h.count(0), 0);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn decay_shift_is_capped() {
        let h = SubpageHistogram::from_counts(&[1 << 20; SUBPAGES]);
        h.decay(63);
        assert_eq!(h.count(0), 1 << 10);
    }

    #[test]
    fn serialized_size_is_constant() {
        let h = SubpageHistogram::new();
        assert_eq!(h.to_bytes().len(), 4096);
        for i in 0..10_000u64 {
            h.record_sample(Address(i * 4096 * 37));
        }
        assert_eq!(h.to_bytes().len(), 4096);
    }

    #[test]
    fn csv_round_trip() {
        let mut counts = [0u64; SUBPAGES];
        counts[10] = 5;
        counts[511] = 9;
        let snap = HistogramSnapshot::new(counts);
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), SUBPAGES + 1);
        let back = HistogramSnapshot::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(HistogramSnapshot::read_csv("".as_bytes()), Err(HistogramCsvError::Empty)));
        assert!(matches!(
            HistogramSnapshot::read_csv("slot,count\n0,1\n".as_bytes()),
            Err(HistogramCsvError::WrongRowCount(1))
        ));
        assert!(matches!(
            HistogramSnapshot::read_csv("0,abc\n".as_bytes()),
            Err(HistogramCsvError::Malformed { .. })
        ));
    }
}
