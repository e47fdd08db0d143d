//! Run counters, per-fault records and the results CSV schema.

use serde::{Deserialize, Serialize};

use crate::admission::Admission;
use crate::model::{FolioOrder, RwClass, TrafficClass};
use crate::split::SplitReason;

/// Column order of `results.csv`. Part of the external contract.
pub const CSV_COLUMNS: [&str; 19] = [
    "scenario",
    "policy",
    "contention_pct",
    "promote_success",
    "promote_fail",
    "demotions",
    "split_64k",
    "split_128k",
    "split_256k",
    "split_512k",
    "split_1m",
    "hot_subfolio_pct",
    "tlb_mpki",
    "bytes_migrated",
    "admit_allowed",
    "admit_prevented",
    "latency_total",
    "throughput_proxy",
    "seed",
];

/// Split events per chosen order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub split_4k: u64,
    pub split_64k: u64,
    pub split_128k: u64,
    pub split_256k: u64,
    pub split_512k: u64,
    pub split_1m: u64,
}

impl SplitCounts {
    pub fn bump(&mut self, order: FolioOrder) {
        match order.get() {
            0 => self.split_4k += 1,
            4 => self.split_64k += 1,
            5 => self.split_128k += 1,
            6 => self.split_256k += 1,
            7 => self.split_512k += 1,
            8 => self.split_1m += 1,
            _ => {}
        }
    }

    pub fn get(&self, order: FolioOrder) -> u64 {
        match order.get() {
            0 => self.split_4k,
            4 => self.split_64k,
            5 => self.split_128k,
            6 => self.split_256k,
            7 => self.split_512k,
            8 => self.split_1m,
            _ => 0,
        }
    }

    /// Splits into mTHP sizes, 64 KB through 1 MB.
    pub fn mthp_total(&self) -> u64 {
        self.split_64k + self.split_128k + self.split_256k + self.split_512k + self.split_1m
    }

    pub fn total(&self) -> u64 {
        self.split_4k + self.mthp_total()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub events: u64,
    pub hint_faults: u64,
    /// Folio-granularity promotion counters.
    pub promote_success: u64,
    pub promote_fail: u64,
    /// The same promotions counted in 4 KB pages.
    pub promote_success_pages: u64,
    pub promote_fail_pages: u64,
    pub demotions: u64,
    pub demoted_pages: u64,
    pub splits_by_order: SplitCounts,
    pub split_children: u64,
    pub split_targets: u64,
    pub hot_subfolio_fraction: f64,
    pub tlb_hits: u64,
    pub tlb_misses: u64,
    pub tlb_misses_per_1k: f64,
    pub bytes_migrated: u64,
    pub admission_allowed: u64,
    pub admission_prevented: u64,
    pub prevented_read_heavy: u64,
    pub prevented_write_heavy: u64,
    pub latency_proxy_total: f64,
    pub throughput_proxy: f64,
}

impl RunReport {
    /// Fills the derived ratios from the raw counters.
    pub(crate) fn finalize(&mut self) {
        self.hot_subfolio_fraction =
            if self.split_children == 0 { 0.0 } else { self.split_targets as f64 / self.split_children as f64 };
        self.tlb_misses_per_1k =
            if self.events == 0 { 0.0 } else { self.tlb_misses as f64 * 1000.0 / self.events as f64 };
        self.throughput_proxy =
            if self.latency_proxy_total <= 0.0 { 0.0 } else { self.events as f64 / self.latency_proxy_total };
    }

    pub fn promote_attempts(&self) -> u64 {
        self.promote_success + self.promote_fail
    }

    /// One `results.csv` row in [`CSV_COLUMNS`] order.
    pub fn csv_fields(&self, scenario: &str, policy: &str, contention_pct: f64, seed: u64) -> Vec<String> {
        let s = &self.splits_by_order;
        vec![
            scenario.to_string(),
            policy.to_string(),
            format_pct(contention_pct),
            self.promote_success.to_string(),
            self.promote_fail.to_string(),
            self.demotions.to_string(),
            s.split_64k.to_string(),
            s.split_128k.to_string(),
            s.split_256k.to_string(),
            s.split_512k.to_string(),
            s.split_1m.to_string(),
            format!("{:.4}", self.hot_subfolio_fraction * 100.0),
            format!("{:.4}", self.tlb_misses_per_1k),
            self.bytes_migrated.to_string(),
            self.admission_allowed.to_string(),
            self.admission_prevented.to_string(),
            format!("{:.3}", self.latency_proxy_total),
            format!("{:.9}", self.throughput_proxy),
            seed.to_string(),
        ]
    }
}

fn format_pct(pct: f64) -> String {
    if pct.fract() == 0.0 {
        format!("{}", pct as i64)
    } else {
        format!("{pct}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultOutcome {
    /// Admission held the page back; nothing moved.
    Deferred,
    /// Every attempted migration succeeded.
    Promoted,
    /// Some targets moved, some failed.
    Partial,
    /// Every attempted migration failed.
    Failed,
}

/// One line of the per-fault event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub tick: u64,
    pub vaddr: u64,
    pub folio_id: u64,
    pub folio_order: FolioOrder,
    pub admission: Admission,
    pub traffic: Option<TrafficClass>,
    pub page_class: Option<RwClass>,
    pub contention_active: bool,
    pub split_order: Option<FolioOrder>,
    pub split_reason: Option<SplitReason>,
    pub split_events: u32,
    pub children: u32,
    pub targets: u32,
    pub promoted: u32,
    pub failed: u32,
    pub bytes_migrated: u64,
    pub outcome: FaultOutcome,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_matches_columns() {
        let r = RunReport::default();
        let row = r.csv_fields("s", "TierBpf", 25.0, 7);
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(row[2], "25");
        assert_eq!(row[18], "7");
    }

    #[test]
    fn finalize_handles_empty_runs() {
        let mut r = RunReport::default();
        r.finalize();
        assert_eq!(r.hot_subfolio_fraction, 0.0);
        assert_eq!(r.tlb_misses_per_1k, 0.0);
        assert_eq!(r.throughput_proxy, 0.0);
    }

    #[test]
    fn split_counts_by_order() {
        let mut s = SplitCounts::default();
        s.bump(FolioOrder::O512K);
        s.bump(FolioOrder::BASE);
        s.bump(FolioOrder::THP);
        assert_eq!(s.get(FolioOrder::O512K), 1);
        assert_eq!(s.mthp_total(), 1);
        assert_eq!(s.total(), 2);
    }
}
