//! Deterministic two-tier memory simulator.
//!
//! Holds both tiers' frame allocators, the folio table mapping virtual
//! ranges to folios, and the policy hooks consulted on every NUMA hint
//! fault. A hint fault walks the hooks in kernel order: migration admission
//! first, then split-order selection, then per-subfolio cold checks, then
//! promotion of the surviving targets.

pub mod buddy;
pub mod report;
pub mod tlb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admission::{admit, classify_page, classify_traffic, Admission, TrafficWindow};
use crate::model::{
    subpage_index, AccessEvent, Address, DuplexMode, Folio, FolioOrder, PolicyConfig, TierId, HUGE_PAGE_SIZE,
    PAGE_SIZE,
};
use crate::profiling::{HistogramSnapshot, Sampler, SubpageHistogram};
use crate::rwsketch::DualBcbf;
use crate::split::{decide_split, hot_threshold, SplitDecision};

pub use buddy::{AllocError, Fragmentation, TierState};
pub use report::{FaultOutcome, FaultRecord, RunReport, SplitCounts, CSV_COLUMNS};
pub use tlb::TlbModel;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("address {0} is not mapped")]
    UnmappedAddress(Address),
    #[error("slow tier has no room for a demoted folio of order {order}")]
    SlowTierFull { order: u8 },
    #[error("workload needs {needed} huge pages but the slow tier fits {available}")]
    WorkloadTooLarge { needed: u64, available: u64 },
    #[error("folio at {0} is not on the slow tier")]
    NotSlowTier(Address),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("writing event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoding event log: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Migration policy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// Whole-THP promotion only.
    NoSplit,
    /// Split faulting THPs to 4 KB pages and promote the hot ones.
    Full4KSplit,
    /// Contention-gated mTHP splitting.
    TierBpf,
    /// mTHP splitting plus duplex-aware admission.
    TierBpfPlusAdmission,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::NoSplit, Policy::Full4KSplit, Policy::TierBpf, Policy::TierBpfPlusAdmission];

    pub fn name(self) -> &'static str {
        match self {
            Policy::NoSplit => "NoSplit",
            Policy::Full4KSplit => "Full4KSplit",
            Policy::TierBpf => "TierBpf",
            Policy::TierBpfPlusAdmission => "TierBpfPlusAdmission",
        }
    }

    pub fn hooks(self) -> HookRegistry {
        match self {
            Policy::NoSplit => HookRegistry::default(),
            Policy::Full4KSplit => HookRegistry {
                pick_split_order: SplitOrderHook::BasePages,
                subpage_is_cold: ColdHook::HotBasePages,
                migrate_admission: AdmissionHook::Default,
            },
            Policy::TierBpf => HookRegistry {
                pick_split_order: SplitOrderHook::HeatDensity,
                subpage_is_cold: ColdHook::HeatDensity,
                migrate_admission: AdmissionHook::Default,
            },
            Policy::TierBpfPlusAdmission => HookRegistry {
                pick_split_order: SplitOrderHook::HeatDensity,
                subpage_is_cold: ColdHook::HeatDensity,
                migrate_admission: AdmissionHook::DuplexAware,
            },
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    /// Accepts the display names case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Split-order hook. `Default` keeps the 2 MB folio whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitOrderHook {
    #[default]
    Default,
    /// Histogram-driven mTHP order, active only under slow-tier contention.
    HeatDensity,
    /// Always split to 4 KB.
    BasePages,
}

/// Per-subfolio cold check. `Default` reports every subfolio hot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ColdHook {
    #[default]
    Default,
    HeatDensity,
    HotBasePages,
}

/// Admission hook. `Default` allows everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdmissionHook {
    #[default]
    Default,
    DuplexAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HookRegistry {
    pub pick_split_order: SplitOrderHook,
    pub subpage_is_cold: ColdHook,
    pub migrate_admission: AdmissionHook,
}

/// Mechanism parameters of the simulated machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub fast_frames: u64,
    pub slow_frames: u64,
    pub fast_latency: f64,
    pub slow_latency: f64,
    /// Bytes per epoch at full utilization.
    pub fast_peak_bytes: u64,
    pub slow_peak_bytes: u64,
    /// Latency multiplier slope against utilization.
    pub penalty_slope: f64,
    /// Background slow-tier traffic as a percentage of `slow_peak_bytes`.
    pub contention_pct: f64,
    /// Share of background traffic that is writes.
    pub background_write_fraction: f64,
    pub epoch_events: u64,
    pub scan_interval: u64,
    pub scan_batch: usize,
    pub demote_watermark: f64,
    pub decay_shift: u32,
    /// Histogram decay runs every this many epochs.
    pub decay_every_epochs: u64,
    /// Read/write sketch halves every this many epochs.
    pub sketch_decay_every_epochs: u64,
    /// Below this many histogram samples the split hook has no signal.
    pub min_profile_samples: u64,
    pub line_bytes: u64,
    /// Latency units per 4 KB page copied on promotion.
    pub copy_cost_per_page: f64,
    /// Latency units per hint fault taken.
    pub fault_cost: f64,
    pub window_buckets: usize,
    pub fragmentation: Fragmentation,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            fast_frames: 16 * 1024,
            slow_frames: 64 * 1024,
            fast_latency: 1.0,
            slow_latency: 2.5,
            fast_peak_bytes: 8 << 30,
            slow_peak_bytes: 4 << 30,
            penalty_slope: 1.0,
            contention_pct: 0.0,
            background_write_fraction: 0.5,
            epoch_events: 32 * 1024,
            scan_interval: 2048,
            scan_batch: 64,
            demote_watermark: 0.9,
            decay_shift: 1,
            decay_every_epochs: 4,
            sketch_decay_every_epochs: 8,
            min_profile_samples: 512,
            line_bytes: 64,
            copy_cost_per_page: 8.0,
            fault_cost: 4.0,
            window_buckets: crate::admission::DEFAULT_WINDOW_BUCKETS,
            fragmentation: Fragmentation::None,
        }
    }
}

impl SimParams {
    pub fn background_bytes(&self) -> u64 {
        (self.slow_peak_bytes as f64 * self.contention_pct.max(0.0) / 100.0).round() as u64
    }
}

/// Destination for per-fault records.
#[derive(Default)]
pub enum EventLog {
    #[default]
    Off,
    Memory(Vec<FaultRecord>),
    Stream(Box<dyn Write + Send>),
}

impl EventLog {
    pub fn memory() -> Self {
        EventLog::Memory(Vec::new())
    }

    pub fn records(&self) -> &[FaultRecord] {
        match self {
            EventLog::Memory(v) => v,
            _ => &[],
        }
    }

    fn push(&mut self, rec: FaultRecord) -> Result<(), SimError> {
        match self {
            EventLog::Off => {}
            EventLog::Memory(v) => v.push(rec),
            EventLog::Stream(w) => {
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SimError> {
        if let EventLog::Stream(w) = self {
            w.flush()?;
        }
        Ok(())
    }
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventLog::Off => f.write_str("Off"),
            EventLog::Memory(v) => write!(f, "Memory({} records)", v.len()),
            EventLog::Stream(_) => f.write_str("Stream"),
        }
    }
}

#[derive(Debug, Clone)]
struct Mapping {
    folio: Folio,
    armed: bool,
}

/// Per-fault planning state derived from the split-order hook.
enum Plan {
    Whole,
    Split { order: FolioOrder, decision: Option<SplitDecision>, base_threshold: Option<u64> },
}

pub struct MemoryState {
    pub fast: TierState,
    pub slow: TierState,
    folios: BTreeMap<u64, Mapping>,
    pub hooks: HookRegistry,
    pub cfg: PolicyConfig,
    pub params: SimParams,
    pub tick: u64,
    next_id: u64,
    pub tlb: TlbModel,
    sampler: Sampler,
    pub histogram: SubpageHistogram,
    pub sketch: Option<DualBcbf>,
    pub window: TrafficWindow,
    report: RunReport,
    log: EventLog,
    scan_cursor: u64,
    since_scan: u64,
    since_epoch: u64,
    epochs: u64,
}

impl fmt::Debug for MemoryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryState")
            .field("tick", &self.tick)
            .field("folios", &self.folios.len())
            .field("fast_used", &self.fast.used_frames())
            .field("slow_used", &self.slow.used_frames())
            .finish()
    }
}

impl MemoryState {
    pub fn new(cfg: PolicyConfig, params: SimParams, hooks: HookRegistry) -> Result<Self, SimError> {
        let mut fast = TierState::new(TierId::Fast, params.fast_frames, params.fast_peak_bytes, params.fast_latency);
        fast.fragment(params.fragmentation)?;
        let slow = TierState::new(TierId::Slow, params.slow_frames, params.slow_peak_bytes, params.slow_latency);
        let sketch = (cfg.duplex_mode == DuplexMode::FullDuplex).then(DualBcbf::default);
        let mut ms = Self {
            fast,
            slow,
            folios: BTreeMap::new(),
            hooks,
            tlb: TlbModel::new(cfg.tlb_entries),
            sampler: Sampler::new(cfg.sample_prob, cfg.rng_seed),
            histogram: SubpageHistogram::new(),
            sketch,
            window: TrafficWindow::new(params.window_buckets),
            report: RunReport::default(),
            log: EventLog::Off,
            cfg,
            params,
            tick: 0,
            next_id: 0,
            scan_cursor: 0,
            since_scan: 0,
            since_epoch: 0,
            epochs: 0,
        };
        ms.start_epoch();
        Ok(ms)
    }

    pub fn with_policy(cfg: PolicyConfig, params: SimParams, policy: Policy) -> Result<Self, SimError> {
        Self::new(cfg, params, policy.hooks())
    }

    pub fn set_event_log(&mut self, log: EventLog) {
        self.log = log;
    }

    pub fn take_event_log(&mut self) -> EventLog {
        std::mem::take(&mut self.log)
    }

    /// Counters so far, with derived ratios filled in.
    pub fn report(&self) -> RunReport {
        let mut r = self.report.clone();
        r.tlb_hits = self.tlb.hits;
        r.tlb_misses = self.tlb.misses;
        r.finalize();
        r
    }

    pub fn folios(&self) -> impl Iterator<Item = &Folio> {
        self.folios.values().map(|m| &m.folio)
    }

    pub fn folio_at(&self, vaddr: Address) -> Option<&Folio> {
        self.lookup(vaddr).map(|base| &self.folios[&base].folio)
    }

    pub fn is_armed(&self, vaddr: Address) -> bool {
        self.lookup(vaddr).is_some_and(|b| self.folios[&b].armed)
    }

    /// Marks the folio holding `vaddr` so its next access takes a hint fault.
    pub fn arm(&mut self, vaddr: Address) -> bool {
        match self.lookup(vaddr) {
            Some(base) => {
                let m = self.folios.get_mut(&base).expect("present");
                m.armed = m.folio.tier == TierId::Slow;
                m.armed
            }
            None => false,
        }
    }

    pub fn load_histogram(&mut self, snapshot: &HistogramSnapshot) {
        self.histogram = SubpageHistogram::from_counts(&snapshot.counts);
    }

    fn tier_mut(&mut self, tier: TierId) -> &mut TierState {
        match tier {
            TierId::Fast => &mut self.fast,
            TierId::Slow => &mut self.slow,
        }
    }

    fn tier(&self, tier: TierId) -> &TierState {
        match tier {
            TierId::Fast => &self.fast,
            TierId::Slow => &self.slow,
        }
    }

    fn lookup(&self, vaddr: Address) -> Option<u64> {
        self.folios
            .range(..=vaddr.0)
            .next_back()
            .filter(|(_, m)| m.folio.contains(vaddr))
            .map(|(&base, _)| base)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Maps a folio of `order` at `vaddr` (aligned to the folio size).
    pub fn map_folio(&mut self, vaddr: Address, order: FolioOrder, tier: TierId) -> Result<u64, SimError> {
        debug_assert_eq!(vaddr.0 % order.size_bytes(), 0);
        let frame = self.tier_mut(tier).alloc_contiguous(order)?;
        let id = self.fresh_id();
        let folio = Folio { id, base_frame: frame, order, tier, owner_vaddr: vaddr, last_touch: self.tick };
        self.folios.insert(vaddr.0, Mapping { folio, armed: false });
        Ok(id)
    }

    /// Maps every 2 MB region in `bases` as a THP on the slow tier.
    pub fn map_workload(&mut self, bases: &BTreeSet<u64>) -> Result<(), SimError> {
        let available = self.slow.free_frames() / FolioOrder::THP.frames();
        if bases.len() as u64 > available {
            return Err(SimError::WorkloadTooLarge { needed: bases.len() as u64, available });
        }
        for &base in bases {
            self.map_folio(Address(base), FolioOrder::THP, TierId::Slow)?;
        }
        Ok(())
    }

    /// Applies one trace event and returns its access cost.
    pub fn access(&mut self, ev: &AccessEvent) -> Result<f64, SimError> {
        self.tick = self.tick.max(ev.tick);
        let mut base = self.lookup(ev.vaddr).ok_or(SimError::UnmappedAddress(ev.vaddr))?;

        if self.sampler.sample(ev) {
            self.histogram.record_sample(ev.vaddr);
            if let Some(sketch) = &self.sketch {
                sketch.record(ev.vaddr, ev.is_write);
            }
        }

        let m = self.folios.get_mut(&base).expect("present");
        if m.armed {
            m.armed = false;
            if m.folio.tier == TierId::Slow {
                self.fault(base, ev.vaddr)?;
                base = self.lookup(ev.vaddr).expect("faults keep coverage");
            }
        }

        let tick = self.tick;
        let m = self.folios.get_mut(&base).expect("present");
        m.folio.last_touch = tick;
        let (id, tier) = (m.folio.id, m.folio.tier);
        self.tlb.access(id);

        let cost = self.access_cost(tier);
        let line = self.params.line_bytes;
        self.tier_mut(tier).consume(line);
        if tier == TierId::Slow {
            if ev.is_write {
                self.window.record(0, line);
            } else {
                self.window.record(line, 0);
            }
        }
        self.report.latency_proxy_total += cost;
        self.report.events += 1;

        self.since_scan += 1;
        if self.since_scan >= self.params.scan_interval.max(1) {
            self.since_scan = 0;
            self.scan();
        }
        self.since_epoch += 1;
        if self.since_epoch >= self.params.epoch_events.max(1) {
            self.end_epoch()?;
        }
        Ok(cost)
    }

    /// `base_latency * (1 + slope * utilization)` for the tier right now.
    pub fn access_cost(&self, tier: TierId) -> f64 {
        let t = self.tier(tier);
        t.base_latency * (1.0 + self.params.penalty_slope * t.utilization())
    }

    /// Whether slow-tier bandwidth pressure currently enables splitting.
    pub fn contention_active(&self) -> bool {
        self.slow.utilization() > self.cfg.contention_gate
    }

    /// Arms up to `scan_batch` unarmed slow-tier folios, resuming after the
    /// last one armed and wrapping around the address space.
    pub fn scan(&mut self) -> usize {
        let batch = self.params.scan_batch;
        let cursor = self.scan_cursor;
        let picked: Vec<u64> = self
            .folios
            .range(cursor..)
            .chain(self.folios.range(..cursor))
            .filter(|(_, m)| m.folio.tier == TierId::Slow && !m.armed)
            .map(|(&b, _)| b)
            .take(batch)
            .collect();
        for &b in &picked {
            self.folios.get_mut(&b).expect("present").armed = true;
        }
        if let Some(&last) = picked.last() {
            self.scan_cursor = last + 1;
        }
        picked.len()
    }

    /// Runs the hint-fault pipeline for the slow-tier folio holding `vaddr`.
    pub fn hint_fault(&mut self, vaddr: Address) -> Result<FaultOutcome, SimError> {
        let base = self.lookup(vaddr).ok_or(SimError::UnmappedAddress(vaddr))?;
        if self.folios[&base].folio.tier != TierId::Slow {
            return Err(SimError::NotSlowTier(vaddr));
        }
        self.folios.get_mut(&base).expect("present").armed = false;
        self.fault(base, vaddr)
    }

    fn fault(&mut self, base: u64, fault_vaddr: Address) -> Result<FaultOutcome, SimError> {
        let folio = self.folios[&base].folio;
        self.report.hint_faults += 1;
        self.report.latency_proxy_total += self.params.fault_cost;
        let mut rec = FaultRecord {
            tick: self.tick,
            vaddr: fault_vaddr.0,
            folio_id: folio.id,
            folio_order: folio.order,
            admission: Admission::Allow,
            traffic: None,
            page_class: None,
            contention_active: self.contention_active(),
            split_order: None,
            split_reason: None,
            split_events: 0,
            children: 0,
            targets: 0,
            promoted: 0,
            failed: 0,
            bytes_migrated: 0,
            outcome: FaultOutcome::Promoted,
        };

        // Admission runs before anything else is decided.
        if self.hooks.migrate_admission == AdmissionHook::DuplexAware {
            if let Some(sketch) = &self.sketch {
                let traffic = classify_traffic(&self.window, self.cfg.traffic_theta);
                let page = classify_page(sketch, fault_vaddr, self.cfg.write_heavy_cut);
                rec.traffic = Some(traffic);
                rec.page_class = Some(page);
                rec.admission = admit(page, traffic, self.cfg.duplex_mode);
            }
        }
        if rec.admission == Admission::Prevent {
            self.report.admission_prevented += 1;
            match rec.page_class {
                Some(crate::model::RwClass::WriteHeavy) => self.report.prevented_write_heavy += 1,
                _ => self.report.prevented_read_heavy += 1,
            }
            rec.outcome = FaultOutcome::Deferred;
            self.log.push(rec)?;
            return Ok(FaultOutcome::Deferred);
        }
        self.report.admission_allowed += 1;

        let plan = self.plan_split(&folio, fault_vaddr, rec.contention_active);
        let migrated_before = self.report.bytes_migrated;
        match plan {
            Plan::Whole => {
                if let Some(ok) = self.promote(base)? {
                    if ok {
                        rec.promoted += 1;
                    } else {
                        rec.failed += 1;
                    }
                }
            }
            Plan::Split { order, decision, base_threshold } => {
                rec.split_order = Some(order);
                rec.split_reason = decision.as_ref().map(|d| d.reason);
                let children = self.split_folio(base, order)?;
                rec.split_events = 1;
                rec.children = children.len() as u32;
                self.report.splits_by_order.bump(order);
                let counts = self.histogram.snapshot().counts;
                let targets: Vec<u64> = children
                    .iter()
                    .copied()
                    .filter(|&child| {
                        let f = &self.folios[&child].folio;
                        f.contains(fault_vaddr) || !self.child_is_cold(f, decision.as_ref(), base_threshold, &counts)
                    })
                    .collect();
                rec.targets = targets.len() as u32;
                self.report.split_children += children.len() as u64;
                self.report.split_targets += targets.len() as u64;
                for child in targets {
                    match self.promote(child)? {
                        Some(true) => rec.promoted += 1,
                        Some(false) => rec.failed += 1,
                        None => {}
                    }
                }
            }
        }
        rec.bytes_migrated = self.report.bytes_migrated - migrated_before;
        rec.outcome = match (rec.promoted, rec.failed) {
            (_, 0) => FaultOutcome::Promoted,
            (0, _) => FaultOutcome::Failed,
            _ => FaultOutcome::Partial,
        };
        let outcome = rec.outcome;
        self.log.push(rec)?;
        Ok(outcome)
    }

    fn plan_split(&self, folio: &Folio, fault_vaddr: Address, contention_active: bool) -> Plan {
        match self.hooks.pick_split_order {
            SplitOrderHook::Default => Plan::Whole,
            SplitOrderHook::HeatDensity => {
                if !contention_active || folio.order <= FolioOrder::O64K {
                    return Plan::Whole;
                }
                let snap = self.histogram.snapshot();
                if snap.total < self.params.min_profile_samples.max(1) {
                    return Plan::Whole;
                }
                let decision = decide_split(&snap.counts, &self.cfg, subpage_index(fault_vaddr));
                if decision.order >= folio.order {
                    Plan::Whole
                } else {
                    Plan::Split { order: decision.order, decision: Some(decision), base_threshold: None }
                }
            }
            SplitOrderHook::BasePages => {
                if folio.order == FolioOrder::BASE {
                    return Plan::Whole;
                }
                let snap = self.histogram.snapshot();
                let threshold = hot_threshold(&snap.counts, self.cfg.coverage_p).ok().map(|t| t.threshold);
                Plan::Split { order: FolioOrder::BASE, decision: None, base_threshold: threshold }
            }
        }
    }

    fn child_is_cold(
        &self,
        child: &Folio,
        decision: Option<&SplitDecision>,
        base_threshold: Option<u64>,
        counts: &[u64; crate::model::SUBPAGES],
    ) -> bool {
        match self.hooks.subpage_is_cold {
            ColdHook::Default => false,
            ColdHook::HeatDensity => match decision {
                Some(d) => {
                    let window = subpage_index(child.owner_vaddr) / child.order.subpages();
                    !d.targets.contains(&window)
                }
                None => false,
            },
            ColdHook::HotBasePages => match base_threshold {
                Some(t) => counts[subpage_index(child.owner_vaddr)] < t,
                None => true,
            },
        }
    }

    /// Replaces the folio at `base` by aligned children of `order`.
    fn split_folio(&mut self, base: u64, order: FolioOrder) -> Result<Vec<u64>, SimError> {
        let parent = self.folios.remove(&base).expect("present").folio;
        debug_assert!(order < parent.order);
        self.tier_mut(parent.tier).split_allocation(parent.base_frame, parent.order.get(), order.get())?;
        self.tlb.invalidate(parent.id);
        let n = 1u64 << (parent.order.get() - order.get());
        let mut children = Vec::with_capacity(n as usize);
        for i in 0..n {
            let id = self.fresh_id();
            let vaddr = parent.owner_vaddr.0 + i * order.size_bytes();
            let folio = Folio {
                id,
                base_frame: parent.base_frame + i * order.frames(),
                order,
                tier: parent.tier,
                owner_vaddr: Address(vaddr),
                last_touch: parent.last_touch,
            };
            self.folios.insert(vaddr, Mapping { folio, armed: false });
            children.push(vaddr);
        }
        Ok(children)
    }

    /// Moves a slow-tier folio to the fast tier. `None` if it is not on the
    /// slow tier, otherwise whether the fast-tier allocation succeeded.
    fn promote(&mut self, base: u64) -> Result<Option<bool>, SimError> {
        let folio = self.folios[&base].folio;
        if folio.tier != TierId::Slow {
            return Ok(None);
        }
        let pages = folio.order.frames();
        let mut alloc = self.fast.alloc_contiguous(folio.order);
        let pressured =
            self.fast.free_frames() < pages || self.fast.used_fraction() > self.params.demote_watermark;
        if alloc.is_err() && pressured && self.reclaim(pages)? > 0 {
            alloc = self.fast.alloc_contiguous(folio.order);
        }
        match alloc {
            Ok(frame) => {
                self.slow.free_folio(folio.base_frame, folio.order).expect("slow folio allocated");
                let m = self.folios.get_mut(&base).expect("present");
                m.folio.tier = TierId::Fast;
                m.folio.base_frame = frame;
                m.armed = false;
                let bytes = folio.order.size_bytes();
                let copy = self.params.copy_cost_per_page
                    * pages as f64
                    * (1.0 + self.params.penalty_slope * self.slow.utilization());
                self.report.latency_proxy_total += copy;
                self.slow.consume(bytes);
                self.fast.consume(bytes);
                self.window.record(bytes, 0);
                self.report.promote_success += 1;
                self.report.promote_success_pages += pages;
                self.report.bytes_migrated += bytes;
                Ok(Some(true))
            }
            Err(_) => {
                self.report.promote_fail += 1;
                self.report.promote_fail_pages += pages;
                Ok(Some(false))
            }
        }
    }

    fn demote(&mut self, base: u64) -> Result<(), SimError> {
        let folio = self.folios[&base].folio;
        debug_assert_eq!(folio.tier, TierId::Fast);
        let frame = self
            .slow
            .alloc_contiguous(folio.order)
            .map_err(|_| SimError::SlowTierFull { order: folio.order.get() })?;
        self.fast.free_folio(folio.base_frame, folio.order)?;
        let m = self.folios.get_mut(&base).expect("present");
        m.folio.tier = TierId::Slow;
        m.folio.base_frame = frame;
        m.armed = false;
        let bytes = folio.order.size_bytes();
        self.slow.consume(bytes);
        self.fast.consume(bytes);
        self.window.record(0, bytes);
        self.report.demotions += 1;
        self.report.demoted_pages += folio.order.frames();
        self.report.bytes_migrated += bytes;
        Ok(())
    }

    /// Demotes least-recently-touched fast-tier folios until the fast tier's
    /// used fraction is at or below `watermark`.
    pub fn demote_if_pressured(&mut self, watermark: f64) -> Result<u64, SimError> {
        self.demote_lru(|fast| fast.used_fraction() <= watermark)
    }

    /// Direct reclaim when a promotion finds too few free fast frames:
    /// demote down to the epoch watermark, and at least until `pages` fit.
    fn reclaim(&mut self, pages: u64) -> Result<u64, SimError> {
        let watermark = self.params.demote_watermark;
        self.demote_lru(|fast| fast.free_frames() >= pages && fast.used_fraction() <= watermark)
    }

    fn demote_lru(&mut self, done: impl Fn(&TierState) -> bool) -> Result<u64, SimError> {
        if done(&self.fast) {
            return Ok(0);
        }
        let mut lru: Vec<(u64, u64, u64)> = self
            .folios
            .iter()
            .filter(|(_, m)| m.folio.tier == TierId::Fast)
            .map(|(&b, m)| (m.folio.last_touch, m.folio.id, b))
            .collect();
        lru.sort_unstable();
        let mut demoted = 0;
        for (_, _, base) in lru {
            if done(&self.fast) {
                break;
            }
            self.demote(base)?;
            demoted += 1;
        }
        Ok(demoted)
    }

    fn start_epoch(&mut self) {
        let bg = self.params.background_bytes();
        self.slow.consumed_bandwidth = bg;
        self.fast.consumed_bandwidth = 0;
        let writes = (bg as f64 * self.params.background_write_fraction.clamp(0.0, 1.0)).round() as u64;
        self.window.record(bg - writes, writes);
    }

    /// Epoch boundary: decay profiles, demote under pressure, slide the
    /// traffic window and reapply background load.
    pub fn end_epoch(&mut self) -> Result<(), SimError> {
        self.epochs += 1;
        self.since_epoch = 0;
        if self.epochs.is_multiple_of(self.params.decay_every_epochs.max(1)) {
            self.histogram.decay(self.params.decay_shift);
        }
        if let Some(sketch) = &self.sketch {
            if self.epochs.is_multiple_of(self.params.sketch_decay_every_epochs.max(1)) {
                sketch.decay();
            }
        }
        let demoted = self.demote_if_pressured(self.params.demote_watermark)?;
        debug!(
            "epoch {} done: slow util {:.3}, fast used {:.3}, demoted {}",
            self.epochs,
            self.slow.utilization(),
            self.fast.used_fraction(),
            demoted
        );
        self.window.rotate();
        self.start_epoch();
        Ok(())
    }

    /// Structural checks: buddy invariants, non-overlapping folios, and
    /// agreement between folios and allocator records.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.fast.check_invariants()?;
        self.slow.check_invariants()?;
        let mut prev_end = 0u64;
        for (&base, m) in &self.folios {
            let f = &m.folio;
            if base != f.owner_vaddr.0 {
                return Err(format!("folio keyed at {base:#x} owns {}", f.owner_vaddr));
            }
            if base < prev_end {
                return Err(format!("folio at {base:#x} overlaps its predecessor"));
            }
            if f.base_frame % f.order.frames() != 0 || base % f.order.size_bytes() != 0 {
                return Err(format!("folio {} misaligned", f.id));
            }
            if self.tier(f.tier).allocated_order(f.base_frame) != Some(f.order.get()) {
                return Err(format!("folio {} frames not allocated on {:?}", f.id, f.tier));
            }
            prev_end = base + f.order.size_bytes();
        }
        let mut regions: BTreeMap<u64, u64> = BTreeMap::new();
        for f in self.folios() {
            *regions.entry(f.owner_vaddr.huge_base().0).or_default() += f.order.size_bytes();
        }
        if let Some((r, bytes)) = regions.iter().find(|(_, &b)| b != HUGE_PAGE_SIZE) {
            return Err(format!("region {r:#x} covered by {bytes} bytes"));
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(RunReport, EventLog), SimError> {
        self.log.flush()?;
        let report = self.report();
        Ok((report, self.log))
    }
}

/// Distinct 2 MB region bases touched by `events`.
pub fn huge_bases(events: &[AccessEvent]) -> BTreeSet<u64> {
    events.iter().map(|e| e.vaddr.huge_base().0).collect()
}

/// Runs a whole trace through a fresh simulator.
pub fn run_scenario(
    cfg: &PolicyConfig,
    params: &SimParams,
    policy: Policy,
    events: &[AccessEvent],
    log: EventLog,
) -> Result<(RunReport, EventLog), SimError> {
    let mut ms = MemoryState::with_policy(cfg.clone(), params.clone(), policy)?;
    ms.set_event_log(log);
    ms.map_workload(&huge_bases(events))?;
    for ev in events {
        ms.access(ev)?;
    }
    ms.finish()
}

/// Bytes in one 4 KB page, for report conversions.
pub const PAGE_BYTES: u64 = PAGE_SIZE;

#[cfg(test)]
mod tests;
