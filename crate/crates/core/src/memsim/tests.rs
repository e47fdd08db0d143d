use super::*;
use crate::model::SUBPAGES;
use crate::workload::{generate, TraceKind, TraceSpec};

const MB: u64 = 1 << 20;

fn small_params() -> SimParams {
    SimParams { fast_frames: 4096, slow_frames: 8192, ..SimParams::default() }
}

fn state(params: SimParams, policy: Policy) -> MemoryState {
    MemoryState::with_policy(PolicyConfig::default(), params, policy).unwrap()
}

fn hot128() -> HistogramSnapshot {
    let mut counts = [0u64; SUBPAGES];
    counts[..128].iter_mut().for_each(|c| *c = 10);
    HistogramSnapshot::new(counts)
}

#[test]
fn fast_access_on_idle_system_costs_base_latency() {
    let mut ms = state(small_params(), Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Fast).unwrap();
    let cost = ms.access(&AccessEvent::new(0, 0x40, false)).unwrap();
    assert_eq!(cost, ms.params.fast_latency);
}

#[test]
fn saturated_slow_tier_doubles_latency() {
    let params = SimParams { contention_pct: 100.0, penalty_slope: 1.0, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    let cost = ms.access(&AccessEvent::new(0, 0x40, false)).unwrap();
    assert_eq!(cost, 2.0 * ms.params.slow_latency);
}

#[test]
fn repeat_access_hits_tlb() {
    let mut ms = state(small_params(), Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    ms.access(&AccessEvent::new(0, 0, false)).unwrap();
    ms.access(&AccessEvent::new(1, 4096, false)).unwrap();
    assert_eq!((ms.tlb.hits, ms.tlb.misses), (1, 1));
}

#[test]
fn unmapped_access_is_an_error() {
    let mut ms = state(small_params(), Policy::NoSplit);
    assert!(matches!(ms.access(&AccessEvent::new(0, 0x1234, false)), Err(SimError::UnmappedAddress(_))));
}

#[test]
fn default_hooks_promote_whole_thp() {
    let mut ms = MemoryState::new(PolicyConfig::default(), small_params(), HookRegistry::default()).unwrap();
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    assert_eq!(ms.hint_fault(Address(0x1000)).unwrap(), FaultOutcome::Promoted);
    let r = ms.report();
    assert_eq!(r.promote_success, 1);
    assert_eq!(r.bytes_migrated, 2 * MB);
    assert_eq!(ms.folio_at(Address(0)).unwrap().tier, TierId::Fast);
    ms.check_invariants().unwrap();
}

#[test]
fn hint_fault_rejects_fast_folio() {
    let mut ms = state(small_params(), Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Fast).unwrap();
    assert!(matches!(ms.hint_fault(Address(0)), Err(SimError::NotSlowTier(_))));
}

#[test]
fn tierbpf_splits_around_fragmentation() {
    let params = SimParams {
        contention_pct: 100.0,
        fragmentation: Fragmentation::Pinned { stride_frames: 512 },
        ..small_params()
    };
    let mut ms = state(params, Policy::TierBpf);
    assert_eq!(ms.fast.largest_free_order(), Some(8));
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    ms.load_histogram(&hot128());
    ms.set_event_log(EventLog::memory());
    ms.hint_fault(Address(0x2000)).unwrap();
    let r = ms.report();
    assert_eq!(r.splits_by_order.split_512k, 1);
    assert_eq!(r.promote_success, 1);
    assert_eq!(r.promote_fail, 0);
    assert_eq!(r.bytes_migrated, 512 * 1024);
    let f = ms.folio_at(Address(0x2000)).unwrap();
    assert_eq!((f.order, f.tier), (FolioOrder::O512K, TierId::Fast));
    for off in [1, 2, 3] {
        assert_eq!(ms.folio_at(Address(off * 512 * 1024)).unwrap().tier, TierId::Slow);
    }
    let log = ms.take_event_log();
    let rec = &log.records()[0];
    assert_eq!((rec.children, rec.targets, rec.promoted), (4, 1, 1));
    ms.check_invariants().unwrap();
}

#[test]
fn no_split_fails_on_same_fragmentation() {
    let params = SimParams { fragmentation: Fragmentation::Pinned { stride_frames: 512 }, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    assert_eq!(ms.hint_fault(Address(0)).unwrap(), FaultOutcome::Failed);
    let r = ms.report();
    assert_eq!((r.promote_success, r.promote_fail, r.promote_fail_pages), (0, 1, 512));
    assert_eq!(ms.folio_at(Address(0)).unwrap().tier, TierId::Slow);
}

#[test]
fn splitting_waits_for_contention() {
    let mut ms = state(small_params(), Policy::TierBpf);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    ms.load_histogram(&hot128());
    ms.hint_fault(Address(0)).unwrap();
    let r = ms.report();
    assert_eq!(r.splits_by_order.total(), 0);
    assert_eq!(r.bytes_migrated, 2 * MB);
}

#[test]
fn full4k_promotes_fault_page_and_hot_pages() {
    let mut ms = state(small_params(), Policy::Full4KSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    let mut counts = [0u64; SUBPAGES];
    counts[10] = 50;
    counts[11] = 50;
    counts[300] = 1;
    ms.load_histogram(&HistogramSnapshot::new(counts));
    ms.hint_fault(Address(400 * 4096)).unwrap();
    let r = ms.report();
    assert_eq!(r.splits_by_order.split_4k, 1);
    assert_eq!(r.split_children, 512);
    assert_eq!(r.promote_success, 3);
    for page in [10u64, 11, 400] {
        assert_eq!(ms.folio_at(Address(page * 4096)).unwrap().tier, TierId::Fast);
    }
    assert_eq!(ms.folio_at(Address(300 * 4096)).unwrap().tier, TierId::Slow);
    ms.check_invariants().unwrap();
}

#[test]
fn prevented_fault_does_nothing_else() {
    let params = SimParams { contention_pct: 100.0, background_write_fraction: 1.0, ..small_params() };
    let mut ms = state(params, Policy::TierBpfPlusAdmission);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    ms.load_histogram(&hot128());
    ms.set_event_log(EventLog::memory());
    assert_eq!(ms.hint_fault(Address(0)).unwrap(), FaultOutcome::Deferred);
    let r = ms.report();
    assert_eq!(r.admission_prevented, 1);
    assert_eq!(r.prevented_read_heavy, 1);
    assert_eq!(r.splits_by_order.total(), 0);
    assert_eq!(r.bytes_migrated, 0);
    let log = ms.take_event_log();
    let rec = &log.records()[0];
    assert_eq!(rec.admission, Admission::Prevent);
    assert_eq!((rec.split_events, rec.bytes_migrated), (0, 0));
}

#[test]
fn half_duplex_skips_admission_state() {
    let cfg = PolicyConfig { duplex_mode: DuplexMode::HalfDuplex, ..PolicyConfig::default() };
    let params = SimParams { background_write_fraction: 1.0, contention_pct: 100.0, ..small_params() };
    let mut ms = MemoryState::with_policy(cfg, params, Policy::TierBpfPlusAdmission).unwrap();
    assert!(ms.sketch.is_none());
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    assert_ne!(ms.hint_fault(Address(0)).unwrap(), FaultOutcome::Deferred);
}

#[test]
fn demotion_below_watermark_is_noop() {
    let params = SimParams { fast_frames: 1024, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Fast).unwrap();
    assert_eq!(ms.demote_if_pressured(0.9).unwrap(), 0);
}

#[test]
fn demotion_takes_least_recent_first() {
    let params = SimParams { fast_frames: 16, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    // Touch order is the reverse of address order.
    for i in 0..16u64 {
        ms.tick = 100 - i;
        ms.map_folio(Address(i * 4096), FolioOrder::BASE, TierId::Fast).unwrap();
    }
    assert_eq!(ms.demote_if_pressured(0.5).unwrap(), 8);
    for i in 0..16u64 {
        let expect = if i >= 8 { TierId::Slow } else { TierId::Fast };
        assert_eq!(ms.folio_at(Address(i * 4096)).unwrap().tier, expect, "page {i}");
    }
    let r = ms.report();
    assert_eq!(r.demotions, 8);
    assert_eq!(r.bytes_migrated, 8 * 4096);
}

#[test]
fn demotion_into_full_slow_tier_fails() {
    let params = SimParams { fast_frames: 16, slow_frames: 16, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::new(4).unwrap(), TierId::Fast).unwrap();
    ms.map_folio(Address(MB), FolioOrder::new(4).unwrap(), TierId::Slow).unwrap();
    assert!(matches!(ms.demote_if_pressured(0.5), Err(SimError::SlowTierFull { .. })));
}

#[test]
fn scan_arms_slow_folios_round_robin() {
    let params = SimParams { scan_batch: 2, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    for i in 0..3 {
        ms.map_folio(Address(i * 2 * MB), FolioOrder::THP, TierId::Slow).unwrap();
    }
    assert_eq!(ms.scan(), 2);
    assert!(ms.is_armed(Address(0)) && ms.is_armed(Address(2 * MB)) && !ms.is_armed(Address(4 * MB)));
    assert_eq!(ms.scan(), 1);
    assert!(ms.is_armed(Address(4 * MB)));
}

#[test]
fn armed_folio_faults_on_next_access() {
    let mut ms = state(small_params(), Policy::NoSplit);
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Slow).unwrap();
    assert!(ms.arm(Address(0)));
    ms.access(&AccessEvent::new(0, 8, false)).unwrap();
    assert_eq!(ms.report().hint_faults, 1);
    assert_eq!(ms.folio_at(Address(0)).unwrap().tier, TierId::Fast);
    assert!(!ms.arm(Address(0)));
}

#[test]
fn empty_trace_reports_zeros() {
    let (r, _) = run_scenario(&PolicyConfig::default(), &small_params(), Policy::TierBpf, &[], EventLog::Off).unwrap();
    assert_eq!(r, RunReport::default());
}

#[test]
fn oversized_workload_rejected() {
    let params = SimParams { slow_frames: 1024, ..small_params() };
    let ev: Vec<_> = (0..3).map(|i| AccessEvent::new(i, i * 2 * MB, false)).collect();
    let err = run_scenario(&PolicyConfig::default(), &params, Policy::NoSplit, &ev, EventLog::Off).unwrap_err();
    assert!(matches!(err, SimError::WorkloadTooLarge { needed: 3, available: 2 }));
}

fn skewed_trace(n: u64) -> Vec<AccessEvent> {
    generate(&TraceSpec {
        kind: TraceKind::HotBlocks { block_bytes: 256 * 1024, hot_fraction: 1.0, hot_weight: 0.9 },
        n_events: n,
        region_bytes: 32 * MB,
        write_fraction: 0.2,
        seed: 5,
        base_vaddr: 0,
    })
    .unwrap()
}

fn run(policy: Policy, params: &SimParams, ev: &[AccessEvent]) -> (RunReport, EventLog) {
    run_scenario(&PolicyConfig::default(), params, policy, ev, EventLog::memory()).unwrap()
}

#[test]
fn runs_are_deterministic() {
    let ev = skewed_trace(60_000);
    let params = SimParams { fast_frames: 2048, contention_pct: 100.0, epoch_events: 16384, ..small_params() };
    for policy in Policy::ALL {
        let a = serde_json::to_string(&run(policy, &params, &ev).0).unwrap();
        let b = serde_json::to_string(&run(policy, &params, &ev).0).unwrap();
        assert_eq!(a, b, "{policy}");
    }
}

#[test]
fn migrated_bytes_match_moves() {
    let ev = skewed_trace(80_000);
    let params = SimParams { fast_frames: 2048, contention_pct: 100.0, epoch_events: 16384, ..small_params() };
    for policy in Policy::ALL {
        let (r, _) = run(policy, &params, &ev);
        assert_eq!(r.bytes_migrated, (r.promote_success_pages + r.demoted_pages) * PAGE_BYTES, "{policy}");
        assert!(r.promote_success > 0, "{policy}");
    }
}

#[test]
fn gate_closed_means_no_splits() {
    let ev = skewed_trace(60_000);
    for pct in [0.0, 25.0] {
        let params = SimParams { contention_pct: pct, epoch_events: 16384, ..small_params() };
        let (r, _) = run(Policy::TierBpf, &params, &ev);
        assert_eq!(r.splits_by_order, SplitCounts::default(), "contention {pct}");
    }
}

#[test]
fn tierbpf_promotes_only_dense_or_faulting_subfolios() {
    let ev = skewed_trace(80_000);
    let params = SimParams { fast_frames: 2048, contention_pct: 100.0, epoch_events: 16384, ..small_params() };
    let (r, log) = run(Policy::TierBpf, &params, &ev);
    assert!(r.splits_by_order.mthp_total() > 0);
    for rec in log.records().iter().filter(|r| r.split_events > 0) {
        assert!(rec.targets >= 1 && rec.targets <= rec.children);
        assert!(rec.split_order.unwrap() < rec.folio_order);
    }
}

#[test]
fn invariants_hold_through_a_run() {
    let ev = skewed_trace(50_000);
    let params = SimParams { fast_frames: 1024, contention_pct: 100.0, epoch_events: 4096, ..small_params() };
    for policy in Policy::ALL {
        let mut ms = state(params.clone(), policy);
        ms.map_workload(&huge_bases(&ev)).unwrap();
        for (i, e) in ev.iter().enumerate() {
            ms.access(e).unwrap();
            if i % 5000 == 0 {
                ms.check_invariants().unwrap();
                assert_eq!(ms.fast.used_frames() + ms.fast.free_frames(), ms.fast.frame_count());
            }
        }
        ms.check_invariants().unwrap();
    }
}

#[test]
fn full_fast_tier_reclaims_before_promoting() {
    let params = SimParams { fast_frames: 1024, ..small_params() };
    let mut ms = state(params, Policy::NoSplit);
    ms.tick = 1;
    ms.map_folio(Address(0), FolioOrder::THP, TierId::Fast).unwrap();
    ms.tick = 2;
    ms.map_folio(Address(2 * MB), FolioOrder::THP, TierId::Fast).unwrap();
    ms.map_folio(Address(4 * MB), FolioOrder::THP, TierId::Slow).unwrap();
    assert_eq!(ms.hint_fault(Address(4 * MB)).unwrap(), FaultOutcome::Promoted);
    let r = ms.report();
    assert_eq!((r.demotions, r.promote_fail), (1, 0));
    assert_eq!(ms.folio_at(Address(0)).unwrap().tier, TierId::Slow);
    assert_eq!(ms.folio_at(Address(2 * MB)).unwrap().tier, TierId::Fast);
}

#[test]
fn policy_names_parse() {
    for p in Policy::ALL {
        assert_eq!(p.name().to_lowercase().parse::<Policy>().unwrap(), p);
    }
    assert!("tpp".parse::<Policy>().is_err());
}
