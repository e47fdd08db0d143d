use proptest::prelude::*;
use tiersim_core::workload::{read_trace, write_trace, MAX_VADDR};
use tiersim_core::AccessEvent;

fn events() -> impl Strategy<Value = Vec<AccessEvent>> {
    prop::collection::vec((any::<u64>(), 0..=MAX_VADDR, any::<bool>()), 0..64)
        .prop_map(|v| v.into_iter().map(|(t, a, w)| AccessEvent::new(t, a, w)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn file_round_trip(ev in events()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trc");
        write_trace(&path, &ev).unwrap();
        prop_assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 16 * ev.len() as u64);
        prop_assert_eq!(read_trace(&path).unwrap(), ev);
    }
}
