//! TLB reach proxy: an LRU set of folio ids, one entry per folio of any
//! order.

use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone)]
pub struct TlbModel {
    capacity: usize,
    stamp: u64,
    by_id: HashMap<u64, u64>,
    by_stamp: BTreeMap<u64, u64>,
    pub hits: u64,
    pub misses: u64,
}

impl TlbModel {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            stamp: 0,
            by_id: HashMap::new(),
            by_stamp: BTreeMap::new(),
            hits: 0,
            misses: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Looks up `folio_id`, filling on a miss. Returns true on a hit.
    pub fn access(&mut self, folio_id: u64) -> bool {
        self.stamp += 1;
        let hit = match self.by_id.insert(folio_id, self.stamp) {
            Some(old) => {
                self.by_stamp.remove(&old);
                true
            }
            None => false,
        };
        self.by_stamp.insert(self.stamp, folio_id);
        if hit {
            self.hits += 1;
        } else {
            self.misses += 1;
            if self.by_id.len() > self.capacity {
                let (_, victim) = self.by_stamp.pop_first().expect("nonempty");
                self.by_id.remove(&victim);
            }
        }
        hit
    }

    /// Drops the entry for a folio that no longer exists.
    pub fn invalidate(&mut self, folio_id: u64) {
        if let Some(stamp) = self.by_id.remove(&folio_id) {
            self.by_stamp.remove(&stamp);
        }
    }

    pub fn misses_per_1k(&self, events: u64) -> f64 {
        if events == 0 {
            0.0
        } else {
            self.misses as f64 * 1000.0 / events as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_access_hits() {
        let mut tlb = TlbModel::new(1);
        assert!(!tlb.access(7));
        assert!(tlb.access(7));
        assert_eq!((tlb.hits, tlb.misses), (1, 1));
    }

    #[test]
    fn evicts_least_recent() {
        let mut tlb = TlbModel::new(2);
        tlb.access(1);
        tlb.access(2);
        tlb.access(1);
        tlb.access(3);
        assert_eq!(tlb.len(), 2);
        assert!(tlb.access(1));
        assert!(!tlb.access(2));
    }

    #[test]
    fn invalidate_removes_entry() {
        let mut tlb = TlbModel::new(4);
        tlb.access(1);
        tlb.invalidate(1);
        assert!(tlb.is_empty());
        assert!(!tlb.access(1));
        assert_eq!(tlb.misses_per_1k(4), 500.0);
    }
}
