//! Domain vocabulary shared across the simulator: addresses, folio orders,
//! tiers, access events and the policy configuration.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Base page size.
pub const PAGE_SIZE: u64 = 4096;
/// Page shift for [`PAGE_SIZE`].
pub const PAGE_SHIFT: u32 = 12;
/// Huge page (PMD-mapped THP) size.
pub const HUGE_PAGE_SIZE: u64 = 2 * 1024 * 1024;
/// Huge page shift for [`HUGE_PAGE_SIZE`].
pub const HUGE_PAGE_SHIFT: u32 = 21;
/// Number of 4 KB subpages in one 2 MB huge page.
pub const SUBPAGES: usize = 512;

/// A 64-bit virtual byte address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub u64);

impl Address {
    pub const fn new(value: u64) -> Self {
        Self(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// 4 KB virtual page number.
    pub const fn page_number(self) -> u64 {
        self.0 >> PAGE_SHIFT
    }

    /// Base of the enclosing 2 MB-aligned region.
    pub const fn huge_base(self) -> Address {
        Address(self.0 & !(HUGE_PAGE_SIZE - 1))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl From<u64> for Address {
    fn from(value: u64) -> Self {
        Self(value)
    }
}

/// Offset of the 4 KB subpage holding `vaddr` within its 2 MB-aligned region.
///
/// Every huge page folds onto the same 512 slots, so the result is periodic
/// in `vaddr` with a period of 2 MB.
pub const fn subpage_index(vaddr: Address) -> usize {
    ((vaddr.0 & (HUGE_PAGE_SIZE - 1)) >> PAGE_SHIFT) as usize
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("folio order {0} is not one of 0, 4, 5, 6, 7, 8, 9")]
pub struct InvalidOrder(pub u8);

/// Allocation order of a folio: `4 KB << order`.
///
/// Only 4 KB base pages and the mTHP sizes from 64 KB up to the 2 MB THP
/// are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FolioOrder(u8);

impl FolioOrder {
    pub const BASE: FolioOrder = FolioOrder(0);
    pub const O64K: FolioOrder = FolioOrder(4);
    pub const O128K: FolioOrder = FolioOrder(5);
    pub const O256K: FolioOrder = FolioOrder(6);
    pub const O512K: FolioOrder = FolioOrder(7);
    pub const O1M: FolioOrder = FolioOrder(8);
    pub const THP: FolioOrder = FolioOrder(9);

    /// Every representable order, ascending.
    pub const ALL: [FolioOrder; 7] = [
        Self::BASE,
        Self::O64K,
        Self::O128K,
        Self::O256K,
        Self::O512K,
        Self::O1M,
        Self::THP,
    ];

    /// Split candidates, largest first.
    pub const SPLIT_CANDIDATES: [FolioOrder; 6] =
        [Self::THP, Self::O1M, Self::O512K, Self::O256K, Self::O128K, Self::O64K];

    pub const fn new(order: u8) -> Result<Self, InvalidOrder> {
        match order {
            0 | 4..=9 => Ok(Self(order)),
            _ => Err(InvalidOrder(order)),
        }
    }

    pub const fn get(self) -> u8 {
        self.0
    }

    /// Number of 4 KB frames spanned.
    pub const fn frames(self) -> u64 {
        1 << self.0
    }

    pub const fn size_bytes(self) -> u64 {
        PAGE_SIZE << self.0
    }

    /// Subpages per aligned window of this order, i.e. `L` in the density scan.
    pub const fn subpages(self) -> usize {
        1 << self.0
    }

    /// Number of aligned windows of this order inside one 2 MB region.
    pub const fn windows_per_thp(self) -> usize {
        SUBPAGES >> self.0
    }

    pub const fn is_thp(self) -> bool {
        self.0 == 9
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            0 => "4k",
            4 => "64k",
            5 => "128k",
            6 => "256k",
            7 => "512k",
            8 => "1m",
            _ => "2m",
        }
    }
}

impl TryFrom<u8> for FolioOrder {
    type Error = InvalidOrder;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FolioOrder> for u8 {
    fn from(order: FolioOrder) -> u8 {
        order.0
    }
}

impl fmt::Display for FolioOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TierId {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Folio {
    pub id: u64,
    pub base_frame: u64,
    pub order: FolioOrder,
    pub tier: TierId,
    pub owner_vaddr: Address,
    pub last_touch: u64,
}

impl Folio {
    pub fn contains(&self, vaddr: Address) -> bool {
        vaddr.0 >= self.owner_vaddr.0 && vaddr.0 < self.owner_vaddr.0 + self.order.size_bytes()
    }

    pub fn end_vaddr(&self) -> Address {
        Address(self.owner_vaddr.0 + self.order.size_bytes())
    }
}

/// One memory access from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessEvent {
    pub tick: u64,
    pub vaddr: Address,
    pub is_write: bool,
}

impl AccessEvent {
    pub const fn new(tick: u64, vaddr: u64, is_write: bool) -> Self {
        Self { tick, vaddr: Address(vaddr), is_write }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RwClass {
    ReadHeavy,
    WriteHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    ReadDominant,
    Balanced,
    WriteDominant,
}

/// Whether the slow tier's link carries reads and writes on independent
/// channels (CXL) or on one shared bus (PMEM on DDR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DuplexMode {
    #[default]
    FullDuplex,
    HalfDuplex,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field} = {value} is outside (0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("tlb_entries must be positive")]
    ZeroTlb,
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

/// Tunables for profiling, splitting and admission.
///
/// Serialized as a flat JSON object whose keys are the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Coverage ratio the hot set must explain.
    #[serde(rename = "coverage_P")]
    pub coverage_p: f64,
    /// Minimum heat density for a subfolio to count as hot.
    pub tau_h: f64,
    /// Normalized entropy at or above which a distribution is flat.
    pub entropy_gate: f64,
    /// Per-access sampling probability.
    pub sample_prob: f64,
    /// Slow-tier utilization above which splitting turns on.
    pub contention_gate: f64,
    /// Read share at or above which traffic is read dominant.
    pub traffic_theta: f64,
    /// Write ratio at or above which a page is write heavy.
    pub write_heavy_cut: f64,
    pub duplex_mode: DuplexMode,
    pub tlb_entries: usize,
    pub rng_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            coverage_p: 0.80,
            tau_h: 0.75,
            entropy_gate: 0.95,
            sample_prob: 0.01,
            contention_gate: 0.50,
            traffic_theta: 0.70,
            write_heavy_cut: 0.5,
            duplex_mode: DuplexMode::FullDuplex,
            tlb_entries: 1536,
            rng_seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fractions = [
            ("coverage_P", self.coverage_p),
            ("tau_h", self.tau_h),
            ("entropy_gate", self.entropy_gate),
            ("sample_prob", self.sample_prob),
            ("contention_gate", self.contention_gate),
            ("traffic_theta", self.traffic_theta),
            ("write_heavy_cut", self.write_heavy_cut),
        ];
        for (field, value) in fractions {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ConfigError::OutOfRange { field, value });
            }
        }
        if self.tlb_entries == 0 {
            return Err(ConfigError::ZeroTlb);
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Loads and validates a flat JSON config file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let cfg = Self::from_json_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn subpage_index_examples() {
        assert_eq!(subpage_index(Address(0)), 0);
        assert_eq!(subpage_index(Address(0x1F_F000)), 511);
        // 2 MB + 16 KB lands four pages into the second huge page.
        assert_eq!(subpage_index(Address(0x20_4000)), (0x20_4000u64 - 0x20_0000) as usize / 4096);
        assert_eq!(subpage_index(Address(0x20_4000)), 4);
    }

    #[test]
    fn order_sizes() {
        for order in FolioOrder::ALL {
            assert_eq!(order.size_bytes(), 4096u64 << order.get());
        }
        assert_eq!(FolioOrder::THP.size_bytes(), HUGE_PAGE_SIZE);
        assert_eq!(FolioOrder::O64K.size_bytes(), 64 * 1024);
        assert!(FolioOrder::new(1).is_err());
        assert!(FolioOrder::new(10).is_err());
    }

    #[test]
    fn split_candidates_exclude_base_pages() {
        assert!(!FolioOrder::SPLIT_CANDIDATES.contains(&FolioOrder::BASE));
        let orders: Vec<u8> = FolioOrder::SPLIT_CANDIDATES.iter().map(|o| o.get()).collect();
        assert_eq!(orders, vec![9, 8, 7, 6, 5, 4]);
    }

    #[test]
    fn policy_config_json_keys_are_flat() {
        let cfg = PolicyConfig { rng_seed: 9, ..PolicyConfig::default() };
        let value = serde_json::to_value(&cfg).unwrap();
        let obj = value.as_object().unwrap();
        for key in [
            "coverage_P",
            "tau_h",
            "entropy_gate",
            "sample_prob",
            "contention_gate",
            "traffic_theta",
            "write_heavy_cut",
            "duplex_mode",
            "tlb_entries",
            "rng_seed",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        let parsed = PolicyConfig::from_json_str(r#"{"coverage_P": 0.9, "duplex_mode": "HalfDuplex"}"#).unwrap();
        assert_eq!(parsed.coverage_p, 0.9);
        assert_eq!(parsed.duplex_mode, DuplexMode::HalfDuplex);
        assert_eq!(parsed.tau_h, 0.75);
    }

    #[test]
    fn policy_config_rejects_bad_fractions() {
        let cfg = PolicyConfig { tau_h: 0.0, ..PolicyConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = PolicyConfig { entropy_gate: 1.5, ..PolicyConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(PolicyConfig::default().validate().is_ok());
        assert!(PolicyConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn subpage_index_has_2mb_period(a in 0u64..(u64::MAX - HUGE_PAGE_SIZE)) {
            prop_assert_eq!(subpage_index(Address(a)), subpage_index(Address(a + HUGE_PAGE_SIZE)));
            prop_assert!(subpage_index(Address(a)) < SUBPAGES);
        }
    }
}
