//! Domain types for the analysed system: platform invariants, the target
//! task's trace, the adversarial configuration and the arbitration policy.
//!
//! Core ids are fixed: the target task `T` runs on core 0 and adversary `m`
//! (1-based) runs on core `m`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute or relative time in cycles. `T` starts at cycle 0.
pub type Cycle = i64;

/// Physical byte address.
pub type Address = u64;

/// Index of a core. Core 0 always hosts the target task.
pub type CoreId = usize;

/// The core hosting the target task.
pub const TARGET_CORE: CoreId = 0;

/// Shared L2 geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub line_size_bytes: u64,
    pub num_sets: u64,
    pub associativity: u32,
    pub mshr_count: u32,
}

impl CacheGeometry {
    /// A direct-mapped, MSHR-less geometry.
    pub fn direct_mapped(line_size_bytes: u64, num_sets: u64) -> Self {
        Self {
            line_size_bytes,
            num_sets,
            associativity: 1,
            mshr_count: 0,
        }
    }

    /// Distance in bytes between two consecutive addresses that map to the
    /// same set (one "cache color" period).
    pub fn set_stride(&self) -> u64 {
        self.line_size_bytes * self.num_sets
    }

    pub fn decompose(&self, address: Address) -> DecomposedAddress {
        decompose(address, self)
    }

    /// Line-aligned address of the line containing `address`.
    pub fn line_of(&self, address: Address) -> Address {
        address - address % self.line_size_bytes
    }
}

/// Platform invariants: core count, L2 geometry and memory timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub n_cores: usize,
    pub geometry: CacheGeometry,
    /// Fixed service time of an L2 miss (write-back, read and bus turnaround).
    pub l_mem: u64,
    /// L2 hit latency.
    #[serde(default)]
    pub l_hit: u64,
    pub memory_banks: u32,
}

impl HardwareConfig {
    pub fn new(n_cores: usize, geometry: CacheGeometry, l_mem: u64) -> Self {
        Self {
            n_cores,
            geometry,
            l_mem,
            l_hit: 0,
            memory_banks: 1,
        }
    }

    pub fn adversary_count(&self) -> usize {
        self.n_cores.saturating_sub(1)
    }

    /// Largest stall any single access can suffer: `(N-1) * L_mem`.
    pub fn per_access_bound(&self) -> u64 {
        self.adversary_count() as u64 * self.l_mem
    }
}

/// An address split into tag, set index and line offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecomposedAddress {
    pub tag: u64,
    pub set_index: u64,
    pub line_offset: u64,
}

/// Splits `address` into `(tag, set, offset)` for `geometry`.
pub fn decompose(address: Address, geometry: &CacheGeometry) -> DecomposedAddress {
    let line = geometry.line_size_bytes;
    let sets = geometry.num_sets;
    DecomposedAddress {
        tag: address / (line * sets),
        set_index: (address / line) % sets,
        line_offset: address % line,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("set index {set_index} out of range for {num_sets} sets")]
    SetOutOfRange { set_index: u64, num_sets: u64 },
    #[error("tag {tag} does not fit in the physical address space")]
    Overflow { tag: u64 },
}

/// Line-aligned address with the given tag and set index.
pub fn compose(tag: u64, set_index: u64, geometry: &CacheGeometry) -> Result<Address, AddressError> {
    if set_index >= geometry.num_sets {
        return Err(AddressError::SetOutOfRange {
            set_index,
            num_sets: geometry.num_sets,
        });
    }
    tag.checked_mul(geometry.set_stride())
        .and_then(|base| base.checked_add(set_index * geometry.line_size_bytes))
        .ok_or(AddressError::Overflow { tag })
}

/// One memory access of a task trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub address: Address,
    /// Core-local computation, in cycles, before this access is issued.
    pub gap_before: u64,
    /// Whether the access lies on the critical path.
    pub critical: bool,
}

impl Access {
    pub fn new(address: Address, gap_before: u64, critical: bool) -> Self {
        Self {
            address,
            gap_before,
            critical,
        }
    }
}

/// Deterministic per-period address sequence of a task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskTrace {
    pub accesses: Vec<Access>,
}

impl TaskTrace {
    pub fn new(accesses: Vec<Access>) -> Self {
        Self { accesses }
    }

    /// Trace of back-to-back accesses with the given criticality.
    pub fn from_addresses(addresses: &[Address], critical: bool) -> Self {
        Self::new(
            addresses
                .iter()
                .map(|&a| Access::new(a, 0, critical))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    /// `|P_crit|`.
    pub fn critical_count(&self) -> usize {
        self.accesses.iter().filter(|a| a.critical).count()
    }

    pub fn critical_accesses(&self) -> impl Iterator<Item = (usize, &Access)> {
        self.accesses.iter().enumerate().filter(|(_, a)| a.critical)
    }
}

/// How adversary requests are timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Adversary request `i` is issued at the cycle `T` issues its access `i`
    /// (or, if the adversary is still busy, as soon as it becomes free).
    PhaseLocked,
    /// Adversaries start at `start_offset` and self-time with their gaps.
    FreeRunning,
}

impl fmt::Display for SyncMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncMode::PhaseLocked => f.write_str("phase_locked"),
            SyncMode::FreeRunning => f.write_str("free_running"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Adversary {
    pub trace: TaskTrace,
    /// Start relative to `T`'s start; only meaningful in free-running mode.
    pub start_offset: Cycle,
}

/// The adversarial configuration `C`: one adversary per non-target core.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub adversaries: Vec<Adversary>,
    pub sync_mode: SyncMode,
}

impl AdversarialConfig {
    /// Configuration without any adversary (isolation).
    pub fn empty() -> Self {
        Self {
            adversaries: Vec::new(),
            sync_mode: SyncMode::FreeRunning,
        }
    }
}

/// Arbitration policy of the shared L2/memory path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArbitrationPolicy {
    /// The target is granted only when no adversarial request is pending.
    PessimisticForT,
    RoundRobin { initial_pointer: CoreId },
    /// `order[0]` has the highest priority.
    FixedPriority { order: Vec<CoreId> },
    /// Earliest arrival first, ties broken by ascending core id.
    FifoAge,
}

impl fmt::Display for ArbitrationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArbitrationPolicy::PessimisticForT => f.write_str("pessimistic"),
            ArbitrationPolicy::RoundRobin { initial_pointer } => {
                write!(f, "round_robin(pointer={initial_pointer})")
            }
            ArbitrationPolicy::FixedPriority { order } => {
                let order: Vec<String> = order.iter().map(|c| c.to_string()).collect();
                write!(f, "fixed_priority({})", order.join(">"))
            }
            ArbitrationPolicy::FifoAge => f.write_str("fifo"),
        }
    }
}

/// A relaxed platform invariant. Each variant corresponds to one
/// applicability condition of the bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "invariant")]
pub enum HardwareViolation {
    #[error("set-associative L2 ({ways} ways); the bound requires a direct-mapped L2")]
    SetAssociative { ways: u32 },
    #[error("MSHRs enabled ({count}); the bound requires blocking, serialized miss handling")]
    MshrsEnabled { count: u32 },
    #[error("multi-bank memory ({banks} banks); the bound requires a single-bank memory")]
    MultiBank { banks: u32 },
    #[error("line size {value} is not a power of two")]
    LineSizeNotPowerOfTwo { value: u64 },
    #[error("set count {value} is not a power of two")]
    SetCountNotPowerOfTwo { value: u64 },
    #[error("at least one core is required")]
    NoCores,
    #[error("miss latency must be at least one cycle")]
    ZeroMissLatency,
    #[error("miss latency {l_mem} must exceed hit latency {l_hit}")]
    HitNotFasterThanMiss { l_mem: u64, l_hit: u64 },
}

impl HardwareViolation {
    /// The applicability condition this violation breaks.
    pub fn condition(&self) -> &'static str {
        match self {
            HardwareViolation::SetAssociative { .. } => "direct-mapped L2",
            HardwareViolation::MshrsEnabled { .. } => "disabled MSHRs",
            HardwareViolation::MultiBank { .. } => "single-bank memory",
            HardwareViolation::LineSizeNotPowerOfTwo { .. }
            | HardwareViolation::SetCountNotPowerOfTwo { .. } => "address decomposition",
            HardwareViolation::NoCores => "N processor cores",
            HardwareViolation::ZeroMissLatency | HardwareViolation::HitNotFasterThanMiss { .. } => {
                "fixed miss latency"
            }
        }
    }
}

/// Non-empty list of failed checks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", join_messages(.0))]
pub struct Violations<V: fmt::Display + fmt::Debug>(pub Vec<V>);

fn join_messages<V: fmt::Display>(items: &[V]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks every platform invariant and reports all that fail.
pub fn validate_hardware(config: &HardwareConfig) -> Result<(), Violations<HardwareViolation>> {
    let g = &config.geometry;
    let mut found = Vec::new();
    if g.associativity != 1 {
        found.push(HardwareViolation::SetAssociative {
            ways: g.associativity,
        });
    }
    if g.mshr_count != 0 {
        found.push(HardwareViolation::MshrsEnabled {
            count: g.mshr_count,
        });
    }
    if config.memory_banks != 1 {
        found.push(HardwareViolation::MultiBank {
            banks: config.memory_banks,
        });
    }
    if !g.line_size_bytes.is_power_of_two() {
        found.push(HardwareViolation::LineSizeNotPowerOfTwo {
            value: g.line_size_bytes,
        });
    }
    if !g.num_sets.is_power_of_two() {
        found.push(HardwareViolation::SetCountNotPowerOfTwo { value: g.num_sets });
    }
    if config.n_cores == 0 {
        found.push(HardwareViolation::NoCores);
    }
    if config.l_mem == 0 {
        found.push(HardwareViolation::ZeroMissLatency);
    } else if config.l_mem <= config.l_hit {
        found.push(HardwareViolation::HitNotFasterThanMiss {
            l_mem: config.l_mem,
            l_hit: config.l_hit,
        });
    }
    if found.is_empty() {
        Ok(())
    } else {
        Err(Violations(found))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "clause")]
pub enum AdmissibilityViolation {
    #[error("core count: expected {expected} adversaries (one per non-target core), found {found}")]
    CoreCount { expected: usize, found: usize },
    #[error("phase mismatch: adversary {adversary} has {found} accesses, target has {expected}")]
    PhaseMismatch {
        adversary: usize,
        expected: usize,
        found: usize,
    },
}

/// Behavioural admissibility clauses that the engine guarantees by
/// construction. Returned by [`check_admissible`] so reports can cite them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralGuarantees {
    pub one_in_flight_per_core: bool,
    pub fixed_miss_latency: bool,
    pub no_out_of_model_channels: bool,
}

impl StructuralGuarantees {
    pub const ENGINE: Self = Self {
        one_in_flight_per_core: true,
        fixed_miss_latency: true,
        no_out_of_model_channels: true,
    };
}

/// Shape checks of an adversarial configuration against `task` and `hw`.
///
/// Under phase-locking an empty adversary trace is accepted: that adversary
/// simply never issues.
pub fn check_admissible(
    config: &AdversarialConfig,
    task: &TaskTrace,
    hw: &HardwareConfig,
) -> Result<StructuralGuarantees, Violations<AdmissibilityViolation>> {
    let mut found = Vec::new();
    let expected = hw.adversary_count();
    if config.adversaries.len() != expected {
        found.push(AdmissibilityViolation::CoreCount {
            expected,
            found: config.adversaries.len(),
        });
    }
    if config.sync_mode == SyncMode::PhaseLocked {
        for (i, adv) in config.adversaries.iter().enumerate() {
            if !adv.trace.is_empty() && adv.trace.len() != task.len() {
                found.push(AdmissibilityViolation::PhaseMismatch {
                    adversary: i + 1,
                    expected: task.len(),
                    found: adv.trace.len(),
                });
            }
        }
    }
    if found.is_empty() {
        Ok(StructuralGuarantees::ENGINE)
    } else {
        Err(Violations(found))
    }
}
