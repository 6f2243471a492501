//! Adversarial workload construction: the congruent-different-tag mirror of
//! the target task, exhaustive enumeration of bounded configuration spaces,
//! and seeded sampling from them.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    decompose, Access, Address, AdversarialConfig, Adversary, CacheGeometry, Cycle,
    HardwareConfig, SyncMode, TaskTrace,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("a baseline needs at least two cores, got {0}")]
    NoAdversaries(usize),
    #[error("adversary index must be at least 1")]
    ZeroIndex,
    #[error("address {address:#x} shifted by {m} colour periods overflows the address space")]
    AddressOverflow { address: Address, m: u64 },
    #[error("enumeration of {} configurations exceeds the budget of {budget}", fmt_size(.size))]
    BudgetExceeded { size: Option<u128>, budget: u128 },
}

fn fmt_size(size: &Option<u128>) -> String {
    size.map_or_else(|| "more than 2^128".to_string(), |s| s.to_string())
}

/// Address `m` colour periods above `address`: same set, tag raised by `m`.
pub fn congruent_variant(
    address: Address,
    m: u64,
    geometry: &CacheGeometry,
) -> Result<Address, AdversaryError> {
    if m == 0 {
        return Err(AdversaryError::ZeroIndex);
    }
    m.checked_mul(geometry.set_stride())
        .and_then(|shift| address.checked_add(shift))
        .ok_or(AdversaryError::AddressOverflow { address, m })
}

/// Builds the baseline configuration: `N-1` phase-locked copies of `task`,
/// each on a private, colour-preserving region.
///
/// Adversary `m` replays `task` with every address shifted by `m * span`
/// colour periods, where `span` is the number of tags `task` covers. Every
/// adversary access is congruent with the corresponding target access, and
/// no adversary line coincides with a target line or another adversary's
/// line.
pub fn build_baseline(
    task: &TaskTrace,
    hw: &HardwareConfig,
) -> Result<AdversarialConfig, AdversaryError> {
    if hw.n_cores < 2 {
        return Err(AdversaryError::NoAdversaries(hw.n_cores));
    }
    let g = &hw.geometry;
    let tags = task.accesses.iter().map(|a| decompose(a.address, g).tag);
    let span = match (tags.clone().min(), tags.max()) {
        (Some(lo), Some(hi)) => hi - lo + 1,
        _ => 1,
    };
    let adversaries = (1..hw.n_cores as u64)
        .map(|m| {
            let accesses = task
                .accesses
                .iter()
                .map(|a| {
                    let m_shift = m.checked_mul(span).ok_or(AdversaryError::AddressOverflow {
                        address: a.address,
                        m,
                    })?;
                    Ok(Access {
                        address: congruent_variant(a.address, m_shift, g)?,
                        gap_before: a.gap_before,
                        critical: false,
                    })
                })
                .collect::<Result<Vec<_>, AdversaryError>>()?;
            Ok(Adversary {
                trace: TaskTrace::new(accesses),
                start_offset: 0,
            })
        })
        .collect::<Result<Vec<_>, AdversaryError>>()?;
    Ok(AdversarialConfig {
        adversaries,
        sync_mode: SyncMode::PhaseLocked,
    })
}

/// A bounded space of adversarial configurations. All adversaries draw from
/// the same candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_cores: usize,
    pub geometry: CacheGeometry,
    pub l_mem: u64,
    #[serde(default)]
    pub l_hit: u64,
    /// Candidate line addresses for adversary accesses.
    pub address_universe: Vec<Address>,
    pub max_adversary_trace_len: usize,
    /// Start offsets for free-running adversaries.
    pub offset_grid: Vec<Cycle>,
    pub sync_modes: Vec<SyncMode>,
}

impl SearchSpace {
    pub fn hardware(&self) -> HardwareConfig {
        HardwareConfig {
            l_hit: self.l_hit,
            ..HardwareConfig::new(self.n_cores, self.geometry, self.l_mem)
        }
    }

    /// Line-aligned universe over the given sets and tags.
    pub fn grid_universe(geometry: &CacheGeometry, sets: RangeInclusive<u64>, tags: RangeInclusive<u64>) -> Vec<Address> {
        let mut out = Vec::new();
        for tag in tags {
            for set in sets.clone() {
                out.push(tag * geometry.set_stride() + set * geometry.line_size_bytes);
            }
        }
        out.sort_unstable();
        out
    }

    /// Modes, universe and offsets in canonical (sorted, deduplicated) order.
    fn canonical(&self) -> (Vec<SyncMode>, Vec<Address>, Vec<Cycle>) {
        let mut modes = self.sync_modes.clone();
        modes.sort_unstable();
        modes.dedup();
        let mut universe = self.address_universe.clone();
        universe.sort_unstable();
        universe.dedup();
        let mut offsets = self.offset_grid.clone();
        offsets.sort_unstable();
        offsets.dedup();
        (modes, universe, offsets)
    }

    fn mode_choices(&self, phase_len: usize) -> Vec<ModeChoices> {
        let (modes, universe, offsets) = self.canonical();
        modes
            .into_iter()
            .map(|mode| {
                let (lengths, offsets) = match mode {
                    SyncMode::PhaseLocked => {
                        let mut lengths = vec![0];
                        if phase_len > 0 && phase_len <= self.max_adversary_trace_len {
                            lengths.push(phase_len);
                        }
                        (lengths, vec![0])
                    }
                    SyncMode::FreeRunning => {
                        ((0..=self.max_adversary_trace_len).collect(), offsets.clone())
                    }
                };
                ModeChoices::new(mode, universe.clone(), lengths, offsets, self.n_cores.saturating_sub(1))
            })
            .collect()
    }

    /// Number of configurations [`enumerate_configs`] yields for a target of
    /// `phase_len` accesses; `None` if it does not fit in `u128`.
    pub fn size(&self, phase_len: usize) -> Option<u128> {
        self.mode_choices(phase_len)
            .iter()
            .try_fold(0u128, |acc, m| acc.checked_add(m.total?))
    }
}

/// Per-mode candidate sets for a single adversary.
#[derive(Debug, Clone)]
struct ModeChoices {
    mode: SyncMode,
    universe: Vec<Address>,
    /// Allowed trace lengths, ascending.
    lengths: Vec<usize>,
    offsets: Vec<Cycle>,
    /// Choices per adversary (`traces * offsets`).
    per_adversary: Option<u128>,
    adversaries: usize,
    /// Configurations for this mode.
    total: Option<u128>,
}

impl ModeChoices {
    fn new(mode: SyncMode, universe: Vec<Address>, lengths: Vec<usize>, offsets: Vec<Cycle>, adversaries: usize) -> Self {
        let u = universe.len() as u128;
        let traces = lengths
            .iter()
            .try_fold(0u128, |acc, &l| acc.checked_add(u.checked_pow(l as u32)?));
        let per_adversary = traces.and_then(|t| t.checked_mul(offsets.len() as u128));
        let total = per_adversary.and_then(|p| p.checked_pow(adversaries as u32));
        Self {
            mode,
            universe,
            lengths,
            offsets,
            per_adversary,
            adversaries,
            total,
        }
    }

    /// Decodes a per-adversary choice index into a trace and offset.
    fn decode(&self, choice: u128) -> Adversary {
        let n_off = self.offsets.len() as u128;
        let (mut trace_id, offset_id) = (choice / n_off, choice % n_off);
        let u = self.universe.len() as u128;
        for &len in &self.lengths {
            let count = u.pow(len as u32);
            if trace_id < count {
                let mut digits = vec![0usize; len];
                let mut rest = trace_id;
                for d in digits.iter_mut().rev() {
                    *d = (rest % u) as usize;
                    rest /= u;
                }
                let accesses = digits
                    .into_iter()
                    .map(|i| Access::new(self.universe[i], 0, false))
                    .collect();
                return Adversary {
                    trace: TaskTrace::new(accesses),
                    start_offset: self.offsets[offset_id as usize],
                };
            }
            trace_id -= count;
        }
        unreachable!("choice index within range")
    }

    fn config(&self, choices: &[u128]) -> AdversarialConfig {
        AdversarialConfig {
            adversaries: choices.iter().map(|&c| self.decode(c)).collect(),
            sync_mode: self.mode,
        }
    }
}

/// Lazy, canonical-order stream over every configuration of a space.
#[derive(Debug, Clone)]
pub struct ConfigStream {
    modes: Vec<ModeChoices>,
    mode: usize,
    counter: Vec<u128>,
    started: bool,
    remaining: u128,
}

impl Iterator for ConfigStream {
    type Item = AdversarialConfig;

    fn next(&mut self) -> Option<AdversarialConfig> {
        loop {
            let m = self.modes.get(self.mode)?;
            let radix = m.per_adversary.expect("size checked against budget");
            if radix == 0 && m.adversaries > 0 {
                self.mode += 1;
                continue;
            }
            if !self.started {
                self.started = true;
                self.counter = vec![0; m.adversaries];
                self.remaining = self.remaining.saturating_sub(1);
                return Some(m.config(&self.counter));
            }
            // Increment: the last adversary is the least significant digit.
            let mut carried = true;
            for digit in self.counter.iter_mut().rev() {
                *digit += 1;
                if *digit < radix {
                    carried = false;
                    break;
                }
                *digit = 0;
            }
            if carried {
                self.mode += 1;
                self.started = false;
                continue;
            }
            self.remaining = self.remaining.saturating_sub(1);
            return Some(m.config(&self.counter));
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).ok();
        (n.unwrap_or(usize::MAX), n)
    }
}

/// Every configuration of `space` for a target of `phase_len` accesses,
/// ordered by mode, then adversary 1's (trace, offset), then adversary 2's,
/// and so on. Traces are ordered by length, then lexicographically over the
/// sorted universe.
///
/// Phase-locked adversaries use either the empty trace or a trace of exactly
/// `phase_len` accesses, with offset 0. Free-running adversaries use every
/// trace up to `max_adversary_trace_len` combined with every grid offset.
pub fn enumerate_configs(
    space: &SearchSpace,
    phase_len: usize,
    budget: u128,
) -> Result<ConfigStream, AdversaryError> {
    let size = space.size(phase_len);
    match size {
        Some(s) if s <= budget => Ok(ConfigStream {
            modes: space.mode_choices(phase_len),
            mode: 0,
            counter: Vec::new(),
            started: false,
            remaining: s,
        }),
        _ => Err(AdversaryError::BudgetExceeded { size, budget }),
    }
}

/// `count` seeded pseudo-random configurations drawn from `space`.
///
/// A mode is drawn uniformly among modes with at least one configuration,
/// then each adversary's (trace, offset) choice uniformly within it. Modes
/// whose per-adversary choice count does not fit in `u128` are skipped.
pub fn sample_configs(
    space: &SearchSpace,
    phase_len: usize,
    count: usize,
    seed: u64,
) -> impl Iterator<Item = AdversarialConfig> {
    let modes: Vec<ModeChoices> = space
        .mode_choices(phase_len)
        .into_iter()
        .filter(|m| m.adversaries == 0 || m.per_adversary.is_some_and(|p| p > 0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if modes.is_empty() { 0 } else { count };
    (0..count).map(move |_| {
        let m = &modes[rng.gen_range(0..modes.len())];
        let choices: Vec<u128> = (0..m.adversaries)
            .map(|_| rng.gen_range(0..m.per_adversary.expect("filtered above")))
            .collect();
        m.config(&choices)
    })
}

/// Parameters for random target traces and adversarial configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomWorkload {
    pub geometry: CacheGeometry,
    /// Sets drawn from `0..sets`.
    pub sets: u64,
    /// Tags drawn from `0..tags`.
    pub tags: u64,
    pub max_gap: u64,
    pub max_adversary_len: usize,
    pub offsets: RangeInclusive<Cycle>,
}

impl RandomWorkload {
    pub fn new(geometry: CacheGeometry) -> Self {
        Self {
            geometry,
            sets: geometry.num_sets.min(4),
            tags: 4,
            max_gap: 8,
            max_adversary_len: 4,
            offsets: -16..=16,
        }
    }

    fn address<R: Rng>(&self, rng: &mut R) -> Address {
        let set = rng.gen_range(0..self.sets.max(1));
        let tag = rng.gen_range(0..self.tags.max(1));
        tag * self.geometry.set_stride() + set * self.geometry.line_size_bytes
    }

    /// Trace of `len` accesses with random lines, gaps and criticality.
    pub fn trace<R: Rng>(&self, rng: &mut R, len: usize) -> TaskTrace {
        TaskTrace::new(
            (0..len)
                .map(|_| Access::new(self.address(rng), rng.gen_range(0..=self.max_gap), rng.gen_bool(0.5)))
                .collect(),
        )
    }

    /// Random admissible configuration for `hw` and a target of `task_len`
    /// accesses, in either synchronisation mode.
    pub fn config<R: Rng>(&self, rng: &mut R, hw: &HardwareConfig, task_len: usize) -> AdversarialConfig {
        let mode = if rng.gen_bool(0.5) {
            SyncMode::PhaseLocked
        } else {
            SyncMode::FreeRunning
        };
        let adversaries = (0..hw.adversary_count())
            .map(|_| match mode {
                SyncMode::PhaseLocked => {
                    let len = if rng.gen_bool(0.1) { 0 } else { task_len };
                    Adversary {
                        trace: self.trace(rng, len),
                        start_offset: 0,
                    }
                }
                SyncMode::FreeRunning => Adversary {
                    trace: {
                        let len = rng.gen_range(0..=self.max_adversary_len);
                        self.trace(rng, len)
                    },
                    start_offset: rng.gen_range(self.offsets.clone()),
                },
            })
            .collect();
        AdversarialConfig {
            adversaries,
            sync_mode: mode,
        }
    }
}
