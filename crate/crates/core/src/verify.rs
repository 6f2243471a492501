//! The interference bound, search-based verification against it, and
//! executable checks of the spatial, temporal and pattern properties the
//! bound rests on.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    build_baseline, congruent_variant, enumerate_configs, sample_configs, AdversaryError,
    SearchSpace,
};
use crate::engine::{
    classify_conflict, simulate, validate_policy, ArbiterError, ConflictClass, Outcome, SimError,
    SimResult,
};
use crate::model::{
    validate_hardware, Access, Address, AdversarialConfig, Adversary, ArbitrationPolicy, Cycle,
    HardwareConfig, HardwareViolation, SyncMode, TaskTrace, Violations, TARGET_CORE,
};

/// Attainer and violation lists are truncated to this many entries.
pub const LIST_CAP: usize = 100;

const CHUNK: usize = 1024;

/// `crit_count * (n_cores - 1) * l_mem`.
pub fn miub_bound(n_cores: usize, l_mem: u64, crit_count: usize) -> u64 {
    crit_count as u64 * n_cores.saturating_sub(1) as u64 * l_mem
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Largest space an exhaustive search may enumerate.
    pub budget: u128,
    /// Evaluate configurations on the rayon pool.
    pub parallel: bool,
    /// Also evaluate the baseline configuration if the space lacks it.
    pub include_baseline: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            budget: 1_000_000,
            parallel: false,
            include_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("target trace is empty")]
    EmptyTask,
    #[error("hardware invariants violated: {0}")]
    Hardware(Violations<HardwareViolation>),
    #[error("inconsistent geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Policy(#[from] ArbiterError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub n_cores: usize,
    pub l_mem: u64,
    pub l_hit: u64,
    pub line_size_bytes: u64,
    pub num_sets: u64,
    pub universe_size: usize,
    pub max_adversary_trace_len: usize,
    pub offset_grid: Vec<Cycle>,
    pub sync_modes: Vec<SyncMode>,
    /// Configurations in the space; `None` if beyond `u64`.
    pub size: Option<u64>,
}

/// A configuration whose critical interference exceeds the bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub config: AdversarialConfig,
    pub interference: u64,
    pub max_access_stall: u64,
    /// Greedily truncated variant that still exceeds the bound.
    pub shrunk: AdversarialConfig,
    pub shrunk_interference: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub interference: u64,
    pub attains: bool,
    /// Whether the baseline is a member of the searched space.
    pub in_space: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReport {
    pub space: SpaceSummary,
    pub policy: ArbitrationPolicy,
    pub mode: SearchMode,
    pub bound: u64,
    pub per_access_bound: u64,
    pub max_observed: u64,
    /// First configuration, in canonical order, reaching `max_observed`.
    pub max_config: Option<AdversarialConfig>,
    pub attainers: Vec<AdversarialConfig>,
    pub attainer_count: u64,
    pub violations: Vec<Counterexample>,
    pub violation_count: u64,
    /// Largest single-access stall over every run.
    pub max_access_stall: u64,
    /// Runs in which some access stalled more than `per_access_bound`.
    pub access_bound_breaches: u64,
    pub baseline: Option<BaselineOutcome>,
    pub configs_checked: u64,
    #[serde(skip)]
    pub elapsed: Option<Duration>,
}

impl SearchReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

struct Evaluated {
    interference: u64,
    max_stall: u64,
}

struct Accumulator {
    bound: u64,
    per_access_bound: u64,
    max_observed: u64,
    max_config: Option<AdversarialConfig>,
    attainers: Vec<AdversarialConfig>,
    attainer_count: u64,
    violating: Vec<(AdversarialConfig, Evaluated)>,
    violation_count: u64,
    max_access_stall: u64,
    breaches: u64,
    checked: u64,
}

impl Accumulator {
    fn add(&mut self, config: AdversarialConfig, e: Evaluated) {
        self.checked += 1;
        self.max_access_stall = self.max_access_stall.max(e.max_stall);
        if e.max_stall > self.per_access_bound {
            self.breaches += 1;
        }
        if self.max_config.is_none() || e.interference > self.max_observed {
            self.max_observed = e.interference;
            self.max_config = Some(config.clone());
        }
        if e.interference == self.bound {
            self.attainer_count += 1;
            if self.attainers.len() < LIST_CAP {
                self.attainers.push(config);
            }
        } else if e.interference > self.bound {
            self.violation_count += 1;
            if self.violating.len() < LIST_CAP {
                self.violating.push((config, e));
            }
        }
    }
}

/// Simulates every (or every sampled) configuration of `space` against
/// `task` and compares the critical interference with the bound.
///
/// Results are folded in canonical order, so the report does not depend on
/// `options.parallel`.
pub fn verify_upper_bound(
    space: &SearchSpace,
    task: &TaskTrace,
    policy: &ArbitrationPolicy,
    mode: SearchMode,
    options: &VerifyOptions,
) -> Result<SearchReport, VerifyError> {
    let started = Instant::now();
    if task.is_empty() {
        return Err(VerifyError::EmptyTask);
    }
    let hw = space.hardware();
    validate_hardware(&hw).map_err(VerifyError::Hardware)?;
    validate_policy(policy, hw.n_cores)?;
    if let Some(a) = space
        .address_universe
        .iter()
        .find(|&&a| a % space.geometry.line_size_bytes != 0)
    {
        return Err(VerifyError::Geometry(format!(
            "universe address {a:#x} is not aligned to {}-byte lines",
            space.geometry.line_size_bytes
        )));
    }

    let phase_len = task.len();
    let bound = miub_bound(hw.n_cores, hw.l_mem, task.critical_count());
    let configs: Box<dyn Iterator<Item = AdversarialConfig>> = match mode {
        SearchMode::Exhaustive => Box::new(enumerate_configs(space, phase_len, options.budget)?),
        SearchMode::Sampled { count, seed } => {
            Box::new(sample_configs(space, phase_len, count, seed))
        }
    };

    let evaluate = |c: &AdversarialConfig| -> Result<Evaluated, SimError> {
        let r = simulate(&hw, task, c, policy)?;
        Ok(Evaluated {
            interference: r.total_interference_critical,
            max_stall: r.max_stall(),
        })
    };

    let mut acc = Accumulator {
        bound,
        per_access_bound: hw.per_access_bound(),
        max_observed: 0,
        max_config: None,
        attainers: Vec::new(),
        attainer_count: 0,
        violating: Vec::new(),
        violation_count: 0,
        max_access_stall: 0,
        breaches: 0,
        checked: 0,
    };

    let mut configs = configs.peekable();
    while configs.peek().is_some() {
        let chunk: Vec<AdversarialConfig> = configs.by_ref().take(CHUNK).collect();
        let results: Vec<Result<Evaluated, SimError>> = if options.parallel {
            chunk.par_iter().map(evaluate).collect()
        } else {
            chunk.iter().map(evaluate).collect()
        };
        for (config, result) in chunk.into_iter().zip(results) {
            acc.add(config, result?);
        }
    }

    let baseline = if options.include_baseline && hw.n_cores >= 2 {
        let base = build_baseline(task, &hw)?;
        let in_space = mode == SearchMode::Exhaustive && baseline_in_space(&base, space, phase_len);
        let e = evaluate(&base)?;
        let outcome = BaselineOutcome {
            interference: e.interference,
            attains: e.interference == bound,
            in_space,
        };
        if !in_space {
            acc.add(base, e);
        }
        Some(outcome)
    } else {
        None
    };

    let violations = acc
        .violating
        .into_iter()
        .map(|(config, e)| {
            let (shrunk, shrunk_interference) = shrink(&hw, task, policy, bound, &config, e.interference)?;
            Ok(Counterexample {
                config,
                interference: e.interference,
                max_access_stall: e.max_stall,
                shrunk,
                shrunk_interference,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let (modes, offsets) = {
        let mut m = space.sync_modes.clone();
        m.sort_unstable();
        m.dedup();
        let mut o = space.offset_grid.clone();
        o.sort_unstable();
        o.dedup();
        (m, o)
    };
    let mut universe = space.address_universe.clone();
    universe.sort_unstable();
    universe.dedup();
    Ok(SearchReport {
        space: SpaceSummary {
            n_cores: space.n_cores,
            l_mem: space.l_mem,
            l_hit: space.l_hit,
            line_size_bytes: space.geometry.line_size_bytes,
            num_sets: space.geometry.num_sets,
            universe_size: universe.len(),
            max_adversary_trace_len: space.max_adversary_trace_len,
            offset_grid: offsets,
            sync_modes: modes,
            size: space.size(phase_len).and_then(|s| u64::try_from(s).ok()),
        },
        policy: policy.clone(),
        mode,
        bound,
        per_access_bound: hw.per_access_bound(),
        max_observed: acc.max_observed,
        max_config: acc.max_config,
        attainers: acc.attainers,
        attainer_count: acc.attainer_count,
        violations,
        violation_count: acc.violation_count,
        max_access_stall: acc.max_access_stall,
        access_bound_breaches: acc.breaches,
        baseline,
        configs_checked: acc.checked,
        elapsed: Some(started.elapsed()),
    })
}

fn baseline_in_space(base: &AdversarialConfig, space: &SearchSpace, phase_len: usize) -> bool {
    space.sync_modes.contains(&SyncMode::PhaseLocked)
        && phase_len <= space.max_adversary_trace_len
        && base.adversaries.iter().all(|a| {
            // Phase-locked adversaries ignore their gaps.
            a.trace
                .accesses
                .iter()
                .all(|x| space.address_universe.contains(&x.address))
        })
}

// Repeatedly drops single adversary accesses (free-running) or whole traces
// (phase-locked) while the result still exceeds the bound.
fn shrink(
    hw: &HardwareConfig,
    task: &TaskTrace,
    policy: &ArbitrationPolicy,
    bound: u64,
    config: &AdversarialConfig,
    interference: u64,
) -> Result<(AdversarialConfig, u64), SimError> {
    let mut best = (config.clone(), interference);
    loop {
        let mut improved = false;
        'search: for adv in 0..best.0.adversaries.len() {
            let len = best.0.adversaries[adv].trace.len();
            for pos in (0..len).rev() {
                let mut candidate = best.0.clone();
                let trace = &mut candidate.adversaries[adv].trace.accesses;
                if candidate.sync_mode == SyncMode::PhaseLocked {
                    trace.clear();
                } else {
                    trace.remove(pos);
                }
                let r = simulate(hw, task, &candidate, policy)?;
                if r.total_interference_critical > bound {
                    best = (candidate, r.total_interference_critical);
                    improved = true;
                    break 'search;
                }
            }
        }
        if !improved {
            return Ok(best);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    Spatial,
    Temporal,
    Pattern,
    Dominance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The checked property does not hold.
    Claim,
    /// Some access stalled longer than `(N-1) * L_mem`.
    AccessBound,
    /// A scenario could not be simulated.
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: LemmaId,
    pub cases_checked: u64,
    pub per_access_bound: u64,
    pub max_access_stall: u64,
    /// Runs in which some access stalled more than `per_access_bound`.
    pub access_bound_breaches: u64,
    /// Cases in which the checked property itself failed.
    pub claim_failures: u64,
    /// First failures, capped at [`LIST_CAP`].
    pub failures: Vec<Failure>,
    pub failure_count: u64,
}

impl LemmaReport {
    fn new(lemma: LemmaId, hw: &HardwareConfig) -> Self {
        Self {
            lemma,
            cases_checked: 0,
            per_access_bound: hw.per_access_bound(),
            max_access_stall: 0,
            access_bound_breaches: 0,
            claim_failures: 0,
            failures: Vec::new(),
            failure_count: 0,
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }

    fn fail(&mut self, kind: FailureKind, description: String) {
        self.failure_count += 1;
        if self.failures.len() < LIST_CAP {
            self.failures.push(Failure { kind, description });
        }
    }

    fn claim(&mut self, holds: bool, description: impl FnOnce() -> String) {
        if !holds {
            self.claim_failures += 1;
            self.fail(FailureKind::Claim, description());
        }
    }

    /// Records the per-access bound for one run.
    fn audit(&mut self, result: &SimResult, context: impl FnOnce() -> String) {
        let stall = result.max_stall();
        self.max_access_stall = self.max_access_stall.max(stall);
        if stall > self.per_access_bound {
            self.access_bound_breaches += 1;
            let d = format!("{}: stall {stall} > {}", context(), self.per_access_bound);
            self.fail(FailureKind::AccessBound, d);
        }
    }

    fn run(
        &mut self,
        hw: &HardwareConfig,
        task: &TaskTrace,
        config: &AdversarialConfig,
        policy: &ArbitrationPolicy,
        context: &dyn Fn() -> String,
    ) -> Option<SimResult> {
        match simulate(hw, task, config, policy) {
            Ok(r) => {
                self.audit(&r, context);
                Some(r)
            }
            Err(e) => {
                self.fail(FailureKind::Simulation, format!("{}: {e}", context()));
                None
            }
        }
    }
}

/// Free-running configuration for `hw` where only the first adversaries are
/// active.
fn free_running(hw: &HardwareConfig, active: Vec<Adversary>) -> AdversarialConfig {
    let mut adversaries = active;
    adversaries.resize(
        hw.adversary_count().max(adversaries.len()),
        Adversary {
            trace: TaskTrace::default(),
            start_offset: 0,
        },
    );
    AdversarialConfig {
        adversaries,
        sync_mode: SyncMode::FreeRunning,
    }
}

/// Two-access scenarios for every (adversary, target) pair of `universe`.
///
/// * cold: the adversary fills its line during `[0, L)`, the target looks up
///   its line at `L`. The target hits iff the pair shares a line.
/// * warm: the target loads its line, the adversary fills its line, then the
///   target re-reads its line. The re-read misses iff the pair is an
///   evicting conflict.
///
/// Both outcomes match isolation iff the pair does not interact. Every warm
/// scenario is repeated with extra adversary accesses to sets the target does
/// not use; the target's outcomes and stalls must not change.
pub fn check_spatial_lemma(hw: &HardwareConfig, universe: &[Address]) -> LemmaReport {
    let mut report = LemmaReport::new(LemmaId::Spatial, hw);
    if hw.n_cores < 2 {
        report.fail(FailureKind::Simulation, "needs at least two cores".into());
        return report;
    }
    let g = &hw.geometry;
    let l = hw.l_mem as Cycle;
    let policy = ArbitrationPolicy::PessimisticForT;
    let one = |addrs: Vec<Address>, offset: Cycle| Adversary {
        trace: TaskTrace::from_addresses(&addrs, false),
        start_offset: offset,
    };

    for &target in universe {
        let target_set = g.decompose(target).set_index;
        let unused: Vec<Address> = universe
            .iter()
            .copied()
            .filter(|&z| g.decompose(z).set_index != target_set)
            .collect();
        // Probe late enough that every adversary fill has completed.
        let probe_gap = (2 + unused.len() as u64) * hw.l_mem;
        let cold = TaskTrace::new(vec![Access::new(target, hw.l_mem, true)]);
        let warm = TaskTrace::new(vec![Access::new(target, 0, true), Access::new(target, probe_gap, true)]);
        let (Some(cold_iso), Some(warm_iso)) = (
            report.run(hw, &cold, &free_running(hw, vec![]), &policy, &|| format!("isolation {target:#x}")),
            report.run(hw, &warm, &free_running(hw, vec![]), &policy, &|| format!("isolation {target:#x}")),
        ) else {
            continue;
        };

        for &adv in universe {
            report.cases_checked += 1;
            let class = classify_conflict(adv, target, g);
            let ctx = || format!("adversary {adv:#x} vs target {target:#x} ({class:?})");

            let cold_cfg = free_running(hw, vec![one(vec![adv], 0)]);
            let warm_cfg = free_running(hw, vec![one(vec![adv], l)]);
            let (Some(c), Some(w)) = (
                report.run(hw, &cold, &cold_cfg, &policy, &ctx),
                report.run(hw, &warm, &warm_cfg, &policy, &ctx),
            ) else {
                continue;
            };
            let cold_hit = c.per_access[0].outcome == Outcome::Hit;
            let warm_miss = w.per_access[1].outcome == Outcome::Miss;
            report.claim(cold_hit == (class == ConflictClass::SharedLine), || {
                format!("{}: cold lookup hit={cold_hit}", ctx())
            });
            report.claim(warm_miss == (class == ConflictClass::EvictingConflict), || {
                format!("{}: warm re-read miss={warm_miss}", ctx())
            });
            let same = outcomes(&c) == outcomes(&cold_iso) && outcomes(&w) == outcomes(&warm_iso);
            report.claim(same == (class == ConflictClass::NoInteraction), || {
                format!("{}: identical to isolation={same}", ctx())
            });

            if unused.is_empty() {
                continue;
            }
            let mut extended = vec![adv];
            extended.extend(&unused);
            let sup_cfg = free_running(hw, vec![one(extended, l)]);
            if let Some(s) = report.run(hw, &warm, &sup_cfg, &policy, &ctx) {
                report.cases_checked += 1;
                let unchanged = outcomes(&s) == outcomes(&w) && stalls(&s) == stalls(&w);
                report.claim(unchanged, || {
                    format!("{}: extra accesses to unused sets changed the target", ctx())
                });
            }
        }
    }
    report
}

fn outcomes(r: &SimResult) -> Vec<Outcome> {
    r.per_access.iter().map(|a| a.outcome).collect()
}

fn stalls(r: &SimResult) -> Vec<u64> {
    r.per_access.iter().map(|a| a.stall).collect()
}

/// Sweeps `r_adversaries` congruent-different-tag adversaries over every
/// offset vector of `offset_grid` against one critical target access at
/// cycle 0, under pessimistic arbitration.
///
/// Checks that the stall never exceeds `R * L_mem`, equals it when all
/// offsets are zero, that no adversary's service overlaps the target's wait
/// by more than `L_mem`, and that the adversary served `m`-th with offset
/// `<= -m * L_mem` does not overlap it at all.
pub fn check_temporal_lemma(hw: &HardwareConfig, r_adversaries: usize, offset_grid: &[Cycle]) -> LemmaReport {
    let mut report = LemmaReport::new(LemmaId::Temporal, hw);
    if r_adversaries > hw.adversary_count() {
        report.fail(
            FailureKind::Simulation,
            format!("{r_adversaries} adversaries do not fit on {} cores", hw.n_cores),
        );
        return report;
    }
    let g = &hw.geometry;
    let l = hw.l_mem;
    let target: Address = 0;
    let task = TaskTrace::new(vec![Access::new(target, 0, true)]);
    let policy = ArbitrationPolicy::PessimisticForT;
    let addresses: Vec<Address> = (1..=r_adversaries as u64)
        .map(|m| congruent_variant(target, m, g).expect("small tags fit"))
        .collect();
    let synchronous = r_adversaries as u64 * l;

    let mut max_seen: Option<(u64, Vec<Cycle>)> = None;
    let mut zero_vector_stall = None;
    let mut digits = vec![0usize; r_adversaries];
    if offset_grid.is_empty() && r_adversaries > 0 {
        return report;
    }
    loop {
        let offsets: Vec<Cycle> = digits.iter().map(|&d| offset_grid[d]).collect();
        let active = addresses
            .iter()
            .zip(&offsets)
            .map(|(&a, &o)| Adversary {
                trace: TaskTrace::from_addresses(&[a], false),
                start_offset: o,
            })
            .collect();
        let ctx = || format!("offsets {offsets:?}");
        report.cases_checked += 1;
        if let Some(res) = report.run(hw, &task, &free_running(hw, active), &policy, &ctx) {
            let stall = res.per_access[0].stall;
            report.claim(stall <= synchronous, || format!("{}: stall {stall} > {synchronous}", ctx()));
            if offsets.iter().all(|&o| o == 0) {
                zero_vector_stall = Some(stall);
                report.claim(stall == synchronous, || {
                    format!("{}: synchronous stall {stall} != {synchronous}", ctx())
                });
            }
            if max_seen.as_ref().is_none_or(|(s, _)| stall > *s) {
                max_seen = Some((stall, offsets.clone()));
            }

            let mut served: Vec<_> = res.services.iter().filter(|s| s.core != TARGET_CORE).collect();
            served.sort_by_key(|s| (s.grant, s.core));
            for (rank, s) in served.iter().enumerate() {
                let m = rank as Cycle + 1;
                let overlap = res.overlap_with_wait(0, s.core);
                let offset = offsets[s.core - 1];
                report.claim(overlap <= l, || {
                    format!("{}: adversary {} contributes {overlap} > {l}", ctx(), s.core)
                });
                if offset <= -m * l as Cycle {
                    report.claim(overlap == 0, || {
                        format!(
                            "{}: adversary {} served #{m} with offset {offset} contributes {overlap}",
                            ctx(),
                            s.core
                        )
                    });
                }
            }
        }

        // Next offset vector; the last adversary varies fastest.
        let mut i = r_adversaries;
        loop {
            if i == 0 {
                if let (Some(z), Some((max, at))) = (zero_vector_stall, &max_seen) {
                    report.claim(*max == z, || format!("maximum {max} at {at:?} exceeds synchronous {z}"));
                }
                return report;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < offset_grid.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Runs the baseline configuration for `task` and checks that every critical
/// access stalls exactly `(N-1) * L_mem` and the total equals the bound.
pub fn check_pattern_lemma(hw: &HardwareConfig, task: &TaskTrace) -> LemmaReport {
    let mut report = LemmaReport::new(LemmaId::Pattern, hw);
    let base = match build_baseline(task, hw) {
        Ok(b) => b,
        Err(e) => {
            report.fail(FailureKind::Simulation, e.to_string());
            return report;
        }
    };
    report.cases_checked += 1;
    let policy = ArbitrationPolicy::PessimisticForT;
    let Some(r) = report.run(hw, task, &base, &policy, &|| "baseline".to_string()) else {
        return report;
    };
    let per_access = hw.per_access_bound();
    for rec in r.per_access.iter().filter(|a| a.critical) {
        report.claim(rec.stall == per_access, || {
            format!("critical access {} at {:#x}: stall {} != {per_access}", rec.index, rec.address, rec.stall)
        });
    }
    let bound = miub_bound(hw.n_cores, hw.l_mem, task.critical_count());
    report.claim(r.total_interference_critical == bound, || {
        format!("total {} != bound {bound}", r.total_interference_critical)
    });
    report
}

/// Policies that favour the target, compared against pessimistic arbitration.
pub fn favourable_policies(n_cores: usize) -> Vec<ArbitrationPolicy> {
    vec![
        ArbitrationPolicy::RoundRobin {
            initial_pointer: TARGET_CORE,
        },
        ArbitrationPolicy::FixedPriority {
            order: (0..n_cores).collect(),
        },
        ArbitrationPolicy::FifoAge,
    ]
}

/// For each configuration, checks that pessimistic arbitration imposes at
/// least as much critical interference as round-robin starting at the
/// target, fixed priority with the target first, and FIFO (ties to the
/// target).
pub fn check_policy_dominance<I>(hw: &HardwareConfig, task: &TaskTrace, configs: I) -> LemmaReport
where
    I: IntoIterator<Item = AdversarialConfig>,
{
    let mut report = LemmaReport::new(LemmaId::Dominance, hw);
    let others = favourable_policies(hw.n_cores);
    for (i, config) in configs.into_iter().enumerate() {
        report.cases_checked += 1;
        let pessimistic = ArbitrationPolicy::PessimisticForT;
        let ctx = || format!("config #{i}");
        let Some(worst) = report.run(hw, task, &config, &pessimistic, &ctx) else {
            continue;
        };
        for p in &others {
            let ctx = || format!("config #{i} under {p}");
            if let Some(r) = report.run(hw, task, &config, p, &ctx) {
                let (w, o) = (worst.total_interference_critical, r.total_interference_critical);
                report.claim(w >= o, || format!("config #{i}: pessimistic {w} < {p} {o}: {config:?}"));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::RandomWorkload;
    use crate::model::CacheGeometry;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hw(n: usize, l_mem: u64) -> HardwareConfig {
        HardwareConfig::new(n, CacheGeometry::direct_mapped(64, 8), l_mem)
    }

    #[test]
    fn bound_examples() {
        assert_eq!(miub_bound(4, 40, 10), 1200);
        assert_eq!(miub_bound(1, 40, 10), 0);
        assert_eq!(miub_bound(1, 7, 0), 0);
        assert_eq!(miub_bound(2, 10, 3), 30);
    }

    #[test]
    fn bound_is_monotone() {
        for n in 1..6 {
            for l in 1..6 {
                for c in 0..6 {
                    let b = miub_bound(n, l, c);
                    assert!(miub_bound(n + 1, l, c) >= b);
                    assert!(miub_bound(n, l + 1, c) >= b);
                    assert!(miub_bound(n, l, c + 1) >= b);
                }
            }
        }
    }

    #[test]
    fn pattern_examples() {
        let task = TaskTrace::new(vec![
            Access::new(0x080, 2, true),
            Access::new(0x100, 0, false),
            Access::new(0x140, 5, true),
        ]);
        let r = check_pattern_lemma(&hw(3, 10), &task);
        assert!(r.passed(), "{r:?}");

        let task = TaskTrace::from_addresses(&[0x80, 0xc0], false);
        let r = check_pattern_lemma(&hw(2, 10), &task);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn pattern_holds_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = CacheGeometry::direct_mapped(64, 8);
        let gen = RandomWorkload::new(g);
        for n in 2..=6 {
            for _ in 0..20 {
                let len = rng.gen_range(1..=8);
                let task = gen.trace(&mut rng, len);
                let r = check_pattern_lemma(&HardwareConfig::new(n, g, 10), &task);
                assert!(r.passed(), "{task:?}: {r:?}");
            }
        }
    }

    #[test]
    fn temporal_examples() {
        let h = hw(4, 10);
        let r = check_temporal_lemma(&h, 3, &[0]);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.max_access_stall, 30);

        let r = check_temporal_lemma(&hw(2, 10), 1, &[10]);
        assert!(r.passed());
        assert_eq!(r.max_access_stall, 0);

        let grid: Vec<Cycle> = (-30..=10).step_by(10).collect();
        let r = check_temporal_lemma(&hw(3, 10), 2, &grid);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.cases_checked, 25);
    }

    #[test]
    fn spatial_pairs_on_two_by_two_universe() {
        let g = CacheGeometry::direct_mapped(64, 2);
        let h = HardwareConfig::new(2, g, 4);
        let universe = SearchSpace::grid_universe(&g, 0..=1, 0..=1);
        let r = check_spatial_lemma(&h, &universe);
        assert!(r.passed(), "{r:?}");
        // 16 pairs plus one superset scenario each.
        assert_eq!(r.cases_checked, 32);
    }

    #[test]
    fn dominance_on_baseline() {
        let h = hw(3, 10);
        let task = TaskTrace::from_addresses(&[0x80, 0xc0], true);
        let base = build_baseline(&task, &h).unwrap();
        let r = check_policy_dominance(&h, &task, [base.clone()]);
        assert!(r.passed(), "{r:?}");
        // The target-first policies see no interference on the baseline.
        let fp = ArbitrationPolicy::FixedPriority { order: vec![0, 1, 2] };
        assert_eq!(simulate(&h, &task, &base, &fp).unwrap().total_interference_critical, 0);
        let rr = ArbitrationPolicy::RoundRobin { initial_pointer: 0 };
        assert_eq!(simulate(&h, &task, &base, &rr).unwrap().per_access[0].stall, 0);
    }

    fn tiny_space() -> SearchSpace {
        let geometry = CacheGeometry::direct_mapped(64, 2);
        SearchSpace {
            n_cores: 2,
            geometry,
            l_mem: 4,
            l_hit: 0,
            address_universe: SearchSpace::grid_universe(&geometry, 0..=1, 0..=1),
            max_adversary_trace_len: 1,
            offset_grid: vec![-8, -4, 0, 4],
            sync_modes: vec![SyncMode::PhaseLocked, SyncMode::FreeRunning],
        }
    }

    #[test]
    fn single_access_space_is_bounded_and_attained() {
        let space = tiny_space();
        let task = TaskTrace::from_addresses(&[0x0], true);
        let p = ArbitrationPolicy::PessimisticForT;
        let r = verify_upper_bound(&space, &task, &p, SearchMode::Exhaustive, &VerifyOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.bound, 4);
        assert_eq!(r.max_observed, 4);
        assert_eq!(r.configs_checked, 5 + 5 * 4);
        assert!(r.attainer_count >= 2);
        let base = build_baseline(&task, &space.hardware()).unwrap();
        assert!(r.attainers.contains(&base));
        assert_eq!(
            r.baseline,
            Some(BaselineOutcome {
                interference: 4,
                attains: true,
                in_space: true
            })
        );
    }

    #[test]
    fn back_to_back_free_running_misses_are_reported_and_shrunk() {
        let mut space = tiny_space();
        space.max_adversary_trace_len = 2;
        let task = TaskTrace::from_addresses(&[0x0], true);
        let p = ArbitrationPolicy::PessimisticForT;
        let r = verify_upper_bound(&space, &task, &p, SearchMode::Exhaustive, &VerifyOptions::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.max_observed, 8);
        let cx = &r.violations[0];
        assert_eq!(cx.shrunk.sync_mode, SyncMode::FreeRunning);
        assert_eq!(cx.shrunk.adversaries[0].trace.len(), 2);
    }

    #[test]
    fn report_does_not_depend_on_parallelism() {
        let mut space = tiny_space();
        space.max_adversary_trace_len = 2;
        space.n_cores = 3;
        let task = TaskTrace::from_addresses(&[0x0, 0x40], true);
        let p = ArbitrationPolicy::PessimisticForT;
        let seq = VerifyOptions::default();
        let par = VerifyOptions { parallel: true, ..seq };
        let mut a = verify_upper_bound(&space, &task, &p, SearchMode::Exhaustive, &seq).unwrap();
        let mut b = verify_upper_bound(&space, &task, &p, SearchMode::Exhaustive, &par).unwrap();
        a.elapsed = None;
        b.elapsed = None;
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_mode_and_errors() {
        let space = tiny_space();
        let task = TaskTrace::from_addresses(&[0x0], true);
        let p = ArbitrationPolicy::PessimisticForT;
        let mode = SearchMode::Sampled { count: 50, seed: 9 };
        let r = verify_upper_bound(&space, &task, &p, mode, &VerifyOptions::default()).unwrap();
        // 50 samples plus the injected baseline.
        assert_eq!(r.configs_checked, 51);
        assert!(r.baseline.as_ref().unwrap().attains);

        let empty = TaskTrace::default();
        assert_eq!(
            verify_upper_bound(&space, &empty, &p, SearchMode::Exhaustive, &VerifyOptions::default()),
            Err(VerifyError::EmptyTask)
        );
        let mut bad = tiny_space();
        bad.address_universe.push(0x41);
        assert!(matches!(
            verify_upper_bound(&bad, &task, &p, SearchMode::Exhaustive, &VerifyOptions::default()),
            Err(VerifyError::Geometry(_))
        ));
        let tight = VerifyOptions { budget: 3, ..VerifyOptions::default() };
        assert!(matches!(
            verify_upper_bound(&space, &task, &p, SearchMode::Exhaustive, &tight),
            Err(VerifyError::Adversary(AdversaryError::BudgetExceeded { .. }))
        ));
    }
}
