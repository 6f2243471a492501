//! JSON input documents: system config, search space and adversary sets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::{parse_number, parse_trace, render_trace, TraceError};
use crate::adversary::SearchSpace;
use crate::engine::{validate_policy, ArbiterError};
use crate::model::{
    validate_hardware, Address, AdversarialConfig, Adversary, ArbitrationPolicy, CacheGeometry, Cycle,
    HardwareConfig, HardwareViolation, SyncMode, TaskTrace, Violations,
};
use crate::verify::SearchMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("hardware invariants violated: {0}")]
    Hardware(Violations<HardwareViolation>),
    #[error(transparent)]
    Policy(#[from] ArbiterError),
    #[error("{path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Schema(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyName {
    Pessimistic,
    RoundRobin,
    FixedPriority,
    Fifo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    #[serde(alias = "n_cores")]
    cores: usize,
    #[serde(alias = "line")]
    line_size: u64,
    #[serde(alias = "sets")]
    num_sets: u64,
    #[serde(alias = "assoc")]
    associativity: u32,
    #[serde(alias = "mshr")]
    mshr_count: u32,
    #[serde(alias = "banks")]
    memory_banks: u32,
    l_mem: u64,
    #[serde(default)]
    l_hit: u64,
    policy: PolicyName,
    order: Option<Vec<usize>>,
    initial_pointer: Option<usize>,
}

/// Parses and validates a system config document.
///
/// Malformed documents yield [`ConfigError::Schema`]; well-formed documents
/// describing hardware outside the supported class yield
/// [`ConfigError::Hardware`].
pub fn parse_system_config(text: &str) -> Result<(HardwareConfig, ArbitrationPolicy), ConfigError> {
    let doc: SystemDoc = serde_json::from_str(text)?;
    let policy = match (doc.policy, doc.order, doc.initial_pointer) {
        (PolicyName::Pessimistic, None, None) => ArbitrationPolicy::PessimisticForT,
        (PolicyName::Fifo, None, None) => ArbitrationPolicy::FifoAge,
        (PolicyName::RoundRobin, None, p) => ArbitrationPolicy::RoundRobin {
            initial_pointer: p.unwrap_or(0),
        },
        (PolicyName::FixedPriority, Some(order), None) => ArbitrationPolicy::FixedPriority { order },
        (PolicyName::FixedPriority, None, _) => {
            return Err(ConfigError::Schema("fixed_priority requires `order`".into()))
        }
        (_, Some(_), _) => return Err(ConfigError::Schema("`order` is only valid for fixed_priority".into())),
        (_, _, Some(_)) => {
            return Err(ConfigError::Schema("`initial_pointer` is only valid for round_robin".into()))
        }
    };
    let hw = HardwareConfig {
        n_cores: doc.cores,
        geometry: CacheGeometry {
            line_size_bytes: doc.line_size,
            num_sets: doc.num_sets,
            associativity: doc.associativity,
            mshr_count: doc.mshr_count,
        },
        l_mem: doc.l_mem,
        l_hit: doc.l_hit,
        memory_banks: doc.memory_banks,
    };
    validate_hardware(&hw).map_err(ConfigError::Hardware)?;
    validate_policy(&policy, hw.n_cores)?;
    Ok((hw, policy))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum AddressDoc {
    Number(u64),
    Text(String),
}

impl AddressDoc {
    fn resolve(&self) -> Result<Address, ConfigError> {
        match self {
            AddressDoc::Number(n) => Ok(*n),
            AddressDoc::Text(s) => parse_number(s).ok_or_else(|| ConfigError::Schema(format!("malformed address `{s}`"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum UniverseDoc {
    List(Vec<AddressDoc>),
    /// Inclusive `[first, last]` ranges of set indices and tags.
    Grid { sets: [u64; 2], tags: [u64; 2] },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OffsetsDoc {
    List(Vec<Cycle>),
    Range { from: Cycle, to: Cycle, step: u64 },
}

fn default_budget() -> u64 {
    1_000_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    address_universe: UniverseDoc,
    max_adversary_trace_len: usize,
    offset_grid: OffsetsDoc,
    sync_modes: Vec<SyncMode>,
    #[serde(default = "default_budget")]
    budget: u64,
    #[serde(default = "default_mode")]
    mode: SearchMode,
    #[serde(default = "yes")]
    include_baseline: bool,
}

fn default_mode() -> SearchMode {
    SearchMode::Exhaustive
}

/// A search space together with its run settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSettings {
    pub space: SearchSpace,
    pub budget: u64,
    pub mode: SearchMode,
    pub include_baseline: bool,
}

/// Parses a search-space document; the platform comes from `hw`.
pub fn parse_search_space(text: &str, hw: &HardwareConfig) -> Result<SearchSettings, ConfigError> {
    let doc: SpaceDoc = serde_json::from_str(text)?;
    let g = &hw.geometry;
    let address_universe = match doc.address_universe {
        UniverseDoc::List(list) => list.iter().map(AddressDoc::resolve).collect::<Result<Vec<_>, _>>()?,
        UniverseDoc::Grid { sets, tags } => {
            if sets[0] > sets[1] || tags[0] > tags[1] || sets[1] >= g.num_sets {
                return Err(ConfigError::Schema(format!(
                    "universe grid sets {sets:?} / tags {tags:?} is empty or exceeds {} sets",
                    g.num_sets
                )));
            }
            SearchSpace::grid_universe(g, sets[0]..=sets[1], tags[0]..=tags[1])
        }
    };
    if let Some(a) = address_universe.iter().find(|&&a| a % g.line_size_bytes != 0) {
        return Err(ConfigError::Schema(format!(
            "universe address {a:#x} is not line aligned"
        )));
    }
    let offset_grid = match doc.offset_grid {
        OffsetsDoc::List(list) => list,
        OffsetsDoc::Range { from, to, step } => {
            if step == 0 || from > to {
                return Err(ConfigError::Schema("offset range needs from <= to and step > 0".into()));
            }
            (from..=to).step_by(step as usize).collect()
        }
    };
    if let SearchMode::Sampled { count: 0, .. } = doc.mode {
        return Err(ConfigError::Schema("sampled mode needs count > 0".into()));
    }
    Ok(SearchSettings {
        space: SearchSpace {
            n_cores: hw.n_cores,
            geometry: hw.geometry,
            l_mem: hw.l_mem,
            l_hit: hw.l_hit,
            address_universe,
            max_adversary_trace_len: doc.max_adversary_trace_len,
            offset_grid,
            sync_modes: doc.sync_modes,
        },
        budget: doc.budget,
        mode: doc.mode,
        include_baseline: doc.include_baseline,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversaryDoc {
    #[serde(default)]
    start_offset: Cycle,
    /// Trace file, relative to the adversary document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace_file: Option<String>,
    /// Inline trace text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversariesDoc {
    sync_mode: SyncMode,
    adversaries: Vec<AdversaryDoc>,
}

/// Parses an adversary document. `base` is the directory trace files are
/// resolved against.
pub fn parse_adversaries(text: &str, base: &Path) -> Result<AdversarialConfig, ConfigError> {
    let doc: AdversariesDoc = serde_json::from_str(text)?;
    let adversaries = doc
        .adversaries
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let trace = match (a.trace_file, a.trace) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Schema(format!(
                        "adversary {}: give either `trace_file` or `trace`",
                        i + 1
                    )))
                }
                (Some(file), None) => {
                    let path = base.join(&file);
                    let text = read(&path)?;
                    parse_trace(&text).map_err(|source| ConfigError::Trace {
                        path: path.display().to_string(),
                        source,
                    })?
                }
                (None, Some(text)) => parse_trace(&text).map_err(|source| ConfigError::Trace {
                    path: format!("adversary {} inline trace", i + 1),
                    source,
                })?,
                (None, None) => TaskTrace::default(),
            };
            Ok(Adversary {
                trace,
                start_offset: a.start_offset,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdversarialConfig {
        adversaries,
        sync_mode: doc.sync_mode,
    })
}

/// Writes one trace file per adversary plus an `adversaries.json` that
/// references them. Returns the written paths.
pub fn write_adversaries(config: &AdversarialConfig, dir: &Path) -> Result<Vec<PathBuf>, ConfigError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ConfigError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut docs = Vec::new();
    for (i, adv) in config.adversaries.iter().enumerate() {
        let name = format!("adversary_{}.trace", i + 1);
        let path = dir.join(&name);
        std::fs::write(&path, render_trace(&adv.trace)).map_err(io(&path))?;
        written.push(path);
        docs.push(AdversaryDoc {
            start_offset: adv.start_offset,
            trace_file: Some(name),
            trace: None,
        });
    }
    let doc = AdversariesDoc {
        sync_mode: config.sync_mode,
        adversaries: docs,
    };
    let path = dir.join("adversaries.json");
    let mut json = serde_json::to_string_pretty(&doc).expect("serializable");
    json.push('\n');
    std::fs::write(&path, json).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and parses a trace file.
pub fn load_trace(path: &Path) -> Result<TaskTrace, ConfigError> {
    parse_trace(&read(path)?).map_err(|source| ConfigError::Trace {
        path: path.display().to_string(),
        source,
    })
}
