//! Certification run reports and their JSON / text renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::trace::render_trace;
use crate::engine::{AccessRecord, Outcome, SimResult};
use crate::model::{AdversarialConfig, ArbitrationPolicy, HardwareConfig, TaskTrace};
use crate::verify::{miub_bound, LemmaReport, SearchReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadDigest {
    pub length: usize,
    pub critical_count: usize,
    /// SHA-256 of the canonical trace text.
    pub sha256: String,
}

impl WorkloadDigest {
    pub fn of(task: &TaskTrace) -> Self {
        let digest = Sha256::digest(render_trace(task).as_bytes());
        Self {
            length: task.len(),
            critical_count: task.critical_count(),
            sha256: digest.iter().fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub adversaries: AdversarialConfig,
    pub interference_critical: u64,
    pub interference_all: u64,
    pub conversion_penalty: u64,
    pub max_access_stall: u64,
    pub per_access: Vec<AccessRecord>,
}

impl From<(&AdversarialConfig, &SimResult)> for SimulationSummary {
    fn from((config, r): (&AdversarialConfig, &SimResult)) -> Self {
        Self {
            adversaries: config.clone(),
            interference_critical: r.total_interference_critical,
            interference_all: r.total_interference_all,
            conversion_penalty: r.conversion_penalty,
            max_access_stall: r.max_stall(),
            per_access: r.per_access.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub command: String,
    pub hardware: HardwareConfig,
    pub workload: WorkloadDigest,
    pub policy: ArbitrationPolicy,
    pub bound: u64,
    pub per_access_bound: u64,
    /// Conditions every result in this report depends on.
    pub invariants: Vec<String>,
    pub simulation: Option<SimulationSummary>,
    pub lemmas: Vec<LemmaReport>,
    pub search: Option<SearchReport>,
    pub verdict: Verdict,
}

impl RunReport {
    pub fn new(command: &str, hw: &HardwareConfig, task: &TaskTrace, policy: &ArbitrationPolicy) -> Self {
        let mut report = Self {
            tool: ToolInfo::default(),
            command: command.to_string(),
            hardware: *hw,
            workload: WorkloadDigest::of(task),
            policy: policy.clone(),
            bound: miub_bound(hw.n_cores, hw.l_mem, task.critical_count()),
            per_access_bound: hw.per_access_bound(),
            invariants: invariants(hw, policy),
            simulation: None,
            lemmas: Vec::new(),
            search: None,
            verdict: Verdict::Pass,
        };
        report.finalize();
        report
    }

    /// Verdict implied by the report's contents: the simulated critical
    /// interference and every single stall are within their bounds, and all
    /// embedded lemma and search reports passed.
    pub fn evaluate(&self) -> Verdict {
        let sim_ok = self.simulation.as_ref().is_none_or(|s| {
            s.interference_critical <= self.bound && s.max_access_stall <= self.per_access_bound
        });
        let ok = sim_ok
            && self.lemmas.iter().all(LemmaReport::passed)
            && self.search.as_ref().is_none_or(SearchReport::passed);
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn finalize(&mut self) {
        self.verdict = self.evaluate();
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }

    /// One-line summary.
    pub fn headline(&self) -> String {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        let observed = match (&self.simulation, &self.search) {
            (Some(s), _) => format!("I_T = {}, ", s.interference_critical),
            (None, Some(s)) => format!("max I_T = {}, ", s.max_observed),
            _ => String::new(),
        };
        format!("{verdict}: {} {observed}bound = {}", self.command, self.bound)
    }
}

fn invariants(hw: &HardwareConfig, policy: &ArbitrationPolicy) -> Vec<String> {
    let mut v = vec![
        format!("{} cores, target task on core 0", hw.n_cores),
        "direct-mapped shared L2 (associativity 1)".to_string(),
        "MSHRs disabled: blocking misses, at most one request in flight per core".to_string(),
        "single-bank memory: one shared L2/memory path serving one request at a time".to_string(),
        format!("fixed miss latency L_mem = {} cycles (L_hit = {})", hw.l_mem, hw.l_hit),
    ];
    v.push(match policy {
        ArbitrationPolicy::PessimisticForT => {
            "pessimistic arbitration: the target is granted last among contending requests".to_string()
        }
        other => format!("arbitration {other}, analysed against the pessimistic worst case"),
    });
    v
}

/// Rewrites every object with keys in sorted order.
fn canonical(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// Canonical JSON: sorted keys, two-space indentation, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let value = canonical(serde_json::to_value(value).expect("reports serialize to JSON"));
    let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
    s.push('\n');
    s
}

pub fn emit_report(report: &RunReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_canonical_json(report).into_bytes(),
        Format::Text => render_text(report).into_bytes(),
    }
}

fn render_text(r: &RunReport) -> String {
    let mut o = String::new();
    let hw = &r.hardware;
    let _ = writeln!(o, "{} {} -- {} report", r.tool.name, r.tool.version, r.command);
    let _ = writeln!(o);
    let _ = writeln!(
        o,
        "Platform: {} cores, L2 {} sets x {} B lines, L_mem = {}, L_hit = {}",
        hw.n_cores, hw.geometry.num_sets, hw.geometry.line_size_bytes, hw.l_mem, hw.l_hit
    );
    let _ = writeln!(o, "Policy:   {}", r.policy);
    let _ = writeln!(
        o,
        "Workload: {} accesses, {} critical, sha256 {}",
        r.workload.length, r.workload.critical_count, r.workload.sha256
    );
    let _ = writeln!(o);
    let _ = writeln!(o, "Results below hold only under these invariants:");
    for inv in &r.invariants {
        let _ = writeln!(o, "  - {inv}");
    }
    let _ = writeln!(o);
    let _ = writeln!(
        o,
        "Bound: |P_crit| * (N-1) * L_mem = {} * {} * {} = {}",
        r.workload.critical_count,
        hw.n_cores.saturating_sub(1),
        hw.l_mem,
        r.bound
    );
    let _ = writeln!(o, "Per-access bound: (N-1) * L_mem = {}", r.per_access_bound);

    if let Some(s) = &r.simulation {
        let _ = writeln!(o);
        let _ = writeln!(o, "Simulation ({} adversaries, {}):", s.adversaries.adversaries.len(), s.adversaries.sync_mode);
        let _ = writeln!(o, "  critical interference  {}", s.interference_critical);
        let _ = writeln!(o, "  total interference     {}", s.interference_all);
        let _ = writeln!(o, "  conversion penalty     {}", s.conversion_penalty);
        let _ = writeln!(o, "  max single stall       {}", s.max_access_stall);
        let _ = writeln!(o);
        let _ = writeln!(
            o,
            "  {:>5}  {:>18}  {:>4}  {:>8}  {:>8}  {:>8}  {:>4}  {:>6}",
            "#", "address", "crit", "issue", "grant", "done", "out", "stall"
        );
        for a in &s.per_access {
            let _ = writeln!(
                o,
                "  {:>5}  {:>18}  {:>4}  {:>8}  {:>8}  {:>8}  {:>4}  {:>6}",
                a.index,
                format!("{:#x}", a.address),
                if a.critical { "yes" } else { "no" },
                a.issue_cycle,
                a.grant_cycle,
                a.completion_cycle,
                match a.outcome {
                    Outcome::Hit => "hit",
                    Outcome::Miss => "miss",
                },
                a.stall
            );
        }
        if s.interference_critical > r.bound || s.max_access_stall > r.per_access_bound {
            let _ = writeln!(o);
            let _ = writeln!(o, "COUNTEREXAMPLE (adversarial configuration exceeding the bound):");
            render_config(&mut o, &s.adversaries);
        }
    }

    for l in &r.lemmas {
        let _ = writeln!(o);
        let _ = writeln!(
            o,
            "Check {:?}: {} cases, {} failures, max single stall {} -- {}",
            l.lemma,
            l.cases_checked,
            l.failure_count,
            l.max_access_stall,
            if l.passed() { "PASS" } else { "FAIL" }
        );
        for f in &l.failures {
            let _ = writeln!(o, "  [{:?}] {}", f.kind, f.description);
        }
    }

    if let Some(s) = &r.search {
        let _ = writeln!(o);
        let size = s.space.size.map_or("> 2^64".to_string(), |n| n.to_string());
        let _ = writeln!(
            o,
            "Search ({:?}): {} configurations checked of {size}",
            s.mode, s.configs_checked
        );
        let _ = writeln!(o, "  max observed interference  {}", s.max_observed);
        let _ = writeln!(o, "  configurations at bound    {}", s.attainer_count);
        let _ = writeln!(o, "  configurations over bound  {}", s.violation_count);
        let _ = writeln!(o, "  max single stall           {}", s.max_access_stall);
        if let Some(b) = &s.baseline {
            let _ = writeln!(
                o,
                "  baseline interference      {} ({}, {})",
                b.interference,
                if b.attains { "attains bound" } else { "does not attain bound" },
                if b.in_space { "in space" } else { "added to space" }
            );
        }
        for (i, cx) in s.violations.iter().enumerate() {
            let _ = writeln!(o);
            let _ = writeln!(
                o,
                "COUNTEREXAMPLE {}: interference {} > {} (shrunk: {})",
                i + 1,
                cx.interference,
                s.bound,
                cx.shrunk_interference
            );
            render_config(&mut o, &cx.shrunk);
        }
    }

    let _ = writeln!(o);
    let _ = writeln!(
        o,
        "VERDICT: {}",
        match r.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    );
    o
}

fn render_config(o: &mut String, c: &AdversarialConfig) {
    let _ = writeln!(o, "  sync mode: {}", c.sync_mode);
    for (i, a) in c.adversaries.iter().enumerate() {
        let _ = writeln!(o, "  adversary {} (core {}), start offset {}:", i + 1, i + 1, a.start_offset);
        for line in render_trace(&a.trace).lines() {
            let _ = writeln!(o, "    {line}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::build_baseline;
    use crate::engine::simulate;
    use crate::model::CacheGeometry;

    fn sample() -> RunReport {
        let hw = HardwareConfig::new(4, CacheGeometry::direct_mapped(64, 8), 10);
        let task = TaskTrace::from_addresses(&[0x80, 0xc0], true);
        let policy = ArbitrationPolicy::PessimisticForT;
        let base = build_baseline(&task, &hw).unwrap();
        let r = simulate(&hw, &task, &base, &policy).unwrap();
        let mut report = RunReport::new("simulate", &hw, &task, &policy);
        report.simulation = Some((&base, &r).into());
        report.finalize();
        report
    }

    #[test]
    fn canonical_json_is_sorted_and_stable() {
        let r = sample();
        let a = emit_report(&r, Format::Json);
        assert_eq!(a, emit_report(&r.clone(), Format::Json));
        let text = String::from_utf8(a).unwrap();
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        fn integers_only(v: &Value) -> bool {
            match v {
                Value::Number(n) => n.is_i64() || n.is_u64(),
                Value::Array(items) => items.iter().all(integers_only),
                Value::Object(map) => map.values().all(integers_only),
                _ => true,
            }
        }
        assert!(integers_only(&serde_json::from_str(&text).unwrap()));
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn pass_text_contains_bound_and_verdict() {
        let r = sample();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.bound, 60);
        let text = String::from_utf8(emit_report(&r, Format::Text)).unwrap();
        assert!(text.contains("= 60"));
        assert!(text.contains("PASS"));
        assert!(text.contains("direct-mapped"));
        assert!(text.contains("MSHRs disabled"));
        assert!(!text.contains("COUNTEREXAMPLE"));
    }

    #[test]
    fn understated_bound_fails_with_counterexample() {
        let mut r = sample();
        r.bound -= 1;
        r.finalize();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.exit_code(), 1);
        let text = String::from_utf8(emit_report(&r, Format::Text)).unwrap();
        assert!(text.contains("COUNTEREXAMPLE"));
        assert!(text.contains("VERDICT: FAIL"));
        assert!(text.contains("access 0x280"));
    }

    #[test]
    fn digest_tracks_content() {
        let a = WorkloadDigest::of(&TaskTrace::from_addresses(&[0x80], true));
        let b = WorkloadDigest::of(&TaskTrace::from_addresses(&[0x80], false));
        assert_eq!(a.sha256.len(), 64);
        assert_ne!(a.sha256, b.sha256);
        assert_eq!(a, WorkloadDigest::of(&TaskTrace::from_addresses(&[0x80], true)));
    }
}
