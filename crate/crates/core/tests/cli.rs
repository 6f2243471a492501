use std::path::{Path, PathBuf};
use std::process::Command;

use miub::cli::{self, RunReport, Verdict};
use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("miub").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(json: &str) {
    let value: Value = serde_json::from_str(json).unwrap();
    let validator = schema();
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

struct Files {
    dir: tempfile::TempDir,
}

impl Files {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn write(&self, name: &str, body: &str) -> String {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.display().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn bound_prints_the_formula() {
    let (code, out, _) = run(&["bound", "--cores", "4", "--lmem", "40", "--crit", "10"]);
    assert_eq!((code, out.as_str()), (0, "1200\n"));

    let (code, out, _) = run(&["bound", "--cores", "4", "--lmem", "40", "--task", &fixture("task.trace")]);
    assert_eq!((code, out.as_str()), (0, "360\n"));

    let (code, out, _) = run(&["bound", "--cores", "1", "--lmem", "40", "--crit", "10", "--format", "json"]);
    assert_eq!(code, 0);
    assert_valid(&out);
    assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["bound"], 0);
    assert!(!schema().is_valid(&serde_json::json!({"bound": 1.5, "cores": 1, "critical_count": 0, "l_mem": 1})));
}

#[test]
fn baseline_attains_and_emits_replayable_traces() {
    let f = Files::new();
    let emit = f.path("base");
    let (code, out, _) = run(&[
        "baseline",
        "--config",
        &fixture("system.json"),
        "--task",
        &fixture("task.trace"),
        "--emit-dir",
        emit.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_valid(&out);
    let report: RunReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    let sim = report.simulation.as_ref().unwrap();
    assert_eq!(sim.interference_critical, report.bound);
    assert_eq!(report.bound, 360);
    assert!(emit.join("adversary_3.trace").exists());

    let adv = emit.join("adversaries.json");
    let (code, replay, _) = run(&[
        "simulate",
        "--config",
        &fixture("system.json"),
        "--task",
        &fixture("task.trace"),
        "--adversaries",
        adv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let replay: RunReport = serde_json::from_str(&replay).unwrap();
    assert_eq!(replay.simulation, report.simulation);
}

#[test]
fn simulate_exit_codes() {
    let f = Files::new();
    let sys = fixture("system.json");
    let task = fixture("task.trace");

    // A synthetic overrun: the second adversary issues back to back and
    // re-enters the queue ahead of the target.
    let two = f.write(
        "two.json",
        r#"{"cores":2,"line":64,"sets":8,"assoc":1,"mshr":0,"banks":1,"l_mem":10,"policy":"pessimistic"}"#,
    );
    let single = f.write("t.trace", "access 0x0 gap=0 crit=1\n");
    let adv = f.write(
        "adv.json",
        r#"{"sync_mode":"free_running","adversaries":[{"trace":"access 0x200 gap=0 crit=0\naccess 0x240 gap=0 crit=0"}]}"#,
    );
    let (code, out, err) = run(&["simulate", "--config", &two, "--task", &single, "--adversaries", &adv, "--format", "text"]);
    assert_eq!(code, 1, "{err}");
    assert!(out.contains("VERDICT: FAIL"));
    assert!(out.contains("COUNTEREXAMPLE"));

    // Wrong adversary count.
    let (code, _, err) = run(&["simulate", "--config", &sys, "--task", &task, "--adversaries", &adv]);
    assert_eq!(code, 2);
    assert!(err.contains("core count"), "{err}");

    let bad_trace = f.write("bad.trace", "access 0x0 gap=0 crit=1\naccess ZZZ gap=0 crit=0\n");
    let (code, _, err) = run(&["simulate", "--config", &sys, "--task", &bad_trace, "--baseline"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");

    let missing = f.write("m.json", r#"{"cores":4,"line":64,"sets":256,"assoc":1,"mshr":0,"banks":1,"policy":"pessimistic"}"#);
    let (code, _, err) = run(&["simulate", "--config", &missing, "--task", &task, "--baseline"]);
    assert_eq!(code, 2);
    assert!(err.contains("schema") && err.contains("l_mem"), "{err}");

    let assoc = f.write("a.json", r#"{"cores":4,"line":64,"sets":256,"assoc":2,"mshr":0,"banks":1,"l_mem":40,"policy":"pessimistic"}"#);
    let (code, _, err) = run(&["simulate", "--config", &assoc, "--task", &task, "--baseline"]);
    assert_eq!(code, 2);
    assert!(err.contains("set-associative"), "{err}");

    let (code, _, _) = run(&["simulate", "--config", &sys, "--task", &task]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("check-lemmas"));
}

#[test]
fn search_on_tiny_space_passes() {
    let f = Files::new();
    let out_path = f.path("search.json");
    let (code, out, _) = run(&[
        "search",
        "--config",
        &fixture("tiny_system.json"),
        "--task",
        &fixture("single.trace"),
        "--space",
        &fixture("tiny_space.json"),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.is_empty(), "--out keeps stdout clean");
    let json = std::fs::read_to_string(&out_path).unwrap();
    assert_valid(&json);
    let report: RunReport = serde_json::from_str(&json).unwrap();
    let search = report.search.unwrap();
    assert!(search.violations.is_empty());
    assert_eq!(search.max_observed, 4);
    let mut broken: Value = serde_json::from_str(&json).unwrap();
    broken["verdict"] = "maybe".into();
    assert!(!schema().is_valid(&broken));
    broken["verdict"] = "pass".into();
    broken["hardware"]["memory_banks"] = 2.into();
    assert!(!schema().is_valid(&broken));

    // Re-rendering a stored report keeps its exit code.
    let (code, text, _) = run(&["report", out_path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(text.contains("VERDICT: PASS"));
    let (code, json2, _) = run(&["report", out_path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 0);
    assert_eq!(json2, json);
}

#[test]
fn search_reports_violations_with_exit_one() {
    let f = Files::new();
    let space = f.write(
        "space.json",
        r#"{"address_universe":{"sets":[0,1],"tags":[0,1]},"max_adversary_trace_len":2,
            "offset_grid":[-8,-4,0,4],"sync_modes":["phase_locked","free_running"]}"#,
    );
    let (code, out, _) = run(&[
        "search",
        "--config",
        &fixture("tiny_system.json"),
        "--task",
        &fixture("single.trace"),
        "--space",
        &space,
    ]);
    assert_eq!(code, 1);
    assert_valid(&out);
    let report: RunReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.verdict, Verdict::Fail);
    let search = report.search.as_ref().unwrap();
    assert!(search.violation_count > 0);
    assert!(search.violations[0].shrunk_interference > search.bound);

    let stored = f.write("fail.json", &out);
    let (code, text, _) = run(&["report", &stored]);
    assert_eq!(code, 1);
    assert!(text.contains("COUNTEREXAMPLE 1"));

    // A tampered verdict is rejected.
    let tampered = f.write("tampered.json", &out.replace("\"verdict\": \"fail\"", "\"verdict\": \"pass\""));
    let (code, _, err) = run(&["report", &tampered]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn budget_and_space_errors_are_input_errors() {
    let f = Files::new();
    let tight = f.write(
        "space.json",
        r#"{"address_universe":{"sets":[0,1],"tags":[0,1]},"max_adversary_trace_len":2,
            "offset_grid":[0],"sync_modes":["free_running"],"budget":3}"#,
    );
    let args = |space: &str| {
        vec![
            "search".to_string(),
            "--config".into(),
            fixture("tiny_system.json"),
            "--task".into(),
            fixture("single.trace"),
            "--space".into(),
            space.to_string(),
        ]
    };
    let (code, _, err) = run(&args(&tight).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 2);
    assert!(err.contains("budget"), "{err}");

    let bad = f.write("bad.json", r#"{"address_universe":[1],"max_adversary_trace_len":1,"offset_grid":[0],"sync_modes":[]}"#);
    let (code, _, _) = run(&args(&bad).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 2);
}

#[test]
fn check_lemmas_report_is_schema_valid() {
    let f = Files::new();
    let sys = f.write(
        "sys.json",
        r#"{"cores":3,"line":64,"sets":8,"assoc":1,"mshr":0,"banks":1,"l_mem":10,"policy":"pessimistic"}"#,
    );
    let task = f.write("t.trace", "access 0x80 gap=0 crit=1\n");
    let (code, out, _) = run(&["check-lemmas", "--config", &sys, "--task", &task, "--samples", "0"]);
    assert_valid(&out);
    let report: RunReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.lemmas.len(), 4);
    assert_eq!(code, report.exit_code());
    assert_eq!(code, 0, "{:#?}", report.lemmas);
}

#[test]
fn binary_matches_library_entry_point() {
    let out = Command::new(env!("CARGO_BIN_EXE_miub"))
        .args(["simulate", "--config", &fixture("system.json"), "--task", &fixture("task.trace"), "--baseline"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let (_, lib_out, _) = run(&["simulate", "--config", &fixture("system.json"), "--task", &fixture("task.trace"), "--baseline"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), lib_out);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("PASS"));
}
