mod support;

use std::path::{Path, PathBuf};
use std::process::Command;

use lightpath::cli::{run, MetricsRecord, RunArgs};
use lightpath::simnet::EventTrace;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn args(topology: &str, scenario: Option<&str>) -> RunArgs {
    RunArgs {
        topology: data(topology),
        scenario: scenario.map(data),
        seed: 0,
        trace: None,
        metrics: None,
        tcp_budget_ms: 2000,
        interactive: false,
        token: None,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lightpath"))
}

#[test]
fn empty_scenario_gives_empty_metrics() {
    let report = run(&args("transatlantic.topo", Some("empty.scenario"))).unwrap();
    assert!(report.metrics.is_empty(), "{:?}", report.metrics);
    assert!(report.passed());
}

#[test]
fn four_cut_expectations_hold() {
    let report = run(&args("transatlantic.topo", Some("four_cuts.scenario"))).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
    assert_eq!(report.metrics.count("reroutes"), 4);
}

#[test]
fn metrics_are_a_function_of_the_saved_trace() {
    let report = run(&args("transatlantic.topo", Some("four_cuts.scenario"))).unwrap();
    let reparsed = EventTrace::parse_tsv(&report.trace().to_tsv()).unwrap();
    assert_eq!(reparsed.to_tsv(), report.trace().to_tsv());
    assert_eq!(lightpath::cli::metrics::compute(&reparsed), report.metrics);
}

#[test]
fn binary_writes_files_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let trace = dir.path().join(format!("trace{i}.tsv"));
        let metrics = dir.path().join(format!("metrics{i}.txt"));
        let status = bin()
            .arg("--topology")
            .arg(data("transatlantic.topo"))
            .arg("--scenario")
            .arg(data("four_cuts.scenario"))
            .args(["--seed", "3", "--trace"])
            .arg(&trace)
            .arg("--metrics")
            .arg(&metrics)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        outputs.push((std::fs::read(&trace).unwrap(), std::fs::read_to_string(&metrics).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let m = MetricsRecord::parse(&outputs[0].1);
    assert_eq!(m.count("flows_alive"), 1);
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.scenario");
    std::fs::write(&sc, "at 0 request cern caltech\nend 1000\nexpect reroutes 1\n").unwrap();
    let out = bin()
        .arg("--topology")
        .arg(data("transatlantic.topo"))
        .arg("--scenario")
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reroutes expected 1, got 0"));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("bad.topo");
    std::fs::write(&topo, "switch a ports 2\nspan x a:1 => a:2\n").unwrap();
    let out = bin().arg("--topology").arg(&topo).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = bin().arg("--topology").arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wrong_token_is_rejected_from_the_command_line() {
    let mut a = args("transatlantic.topo", Some("four_cuts.scenario"));
    a.token = Some("nope".into());
    let report = run(&a).unwrap();
    assert_eq!(report.metrics.count("requests_rejected"), 1);
    assert_eq!(report.metrics.count("commits"), 0);
}

#[test]
fn interactive_session_reads_commands_until_quit() {
    let input = b"path create cern caltech\npath list\nquit\npath list\n";
    let mut out = Vec::new();
    let report = lightpath::cli::run::run_interactive(
        &args("transatlantic.topo", None),
        &input[..],
        &mut out,
    )
    .unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("agent-geneva/1 active"));
    assert_eq!(report.metrics.count("paths_active"), 1);
}
