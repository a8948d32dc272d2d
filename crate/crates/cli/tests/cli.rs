//! End-to-end tests of the spicedeck binary: exit codes, output artifacts,
//! and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spicedeck"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand_and_flag() {
    let output = bin().arg("--help").output().unwrap();
    assert!(output.status.success());
    let text = stdout(&output);
    for subcommand in ["parse", "measure", "simulate", "ask", "bench", "report"] {
        assert!(
            text.contains(subcommand),
            "help lacks `{subcommand}`:\n{text}"
        );
    }
    assert!(text.contains("--config"), "{text}");

    let output = bin().args(["bench", "--help"]).output().unwrap();
    assert!(output.status.success());
    let text = stdout(&output);
    for flag in ["--runs", "--workers", "--agent", "--out-dir", "--engine"] {
        assert!(text.contains(flag), "bench help lacks `{flag}`:\n{text}");
    }
}

#[test]
fn parse_prints_normalized_deck() {
    let output = bin()
        .args([
            "parse",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("R1 OUT 0 6"));
    assert!(text.trim_end().ends_with(".end"));
}

#[test]
fn parse_json_lists_cards() {
    let output = bin()
        .args([
            "parse",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--json",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert!(value["cards"].as_array().unwrap().len() >= 7);
}

#[test]
fn parse_malformed_deck_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cir");
    std::fs::write(&bad, "R1 a b 1k\nC7 x\n.end\n").unwrap();
    let output = bin()
        .args(["parse", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let text = stderr(&output);
    assert!(text.contains("line 2"), "{text}");
}

#[test]
fn measure_deck_ripple_within_tolerance() {
    let output = bin()
        .args([
            "measure",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--signal",
            "I(L)",
            "--kind",
            "ripple",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let line = stdout(&output);
    assert!(line.starts_with("ripple "), "{line}");
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - 0.6).abs() / 0.6 < 0.05, "ripple {value}");
    assert!(line.contains(" A "), "{line}");
}

#[test]
fn measure_unknown_signal_exits_3() {
    let output = bin()
        .args([
            "measure",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--signal",
            "V(bogus)",
            "--kind",
            "mean",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn simulate_then_measure_raw_without_resimulation() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("buck.raw");
    let output = bin()
        .args([
            "simulate",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--out",
            raw.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(raw.exists());

    let output = bin()
        .args([
            "measure",
            raw.to_str().unwrap(),
            "--signal",
            "V(out)",
            "--kind",
            "mean",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let value: f64 = stdout(&output)
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - 6.0).abs() / 6.0 < 0.02, "mean {value}");
}

#[test]
fn ask_scripted_success_flow_writes_final_deck() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "ask",
            fixtures().join("decks/buck_lowvin.cir").to_str().unwrap(),
            "--prompt",
            "Adjust the netlist, such that the mean output voltage corresponds to the value 9 V.",
            "--rag",
            fixtures().join("datasheets/buck_ref.txt").to_str().unwrap(),
            "--scripted",
            fixtures()
                .join("scripts/success_flow.json")
                .to_str()
                .unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let final_deck = std::fs::read_to_string(dir.path().join("final.cir")).unwrap();
    assert!(final_deck.contains("V1 IN 0 12"), "{final_deck}");
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert!(transcript.lines().count() >= 10);
}

#[test]
fn ask_iteration_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // A script that only keeps probing never produces a final answer.
    let script = serde_json::json!({
        "turns": (0..4).map(|_| serde_json::json!({
            "content": "still looking",
            "tool_calls": [{"name": "simulate_and_read",
                            "arguments": {"signal": "V(out)", "kind": "mean"}}]
        })).collect::<Vec<_>>()
    });
    let script_path = dir.path().join("loop.json");
    std::fs::write(&script_path, script.to_string()).unwrap();
    let output = bin()
        .args([
            "ask",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--prompt",
            "anything",
            "--scripted",
            script_path.to_str().unwrap(),
            "--max-iter",
            "3",
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "{}", stderr(&output));
}

#[test]
fn ask_empty_datasheet_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "   \n").unwrap();
    let output = bin()
        .args([
            "ask",
            fixtures().join("decks/buck_ref.cir").to_str().unwrap(),
            "--prompt",
            "anything",
            "--rag",
            empty.to_str().unwrap(),
            "--scripted",
            "/nonexistent.json",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("no tokens"), "{}", stderr(&output));
}

#[test]
fn bench_oracle_solves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "bench",
            fixtures()
                .join("questions/buck_sample.json")
                .to_str()
                .unwrap(),
            "--agent",
            "oracle",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("solve_rate: 100.0"), "{text}");
    assert!(dir.path().join("report.txt").exists());
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn bench_two_runs_deterministic_with_zero_width_ci() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let output = bin()
            .args([
                "bench",
                fixtures()
                    .join("questions/buck_sample.json")
                    .to_str()
                    .unwrap(),
                "--agent",
                "bisection",
                "--runs",
                "2",
                "--workers",
                "2",
                "--out-dir",
                dir.path().to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", stderr(&output));
        let text = stdout(&output);
        assert!(text.contains("solve_rate_ci95: ("), "{text}");
        // Deterministic agent, two runs: the interval has zero width.
        let ci_line = text
            .lines()
            .find(|l| l.starts_with("solve_rate_ci95"))
            .unwrap()
            .to_string();
        let nums: Vec<f64> = ci_line
            .trim_start_matches("solve_rate_ci95: (")
            .trim_end_matches(')')
            .split(", ")
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(nums[0], nums[1], "{ci_line}");
    }
    let csv_a = std::fs::read_to_string(dir_a.path().join("report.csv")).unwrap();
    let csv_b = std::fs::read_to_string(dir_b.path().join("report.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "identical inputs must give identical outputs");
}

#[test]
fn bench_schema_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"schema": "spicedeck-questions/1", "questions": [{
            "id": "x", "circuit": "nope.cir",
            "prompt_template": "do {target}",
            "category": "topology_adaption",
            "tolerance_pct": 5.0,
            "verification": {"tool": "pin_connected_via", "node_a": "A",
                             "node_b": "B", "kind": "R", "value": 1e5}
        }]}"#,
    )
    .unwrap();
    let output = bin()
        .args(["bench", bad.to_str().unwrap(), "--agent", "noop"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("schema violation"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn report_rerenders_summary() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "bench",
            fixtures()
                .join("questions/buck_sample.json")
                .to_str()
                .unwrap(),
            "--agent",
            "noop",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());

    let output = bin()
        .args(["report", dir.path().join("summary.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let table = stdout(&output);
    assert!(table.contains("agent: noop"), "{table}");
    assert!(table.contains("general-buck"), "{table}");
}

#[test]
fn bench_persists_transcripts_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "bench",
            fixtures()
                .join("questions/buck_sample.json")
                .to_str()
                .unwrap(),
            "--agent",
            "oracle",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let transcripts: Vec<_> = std::fs::read_dir(dir.path().join("transcripts"))
        .unwrap()
        .collect();
    assert_eq!(transcripts.len(), 10);

    let quiet = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "bench",
            fixtures()
                .join("questions/buck_sample.json")
                .to_str()
                .unwrap(),
            "--agent",
            "oracle",
            "--no-transcripts",
            "--out-dir",
            quiet.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(!quiet.path().join("transcripts").exists());
}
