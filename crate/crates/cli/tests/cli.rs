use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lodestar_agent::events::read_events;
use lodestar_agent::{Campaign, Clock, NullSink};
use lodestar_cli::run::read_trajectory;

const BIN: &str = env!("CARGO_BIN_EXE_lodestar");

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn lodestar(args: &[&str]) -> Output {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("LODESTAR_BACKEND_URL")
        .output()
        .expect("binary runs");
    out
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_csv_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let compass = fixtures().join("benchmarks/hartmann6.json");
    ok(lodestar(&[
        "run", "--compass", s(&compass), "--method", "vanilla-bo", "--seeds", "1..3", "--budget", "12", "--out",
        s(dir.path()),
    ]));
    for seed in 1..=3 {
        let rows = read_trajectory(&dir.path().join(format!("vanilla-bo_seed{seed}.csv"))).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.seed == seed));
        assert!(rows.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
        assert!(dir.path().join(format!("vanilla-bo_seed{seed}.events.jsonl")).is_file());
    }
}

#[test]
fn scripted_reasoning_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let compass = fixtures().join("suzuki/compass.json");
    let transcript = fixtures().join("suzuki/transcript.json");
    for dir in [&a, &b] {
        let stdout = ok(lodestar(&[
            "run", "--compass", s(&compass), "--method", "reasoning-bo", "--seeds", "0", "--scripted",
            s(&transcript), "--out", s(dir.path()),
        ]));
        assert!(!stdout.contains('['), "degraded run: {stdout}");
    }
    for name in ["reasoning-bo_seed0.csv", "reasoning-bo_seed0.events.jsonl"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(read_trajectory(&a.path().join("reasoning-bo_seed0.csv")).unwrap().len(), 30);
}

#[test]
fn baselines_leave_event_logs() {
    let dir = tempfile::tempdir().unwrap();
    let compass = fixtures().join("benchmarks/rosenbrock3.json");
    for method in ["cma-es", "random"] {
        ok(lodestar(&[
            "run", "--compass", s(&compass), "--method", method, "--seeds", "4", "--budget", "10", "--out",
            s(dir.path()),
        ]));
        let rows = read_trajectory(&dir.path().join(format!("{method}_seed4.csv"))).unwrap();
        assert_eq!(rows.len(), 10);
        let events = read_events(&dir.path().join(format!("{method}_seed4.events.jsonl"))).unwrap();
        let c = Campaign::replay(events, Box::new(NullSink), Clock::logical()).unwrap();
        assert!(c.is_finished());
        assert_eq!(c.trajectory().len(), 10);
    }
}

#[test]
fn unknown_method_is_a_usage_error() {
    let compass = fixtures().join("benchmarks/hartmann6.json");
    let out = lodestar(&["run", "--compass", s(&compass), "--method", "gradient-descent"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient-descent"));
}

#[test]
fn command_evaluator_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let compass = serde_json::json!({
        "title": "Sum of two settings",
        "description": "Two dials; the response is unknown.",
        "objective": {"name": "y", "direction": "maximize"},
        "parameters": [
            {"name": "a", "type": "continuous", "bounds": [0, 1]},
            {"name": "b", "type": "ordinal", "choices": [1, 2, 3]}
        ],
        "budget": {"rounds": 2, "candidates_per_round": 2, "bo_pool_size": 3},
        "evaluator": {"kind": "command", "program": BIN, "args": ["echo-evaluator"]}
    });
    let path = dir.path().join("compass.json");
    std::fs::write(&path, compass.to_string()).unwrap();
    let out = dir.path().join("out");
    ok(lodestar(&["run", "--compass", s(&path), "--method", "random", "--seeds", "2", "--out", s(&out)]));

    let events = read_events(&out.join("random_seed2.events.jsonl")).unwrap();
    let c = Campaign::replay(events, Box::new(NullSink), Clock::logical()).unwrap();
    let state = c.state();
    assert_eq!(state.observations.len(), 4);
    for t in &state.trials {
        let point = serde_json::to_value(&t.point).unwrap();
        let sum: f64 = point.as_object().unwrap().values().filter_map(|v| v.as_f64()).sum();
        assert_eq!(state.observation(&t.id).unwrap().value, sum);
    }
}

fn write_suite(dir: &Path) -> PathBuf {
    let compass = fixtures().join("benchmarks/rosenbrock3.json");
    let suite = dir.join("suite.toml");
    std::fs::write(
        &suite,
        format!(
            "methods = [\"vanilla-bo\", \"random\"]\nseeds = \"0..1\"\nbudget = 6\n\n[[benchmarks]]\nname = \"rosenbrock\"\ncompass = {:?}\n",
            s(&compass)
        ),
    )
    .unwrap();
    suite
}

#[test]
fn bench_writes_reports_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let suite = write_suite(dir.path());
    let out = dir.path().join("bench");
    let stdout = ok(lodestar(&["bench", "--suite", s(&suite), "--out", s(&out)]));
    assert!(stdout.contains("2 cells run, 0 skipped"), "{stdout}");

    let csv = std::fs::read_to_string(out.join("rosenbrock/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "method,CV,Std,Log Regret,Log AUC,CVaR@0.1,CVaR@0.3,CVaR@0.5,IMP@1,IMP@3,IMP@5"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("vanilla-bo,") && lines[2].starts_with("random,"));
    assert!(out.join("rosenbrock/report.md").is_file());
    for seed in 0..=1 {
        assert!(out.join(format!("rosenbrock/random/random_seed{seed}.csv")).is_file());
    }

    let before = std::fs::metadata(out.join("rosenbrock/random/random_seed0.csv")).unwrap().modified().unwrap();
    let stdout = ok(lodestar(&["bench", "--suite", s(&suite), "--out", s(&out), "--resume"]));
    assert!(stdout.contains("0 cells run, 2 skipped"), "{stdout}");
    let after = std::fs::metadata(out.join("rosenbrock/random/random_seed0.csv")).unwrap().modified().unwrap();
    assert_eq!(before, after);
    assert_eq!(std::fs::read_to_string(out.join("rosenbrock/report.csv")).unwrap(), csv);
}
