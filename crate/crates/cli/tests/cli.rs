use std::path::Path;
use std::process::{Command, Output};

use rmw_cli::{parse_csv, run_scenario, CliError, ScenarioConfig, ScenarioId};
use rmw_core::witnesses::WitnessKind;

fn rmw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmw"))
        .args(args)
        .current_dir(dir)
        .env_remove("RMW_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn resolved(id: ScenarioId, json: &str) -> ScenarioConfig {
    ScenarioConfig::from_json(json).unwrap().resolve(id).unwrap()
}

#[test]
fn schema_violations_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.json", r#"{"epsilon": [0.1]}"#),
        ("empty.json", r#"{"eps_grid": []}"#),
        ("range.json", r#"{"eps_grid": [1.5]}"#),
        ("mismatch.json", r#"{"scenario": "mub-sweep"}"#),
        ("irrelevant.json", r#"{"shots": 100}"#),
        ("syntax.json", r#"{"eps_grid": [0.1"#),
        ("search.json", r#"{"search": {"restarts": 0}}"#),
    ];
    for (name, json) in cases {
        let cfg = write_config(dir.path(), name, json);
        let out = rmw(&["bounds-curve", "--config", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        let diag: serde_json::Value = serde_json::from_slice(&out.stderr).expect("JSON diagnostic");
        assert_eq!(diag["error"], "schema", "{name}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmw(&["nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_curve_row_at_half_percent() {
    let cfg = resolved(ScenarioId::BoundsCurve, r#"{"eps_grid": [0.005]}"#);
    let t = run_scenario(&cfg, 1).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!((t.real(0, "b_lab").unwrap() + 0.27931).abs() < 5e-6);
    assert!((t.real(0, "b_rand").unwrap() + 0.00830).abs() < 5e-6);
}

#[test]
fn capability_is_full_without_error() {
    let cfg = resolved(ScenarioId::CapabilityFig1, r#"{"eps_grid": [0.0, 0.01]}"#);
    let t = run_scenario(&cfg, 1).unwrap();
    assert_eq!(t.real(0, "capability_lab"), Some(1.0));
    assert_eq!(t.real(0, "capability_tuned"), Some(1.0));
    assert!(t.real(1, "capability_tuned").unwrap() > t.real(1, "capability_lab").unwrap());
}

#[test]
fn mub_sweep_small_grid() {
    let cfg = resolved(
        ScenarioId::MubSweep,
        r#"{"dims": [3], "eps_grid": [0.1], "search": {"restarts": 8}, "lab_restarts": 2}"#,
    );
    let t = run_scenario(&cfg, 1).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.text(0, "mode").unwrap(), "tuned");
    assert_eq!(t.text(1, "mode").unwrap(), "lab");
    let tuned = t.real(0, "capability").unwrap();
    assert!(tuned > 0.70, "{tuned}");
    assert!(tuned >= t.real(1, "capability").unwrap());
    assert!(t.real(1, "bound").unwrap() <= t.real(0, "bound").unwrap());
}

#[test]
fn row_count_matches_grid() {
    let cases = [
        (ScenarioId::BoundsCurve, r#"{"eps_grid": [0.01, 0.02, 0.03]}"#, 3),
        (ScenarioId::SamplingFig2, r#"{"eps_grid": [0.01, 0.02], "shots": 400}"#, 8),
        (ScenarioId::DephasingSweep, r#"{"eps_grid": [0.01, 0.02]}"#, 2),
        (ScenarioId::PqGrid, r#"{"eps_grid": [0.05], "p_grid": [0.0], "q_grid": [0.0, 0.1]}"#, 2),
        (ScenarioId::Visibility, r#"{"eps_grid": [0.0, 0.05]}"#, 8),
        (ScenarioId::MisalignmentAudit, r#"{"trials": 12}"#, 12),
    ];
    for (id, json, rows) in cases {
        let t = run_scenario(&resolved(id, json), 1).unwrap();
        assert_eq!(t.rows.len(), rows, "{}", id.as_str());
        assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
    }
}

#[test]
fn infeasible_pq_points_are_skipped() {
    let cfg = resolved(ScenarioId::PqGrid, r#"{"eps_grid": [0.1], "p_grid": [0.0, 0.5], "q_grid": [0.0]}"#);
    let t = run_scenario(&cfg, 1).unwrap();
    assert_eq!(t.rows.len(), 1);
    let cfg = resolved(ScenarioId::PqGrid, r#"{"eps_grid": [0.1], "p_grid": [0.5], "q_grid": [0.0]}"#);
    assert!(matches!(run_scenario(&cfg, 1), Err(CliError::Schema(_))));
}

#[test]
fn emitted_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"eps_grid": [0.001, 0.05], "shots": 600}"#);
    let out = rmw(
        &["sampling-fig2", "--config", &cfg, "--out", "nested/s.csv", "--reproducible"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("nested/s.csv")).unwrap();
    let parsed = parse_csv(&text).unwrap();
    let table = run_scenario(&resolved(ScenarioId::SamplingFig2, r#"{"eps_grid": [0.001, 0.05], "shots": 600}"#), 1)
        .unwrap();
    assert_eq!(parsed.columns, table.columns);
    assert_eq!(parsed.rows.len(), table.rows.len());
    for (got, want) in parsed.rows.iter().zip(&table.rows) {
        for (g, w) in got.iter().zip(want) {
            assert_eq!(g, &w.to_string());
            if let rmw_cli::Cell::Real(x) = w {
                let back: f64 = g.parse().unwrap();
                assert!((back - x).abs() <= 5e-10 * x.abs().max(1e-300));
            }
        }
    }
    assert_eq!(parsed.provenance_value("scenario"), Some("sampling-fig2"));
    assert_eq!(parsed.provenance_value("config_sha256"), Some(table.provenance[2].1.as_str()));
}

#[test]
fn hash_changes_iff_config_changes() {
    let base = resolved(ScenarioId::BoundsCurve, r#"{"eps_grid": [0.01, 0.02]}"#);
    let same = resolved(ScenarioId::BoundsCurve, r#"{ "eps_grid" : [0.01, 0.020] , "seed": 0 }"#);
    assert_eq!(base.hash(), same.hash());
    let defaults = resolved(ScenarioId::MubSweep, "{}");
    let explicit = resolved(ScenarioId::MubSweep, r#"{"dims": [2, 3, 4, 5, 6], "eps_grid": [0.005, 0.01, 0.05, 0.1]}"#);
    assert_eq!(defaults.hash(), explicit.hash());
    let variants = [
        r#"{"eps_grid": [0.01, 0.03]}"#,
        r#"{"eps_grid": [0.02, 0.01]}"#,
        r#"{"eps_grid": [0.01, 0.02], "seed": 1}"#,
        r#"{"eps_grid": [0.01, 0.02], "output": "x.csv"}"#,
    ];
    for v in variants {
        assert_ne!(base.hash(), resolved(ScenarioId::BoundsCurve, v).hash(), "{v}");
    }
    assert_ne!(
        resolved(ScenarioId::CapabilityFig1, r#"{"eps_grid": [0.01, 0.02]}"#).hash(),
        base.hash()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"trials": 5, "seed": 3}"#);
    let run = |extra: &[&str]| {
        let mut args = vec!["misalignment-audit", "--config", cfg.as_str(), "--reproducible"];
        args.extend_from_slice(extra);
        let out = rmw(&args, dir.path());
        assert_eq!(out.status.code(), Some(0));
        parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    let a = run(&[]);
    let b = run(&["--seed", "9"]);
    assert_eq!(a.provenance_value("seed"), Some("3"));
    assert_eq!(b.provenance_value("seed"), Some("9"));
    assert_ne!(a.rows, b.rows);
}

#[test]
fn timestamp_only_without_reproducible_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmw(&["bounds-curve"], dir.path());
    let parsed = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(parsed.provenance_value("generated_unix").is_some());
    let out = rmw(&["bounds-curve", "--reproducible"], dir.path());
    let parsed = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(parsed.provenance_value("generated_unix").is_none());
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_rmw"))
        .args(["bounds-curve", "--out", "b.csv", "--reproducible"])
        .current_dir(dir.path())
        .env("RMW_OUT_DIR", dir.path().join("results"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("results/b.csv").exists());
}

#[test]
fn job_count_does_not_change_output() {
    let cfg = resolved(ScenarioId::SamplingFig2, r#"{"eps_grid": [0.01, 0.1], "shots": 500, "seed": 5}"#);
    let one = run_scenario(&cfg, 1).unwrap().to_csv().unwrap();
    let four = run_scenario(&cfg, 4).unwrap().to_csv().unwrap();
    assert_eq!(one, four);
}

#[test]
fn witness_kind_serde_round_trip() {
    for kind in [WitnessKind::ChshLike, WitnessKind::Mub { d: 4 }] {
        let json = serde_json::to_string(&kind).unwrap();
        let back: WitnessKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, kind);
        assert!(back.build().is_ok());
    }
    assert_eq!(serde_json::to_string(&WitnessKind::Mub { d: 3 }).unwrap(), r#"{"kind":"mub","d":3}"#);
}

#[test]
fn numerical_errors_map_to_exit_three() {
    let e: CliError = rmw_core::Error::Numerical("stalled".into()).into();
    assert_eq!(e.exit_code(), 3);
    let e: CliError = rmw_core::Error::InvalidInput("bad".into()).into();
    assert_eq!(e.exit_code(), 2);
}
