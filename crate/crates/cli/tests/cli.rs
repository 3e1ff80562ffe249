use std::process::Command;

use markov_gap::algebra::Element;
use markov_gap::exec::ExecPolicy;
use markov_gap_cli::config::{parse_config, Task, DEFAULT_SUITE};
use markov_gap_cli::report::{to_csv, WitnessLit};
use markov_gap_cli::runner::{prepare, run_suite};
use proptest::prelude::*;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_markov-gap");

const DEPOLARIZING: &str = r#"{"seed": 5, "restarts": 4, "p_grid": [1.5, 2, 3], "tasks": ["gap", "bounds"],
    "channel": {"id": "dep", "kind": "depolarizing", "n": 2, "lambda": 0.5}}"#;

#[test]
fn depolarizing_gap_rows() {
    let cfg = parse_config(DEPOLARIZING).unwrap();
    let rows = run_suite(&cfg, &cfg.tasks, ExecPolicy::default());
    let gaps: Vec<_> = rows.iter().filter(|r| r.task == "gap").collect();
    assert_eq!(gaps.len(), 3);
    for r in gaps {
        assert!((r.cp_lower.unwrap() - 0.5).abs() < 1e-6);
        assert!(r.cp_upper.unwrap() >= 0.5 - 1e-12);
        assert!(r.pass);
    }
    assert!(rows.iter().any(|r| r.task == "bounds" && r.item == "thm21-final"));
    assert!(rows.iter().all(|r| r.pass), "{}", to_csv(&rows));
}

#[test]
fn transpose_validation_fails_with_reason() {
    let cfg = parse_config(r#"{"tasks": ["validate"], "channel": {"kind": "transpose", "n": 2}}"#).unwrap();
    let rows = run_suite(&cfg, &cfg.tasks, ExecPolicy::default());
    assert_eq!(rows.len(), 1);
    assert!(!rows[0].pass);
    assert!(rows[0].reason.contains("Choi not PSD"), "{}", rows[0].reason);
}

#[test]
fn errors_become_rows() {
    let cfg = parse_config(r#"{"seed": 1, "tasks": ["gap", "lemmas"],
        "channel": {"kind": "schur", "mask": [[1, 1.5], [1.5, 1]]}}"#)
    .unwrap();
    let rows = run_suite(&cfg, &cfg.tasks, ExecPolicy::default());
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r.pass && r.reason.contains("not PSD")));
}

#[test]
fn suite_is_deterministic_across_policies() {
    let cfg = parse_config(DEFAULT_SUITE).unwrap();
    let a = to_csv(&run_suite(&cfg, &cfg.tasks, ExecPolicy::Parallel));
    let b = to_csv(&run_suite(&cfg, &cfg.tasks, ExecPolicy::Sequential));
    assert_eq!(a, b);
}

#[test]
fn binary_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(BIN).args(["report", "--seed", "11", "--out"]).arg(&out).status().unwrap();
        assert_eq!(status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "p_grid": [1.0], "channel": {"kind": "depolarizing", "n": 2, "lambda": 0.5}}"#).unwrap();
    let out = Command::new(BIN).args(["estimate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("$.p_grid[0]"));

    let failing = dir.path().join("t.json");
    std::fs::write(&failing, r#"{"channel": {"kind": "transpose", "n": 2}}"#).unwrap();
    let out = Command::new(BIN).args(["validate", "--config"]).arg(&failing).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);

    let out = Command::new(BIN).args(["bounds", "--p", "1.5,3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn json_witnesses_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let text = r#"{"seed": 9, "restarts": 4, "p_grid": [1.5, 3, 4], "tasks": ["gap"], "channels": [
        {"id": "circ", "kind": "circulant", "probabilities": [0.5, 0.3, 0.2]},
        {"id": "mix", "kind": "random-unitary", "weights": [0.5, 0.5],
         "unitaries": [[[1, 0], [0, 1]], [[0.6, 0.8], [-0.8, 0.6]]]},
        {"id": "schur", "kind": "schur", "mask": [[1, 0.3], [0.3, 1]]}]}"#;
    std::fs::write(&cfg_path, text).unwrap();
    let out = dir.path().join("r.json");
    let status = Command::new(BIN).args(["report", "--format", "json", "--config"]).arg(&cfg_path).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let cfg = parse_config(text).unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let entry = cfg.channels.iter().find(|c| c.id == row["channel_id"]).unwrap();
        let (t, _) = prepare(entry).unwrap();
        let w: WitnessLit = serde_json::from_value(row["witness"].clone()).unwrap();
        let x = Element::from_blocks(t.algebra(), w.to_blocks()).unwrap();
        let p = row["p"].as_f64().unwrap();
        let value = t.apply(&x).unwrap().schatten_norm(p).unwrap();
        assert!((value - row["cp_lower"].as_f64().unwrap()).abs() < 1e-10);
        assert!((x.schatten_norm(p).unwrap() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn default_tasks_include_sigma_only_when_configured() {
    let cfg = parse_config(DEFAULT_SUITE).unwrap();
    assert_eq!(cfg.tasks, [Task::Validate, Task::Gap, Task::Bounds, Task::Lemmas, Task::Sigma]);
    let cfg = parse_config(DEPOLARIZING.replace(r#""tasks": ["gap", "bounds"],"#, "").as_str()).unwrap();
    assert!(!cfg.tasks.contains(&Task::Sigma));
}

fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        (-5.0f64..5.0).prop_map(Value::from),
        (0u64..6).prop_map(Value::from),
        prop::sample::select(vec![
            "depolarizing", "kraus", "schur", "transpose", "compose", "diagonal", "rotated-diagonal(45deg)",
            "rotated-diagonal(", "gap", "sigma", "validate", "fixed-points", "x",
        ])
        .prop_map(Value::from),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        let keys = prop::sample::select(vec![
            "kind", "n", "lambda", "mask", "channel", "channels", "seed", "p_grid", "tasks", "sigma", "a", "b",
            "operators", "unitaries", "weights", "factors", "algebra", "blocks", "dim", "weight", "subalgebra",
            "restarts", "kernel", "probabilities", "matrix", "generators", "fixed_algebra", "tol",
        ]);
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::btree_map(keys, inner, 0..5)
                .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn malformed_configs_never_panic(v in arb_json()) {
        let _ = markov_gap_cli::config::parse_config_value(&v);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,80}") {
        let _ = parse_config(&s);
    }

    #[test]
    fn parsed_channels_build_or_error(n in 1usize..4, lambda in -0.5f64..1.5) {
        let text = format!(r#"{{"tasks": ["validate"], "channel": {{"kind": "depolarizing", "n": {n}, "lambda": {lambda}}}}}"#);
        let cfg = parse_config(&text).unwrap();
        let rows = run_suite(&cfg, &cfg.tasks, ExecPolicy::Sequential);
        prop_assert_eq!(rows.len(), 1);
        prop_assert_eq!(rows[0].pass, (0.0..=1.0).contains(&lambda));
    }
}
