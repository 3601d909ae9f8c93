//! Process-level behavior of the `pd` binary: exit codes, stream
//! separation, CSV export, and file output.

use std::process::Command;

fn pd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pd"))
}

#[test]
fn exit_codes_by_failure_class() {
    // Computed verdict: 0.
    let out = pd()
        .args(["classify", "--spec", "builtin:lv4", "--point", "1,1,1,1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());

    // Mathematical-condition failure: 2 (Jacobi fails for the witness).
    let out = pd()
        .args([
            "check-jacobi",
            "--spec",
            "builtin:nonpoisson3",
            "--samples",
            "10",
            "--seed",
            "7",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["poisson"], false);

    // Usage error: 1, message on stderr only.
    let out = pd()
        .args(["classify", "--spec", "builtin:lv4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--point"));

    // IO error: 1.
    let out = pd()
        .args([
            "classify",
            "--spec",
            "/nonexistent/file.json",
            "--point",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Unknown builtin: 1.
    let out = pd()
        .args(["classify", "--spec", "builtin:nope", "--point", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown builtin"));
}

#[test]
fn off_manifold_point_is_a_condition_failure() {
    let out = pd()
        .args(["classify", "--spec", "builtin:lv4", "--point", "1,1,1,2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["on_manifold"], false);
}

#[test]
fn rank_scan_csv_export() {
    let out = pd()
        .args([
            "rank-scan",
            "--spec",
            "builtin:lv4",
            "--path",
            "t,1,t,1",
            "--trange",
            "-1,1,5",
            "--format",
            "csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x,y,z,w,rank_pi,rank_orth,rank_reduced,flags"
    );
    assert_eq!(text.lines().count(), 6, "header plus five grid rows");
    let middle = text.lines().nth(3).unwrap();
    assert!(middle.starts_with("0,"), "third grid point is t = 0");
    assert!(
        middle.ends_with("drop"),
        "origin row flags the rank drop: {middle}"
    );
}

#[test]
fn trajectory_csv_and_output_file() {
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("oscillator.csv");
    let out = pd()
        .args([
            "flow",
            "--spec",
            "builtin:canonical2",
            "--point",
            "1,0",
            "--dt",
            "0.1",
            "--steps",
            "10",
            "--format",
            "csv",
            "--output",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty(), "payload goes to the file");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,q,p");
    assert_eq!(
        text.lines().count(),
        12,
        "header plus initial state plus ten steps"
    );
}

#[test]
fn help_lists_commands_and_builtins() {
    let out = pd().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in pd_cli::COMMANDS {
        assert!(text.contains(cmd), "help must mention '{cmd}'");
    }
    assert!(text.contains("builtin"));
}

#[test]
fn midpoint_integrator_is_selectable() {
    let out = pd()
        .args([
            "flow",
            "--spec",
            "builtin:canonical2",
            "--point",
            "1,0",
            "--dt",
            "0.01",
            "--steps",
            "100",
            "--method",
            "midpoint",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["integrator"], "midpoint");
    // Midpoint conserves the quadratic energy to the iteration tolerance.
    let drift = report["results"]["drifts"][0]["max_drift"]
        .as_f64()
        .unwrap();
    assert!(drift < 1e-9, "midpoint energy drift {drift}");
}

#[test]
fn classify_grid_reports_coregularity() {
    let out = pd()
        .args([
            "classify",
            "--spec",
            "builtin:lv4",
            "--grid",
            "-1:1:3,-1:1:3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["points"], 9);
    // The 3x3 grid includes the origin, where the orthogonal rank drops.
    assert_eq!(report["results"]["coregular"]["coregular"], false);
}

#[test]
fn flow_json_format_embeds_full_trajectory() {
    let out = pd()
        .args([
            "flow",
            "--spec",
            "builtin:canonical2",
            "--point",
            "1,0",
            "--dt",
            "0.1",
            "--steps",
            "10",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let states = report["results"]["trajectory"]["states"]
        .as_array()
        .unwrap();
    assert_eq!(states.len(), 11);
    assert_eq!(report["results"]["trajectory"]["t"][10], 1.0);
}

#[test]
fn shipped_schema_is_valid_json_and_builtins_carry_required_fields() {
    let schema_text = include_str!("../schema/system_spec.schema.json");
    let schema: serde_json::Value = serde_json::from_str(schema_text).unwrap();
    assert_eq!(schema["properties"]["version"]["const"], 1);
    for name in pdtk::builtins::BUILTIN_NAMES {
        let doc: serde_json::Value =
            serde_json::from_str(pdtk::builtins::builtin_source(name).unwrap()).unwrap();
        assert_eq!(doc["version"], 1, "{name}: version field is mandatory");
        assert!(doc["name"].is_string() && doc["coordinates"].is_array());
        assert!(
            doc.get("bivector").is_some() || doc.get("epsilon_series").is_some(),
            "{name}: bivector or epsilon_series required"
        );
    }
}
