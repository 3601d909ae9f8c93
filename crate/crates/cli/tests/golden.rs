//! Golden-report tests: every builtin ships with a canonical command
//! whose report is stored under `goldens/`. Each run must reproduce the
//! stored bytes exactly; rerunning in-process must also be
//! byte-identical. Set `UPDATE_GOLDEN=1` to regenerate after an
//! intentional format change.

use std::path::PathBuf;

use pd_cli::GOLDEN_COMMANDS;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("goldens")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> pd_cli::Outcome {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    pd_cli::run(&owned)
}

#[test]
fn golden_reports_are_reproduced_byte_for_byte() {
    let update = std::env::var("UPDATE_GOLDEN").is_ok();
    for (name, args, want_exit) in GOLDEN_COMMANDS {
        let first = run(args);
        assert_eq!(
            first.exit_code, *want_exit,
            "{name}: exit code (stderr: {})",
            first.stderr
        );
        let second = run(args);
        assert_eq!(
            first.stdout, second.stdout,
            "{name}: rerun must be byte-identical"
        );
        let path = golden_path(name);
        if update {
            std::fs::write(&path, &first.stdout).unwrap();
            continue;
        }
        let stored = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{name}: missing golden file {path:?}: {e}"));
        assert_eq!(
            first.stdout, stored,
            "{name}: report differs from golden file {path:?} (run with UPDATE_GOLDEN=1 after an intentional change)"
        );
    }
}

#[test]
fn tolerances_are_embedded_in_every_report() {
    for (name, args, _) in GOLDEN_COMMANDS {
        let out = run(args);
        let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        let tols = &report["tolerances"];
        assert!(
            tols["rank_eps"].is_number() && tols["solve_tol"].is_number(),
            "{name}: tolerances missing from report"
        );
        assert_eq!(report["tool"], "pd");
        assert!(report["version"].is_string());
    }
}
