//! Library half of the `pd` command line tool.
//!
//! Every command loads a system spec (file path or `builtin:NAME`),
//! dispatches to the toolkit, and emits a JSON report. Reports are
//! deterministic: given identical spec, flags, and seed they are
//! byte-identical, so they can be kept as golden files. Exit codes:
//! 0 for computed/pass verdicts, 2 for mathematical-condition failures
//! (kernel nesting violated, Jacobi failure, off-manifold points), 1
//! for usage and IO errors.

pub mod args;
mod commands;

use args::ParsedArgs;
use pdtk::spec::{self, SystemSpec};
use pdtk::tol::Tolerances;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;

pub const TOOL: &str = "pd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const COMMANDS: &[&str] = &[
    "check-jacobi",
    "classify",
    "reduce",
    "rank-scan",
    "series-reduce",
    "flow",
    "compare",
];

/// Canonical command per builtin system. The reports these produce are
/// stored under `goldens/` and must reproduce byte for byte.
pub const GOLDEN_COMMANDS: &[(&str, &[&str], i32)] = &[
    (
        "canonical2",
        &[
            "check-jacobi",
            "--spec",
            "builtin:canonical2",
            "--samples",
            "100",
            "--seed",
            "0",
        ],
        0,
    ),
    (
        "canonical4",
        &[
            "reduce",
            "--spec",
            "builtin:canonical4",
            "--method",
            "dirac",
            "--point",
            "1,1,0,0",
        ],
        0,
    ),
    (
        "lv4",
        &[
            "reduce",
            "--spec",
            "builtin:lv4",
            "--method",
            "graph",
            "--point",
            "2,3",
        ],
        0,
    ),
    (
        "so3",
        &[
            "flow",
            "--spec",
            "builtin:so3",
            "--point",
            "1,1,1",
            "--dt",
            "0.001",
            "--steps",
            "10000",
        ],
        0,
    ),
    (
        "fastslow",
        &[
            "series-reduce",
            "--spec",
            "builtin:fastslow",
            "--point",
            "1,1",
            "--order",
            "4",
            "--epsilon",
            "0.1",
        ],
        0,
    ),
    (
        "nonpoisson3",
        &[
            "check-jacobi",
            "--spec",
            "builtin:nonpoisson3",
            "--samples",
            "100",
            "--seed",
            "7",
        ],
        2,
    ),
];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub spec: String,
    pub system: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub inputs: BTreeMap<String, String>,
    pub results: Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Command handlers produce either report results (wrapped into the
/// standard envelope) or a raw payload such as CSV.
pub(crate) enum Payload {
    Results(Value, i32),
    Raw(String, i32),
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    /// Mathematical-condition failure: reported as JSON, exit code 2.
    Math {
        kind: &'static str,
        message: String,
        details: Value,
    },
}

impl CliError {
    pub(crate) fn math(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Math {
            kind,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub(crate) fn math_with(
        kind: &'static str,
        message: impl Into<String>,
        details: Value,
    ) -> Self {
        CliError::Math {
            kind,
            message: message.into(),
            details,
        }
    }
}

pub(crate) struct Ctx<'a> {
    pub args: &'a ParsedArgs,
    pub spec: SystemSpec,
    pub spec_ref: String,
    pub tol: Tolerances,
    pub seed: u64,
}

fn usage() -> String {
    let mut s = String::from("usage: pd <command> --spec <file|builtin:NAME> [flags]\n");
    s.push_str("commands:\n");
    s.push_str("  check-jacobi   --samples N --seed S [--epsilon E]\n");
    s.push_str("  classify       --point P | --grid G\n");
    s.push_str("  reduce         --method dirac|pd|graph --point P [--epsilon E]\n");
    s.push_str("  rank-scan      --path E1,E2,... --trange A,B,N [--format json|csv]\n");
    s.push_str("  series-reduce  --point P --order K [--epsilon E]\n");
    s.push_str("  flow           --point P --dt DT --steps N [--method rk4|midpoint]\n");
    s.push_str("                 [--hamiltonian H] [--invariant F]... [--epsilon E]\n");
    s.push_str("  compare        --point P --epsilon E --dt DT --steps N [--order K]\n");
    s.push_str("common flags: --tol T (rank tolerance), --seed S, --output FILE,\n");
    s.push_str("              --format json|csv\n");
    s.push_str("builtins: canonical2, canonical4, lv4, so3, fastslow, nonpoisson3\n");
    s
}

/// Run one invocation. `raw_args` excludes the program name.
pub fn run(raw_args: &[String]) -> Outcome {
    match run_inner(raw_args) {
        Ok(outcome) => outcome,
        Err((message, code)) => Outcome {
            stdout: String::new(),
            stderr: message,
            exit_code: code,
        },
    }
}

fn run_inner(raw_args: &[String]) -> Result<Outcome, (String, i32)> {
    if raw_args.is_empty()
        || raw_args[0] == "--help"
        || raw_args[0] == "-h"
        || raw_args[0] == "help"
    {
        return Ok(Outcome {
            stdout: usage(),
            stderr: String::new(),
            exit_code: if raw_args.is_empty() { 1 } else { 0 },
        });
    }
    let parsed =
        ParsedArgs::parse(raw_args).map_err(|e| (format!("error: {e}\n{}", usage()), 1))?;
    if !COMMANDS.contains(&parsed.command.as_str()) {
        return Err((
            format!("error: unknown command '{}'\n{}", parsed.command, usage()),
            1,
        ));
    }

    let mut tol = Tolerances::default();
    if let Some(t) = parsed.f64("tol").map_err(|e| (format!("error: {e}"), 1))? {
        tol.rank_eps = t;
    }
    let seed = parsed
        .u64("seed")
        .map_err(|e| (format!("error: {e}"), 1))?
        .unwrap_or(0);

    let spec_ref = parsed
        .require("spec")
        .map_err(|e| (format!("error: {e}"), 1))?
        .to_string();
    let system = spec::load(&spec_ref, &tol).map_err(|e| (format!("error: {e}"), 1))?;

    let ctx = Ctx {
        args: &parsed,
        spec: system,
        spec_ref,
        tol,
        seed,
    };

    let payload = match parsed.command.as_str() {
        "check-jacobi" => commands::check_jacobi(&ctx),
        "classify" => commands::classify(&ctx),
        "reduce" => commands::reduce(&ctx),
        "rank-scan" => commands::rank_scan(&ctx),
        "series-reduce" => commands::series_reduce(&ctx),
        "flow" => commands::flow(&ctx),
        "compare" => commands::compare(&ctx),
        _ => unreachable!("command list checked above"),
    };

    let (text, exit_code) = match payload {
        Ok(Payload::Results(results, code)) => (render_report(&ctx, results), code),
        Ok(Payload::Raw(text, code)) => (text, code),
        Err(CliError::Usage(message)) => return Err((format!("error: {message}"), 1)),
        Err(CliError::Math {
            kind,
            message,
            details,
        }) => {
            let results = serde_json::json!({
                "error": { "kind": kind, "message": message, "details": details }
            });
            (render_report(&ctx, results), 2)
        }
    };

    if let Some(path) = parsed.get("output") {
        std::fs::write(path, &text)
            .map_err(|e| (format!("error: cannot write '{path}': {e}"), 1))?;
        return Ok(Outcome {
            stdout: String::new(),
            stderr: String::new(),
            exit_code,
        });
    }
    Ok(Outcome {
        stdout: text,
        stderr: String::new(),
        exit_code,
    })
}

fn render_report(ctx: &Ctx, results: Value) -> String {
    let mut inputs = BTreeMap::new();
    for name in args::KNOWN_FLAGS {
        if *name == "spec" || *name == "seed" || *name == "output" {
            continue;
        }
        let values = ctx.args.get_all(name);
        if !values.is_empty() {
            inputs.insert(name.to_string(), values.join(";"));
        }
    }
    Report {
        tool: TOOL,
        version: VERSION,
        command: ctx.args.command.clone(),
        spec: ctx.spec_ref.clone(),
        system: ctx.spec.name.clone(),
        seed: ctx.seed,
        tolerances: ctx.tol,
        inputs,
        results,
    }
    .to_json()
}
