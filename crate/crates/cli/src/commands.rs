//! Command handlers: each turns flags plus a loaded system into report
//! results and an exit code.

use crate::{CliError, Ctx, Payload};
use pdtk::eps_series::{series_reduced_bivector, SeriesError};
use pdtk::expr::{parse as parse_expr, ScalarField};
use pdtk::flow::{
    compare_full_vs_reduced, conservation_report, integrate, IntegratorMethod, Trajectory,
};
use pdtk::nalgebra::DMatrix;
use pdtk::poisson::{jacobi_scan, BivectorField};
use pdtk::rank_lab::{
    coregular_check, rank_scan as run_rank_scan, semicontinuity_check, ParamPath, RankScanRecord,
};
use pdtk::reduction::{dirac_bracket, induced_bivector_graph, pd_bracket_split, ReductionError};
use pdtk::rng::SplitMix64;
use pdtk::submanifold::{
    check_kernel_nesting, check_pd_condition, check_transversal, ConstraintSet, GraphSubmanifold,
    SubmanifoldError,
};
use serde_json::{json, Value};

fn matrix_value(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    json!(rows)
}

fn reduction_error(err: ReductionError) -> CliError {
    match err {
        ReductionError::SingularConstraintMatrix { cond } => CliError::math_with(
            "singular_constraint_matrix",
            format!("{{c,c}} condition number {cond:.3e} exceeds the threshold"),
            json!({ "condition_number": cond }),
        ),
        ReductionError::KernelNestingViolated { residual, witness } => CliError::math_with(
            "kernel_nesting_violated",
            "solvability system is inconsistent; constraint is not Poisson-Dirac here",
            json!({
                "residual": residual,
                "witness": witness.map(|w| w.iter().copied().collect::<Vec<f64>>()),
            }),
        ),
        ReductionError::ExtensionInsolvable { residual } => CliError::math_with(
            "extension_insolvable",
            "tangency system insolvable at a point that passed the Poisson-Dirac check",
            json!({ "residual": residual }),
        ),
        ReductionError::NotPoissonDirac { intersection_dim } => CliError::math_with(
            "not_poisson_dirac",
            "tangent space meets its pi-orthogonal nontrivially",
            json!({ "intersection_dim": intersection_dim }),
        ),
        ReductionError::Submanifold(e) => submanifold_error(e),
        ReductionError::Eval(e) => CliError::math("evaluation_domain_error", e.to_string()),
    }
}

fn submanifold_error(err: SubmanifoldError) -> CliError {
    match err {
        SubmanifoldError::OffManifold { deviation, tol } => CliError::math_with(
            "off_manifold",
            "point does not satisfy the constraint within tolerance",
            json!({ "deviation": deviation, "tolerance": tol }),
        ),
        other => CliError::math("constraint_error", other.to_string()),
    }
}

fn series_error(err: SeriesError) -> CliError {
    match err {
        SeriesError::NotPdAtOrder { failing_order } => CliError::math_with(
            "series_not_poisson_dirac",
            format!("Poisson-Dirac condition fails at order {failing_order}"),
            json!({ "failing_order": failing_order }),
        ),
        SeriesError::OrderSolveFailed { order, residual } => CliError::math_with(
            "order_solve_failed",
            format!("extension solve failed at order {order}"),
            json!({ "order": order, "residual": residual }),
        ),
        SeriesError::ScalingSingular { scale_exponent } => CliError::math_with(
            "scaling_singular",
            "epsilon = 0 is singular for a positive scale exponent",
            json!({ "scale_exponent": scale_exponent }),
        ),
        SeriesError::Submanifold(e) => submanifold_error(e),
        other => CliError::math("series_error", other.to_string()),
    }
}

fn concrete_bivector(ctx: &Ctx) -> Result<BivectorField, CliError> {
    let epsilon = ctx.args.f64("epsilon").map_err(CliError::Usage)?;
    ctx.spec
        .concrete_bivector(epsilon)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn constraint(ctx: &Ctx) -> Result<ConstraintSet, CliError> {
    ctx.spec.constraint.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "system '{}' declares no constraint; this command needs one",
            ctx.spec.name
        ))
    })
}

/// Accept an ambient point, or a block point that is lifted onto the
/// constraint (x block for graphs, sigma block with c = 0 for splits).
fn resolve_point(ctx: &Ctx, constraint: Option<&ConstraintSet>) -> Result<Vec<f64>, CliError> {
    let raw = ctx
        .args
        .number_list("point")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--point'".to_string()))?;
    let n = ctx.spec.chart.dim();
    if raw.len() == n {
        return Ok(raw);
    }
    match constraint {
        Some(ConstraintSet::Graph(g)) if raw.len() == g.n_x() => g
            .lift(&raw)
            .map_err(|e| CliError::math("evaluation_domain_error", e.to_string())),
        Some(ConstraintSet::Split(s)) if raw.len() == s.n_sigma() => Ok(s.lift(&raw)),
        _ => Err(CliError::Usage(format!(
            "--point must have {n} coordinates (or the constraint block size)",
        ))),
    }
}

pub(crate) fn check_jacobi(ctx: &Ctx) -> Result<Payload, CliError> {
    let pi = concrete_bivector(ctx)?;
    let samples = ctx
        .args
        .usize("samples")
        .map_err(CliError::Usage)?
        .unwrap_or(100);
    let n = pi.dim();
    let mut rng = SplitMix64::new(ctx.seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| rng.point(n, -2.0, 2.0)).collect();
    let scan = jacobi_scan(&pi, points.iter().map(|p| p.as_slice()))
        .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?;
    let mut entry_scale: f64 = 0.0;
    for p in &points {
        let m = pi
            .anchor_matrix(p)
            .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?;
        entry_scale = entry_scale.max(m.abs().max());
    }
    let threshold = ctx.tol.jacobi_tol * (1.0 + entry_scale);
    let poisson = scan.max_abs <= threshold;
    let results = json!({
        "dimension": n,
        "samples": scan.points,
        "triples": scan.triples,
        "max_abs_residual": scan.max_abs,
        "argmax_point": scan.argmax_point,
        "argmax_triple": [scan.argmax_triple.0 + 1, scan.argmax_triple.1 + 1, scan.argmax_triple.2 + 1],
        "threshold": threshold,
        "poisson": poisson,
    });
    Ok(Payload::Results(results, if poisson { 0 } else { 2 }))
}

fn classify_point(
    ctx: &Ctx,
    pi: &BivectorField,
    set: &ConstraintSet,
    graph: &GraphSubmanifold,
    p: &[f64],
) -> Result<(Value, bool), CliError> {
    let deviation = set
        .deviation(p)
        .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?;
    if deviation > ctx.tol.manifold_tol {
        return Ok((
            json!({
                "point": p,
                "on_manifold": false,
                "deviation": deviation,
            }),
            false,
        ));
    }
    let pd = check_pd_condition(pi, graph, p, &ctx.tol).map_err(submanifold_error)?;
    let tv = check_transversal(pi, graph, p, &ctx.tol).map_err(submanifold_error)?;
    let orth =
        pdtk::submanifold::pi_orthogonal(pi, graph, p, &ctx.tol).map_err(submanifold_error)?;
    let ambient = pi
        .anchor_matrix(p)
        .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?;
    let ambient_rank = pdtk::linalg::rank(&ambient, ctx.tol.rank_eps);
    let mut result = json!({
        "point": p,
        "on_manifold": true,
        "deviation": deviation,
        "pd": { "is_pd": pd.is_pd, "intersection_dim": pd.intersection_dim },
        "transversal": { "is_transversal": tv.is_transversal, "sum_rank": tv.sum_rank },
        "ranks": {
            "ambient": ambient_rank,
            "tangent": graph.n_x(),
            "orthogonal": orth.dim(),
        },
    });
    if let ConstraintSet::Split(s) = set {
        let nesting = check_kernel_nesting(pi, s, p, &ctx.tol).map_err(submanifold_error)?;
        result["kernel_nesting"] = json!({
            "nested": nesting.nested,
            "max_violation": nesting.max_violation,
            "witness": nesting.witness.map(|w| w.iter().copied().collect::<Vec<f64>>()),
        });
    }
    Ok((result, true))
}

pub(crate) fn classify(ctx: &Ctx) -> Result<Payload, CliError> {
    let pi = concrete_bivector(ctx)?;
    let set = constraint(ctx)?;
    let graph = set.as_graph();

    if let Some(blocks) = ctx.args.grid().map_err(CliError::Usage)? {
        if blocks.len() != graph.n_x() {
            return Err(CliError::Usage(format!(
                "--grid needs one min:max:count block per x coordinate ({})",
                graph.n_x()
            )));
        }
        let xs = grid_points(&blocks);
        let mut points = Vec::new();
        for x in &xs {
            points.push(
                graph
                    .lift(x)
                    .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?,
            );
        }
        let mut verdicts = Vec::new();
        let mut all_on = true;
        for p in &points {
            let (v, on) = classify_point(ctx, &pi, &set, &graph, p)?;
            all_on &= on;
            verdicts.push(v);
        }
        let coreg = coregular_check(&pi, &graph, &points, &ctx.tol)
            .map_err(|e| CliError::math("rank_scan_error", e.to_string()))?;
        let results = json!({
            "grid": blocks.iter().map(|(a, b, c)| json!([a, b, c])).collect::<Vec<_>>(),
            "points": points.len(),
            "verdicts": verdicts,
            "coregular": {
                "coregular": coreg.coregular,
                "rank_histogram": coreg.rank_histogram,
                "note": "sampled verdict: no counterexample found at the grid points",
            },
        });
        return Ok(Payload::Results(results, if all_on { 0 } else { 2 }));
    }

    let p = resolve_point(ctx, Some(&set))?;
    let (result, on_manifold) = classify_point(ctx, &pi, &set, &graph, &p)?;
    Ok(Payload::Results(result, if on_manifold { 0 } else { 2 }))
}

fn grid_points(blocks: &[(f64, f64, usize)]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = blocks
        .iter()
        .map(|&(lo, hi, count)| {
            if count == 1 {
                vec![lo]
            } else {
                (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in &axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

pub(crate) fn reduce(ctx: &Ctx) -> Result<Payload, CliError> {
    let pi = concrete_bivector(ctx)?;
    let set = constraint(ctx)?;
    let default_method = match &set {
        ConstraintSet::Graph(_) => "graph",
        ConstraintSet::Split(_) => "dirac",
    };
    let method = ctx.args.get("method").unwrap_or(default_method);
    let p = resolve_point(ctx, Some(&set))?;

    let report = match (method, &set) {
        ("graph", ConstraintSet::Graph(g)) => {
            induced_bivector_graph(&pi, g, &p, &ctx.tol).map_err(reduction_error)?
        }
        ("dirac", ConstraintSet::Split(s)) => {
            dirac_bracket(&pi, s, &p, &ctx.tol).map_err(reduction_error)?
        }
        ("pd", ConstraintSet::Split(s)) => {
            pd_bracket_split(&pi, s, &p, &ctx.tol).map_err(reduction_error)?
        }
        ("graph", _) => {
            return Err(CliError::Usage(
                "--method graph needs a graph constraint".to_string(),
            ))
        }
        ("dirac" | "pd", _) => {
            return Err(CliError::Usage(format!(
                "--method {method} needs a split constraint"
            )))
        }
        (other, _) => {
            return Err(CliError::Usage(format!(
                "unknown reduce method '{other}' (dirac, pd, graph)"
            )))
        }
    };

    let results = json!({
        "method": report.method,
        "point": report.point,
        "reduced_anchor": matrix_value(&report.reduced_anchor),
        "residual": report.residual,
        "condition_number": report.condition_number,
        "extension": report.extension.as_ref().map(matrix_value),
    });
    Ok(Payload::Results(results, 0))
}

pub(crate) fn rank_scan(ctx: &Ctx) -> Result<Payload, CliError> {
    let pi = concrete_bivector(ctx)?;
    let set = constraint(ctx)?;
    let ConstraintSet::Graph(graph) = &set else {
        return Err(CliError::Usage(
            "rank-scan needs a graph constraint".to_string(),
        ));
    };
    let path_text = ctx.args.require("path").map_err(CliError::Usage)?;
    let exprs = path_text
        .split(',')
        .map(|t| parse_expr(t.trim()).map_err(|e| CliError::Usage(format!("--path: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if exprs.len() != ctx.spec.chart.dim() {
        return Err(CliError::Usage(format!(
            "--path needs {} comma-separated expressions in t",
            ctx.spec.chart.dim()
        )));
    }
    let path = ParamPath::new(exprs).map_err(submanifold_error)?;
    let (a, b, count) = ctx
        .args
        .trange()
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--trange'".to_string()))?;
    let grid = pdtk::rank_lab::linspace(a, b, count);
    let records = run_rank_scan(&pi, graph, &path, &grid, &ctx.tol)
        .map_err(|e| CliError::math("rank_scan_error", e.to_string()))?;
    let semi = semicontinuity_check(&records);
    let scan_points: Vec<Vec<f64>> = records.iter().map(|r| r.point.clone()).collect();
    let coreg = coregular_check(&pi, graph, &scan_points, &ctx.tol)
        .map_err(|e| CliError::math("rank_scan_error", e.to_string()))?;

    if ctx.args.get("format") == Some("csv") {
        return Ok(Payload::Raw(scan_csv(&records, ctx), 0));
    }
    let drops: Vec<f64> = records
        .iter()
        .filter(|r| r.drop_detected)
        .map(|r| r.t)
        .collect();
    let max_increment = records
        .iter()
        .map(|r| r.reduced_increment)
        .fold(0.0, f64::max);
    let results = json!({
        "trange": [a, b, count],
        "records": records,
        "drops": drops,
        "identity_violations": records.iter().filter(|r| r.identity_violated).count(),
        "semicontinuity": { "ok": semi.ok, "violations": semi.violations },
        "coregular": {
            "coregular": coreg.coregular,
            "rank_histogram": coreg.rank_histogram,
        },
        "max_reduced_increment": max_increment,
    });
    Ok(Payload::Results(results, 0))
}

fn scan_csv(records: &[RankScanRecord], ctx: &Ctx) -> String {
    let names = ctx.spec.chart.names();
    let mut out = String::from("t");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push_str(",rank_pi,rank_orth,rank_reduced,flags\n");
    for r in records {
        out.push_str(&format!("{}", r.t));
        for v in &r.point {
            out.push_str(&format!(",{}", v));
        }
        let mut flags = Vec::new();
        if r.drop_detected {
            flags.push("drop");
        }
        if r.identity_violated {
            flags.push("identity");
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            r.rank_ambient,
            r.rank_orthogonal,
            r.rank_reduced,
            flags.join(";")
        ));
    }
    out
}

pub(crate) fn series_reduce(ctx: &Ctx) -> Result<Payload, CliError> {
    let series = ctx.spec.epsilon_series.as_ref().ok_or_else(|| {
        CliError::Usage(format!(
            "system '{}' declares no epsilon_series",
            ctx.spec.name
        ))
    })?;
    let set = constraint(ctx)?;
    let ConstraintSet::Graph(graph) = &set else {
        return Err(CliError::Usage(
            "series-reduce needs a graph constraint".to_string(),
        ));
    };
    let order = ctx
        .args
        .usize("order")
        .map_err(CliError::Usage)?
        .unwrap_or(4);
    let p = resolve_point(ctx, Some(&set))?;
    let reduced =
        series_reduced_bivector(series, graph, &p, order, &ctx.tol).map_err(series_error)?;
    let coefficients: Vec<Value> = reduced.coeffs.iter().map(matrix_value).collect();

    let comparison = match ctx.args.f64("epsilon").map_err(CliError::Usage)? {
        None => Value::Null,
        Some(eps) => {
            let truncated = reduced.evaluate(eps);
            let pi = series.instantiate(eps).map_err(series_error)?;
            let direct =
                induced_bivector_graph(&pi, graph, &p, &ctx.tol).map_err(reduction_error)?;
            let err = (&truncated - &direct.reduced_anchor).abs().max();
            json!({
                "epsilon": eps,
                "truncated": matrix_value(&truncated),
                "direct": matrix_value(&direct.reduced_anchor),
                "max_abs_error": err,
            })
        }
    };

    let results = json!({
        "point": p,
        "order": order,
        "scale_exponent": series.scale_exponent(),
        "coefficients": coefficients,
        "comparison": comparison,
    });
    Ok(Payload::Results(results, 0))
}

fn integrator(ctx: &Ctx) -> Result<IntegratorMethod, CliError> {
    match ctx.args.get("method") {
        None => Ok(IntegratorMethod::Rk4),
        Some(name) => IntegratorMethod::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown integrator '{name}' (rk4, midpoint)"))),
    }
}

pub(crate) fn flow(ctx: &Ctx) -> Result<Payload, CliError> {
    let pi = concrete_bivector(ctx)?;
    let h = match ctx.args.get("hamiltonian") {
        Some(text) => ScalarField::parse(&ctx.spec.chart, text)
            .map_err(|e| CliError::Usage(format!("--hamiltonian: {e}")))?,
        None => ctx.spec.hamiltonian.clone().ok_or_else(|| {
            CliError::Usage(format!(
                "system '{}' has no hamiltonian; pass --hamiltonian",
                ctx.spec.name
            ))
        })?,
    };
    let p0 = resolve_point(ctx, ctx.spec.constraint.as_ref())?;
    let dt = ctx
        .args
        .f64("dt")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--dt'".to_string()))?;
    let steps = ctx
        .args
        .usize("steps")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--steps'".to_string()))?;
    let method = integrator(ctx)?;

    let traj = integrate(&pi, &h, &p0, dt, steps, method).map_err(|e| match e {
        pdtk::flow::FlowError::NonFiniteState { step } => CliError::math_with(
            "non_finite_state",
            "trajectory left the finite domain",
            json!({ "step": step }),
        ),
        pdtk::flow::FlowError::MidpointDiverged { step, .. } => CliError::math_with(
            "midpoint_diverged",
            "implicit midpoint iteration failed to converge",
            json!({ "step": step }),
        ),
        other => CliError::math("flow_error", other.to_string()),
    })?;

    let mut invariants: Vec<ScalarField> = vec![h.clone()];
    invariants.extend(ctx.spec.invariants.iter().cloned());
    for text in ctx.args.get_all("invariant") {
        invariants.push(
            ScalarField::parse(&ctx.spec.chart, text)
                .map_err(|e| CliError::Usage(format!("--invariant: {e}")))?,
        );
    }
    let drifts = conservation_report(&traj, &invariants)
        .map_err(|e| CliError::math("evaluation_domain_error", e.to_string()))?;

    if ctx.args.get("format") == Some("csv") {
        return Ok(Payload::Raw(trajectory_csv(&traj, ctx), 0));
    }
    let mut results = json!({
        "integrator": traj.method,
        "dt": dt,
        "steps": steps,
        "time_span": dt * steps as f64,
        "initial_state": p0,
        "final_state": traj.final_state(),
        "drifts": drifts,
    });
    // An explicit json format requests the full trajectory.
    if ctx.args.get("format") == Some("json") {
        let times: Vec<f64> = (0..traj.states.len()).map(|i| traj.time(i)).collect();
        results["trajectory"] = json!({ "t": times, "states": traj.states });
    }
    Ok(Payload::Results(results, 0))
}

fn trajectory_csv(traj: &Trajectory, ctx: &Ctx) -> String {
    let names = ctx.spec.chart.names();
    let mut out = String::from("t");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, state) in traj.states.iter().enumerate() {
        out.push_str(&format!("{}", traj.time(i)));
        for v in state {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    out
}

pub(crate) fn compare(ctx: &Ctx) -> Result<Payload, CliError> {
    let series = ctx.spec.epsilon_series.as_ref().ok_or_else(|| {
        CliError::Usage(format!(
            "system '{}' declares no epsilon_series",
            ctx.spec.name
        ))
    })?;
    let set = constraint(ctx)?;
    let ConstraintSet::Graph(graph) = &set else {
        return Err(CliError::Usage(
            "compare needs a graph constraint".to_string(),
        ));
    };
    let h =
        ctx.spec.hamiltonian.clone().ok_or_else(|| {
            CliError::Usage(format!("system '{}' has no hamiltonian", ctx.spec.name))
        })?;
    let p0 = resolve_point(ctx, Some(&set))?;
    let epsilon = ctx
        .args
        .f64("epsilon")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--epsilon'".to_string()))?;
    let order = ctx
        .args
        .usize("order")
        .map_err(CliError::Usage)?
        .unwrap_or(4);
    let dt = ctx
        .args
        .f64("dt")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--dt'".to_string()))?;
    let steps = ctx
        .args
        .usize("steps")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Usage("missing required flag '--steps'".to_string()))?;

    let report =
        compare_full_vs_reduced(series, graph, &h, &p0, epsilon, order, dt, steps, &ctx.tol)
            .map_err(|e| match e {
                pdtk::flow::FlowError::Series(se) => series_error(se),
                pdtk::flow::FlowError::Submanifold(se) => submanifold_error(se),
                pdtk::flow::FlowError::NonFiniteState { step } => CliError::math_with(
                    "non_finite_state",
                    "trajectory left the finite domain",
                    json!({ "step": step }),
                ),
                other => CliError::math("flow_error", other.to_string()),
            })?;

    let results = json!({
        "epsilon": report.epsilon,
        "order": report.order,
        "dt": report.dt,
        "steps": report.steps,
        "initial_state": p0,
        "constraint_drift": report.constraint_drift,
        "slow_variable_gap": report.slow_variable_gap,
    });
    Ok(Payload::Results(results, 0))
}
