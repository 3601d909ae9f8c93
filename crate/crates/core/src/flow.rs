//! Hamiltonian flow integration and conservation diagnostics.
//!
//! The vector field is `x' = M(x) grad H(x)` with the anchor and
//! gradient evaluated per step. Integrators are fixed-step only: classic
//! explicit RK4 (default) and implicit midpoint solved by fixed-point
//! iteration. Conservation is measured, never enforced; constraint drift
//! along a run is itself a reported quantity.

use crate::eps_series::{series_reduced_bivector, EpsBivectorSeries, SeriesError};
use crate::expr::{EvalError, ScalarField};
use crate::poisson::BivectorField;
use crate::reduction::reduce_hamiltonian;
use crate::submanifold::{GraphSubmanifold, SubmanifoldError};
use crate::tol::Tolerances;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("implicit midpoint failed to converge at step {step} (residual {residual:.3e} after {iterations} iterations)")]
    MidpointDiverged {
        step: usize,
        residual: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    Rk4,
    Midpoint,
}

impl IntegratorMethod {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "rk4" => Some(IntegratorMethod::Rk4),
            "midpoint" => Some(IntegratorMethod::Midpoint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub method: IntegratorMethod,
    /// States at t = 0, dt, ..., steps*dt.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has initial state")
    }
}

/// A vector field given by right-hand-side evaluation.
pub trait VectorField {
    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, FlowError>;
    fn dim(&self) -> usize;
}

/// Hamiltonian field `M(x) grad H(x)` with gradient fields prepared once.
pub struct HamiltonianField<'a> {
    pi: &'a BivectorField,
    grad: Vec<ScalarField>,
}

impl<'a> HamiltonianField<'a> {
    pub fn new(pi: &'a BivectorField, h: &ScalarField) -> Self {
        HamiltonianField {
            pi,
            grad: h.gradient_fields(),
        }
    }
}

impl VectorField for HamiltonianField<'_> {
    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, FlowError> {
        let m = self.pi.anchor_matrix(x)?;
        let mut g = DVector::zeros(self.grad.len());
        for (i, f) in self.grad.iter().enumerate() {
            g[i] = f.eval(x)?;
        }
        Ok(m * g)
    }

    fn dim(&self) -> usize {
        self.pi.dim()
    }
}

const MIDPOINT_TOL: f64 = 1e-12;
const MIDPOINT_MAX_ITER: usize = 50;

/// Fixed-step integration of `x' = f(x)` from `p0`.
pub fn integrate_field(
    field: &dyn VectorField,
    p0: &[f64],
    dt: f64,
    steps: usize,
    method: IntegratorMethod,
) -> Result<Trajectory, FlowError> {
    assert!(dt > 0.0, "dt must be positive");
    assert_eq!(p0.len(), field.dim());
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = DVector::from_column_slice(p0);
    states.push(p0.to_vec());
    for step in 1..=steps {
        x = match method {
            IntegratorMethod::Rk4 => rk4_step(field, &x, dt)?,
            IntegratorMethod::Midpoint => midpoint_step(field, &x, dt, step)?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFiniteState { step });
        }
        states.push(x.iter().copied().collect());
    }
    Ok(Trajectory { dt, method, states })
}

fn rk4_step(field: &dyn VectorField, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>, FlowError> {
    let k1 = field.eval(x.as_slice())?;
    let k2 = field.eval((x + &k1 * (dt / 2.0)).as_slice())?;
    let k3 = field.eval((x + &k2 * (dt / 2.0)).as_slice())?;
    let k4 = field.eval((x + &k3 * dt).as_slice())?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn midpoint_step(
    field: &dyn VectorField,
    x: &DVector<f64>,
    dt: f64,
    step: usize,
) -> Result<DVector<f64>, FlowError> {
    // Solve y = x + dt * f((x + y) / 2) by fixed-point iteration.
    let mut y = x + field.eval(x.as_slice())? * dt;
    for _ in 0..MIDPOINT_MAX_ITER {
        let mid = (x + &y) * 0.5;
        let next = x + field.eval(mid.as_slice())? * dt;
        let residual = (&next - &y).amax();
        y = next;
        if residual <= MIDPOINT_TOL {
            return Ok(y);
        }
    }
    let mid = (x + &y) * 0.5;
    let residual = (x + field.eval(mid.as_slice())? * dt - &y).amax();
    Err(FlowError::MidpointDiverged {
        step,
        residual,
        iterations: MIDPOINT_MAX_ITER,
    })
}

/// Integrate the Hamiltonian flow of `(pi, h)`.
pub fn integrate(
    pi: &BivectorField,
    h: &ScalarField,
    p0: &[f64],
    dt: f64,
    steps: usize,
    method: IntegratorMethod,
) -> Result<Trajectory, FlowError> {
    let field = HamiltonianField::new(pi, h);
    integrate_field(&field, p0, dt, steps, method)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub expression: String,
    pub max_drift: f64,
}

/// Max over the trajectory of |f(x(t)) - f(x(0))| per field.
pub fn conservation_report(
    traj: &Trajectory,
    fields: &[ScalarField],
) -> Result<Vec<DriftReport>, EvalError> {
    let mut out = Vec::with_capacity(fields.len());
    for f in fields {
        let initial = f.eval(&traj.states[0])?;
        let mut max_drift: f64 = 0.0;
        for state in &traj.states {
            max_drift = max_drift.max((f.eval(state)? - initial).abs());
        }
        out.push(DriftReport {
            expression: f.to_string(),
            max_drift,
        });
    }
    Ok(out)
}

/// Reduced slow field: `x' = R(eps; x) grad H_red(x)` with the reduced
/// anchor assembled from the series order by order at every evaluation
/// point.
pub struct ReducedSeriesField<'a> {
    series: &'a EpsBivectorSeries,
    graph: &'a GraphSubmanifold,
    grad: Vec<ScalarField>,
    epsilon: f64,
    order: usize,
    tol: Tolerances,
}

impl<'a> ReducedSeriesField<'a> {
    pub fn new(
        series: &'a EpsBivectorSeries,
        graph: &'a GraphSubmanifold,
        h_reduced: &ScalarField,
        epsilon: f64,
        order: usize,
        tol: Tolerances,
    ) -> Self {
        ReducedSeriesField {
            series,
            graph,
            grad: h_reduced.gradient_fields(),
            epsilon,
            order,
            tol,
        }
    }
}

impl VectorField for ReducedSeriesField<'_> {
    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, FlowError> {
        let p = self.graph.lift(x)?;
        let reduced = series_reduced_bivector(self.series, self.graph, &p, self.order, &self.tol)?;
        let anchor = reduced.evaluate(self.epsilon);
        let mut g = DVector::zeros(self.grad.len());
        for (i, f) in self.grad.iter().enumerate() {
            g[i] = f.eval(x)?;
        }
        Ok(anchor * g)
    }

    fn dim(&self) -> usize {
        self.graph.n_x()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub epsilon: f64,
    pub order: usize,
    pub dt: f64,
    pub steps: usize,
    /// Max |y(t) - y0(x(t))| along the full trajectory.
    pub constraint_drift: f64,
    /// Max slow-block gap between the full and reduced runs.
    pub slow_variable_gap: f64,
}

/// Integrate the full instantiated system and the order-K reduced system
/// from the same initial point on the graph, and report the constraint
/// drift of the full run plus the slow-variable gap between the runs.
#[allow(clippy::too_many_arguments)]
pub fn compare_full_vs_reduced(
    series: &EpsBivectorSeries,
    graph: &GraphSubmanifold,
    h: &ScalarField,
    p0: &[f64],
    epsilon: f64,
    order: usize,
    dt: f64,
    steps: usize,
    tol: &Tolerances,
) -> Result<CompareReport, FlowError> {
    let deviation = graph.deviation(p0)?;
    if deviation > tol.manifold_tol {
        return Err(SubmanifoldError::OffManifold {
            deviation,
            tol: tol.manifold_tol,
        }
        .into());
    }
    let pi = series.instantiate(epsilon)?;
    let full = integrate(&pi, h, p0, dt, steps, IntegratorMethod::Rk4)?;

    let h_reduced = reduce_hamiltonian(h, graph)?;
    let x0 = graph.x_part(p0);
    let reduced_field = ReducedSeriesField::new(series, graph, &h_reduced, epsilon, order, *tol);
    let reduced = integrate_field(&reduced_field, &x0, dt, steps, IntegratorMethod::Rk4)?;

    let mut constraint_drift: f64 = 0.0;
    for state in &full.states {
        constraint_drift = constraint_drift.max(graph.deviation(state)?);
    }
    let mut slow_variable_gap: f64 = 0.0;
    for (full_state, red_state) in full.states.iter().zip(reduced.states.iter()) {
        let fx = graph.x_part(full_state);
        let gap = fx
            .iter()
            .zip(red_state.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        slow_variable_gap = slow_variable_gap.max(gap);
    }
    Ok(CompareReport {
        epsilon,
        order,
        dt,
        steps,
        constraint_drift,
        slow_variable_gap,
    })
}
