//! System specification files.
//!
//! A system is described by a JSON document: coordinate names, bivector
//! entries as expression strings over the strict upper triangle (keys
//! `"i,j"` with 1-based indices, `i < j` in coordinate order), and
//! optional Hamiltonian, constraint (graph or split), epsilon series,
//! chart map, and tracked invariants. The `version` field is mandatory.
//! Validation reports the JSON field path of the first offending entry.

use crate::chart::Chart;
use crate::eps_series::EpsBivectorSeries;
use crate::expr::{parse as parse_expr, Expr, ScalarField};
use crate::poisson::BivectorField;
use crate::submanifold::{ConstraintSet, GraphSubmanifold, SplitConstraint};
use crate::tol::Tolerances;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

pub const SPEC_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read spec file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unknown builtin '{0}'")]
    UnknownBuiltin(String),
}

fn schema_err(path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawConstraint {
    pub kind: String,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub y: Vec<String>,
    #[serde(default)]
    pub y0: Vec<String>,
    #[serde(default)]
    pub sigma: Vec<String>,
    #[serde(default)]
    pub c: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEpsilonSeries {
    pub scale_exponent: i32,
    pub coefficients: Vec<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawChartMap {
    pub names: Vec<String>,
    pub forward: Vec<String>,
    pub inverse: Vec<String>,
}

/// The JSON document as written on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSystemSpec {
    pub version: u64,
    pub name: String,
    pub coordinates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bivector: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<RawConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_series: Option<RawEpsilonSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_map: Option<RawChartMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invariants: Vec<String>,
}

/// A chart transition supplied with both directions; used to push the
/// bivector into a different coordinate presentation.
#[derive(Debug, Clone)]
pub struct ChartMap {
    pub target: Arc<Chart>,
    pub forward: Vec<Expr>,
    pub inverse: Vec<Expr>,
}

/// Fully validated system: all expressions parsed and bound.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub chart: Arc<Chart>,
    pub bivector: Option<BivectorField>,
    pub hamiltonian: Option<ScalarField>,
    pub constraint: Option<ConstraintSet>,
    pub epsilon_series: Option<EpsBivectorSeries>,
    pub chart_map: Option<ChartMap>,
    pub invariants: Vec<ScalarField>,
}

impl SystemSpec {
    /// The bivector commands operate on: the explicit one, or the series
    /// instantiated at `epsilon`.
    pub fn concrete_bivector(&self, epsilon: Option<f64>) -> Result<BivectorField, SpecError> {
        if let Some(b) = &self.bivector {
            return Ok(b.clone());
        }
        let series = self
            .epsilon_series
            .as_ref()
            .expect("validation guarantees bivector or series");
        let eps = epsilon.ok_or_else(|| {
            schema_err(
                "epsilon",
                "system is defined by an epsilon series; pass --epsilon",
            )
        })?;
        series
            .instantiate(eps)
            .map_err(|e| schema_err("epsilon_series", e.to_string()))
    }

    pub fn graph_constraint(&self) -> Option<GraphSubmanifold> {
        match &self.constraint {
            Some(ConstraintSet::Graph(g)) => Some(g.clone()),
            _ => None,
        }
    }

    pub fn split_constraint(&self) -> Option<SplitConstraint> {
        match &self.constraint {
            Some(ConstraintSet::Split(s)) => Some(s.clone()),
            _ => None,
        }
    }
}

fn parse_entry_key(path: &str, key: &str, n: usize) -> Result<(usize, usize), SpecError> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != 2 {
        return Err(schema_err(
            format!("{path}.{key}"),
            "key must be 'i,j' with 1-based coordinate indices",
        ));
    }
    let i: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| schema_err(format!("{path}.{key}"), "indices must be integers"))?;
    let j: usize = parts[1]
        .trim()
        .parse()
        .map_err(|_| schema_err(format!("{path}.{key}"), "indices must be integers"))?;
    if i == j {
        return Err(schema_err(
            format!("{path}.{key}"),
            "diagonal entries are forbidden (bivectors are skew)",
        ));
    }
    if i == 0 || j == 0 || i > n || j > n {
        return Err(schema_err(
            format!("{path}.{key}"),
            format!("indices must lie in 1..={n}"),
        ));
    }
    if i > j {
        return Err(schema_err(
            format!("{path}.{key}"),
            "store only the upper triangle: require i < j",
        ));
    }
    Ok((i - 1, j - 1))
}

fn parse_field(chart: &Arc<Chart>, path: &str, text: &str) -> Result<ScalarField, SpecError> {
    let expr = parse_expr(text).map_err(|e| schema_err(path, format!("in '{text}': {e}")))?;
    ScalarField::new(chart.clone(), expr).map_err(|e| schema_err(path, format!("in '{text}': {e}")))
}

fn parse_bivector_map(
    chart: &Arc<Chart>,
    path: &str,
    map: &BTreeMap<String, String>,
    tol: &Tolerances,
) -> Result<BivectorField, SpecError> {
    let n = chart.dim();
    let mut entries = Vec::new();
    for (key, text) in map {
        let (i, j) = parse_entry_key(path, key, n)?;
        let expr = parse_expr(text)
            .map_err(|e| schema_err(format!("{path}.{key}"), format!("in '{text}': {e}")))?;
        entries.push(((i, j), expr));
    }
    let field = BivectorField::from_upper(chart.clone(), entries)
        .map_err(|e| schema_err(path, e.to_string()))?;
    let _ = tol;
    Ok(field)
}

fn names_to_indices(chart: &Chart, path: &str, names: &[String]) -> Result<Vec<usize>, SpecError> {
    names
        .iter()
        .map(|n| {
            chart
                .index_of(n)
                .ok_or_else(|| schema_err(path, format!("'{n}' is not a coordinate")))
        })
        .collect()
}

/// Validate a raw document into a usable system.
pub fn validate(raw: &RawSystemSpec, tol: &Tolerances) -> Result<SystemSpec, SpecError> {
    if raw.version != SPEC_VERSION {
        return Err(schema_err(
            "version",
            format!(
                "unsupported version {} (expected {})",
                raw.version, SPEC_VERSION
            ),
        ));
    }
    if raw.name.is_empty() {
        return Err(schema_err("name", "name must be nonempty"));
    }
    let chart = Chart::new(raw.coordinates.iter().cloned())
        .map_err(|e| schema_err("coordinates", e.to_string()))?;

    if raw.bivector.is_none() && raw.epsilon_series.is_none() {
        return Err(schema_err(
            "bivector",
            "need a bivector or an epsilon_series",
        ));
    }

    let bivector = raw
        .bivector
        .as_ref()
        .map(|m| parse_bivector_map(&chart, "bivector", m, tol))
        .transpose()?;

    let hamiltonian = raw
        .hamiltonian
        .as_ref()
        .map(|h| parse_field(&chart, "hamiltonian", h))
        .transpose()?;

    let constraint = match &raw.constraint {
        None => None,
        Some(c) => Some(match c.kind.as_str() {
            "graph" => {
                let x = names_to_indices(&chart, "constraint.x", &c.x)?;
                let y = names_to_indices(&chart, "constraint.y", &c.y)?;
                let mut y0 = Vec::new();
                for (k, text) in c.y0.iter().enumerate() {
                    let expr = parse_expr(text).map_err(|e| {
                        schema_err(format!("constraint.y0[{k}]"), format!("in '{text}': {e}"))
                    })?;
                    y0.push(expr);
                }
                ConstraintSet::Graph(
                    GraphSubmanifold::new(chart.clone(), x, y, y0)
                        .map_err(|e| schema_err("constraint", e.to_string()))?,
                )
            }
            "split" => {
                let sigma = names_to_indices(&chart, "constraint.sigma", &c.sigma)?;
                let cs = names_to_indices(&chart, "constraint.c", &c.c)?;
                ConstraintSet::Split(
                    SplitConstraint::new(chart.clone(), sigma, cs)
                        .map_err(|e| schema_err("constraint", e.to_string()))?,
                )
            }
            other => {
                return Err(schema_err(
                    "constraint.kind",
                    format!("unknown kind '{other}' (expected 'graph' or 'split')"),
                ))
            }
        }),
    };

    let epsilon_series = match &raw.epsilon_series {
        None => None,
        Some(s) => {
            let mut coefficients = Vec::new();
            for (k, m) in s.coefficients.iter().enumerate() {
                coefficients.push(parse_bivector_map(
                    &chart,
                    &format!("epsilon_series.coefficients[{k}]"),
                    m,
                    tol,
                )?);
            }
            if coefficients.is_empty() {
                return Err(schema_err(
                    "epsilon_series.coefficients",
                    "need at least one coefficient",
                ));
            }
            Some(
                EpsBivectorSeries::new(chart.clone(), coefficients, s.scale_exponent)
                    .map_err(|e| schema_err("epsilon_series", e.to_string()))?,
            )
        }
    };

    let chart_map = match &raw.chart_map {
        None => None,
        Some(m) => {
            let target = Chart::new(m.names.iter().cloned())
                .map_err(|e| schema_err("chart_map.names", e.to_string()))?;
            if target.dim() != chart.dim() {
                return Err(schema_err(
                    "chart_map.names",
                    "target chart must match the source dimension",
                ));
            }
            let parse_list = |path: &str, texts: &[String], on: &Arc<Chart>| {
                texts
                    .iter()
                    .enumerate()
                    .map(|(k, text)| {
                        let expr = parse_expr(text).map_err(|e| {
                            schema_err(format!("{path}[{k}]"), format!("in '{text}': {e}"))
                        })?;
                        // Bind check only; keep the raw expression.
                        ScalarField::new(on.clone(), expr.clone())
                            .map_err(|e| schema_err(format!("{path}[{k}]"), e.to_string()))?;
                        Ok(expr)
                    })
                    .collect::<Result<Vec<Expr>, SpecError>>()
            };
            if m.forward.len() != chart.dim() || m.inverse.len() != chart.dim() {
                return Err(schema_err(
                    "chart_map",
                    "forward and inverse must list one expression per coordinate",
                ));
            }
            let forward = parse_list("chart_map.forward", &m.forward, &chart)?;
            let inverse = parse_list("chart_map.inverse", &m.inverse, &target)?;
            Some(ChartMap {
                target,
                forward,
                inverse,
            })
        }
    };

    let invariants = raw
        .invariants
        .iter()
        .enumerate()
        .map(|(k, text)| parse_field(&chart, &format!("invariants[{k}]"), text))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SystemSpec {
        name: raw.name.clone(),
        chart,
        bivector,
        hamiltonian,
        constraint,
        epsilon_series,
        chart_map,
        invariants,
    })
}

pub fn load_str(text: &str, tol: &Tolerances) -> Result<SystemSpec, SpecError> {
    let raw: RawSystemSpec = serde_json::from_str(text)?;
    validate(&raw, tol)
}

pub fn load_file(path: &std::path::Path, tol: &Tolerances) -> Result<SystemSpec, SpecError> {
    let text = std::fs::read_to_string(path)?;
    load_str(&text, tol)
}

/// Resolve `builtin:NAME` or a filesystem path.
pub fn load(reference: &str, tol: &Tolerances) -> Result<SystemSpec, SpecError> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        crate::builtins::load_builtin(name, tol)
    } else {
        load_file(std::path::Path::new(reference), tol)
    }
}
