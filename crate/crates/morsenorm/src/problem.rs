//! Problem files: JSON schema, validation, defaults, and the construction
//! of the gradient field `∇f = ∑ g^{ij} ∂f/∂xⱼ ∂/∂xᵢ` as jets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{Coefficient, Rat};
use crate::field::PolyVectorField;
use crate::jet::Jet;
use crate::parse::{parse_expression, ParseError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {field}: {message}")]
    Schema { field: String, message: String },
    #[error("invariant `{name}` violated: {message}")]
    Invariant { name: String, message: String },
    #[error("in {field}: {source}")]
    Expression { field: String, source: ParseError },
}

fn schema(field: &str, message: impl Into<String>) -> ProblemError {
    ProblemError::Schema {
        field: field.to_string(),
        message: message.into(),
    }
}

fn invariant(name: &str, message: impl Into<String>) -> ProblemError {
    ProblemError::Invariant {
        name: name.to_string(),
        message: message.into(),
    }
}

/// Raw JSON shape of a problem file. All keys lowercase; exactly one of
/// `function` / `field`; `metric` defaults to the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump: Option<BumpFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonance_order: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpFile {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub float_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy: Option<f64>,
}

/// The problem source: a Morse function with a metric, or a raw field.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    /// `f` as an expression plus an n×n matrix of metric expressions.
    Function {
        f: String,
        metric: Vec<Vec<String>>,
    },
    /// Raw vector field, one expression per component.
    RawField(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub float_zero: f64,
    pub ode: f64,
    pub conjugacy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            float_zero: 1e-10,
            ode: 1e-10,
            conjugacy: 1e-6,
        }
    }
}

pub const DEFAULT_ORDER: u32 = 8;

/// Fully validated problem specification with all defaults resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub source: ProblemSource,
    pub truncation_order: u32,
    pub domain_radius: f64,
    pub bump_inner: f64,
    pub bump_outer: f64,
    pub tolerances: Tolerances,
    pub resonance_scan_order: u32,
    /// Defaults that were filled in, reported back to the user.
    pub defaulted: Vec<String>,
}

impl ProblemSpec {
    pub fn from_file(file: ProblemFile) -> Result<Self, ProblemError> {
        let n = file.dimension;
        if n < 1 {
            return Err(invariant("dimension", "dimension must be ≥ 1"));
        }
        let mut defaulted = Vec::new();

        let source = match (&file.function, &file.field) {
            (Some(_), Some(_)) => {
                return Err(schema(
                    "function/field",
                    "exactly one of `function` and `field` must be present, found both",
                ))
            }
            (None, None) => {
                return Err(schema(
                    "function/field",
                    "exactly one of `function` and `field` must be present, found neither",
                ))
            }
            (Some(f), None) => {
                let metric = match &file.metric {
                    Some(m) => m.clone(),
                    None => {
                        defaulted.push("metric = identity".to_string());
                        identity_metric_exprs(n)
                    }
                };
                if metric.len() != n || metric.iter().any(|row| row.len() != n) {
                    return Err(schema("metric", format!("metric must be {n}×{n}")));
                }
                ProblemSource::Function {
                    f: f.clone(),
                    metric,
                }
            }
            (None, Some(v)) => {
                if file.metric.is_some() {
                    return Err(schema(
                        "metric",
                        "`metric` is only meaningful in function mode",
                    ));
                }
                if v.len() != n {
                    return Err(schema(
                        "field",
                        format!("field must have {n} components, found {}", v.len()),
                    ));
                }
                ProblemSource::RawField(v.clone())
            }
        };

        let truncation_order = file.order.unwrap_or_else(|| {
            defaulted.push(format!("order = {DEFAULT_ORDER}"));
            DEFAULT_ORDER
        });
        if truncation_order < 2 {
            return Err(invariant("order", "truncation order must be ≥ 2"));
        }

        let domain_radius = file.radius.unwrap_or_else(|| {
            defaulted.push("radius = 1".to_string());
            1.0
        });
        if !(domain_radius > 0.0) {
            return Err(invariant("radius", "domain radius must be positive"));
        }

        let (bump_inner, bump_outer) = match &file.bump {
            Some(b) => (b.inner, b.outer),
            None => {
                defaulted.push(format!(
                    "bump = {{inner: {}, outer: {}}}",
                    domain_radius / 2.0,
                    domain_radius
                ));
                (domain_radius / 2.0, domain_radius)
            }
        };
        if !(0.0 < bump_inner && bump_inner < bump_outer && bump_outer <= domain_radius) {
            return Err(invariant(
                "bump",
                format!(
                    "requires 0 < inner < outer ≤ radius, found inner = {bump_inner}, \
                     outer = {bump_outer}, radius = {domain_radius}"
                ),
            ));
        }

        let mut tolerances = Tolerances::default();
        match &file.tolerances {
            None => defaulted.push(format!(
                "tolerances = {{float_zero: {}, ode: {}, conjugacy: {}}}",
                tolerances.float_zero, tolerances.ode, tolerances.conjugacy
            )),
            Some(t) => {
                match t.float_zero {
                    Some(v) => tolerances.float_zero = v,
                    None => defaulted.push(format!(
                        "tolerances.float_zero = {}",
                        tolerances.float_zero
                    )),
                }
                match t.ode {
                    Some(v) => tolerances.ode = v,
                    None => defaulted.push(format!("tolerances.ode = {}", tolerances.ode)),
                }
                match t.conjugacy {
                    Some(v) => tolerances.conjugacy = v,
                    None => defaulted.push(format!(
                        "tolerances.conjugacy = {}",
                        tolerances.conjugacy
                    )),
                }
            }
        }
        for (name, v) in [
            ("tolerances.float_zero", tolerances.float_zero),
            ("tolerances.ode", tolerances.ode),
            ("tolerances.conjugacy", tolerances.conjugacy),
        ] {
            if !(v > 0.0) {
                return Err(invariant(name, "tolerances must be positive"));
            }
        }

        let resonance_scan_order = file.resonance_order.unwrap_or_else(|| {
            defaulted.push(format!("resonance_order = {truncation_order}"));
            truncation_order
        });
        if resonance_scan_order < 2 {
            return Err(invariant(
                "resonance_order",
                "resonance scan order must be ≥ 2",
            ));
        }

        let spec = ProblemSpec {
            dimension: n,
            source,
            truncation_order,
            domain_radius,
            bump_inner,
            bump_outer,
            tolerances,
            resonance_scan_order,
            defaulted,
        };
        // Parse all expressions once up-front so syntax and variable errors
        // surface at load time, and check the metric's value at the origin.
        spec.validate_expressions()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ProblemFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }

    /// Echo of the resolved spec in file form (for reports).
    pub fn to_file(&self) -> ProblemFile {
        let (function, metric, field) = match &self.source {
            ProblemSource::Function { f, metric } => {
                (Some(f.clone()), Some(metric.clone()), None)
            }
            ProblemSource::RawField(v) => (None, None, Some(v.clone())),
        };
        ProblemFile {
            dimension: self.dimension,
            function,
            metric,
            field,
            order: Some(self.truncation_order),
            radius: Some(self.domain_radius),
            bump: Some(BumpFile {
                inner: self.bump_inner,
                outer: self.bump_outer,
            }),
            tolerances: Some(TolerancesFile {
                float_zero: Some(self.tolerances.float_zero),
                ode: Some(self.tolerances.ode),
                conjugacy: Some(self.tolerances.conjugacy),
            }),
            resonance_order: Some(self.resonance_scan_order),
        }
    }

    fn validate_expressions(&self) -> Result<(), ProblemError> {
        match &self.source {
            ProblemSource::Function { f, .. } => {
                parse_expression(f, self.dimension, self.truncation_order + 1).map_err(
                    |source| ProblemError::Expression {
                        field: "function".to_string(),
                        source,
                    },
                )?;
                let g0 = self.metric_at_origin()?;
                check_spd(&g0)?;
            }
            ProblemSource::RawField(comps) => {
                for (i, c) in comps.iter().enumerate() {
                    parse_expression(c, self.dimension, self.truncation_order).map_err(
                        |source| ProblemError::Expression {
                            field: format!("field[{i}]"),
                            source,
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    /// The Morse function as an exact jet, carried one order above the
    /// truncation so that its gradient is exact through the full order.
    pub fn function_jet(&self) -> Result<Jet<Rat>, ProblemError> {
        match &self.source {
            ProblemSource::Function { f, .. } => Ok(parse_expression(
                f,
                self.dimension,
                self.truncation_order + 1,
            )
            .map_err(|source| ProblemError::Expression {
                field: "function".to_string(),
                source,
            })?
            .jet),
            ProblemSource::RawField(_) => Err(schema(
                "function",
                "problem is in raw-field mode; no function available",
            )),
        }
    }

    /// Metric matrix entries as jets (identity when defaulted).
    pub fn metric_jets(&self) -> Result<Vec<Vec<Jet<Rat>>>, ProblemError> {
        let n = self.dimension;
        let exprs = match &self.source {
            ProblemSource::Function { metric, .. } => metric.clone(),
            ProblemSource::RawField(_) => identity_metric_exprs(n),
        };
        let mut rows = Vec::with_capacity(n);
        for (i, row) in exprs.iter().enumerate() {
            let mut out = Vec::with_capacity(n);
            for (j, e) in row.iter().enumerate() {
                let jet = parse_expression(e, n, self.truncation_order)
                    .map_err(|source| ProblemError::Expression {
                        field: format!("metric[{i}][{j}]"),
                        source,
                    })?
                    .jet;
                out.push(jet);
            }
            rows.push(out);
        }
        Ok(rows)
    }

    /// Metric value at the origin.
    pub fn metric_at_origin(&self) -> Result<Vec<Vec<f64>>, ProblemError> {
        let jets = self.metric_jets()?;
        Ok(jets
            .iter()
            .map(|row| {
                row.iter()
                    .map(|j| j.constant_term().to_f64())
                    .collect::<Vec<_>>()
            })
            .collect())
    }

    /// The analyzed vector field as exact rational jets at the truncation
    /// order: the raw field, or `∇f` with `g⁻¹(x)` expanded as a
    /// terminating Neumann series of jets.
    pub fn field_jets(&self) -> Result<PolyVectorField<Rat>, ProblemError> {
        let n = self.dimension;
        let order = self.truncation_order;
        match &self.source {
            ProblemSource::RawField(comps) => {
                let jets = comps
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        Ok(parse_expression(c, n, order)
                            .map_err(|source| ProblemError::Expression {
                                field: format!("field[{i}]"),
                                source,
                            })?
                            .jet)
                    })
                    .collect::<Result<Vec<_>, ProblemError>>()?;
                PolyVectorField::new(jets).map_err(|e| invariant("field", e.to_string()))
            }
            ProblemSource::Function { .. } => {
                let f = self.function_jet()?;
                let g_inv = self.metric_inverse_jets()?;
                let grad: Vec<Jet<Rat>> = (0..n).map(|j| f.partial_derivative(j)).collect();
                let comps = (0..n)
                    .map(|i| {
                        let mut acc = Jet::zero(n, order);
                        for j in 0..n {
                            let term = g_inv[i][j]
                                .mul(&grad[j].truncated(order))
                                .expect("same dims");
                            acc = acc.add(&term).expect("same dims");
                        }
                        acc
                    })
                    .collect();
                PolyVectorField::new(comps).map_err(|e| invariant("field", e.to_string()))
            }
        }
    }

    /// `g⁻¹(x)` as a matrix of jets: with `g(x) = G₀(I + G₀⁻¹ΔG(x))` and
    /// `ΔG` of positive low degree, the inverse is the terminating series
    /// `∑ (−G₀⁻¹ΔG)^k G₀⁻¹` truncated at the order.
    pub fn metric_inverse_jets(&self) -> Result<Vec<Vec<Jet<Rat>>>, ProblemError> {
        let n = self.dimension;
        let order = self.truncation_order;
        let g = self.metric_jets()?;
        // G₀ as exact rationals.
        let g0 = crate::matrix::Matrix::from_rows(
            &g.iter()
                .map(|row| row.iter().map(|j| j.constant_term()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        );
        let g0_inv = g0
            .inverse()
            .ok_or_else(|| invariant("metric", "metric is singular at the origin"))?;
        // Δ(x) = G₀⁻¹·g(x) − I, entries of positive minimum degree.
        let mut delta = vec![vec![Jet::<Rat>::zero(n, order); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = Jet::zero(n, order);
                for k in 0..n {
                    acc = acc
                        .add(&g[k][j].scale(g0_inv.get(i, k)))
                        .expect("same dims");
                }
                if i == j {
                    acc = acc.sub(&Jet::one(n, order)).expect("same dims");
                }
                delta[i][j] = acc;
            }
        }
        // S = ∑_k (−Δ)^k, truncated; terminates because Δ has min degree ≥ 1.
        let mut series = vec![vec![Jet::<Rat>::zero(n, order); n]; n];
        for (i, row) in series.iter_mut().enumerate() {
            row[i] = Jet::one(n, order);
        }
        let mut power = series.clone(); // Δ⁰ = I
        for _ in 1..=order {
            // power ← −Δ·power
            let mut next = vec![vec![Jet::<Rat>::zero(n, order); n]; n];
            let mut all_zero = true;
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Jet::zero(n, order);
                    for k in 0..n {
                        acc = acc
                            .add(&delta[i][k].mul(&power[k][j]).expect("same dims"))
                            .expect("same dims");
                    }
                    let val = acc.neg();
                    if !val.is_zero() {
                        all_zero = false;
                    }
                    next[i][j] = val;
                }
            }
            power = next;
            for i in 0..n {
                for j in 0..n {
                    series[i][j] = series[i][j].add(&power[i][j]).expect("same dims");
                }
            }
            if all_zero {
                break;
            }
        }
        // g⁻¹ = S·G₀⁻¹.
        let mut out = vec![vec![Jet::<Rat>::zero(n, order); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = Jet::zero(n, order);
                for k in 0..n {
                    acc = acc
                        .add(&series[i][k].scale(g0_inv.get(k, j)))
                        .expect("same dims");
                }
                out[i][j] = acc;
            }
        }
        Ok(out)
    }
}

fn identity_metric_exprs(n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { "1" } else { "0" }.to_string())
                .collect()
        })
        .collect()
}

/// Symmetric positive-definite check on the origin value of the metric,
/// by symmetry inspection plus Cholesky.
fn check_spd(g0: &[Vec<f64>]) -> Result<(), ProblemError> {
    let n = g0.len();
    for i in 0..n {
        for j in 0..n {
            if (g0[i][j] - g0[j][i]).abs() > 1e-12 * (1.0 + g0[i][j].abs()) {
                return Err(invariant(
                    "metric",
                    format!("metric is not symmetric at the origin (entries [{i}][{j}] and [{j}][{i}])"),
                ));
            }
        }
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| g0[i][j]);
    if nalgebra::Cholesky::new(m).is_none() {
        return Err(invariant(
            "metric",
            "metric is not positive definite at the origin",
        ));
    }
    Ok(())
}

/// Stable JSON form of the resolved spec for hashing and determinism tests.
pub fn canonical_spec_json(spec: &ProblemSpec) -> serde_json::Value {
    // Serialize through a BTreeMap so key order is fixed.
    let file = spec.to_file();
    let value = serde_json::to_value(&file).expect("serializable");
    fn sort(v: serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(map) => {
                let sorted: BTreeMap<String, serde_json::Value> =
                    map.into_iter().map(|(k, val)| (k, sort(val))).collect();
                serde_json::Value::Object(sorted.into_iter().collect())
            }
            serde_json::Value::Array(items) => {
                serde_json::Value::Array(items.into_iter().map(sort).collect())
            }
            other => other,
        }
    }
    sort(value)
}
