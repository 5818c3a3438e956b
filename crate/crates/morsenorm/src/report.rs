//! Machine-readable run reports (JSON) and bulk numeric exports (CSV).
//!
//! Reports are deterministic: all collections serialize in fixed orders,
//! jet terms in graded-lex, and exact-mode coefficients as num/den strings.
//! Components and variables are 1-based in serialized form. `timings_ms`
//! is the one aggregate that naturally varies run to run; everything else
//! is byte-stable for identical inputs in exact mode.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::change::CoordinateChange;
use crate::coeff::{Coefficient, Rat};
use crate::field::PolyVectorField;
use crate::multi_index::MultiIndex;
use crate::normal::{HomologicalStep, Normalization};
use crate::pipeline::NormalizationOutcome;
use crate::problem::{ProblemFile, ProblemSpec};
use crate::spectrum::{ResonanceReport, Spectrum};

/// One serialized jet term: `{"exponent": [a1..an], "component": i,
/// "num": …, "den": …}` in exact mode, `"value"` in float mode.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TermJson {
    pub exponent: Vec<u32>,
    /// 1-based component index.
    pub component: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub den: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

pub trait TermCoeff: Coefficient {
    fn term_json(&self, exponent: Vec<u32>, component: usize) -> TermJson;
}

impl TermCoeff for Rat {
    fn term_json(&self, exponent: Vec<u32>, component: usize) -> TermJson {
        TermJson {
            exponent,
            component,
            num: Some(self.0.numer().to_string()),
            den: Some(self.0.denom().to_string()),
            value: None,
        }
    }
}

impl TermCoeff for f64 {
    fn term_json(&self, exponent: Vec<u32>, component: usize) -> TermJson {
        TermJson {
            exponent,
            component,
            num: None,
            den: None,
            value: Some(*self),
        }
    }
}

pub fn terms_of_change<C: TermCoeff>(change: &CoordinateChange<C>) -> Vec<TermJson> {
    let mut out = Vec::new();
    for (i, comp) in change.components().iter().enumerate() {
        for (a, c) in comp.terms() {
            out.push(c.term_json((0..a.len()).map(|j| a.get(j)).collect(), i + 1));
        }
    }
    out
}

pub fn terms_of_field<C: TermCoeff>(field: &PolyVectorField<C>) -> Vec<TermJson> {
    let mut out = Vec::new();
    for (i, comp) in field.components().iter().enumerate() {
        for (a, c) in comp.terms() {
            out.push(c.term_json((0..a.len()).map(|j| a.get(j)).collect(), i + 1));
        }
    }
    out
}

fn term_list<C: TermCoeff>(terms: &[(MultiIndex, usize, C)]) -> Vec<TermJson> {
    terms
        .iter()
        .map(|(a, i, c)| c.term_json((0..a.len()).map(|j| a.get(j)).collect(), i + 1))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StepJson {
    pub order: u32,
    pub removed: Vec<TermJson>,
    pub obstructions: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationJson {
    /// "exact" or "float".
    pub mode: &'static str,
    pub order: u32,
    pub fully_normalized: bool,
    pub steps: Vec<StepJson>,
    /// All obstructions, graded-lex.
    pub obstructions: Vec<TermJson>,
    /// Nonlinear terms remaining in the normalized field.
    pub residual_terms: Vec<TermJson>,
    /// The composed coordinate change, term by term.
    pub change_terms: Vec<TermJson>,
}

fn steps_json<C: TermCoeff>(steps: &[HomologicalStep<C>]) -> Vec<StepJson> {
    steps
        .iter()
        .map(|s| StepJson {
            order: s.order,
            removed: term_list(&s.removed_terms),
            obstructions: term_list(&s.obstructions),
        })
        .collect()
}

fn normalization_json<C: TermCoeff>(norm: &Normalization<C>, mode: &'static str) -> NormalizationJson {
    NormalizationJson {
        mode,
        order: norm.normalized.order(),
        fully_normalized: norm.is_fully_normalized(),
        steps: steps_json(&norm.steps),
        obstructions: term_list(&norm.obstructions()),
        residual_terms: term_list(&norm.normalized.nonlinear_terms()),
        change_terms: terms_of_change(&norm.change),
    }
}

impl NormalizationOutcome {
    pub fn to_json(&self) -> NormalizationJson {
        match self {
            NormalizationOutcome::Exact(n) => normalization_json(n, "exact"),
            NormalizationOutcome::Float(n) => normalization_json(n, "float"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumJson {
    pub critical_points: Vec<Vec<f64>>,
    pub unconverged_seeds: usize,
    pub degenerate_points: Vec<Vec<f64>>,
    pub analyzed_point: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
    pub multiplicity_groups: Vec<(usize, usize)>,
    pub resonance: ResonanceJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceJson {
    pub scanned_order: u32,
    pub satisfied: bool,
    /// Witnesses as (exponent, 1-based component).
    pub witnesses: Vec<WitnessJson>,
    /// "exact" when the scan ran on rational eigenvalues.
    pub mode: &'static str,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WitnessJson {
    pub exponent: Vec<u32>,
    pub component: usize,
}

pub fn spectrum_json(
    search: &crate::spectrum::CriticalPointSearch,
    center: &[f64],
    spectrum: &Spectrum,
    resonance: &ResonanceReport,
    exact: bool,
) -> SpectrumJson {
    SpectrumJson {
        critical_points: search.points.clone(),
        unconverged_seeds: search.unconverged_seeds.len(),
        degenerate_points: search.degenerate_points.clone(),
        analyzed_point: center.to_vec(),
        eigenvalues: spectrum.eigenvalues.clone(),
        morse_index: spectrum.morse_index,
        multiplicity_groups: spectrum.multiplicity_groups.clone(),
        resonance: ResonanceJson {
            scanned_order: resonance.scanned_order,
            satisfied: resonance.satisfied,
            witnesses: resonance
                .witnesses
                .iter()
                .map(|w| WitnessJson {
                    exponent: w.exponents.clone(),
                    component: w.component + 1,
                })
                .collect(),
            mode: if exact { "exact" } else { "float" },
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowJson {
    pub method: String,
    pub grid_points: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy_residual_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy_residual_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_method_max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionJson {
    pub p: f64,
    pub k: u32,
    pub delta: f64,
    pub delta_min: f64,
    pub t_max: f64,
    pub nodes: usize,
    /// Measured ratio per sampled point (geometric-mean estimate).
    pub rho_max: f64,
    pub rho_mean: f64,
}

/// Top-level run report.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the problem file bytes.
    pub input_hash: String,
    pub seed: u64,
    pub spec: ProblemFile,
    pub defaults_filled: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariants: Option<Vec<InvariantJson>>,
    pub timings_ms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantJson {
    pub name: String,
    /// "pass" | "fail" | "skipped".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, spec: &ProblemSpec, input_bytes: &[u8], seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(input_bytes);
        let hash = hasher.finalize();
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        RunReport {
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            input_hash: format!("sha256:{hex}"),
            seed,
            spec: spec.to_file(),
            defaults_filled: spec.defaulted.clone(),
            spectrum: None,
            normalization: None,
            flow: None,
            invariants: None,
            timings_ms: Vec::new(),
        }
    }

    pub fn time(&mut self, phase: &str, ms: f64) {
        self.timings_ms.push((phase.to_string(), ms));
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        let mut f = std::fs::File::create(&path)?;
        f.write_all(self.to_json_string().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}

/// One row of the conjugacy map export.
#[derive(Debug, Clone)]
pub struct PhiRow {
    pub x: Vec<f64>,
    pub phi: Option<Vec<f64>>,
    pub fp_phi: Option<Vec<f64>>,
    pub conj_residual: Option<f64>,
    pub cross_deviation: Option<f64>,
}

/// Write `phi_map.csv`: one row per grid point with the map values and
/// residual diagnostics. Failed points keep their row with empty cells.
pub fn write_phi_map(dir: &Path, n: usize, rows: &[PhiRow]) -> std::io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("phi_map.csv");
    let mut out = String::new();
    for i in 1..=n {
        out.push_str(&format!("x{i},"));
    }
    for i in 1..=n {
        out.push_str(&format!("phi{i},"));
    }
    for i in 1..=n {
        out.push_str(&format!("fp_phi{i},"));
    }
    out.push_str("conj_residual,cross_deviation\n");
    for row in rows {
        for v in &row.x {
            out.push_str(&format!("{v:.17e},"));
        }
        push_opt_vec(&mut out, n, &row.phi);
        push_opt_vec(&mut out, n, &row.fp_phi);
        match row.conj_residual {
            Some(r) => out.push_str(&format!("{r:.17e},")),
            None => out.push(','),
        }
        match row.cross_deviation {
            Some(r) => out.push_str(&format!("{r:.17e}")),
            None => {}
        }
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    Ok(path)
}

fn push_opt_vec(out: &mut String, n: usize, v: &Option<Vec<f64>>) {
    match v {
        Some(values) => {
            for v in values {
                out.push_str(&format!("{v:.17e},"));
            }
        }
        None => {
            for _ in 0..n {
                out.push(',');
            }
        }
    }
}

/// Write `traj_<idx>.csv`: one row per node, `t,u1..un`.
pub fn write_trajectory(
    dir: &Path,
    idx: usize,
    t: &[f64],
    values: &[Vec<f64>],
) -> std::io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("traj_{idx}.csv"));
    let n = values.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",u{i}"));
    }
    out.push('\n');
    for (tm, row) in t.iter().zip(values) {
        out.push_str(&format!("{tm:.17e}"));
        for v in row {
            out.push_str(&format!(",{v:.17e}"));
        }
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    Ok(path)
}
