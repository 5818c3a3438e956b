//! End-to-end analyses shared by the CLI commands: locate and classify the
//! critical point, move to eigencoordinates, normalize, and set up the
//! truncated field for the flow machinery.
//!
//! Two coefficient paths exist. Raw fields whose linear part is exactly
//! `diag(λ)` with rational entries run the normalization on exact
//! rationals, so resonance ledgers are bit-reproducible. Everything else
//! (function mode, off-origin critical points, non-diagonal linear parts)
//! runs in float with the spec's declared zero tolerance.

use thiserror::Error;

use crate::change::CoordinateChange;
use crate::coeff::{Coefficient, Rat};
use crate::field::{pullback_field, FieldError, PolyVectorField};
use crate::flow::{Bump, TruncatedField};
use crate::normal::{normalize_to_order, NormalError, Normalization, ZeroTest};
use crate::problem::{ProblemError, ProblemSource, ProblemSpec};
use crate::spectrum::{
    check_n_linearity_exact, check_n_linearity_float, diagonalize_at_critical,
    find_critical_points, CriticalPointSearch, ResonanceReport, Spectrum, SpectrumError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Normal(#[from] NormalError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("no critical point converged from the seed grid")]
    NoCriticalPoint,
}

/// Spectrum-level analysis: critical points, eigenvalues, resonances.
#[derive(Debug)]
pub struct Analysis {
    /// All converged critical points (function mode; raw mode: the origin).
    pub search: CriticalPointSearch,
    /// The point the rest of the pipeline is centered at.
    pub center: Vec<f64>,
    pub spectrum: Spectrum,
    pub resonance: ResonanceReport,
    /// Present when the raw field has an exactly diagonal rational linear
    /// part; enables the exact normalization path.
    pub exact_lambda: Option<Vec<Rat>>,
}

/// Default seed grid for the Newton search: per-axis ticks within the
/// chart radius.
pub fn default_seeds(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let ticks: Vec<f64> = [-0.8, -0.4, -0.15, 0.1, 0.35, 0.7]
        .iter()
        .map(|s| s * radius)
        .collect();
    let mut seeds = Vec::new();
    let mut index = vec![0usize; n];
    loop {
        seeds.push(index.iter().map(|&i| ticks[i]).collect());
        let mut d = 0;
        loop {
            index[d] += 1;
            if index[d] < ticks.len() {
                break;
            }
            index[d] = 0;
            d += 1;
            if d == n {
                return seeds;
            }
        }
    }
}

pub fn analyze(spec: &ProblemSpec) -> Result<Analysis, PipelineError> {
    let n = spec.dimension;
    match &spec.source {
        ProblemSource::Function { .. } => {
            let search = find_critical_points(spec, &default_seeds(n, spec.domain_radius))?;
            if search.points.is_empty() {
                return Err(PipelineError::NoCriticalPoint);
            }
            // Center the chart at the critical point nearest the origin.
            let center = search
                .points
                .iter()
                .min_by(|a, b| {
                    let na: f64 = a.iter().map(|v| v * v).sum();
                    let nb: f64 = b.iter().map(|v| v * v).sum();
                    na.partial_cmp(&nb).unwrap()
                })
                .cloned()
                .expect("nonempty");
            let spectrum = crate::spectrum::morse_eigenvalues(spec, &center)?;
            let resonance = check_n_linearity_float(
                &spectrum.eigenvalues,
                spec.resonance_scan_order,
                spec.tolerances.float_zero,
            );
            Ok(Analysis {
                search,
                center,
                spectrum,
                resonance,
                exact_lambda: None,
            })
        }
        ProblemSource::RawField(_) => {
            let origin = vec![0.0; n];
            let spectrum = crate::spectrum::morse_eigenvalues(spec, &origin)?;
            let field = spec.field_jets()?;
            let exact_lambda = field.detect_diagonal().map(|lambda| {
                // Keep the descending presentation used everywhere else.
                let mut pairs: Vec<(usize, Rat)> = lambda.into_iter().enumerate().collect();
                pairs.sort_by(|a, b| b.1.to_f64().partial_cmp(&a.1.to_f64()).unwrap());
                pairs.into_iter().map(|(_, l)| l).collect::<Vec<_>>()
            });
            let resonance = match &exact_lambda {
                Some(lambda) => check_n_linearity_exact(lambda, spec.resonance_scan_order),
                None => check_n_linearity_float(
                    &spectrum.eigenvalues,
                    spec.resonance_scan_order,
                    spec.tolerances.float_zero,
                ),
            };
            Ok(Analysis {
                search: CriticalPointSearch {
                    points: vec![origin.clone()],
                    unconverged_seeds: Vec::new(),
                    degenerate_points: Vec::new(),
                },
                center: origin,
                spectrum,
                resonance,
                exact_lambda,
            })
        }
    }
}

/// The field in eigencoordinates at the analyzed critical point, plus the
/// linear change that got us there.
#[derive(Debug)]
pub struct DiagonalizedSystem {
    pub analysis: Analysis,
    /// Field with linear part `diag(λ)`, in float coefficients.
    pub field: PolyVectorField<f64>,
    /// Exact field when the exact path applies (already diagonal raw field,
    /// in its original variable order re-sorted to descending λ).
    pub exact_field: Option<PolyVectorField<Rat>>,
    /// Recentering + linear diagonalization, as a float change.
    pub to_eigen: CoordinateChange<f64>,
}

pub fn diagonalize(spec: &ProblemSpec) -> Result<DiagonalizedSystem, PipelineError> {
    let analysis = analyze(spec)?;
    let n = spec.dimension;
    let field = spec.field_jets()?;
    if let Some(exact_lambda) = &analysis.exact_lambda {
        // Exact path: permute coordinates to descending-λ order.
        let diag = field.detect_diagonal().expect("checked in analyze");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| diag[j].to_f64().partial_cmp(&diag[i].to_f64()).unwrap());
        let perm_change = permutation_change::<Rat>(&order, spec.truncation_order);
        let exact_field = pullback_field(&field, &perm_change)?;
        let exact_field = exact_field.with_eigen(exact_lambda.clone())?;
        let float_field = exact_field.map_coeff(|c| c.to_f64());
        let to_eigen = perm_change.map_coeff(|c| c.to_f64());
        return Ok(DiagonalizedSystem {
            analysis,
            field: float_field,
            exact_field: Some(exact_field),
            to_eigen,
        });
    }
    // Float path: recenter at the critical point, then apply the linear
    // diagonalizer.
    let f64_field = field.map_coeff(|c| c.to_f64());
    let recentered = if analysis.center.iter().all(|c| *c == 0.0) {
        f64_field
    } else {
        let comps = f64_field
            .components()
            .iter()
            .map(|c| c.shift(&analysis.center))
            .collect::<Vec<_>>();
        PolyVectorField::new(comps)?
    };
    let (_, lin) = diagonalize_at_critical(spec, &analysis.center)?;
    let diagonalized = pullback_field(&recentered, &lin)?;
    Ok(DiagonalizedSystem {
        analysis,
        field: diagonalized,
        exact_field: None,
        to_eigen: lin,
    })
}

fn permutation_change<C: Coefficient>(order: &[usize], trunc: u32) -> CoordinateChange<C> {
    // New coordinate r reads old coordinate order[r]: y_r = x_{order[r]}.
    let n = order.len();
    let mut comps = vec![crate::jet::Jet::<C>::zero(n, trunc); n];
    for (r, &src) in order.iter().enumerate() {
        comps[r] = crate::jet::Jet::variable(src, n, trunc);
    }
    CoordinateChange::new(comps).expect("permutations are invertible")
}

/// Outcome of the normalization stage, in whichever coefficient mode the
/// system admits.
#[derive(Debug)]
pub enum NormalizationOutcome {
    Exact(Normalization<Rat>),
    Float(Normalization<f64>),
}

impl NormalizationOutcome {
    pub fn has_obstructions(&self) -> bool {
        match self {
            NormalizationOutcome::Exact(n) => !n.is_fully_normalized(),
            NormalizationOutcome::Float(n) => !n.is_fully_normalized(),
        }
    }
}

pub fn normalize(
    spec: &ProblemSpec,
    system: &DiagonalizedSystem,
) -> Result<NormalizationOutcome, PipelineError> {
    if let (Some(exact_field), Some(lambda)) =
        (&system.exact_field, &system.analysis.exact_lambda)
    {
        let norm = normalize_to_order(exact_field, lambda, ZeroTest::Exact)?;
        return Ok(NormalizationOutcome::Exact(norm));
    }
    let lambda = system.analysis.spectrum.eigenvalues.clone();
    let norm = normalize_to_order(
        &system.field,
        &lambda,
        ZeroTest::Relative(spec.tolerances.float_zero),
    )?;
    Ok(NormalizationOutcome::Float(norm))
}

/// Bump-truncated field in eigencoordinates, ready for the flow engine.
pub fn truncated_field(spec: &ProblemSpec, system: &DiagonalizedSystem) -> TruncatedField {
    TruncatedField::new(
        &system.field,
        &system.analysis.spectrum.eigenvalues,
        Bump::new(spec.bump_inner, spec.bump_outer),
    )
}
