//! Morse eigenvalues, critical points, and the ℕ-linearity condition.
//!
//! At a non-degenerate critical point `p` of `(f, g)` the Morse eigenvalues
//! are the eigenvalues of `g⁻¹(p)·Hess f(p)`. The pair `(g⁻¹, Hess f)` is a
//! symmetric pair with one side positive definite, so it diagonalizes
//! simultaneously: congruence on the metric, similarity on the product. The
//! eigenvalue multiset is a coordinate invariant.
//!
//! Ordering convention: eigenvalues are sorted descending, which places the
//! unstable block (positive rates of the ascending flow `V = ∇f`) first.
//! The Morse index is the count of negative eigenvalues.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::change::CoordinateChange;
use crate::coeff::{Coefficient, Rat};
use crate::jet::Jet;
use crate::matrix::Matrix;
use crate::multi_index::MultiIndex;
use crate::problem::{ProblemError, ProblemSource, ProblemSpec};

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("degenerate Hessian at ({point:?}): |det| = {det_abs:.3e}")]
    DegenerateHessian { point: Vec<f64>, det_abs: f64 },
    #[error("linear part has complex eigenvalues (e.g. {re:.6} ± {im:.6}i); only real-diagonalizable fields are supported")]
    ComplexSpectrum { re: f64, im: f64 },
    #[error("linear part is not diagonalizable over ℝ (eigenvalue {eigenvalue:.6} has defective eigenspace)")]
    Defective { eigenvalue: f64 },
    #[error("zero eigenvalue: non-degeneracy requires λᵢ ≠ 0")]
    ZeroEigenvalue,
    #[error("problem must be in function mode for critical-point search")]
    NotFunctionMode,
}

/// Morse eigenvalues with the diagonalizing linear map.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Descending; unstable block (λ > 0) first.
    pub eigenvalues: Vec<f64>,
    /// Count of negative eigenvalues.
    pub morse_index: usize,
    /// Columns are eigenvectors of `g⁻¹·Hess f`; `A⁻¹ (g⁻¹ H) A = diag(λ)`.
    pub diagonalizer: Vec<Vec<f64>>,
    /// Runs of equal eigenvalues as (start, length), under `float_zero`.
    pub multiplicity_groups: Vec<(usize, usize)>,
}

impl Spectrum {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn diagonalizer_matrix(&self) -> DMatrix<f64> {
        let n = self.dimension();
        DMatrix::from_fn(n, n, |i, j| self.diagonalizer[i][j])
    }
}

/// A resonance witness: `⟨a,λ⟩ − λᵢ = 0` with `|a| ≥ 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Exponent multi-index `a`.
    pub exponents: Vec<u32>,
    /// Component `i`, 0-based.
    pub component: usize,
}

/// Outcome of an exhaustive resonance scan through `scanned_order`.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    pub scanned_order: u32,
    /// Graded-lex by exponent, then by component.
    pub witnesses: Vec<Witness>,
    /// ℕ-linearity holds through `scanned_order`.
    pub satisfied: bool,
}

/// Exact scan over rational eigenvalues.
pub fn check_n_linearity_exact(lambda: &[Rat], max_order: u32) -> ResonanceReport {
    assert!(max_order >= 2);
    assert!(lambda.iter().all(|l| !l.is_zero()), "λᵢ must be nonzero");
    scan(lambda.len(), max_order, |a, i| {
        let mut acc = -lambda[i].clone();
        for (j, l) in lambda.iter().enumerate() {
            acc = acc + l.clone() * Rat::from_int(a.get(j) as i64);
        }
        acc.is_zero()
    })
}

/// Float scan with the relative tolerance policy
/// `|⟨a,λ⟩ − λᵢ| ≤ float_zero·(1 + |⟨a,λ⟩|)`.
pub fn check_n_linearity_float(lambda: &[f64], max_order: u32, float_zero: f64) -> ResonanceReport {
    assert!(max_order >= 2);
    assert!(lambda.iter().all(|l| *l != 0.0), "λᵢ must be nonzero");
    scan(lambda.len(), max_order, |a, i| {
        let dot: f64 = lambda
            .iter()
            .enumerate()
            .map(|(j, l)| l * a.get(j) as f64)
            .sum();
        (dot - lambda[i]).abs() <= float_zero * (1.0 + dot.abs())
    })
}

fn scan(n: usize, max_order: u32, is_resonant: impl Fn(&MultiIndex, usize) -> bool) -> ResonanceReport {
    let mut witnesses = Vec::new();
    for a in MultiIndex::degree_range(n, 2, max_order) {
        for i in 0..n {
            if is_resonant(&a, i) {
                witnesses.push(Witness {
                    exponents: (0..n).map(|j| a.get(j)).collect(),
                    component: i,
                });
            }
        }
    }
    ResonanceReport {
        scanned_order: max_order,
        satisfied: witnesses.is_empty(),
        witnesses,
    }
}

/// Newton search for critical points of `f` from the given seeds.
///
/// Converged roots are deduplicated at distance `1e-8·R`; each returned
/// point has `‖∇f‖ < ode_tol` and an invertible Hessian. Diverged seeds and
/// degenerate roots are reported separately.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointSearch {
    pub points: Vec<Vec<f64>>,
    pub unconverged_seeds: Vec<Vec<f64>>,
    pub degenerate_points: Vec<Vec<f64>>,
}

pub fn find_critical_points(
    spec: &ProblemSpec,
    seeds: &[Vec<f64>],
) -> Result<CriticalPointSearch, SpectrumError> {
    if !matches!(spec.source, ProblemSource::Function { .. }) {
        return Err(SpectrumError::NotFunctionMode);
    }
    let f = spec.function_jet()?;
    let f64_jet = f.map_coeff(|c| c.to_f64());
    let grad: Vec<Jet<f64>> = (0..spec.dimension)
        .map(|i| f64_jet.partial_derivative(i))
        .collect();
    let hess: Vec<Vec<Jet<f64>>> = (0..spec.dimension)
        .map(|i| {
            (0..spec.dimension)
                .map(|j| grad[i].partial_derivative(j))
                .collect()
        })
        .collect();
    let n = spec.dimension;
    let tol = spec.tolerances.ode;
    let mut search = CriticalPointSearch {
        points: Vec::new(),
        unconverged_seeds: Vec::new(),
        degenerate_points: Vec::new(),
    };
    'seeds: for seed in seeds {
        assert_eq!(seed.len(), n);
        let mut x = DVector::from_column_slice(seed);
        let mut converged = false;
        for _ in 0..80 {
            let gval = DVector::from_iterator(n, grad.iter().map(|g| g.eval_f64(x.as_slice())));
            if gval.norm() < tol {
                converged = true;
                break;
            }
            let hval = DMatrix::from_fn(n, n, |i, j| hess[i][j].eval_f64(x.as_slice()));
            let Some(step) = hval.lu().solve(&gval) else {
                break;
            };
            if !step.iter().all(|v| v.is_finite()) {
                break;
            }
            x -= step;
            if x.norm() > 100.0 * spec.domain_radius.max(1.0) {
                break;
            }
        }
        // Polish check after the loop: Newton may land exactly on the last
        // iteration.
        let gval = DVector::from_iterator(n, grad.iter().map(|g| g.eval_f64(x.as_slice())));
        converged = converged || gval.norm() < tol;
        if !converged {
            search.unconverged_seeds.push(seed.clone());
            continue;
        }
        let dedup_tol = 1e-8 * spec.domain_radius;
        for known in &search.points {
            let d2: f64 = known
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() < dedup_tol {
                continue 'seeds;
            }
        }
        for known in &search.degenerate_points {
            let d2: f64 = known
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() < dedup_tol {
                continue 'seeds;
            }
        }
        let hval = DMatrix::from_fn(n, n, |i, j| hess[i][j].eval_f64(x.as_slice()));
        let scale = hval.amax().max(1.0);
        if hval.determinant().abs() < 1e-10 * scale.powi(n as i32) {
            search.degenerate_points.push(x.as_slice().to_vec());
        } else {
            search.points.push(x.as_slice().to_vec());
        }
    }
    Ok(search)
}

/// Morse eigenvalues at a critical point (function mode) or at the origin
/// of a raw field.
///
/// Function mode solves the symmetric-definite pair: with `g(p) = LLᵀ`, the
/// matrix `S = L⁻¹·Hess f(p)·L⁻ᵀ` is symmetric with the same spectrum as
/// `g⁻¹·Hess f`, and `A = L⁻ᵀU` (with `S = U·diag·Uᵀ`) simultaneously
/// diagonalizes: `AᵀgA = I` and `A⁻¹(g⁻¹H)A = diag(λ)`. At the critical
/// point `∇f` vanishes, so Christoffel terms drop and the plain Hessian is
/// the covariant one.
pub fn morse_eigenvalues(spec: &ProblemSpec, p: &[f64]) -> Result<Spectrum, SpectrumError> {
    let n = spec.dimension;
    match &spec.source {
        ProblemSource::Function { .. } => {
            let f = spec.function_jet()?;
            let fj = f.map_coeff(|c| c.to_f64());
            let hess = DMatrix::from_fn(n, n, |i, j| {
                fj.partial_derivative(i).partial_derivative(j).eval_f64(p)
            });
            let gmat = {
                let jets = spec.metric_jets()?;
                DMatrix::from_fn(n, n, |i, j| jets[i][j].map_coeff(|c| c.to_f64()).eval_f64(p))
            };
            let scale = hess.amax().max(1.0);
            if hess.determinant().abs() < 1e-12 * scale.powi(n as i32) {
                return Err(SpectrumError::DegenerateHessian {
                    point: p.to_vec(),
                    det_abs: hess.determinant().abs(),
                });
            }
            let chol = Cholesky::new(gmat).expect("metric validated SPD at load");
            let l = chol.l();
            let l_inv = l.clone().try_inverse().expect("triangular invertible");
            let s = &l_inv * &hess * l_inv.transpose();
            // Symmetrize against roundoff before the symmetric eigensolver.
            let s = (&s + s.transpose()) * 0.5;
            let eig = s.symmetric_eigen();
            let a_full = l_inv.transpose() * &eig.eigenvectors;
            // Sort descending.
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| {
                eig.eigenvalues[j]
                    .partial_cmp(&eig.eigenvalues[i])
                    .unwrap()
            });
            let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
            let diagonalizer: Vec<Vec<f64>> = (0..n)
                .map(|r| idx.iter().map(|&c| a_full[(r, c)]).collect())
                .collect();
            build_spectrum(eigenvalues, diagonalizer, spec.tolerances.float_zero)
        }
        ProblemSource::RawField(_) => {
            let v = spec.field_jets()?;
            let m = v.linear_matrix().map(|c| c.to_f64());
            let dm = DMatrix::from_fn(n, n, |i, j| *m.get(i, j));
            raw_linear_spectrum(&dm, spec.tolerances.float_zero)
        }
    }
}

/// Spectrum of a general real linear part: must be real-diagonalizable.
pub fn raw_linear_spectrum(m: &DMatrix<f64>, float_zero: f64) -> Result<Spectrum, SpectrumError> {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    // Fast path: already diagonal.
    let mut off_diag = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off_diag = off_diag.max(m[(i, j)].abs());
            }
        }
    }
    if off_diag <= 1e-14 * scale {
        let eigenvalues: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
        let sorted: Vec<f64> = idx.iter().map(|&i| eigenvalues[i]).collect();
        let diag: Vec<Vec<f64>> = (0..n)
            .map(|r| idx.iter().map(|&c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        return build_spectrum(sorted, diag, float_zero);
    }
    let complex_eigs = m.clone().complex_eigenvalues();
    for e in complex_eigs.iter() {
        if e.im.abs() > 1e-9 * scale {
            return Err(SpectrumError::ComplexSpectrum { re: e.re, im: e.im });
        }
    }
    let mut eigenvalues: Vec<f64> = complex_eigs.iter().map(|e| e.re).collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Group equal eigenvalues, then pull eigenvectors out of the nullspace
    // of (M − λI) by SVD; a defective block surfaces as a rank gap.
    let group_tol = float_zero * (1.0 + scale);
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end] - eigenvalues[start]).abs() <= group_tol {
            end += 1;
        }
        let mult = end - start;
        let shifted = m - DMatrix::identity(n, n) * eigenvalues[start];
        let svd = shifted.svd(true, true);
        let v_t = svd.v_t.as_ref().expect("requested");
        // Singular values ascendingly small at the tail.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
        let null_dim = order
            .iter()
            .take_while(|&&i| svd.singular_values[i] <= 1e-8 * scale)
            .count();
        if null_dim < mult {
            return Err(SpectrumError::Defective {
                eigenvalue: eigenvalues[start],
            });
        }
        for k in 0..mult {
            columns.push(v_t.row(order[k]).transpose());
        }
        start = end;
    }
    let diagonalizer: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| columns[c][r]).collect())
        .collect();
    build_spectrum(eigenvalues, diagonalizer, float_zero)
}

fn build_spectrum(
    eigenvalues: Vec<f64>,
    diagonalizer: Vec<Vec<f64>>,
    float_zero: f64,
) -> Result<Spectrum, SpectrumError> {
    let n = eigenvalues.len();
    let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1.0);
    if eigenvalues.iter().any(|l| l.abs() <= float_zero * scale) {
        return Err(SpectrumError::ZeroEigenvalue);
    }
    let morse_index = eigenvalues.iter().filter(|l| **l < 0.0).count();
    let mut multiplicity_groups = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end] - eigenvalues[start]).abs() <= float_zero * (1.0 + scale)
        {
            end += 1;
        }
        multiplicity_groups.push((start, end - start));
        start = end;
    }
    Ok(Spectrum {
        eigenvalues,
        morse_index,
        diagonalizer,
        multiplicity_groups,
    })
}

/// Linear coordinate change to eigencoordinates at a critical point: the
/// transported field `pullback_field(V, change)` has linear part `diag(λ)`.
///
/// The change is `x ↦ A⁻¹x` with `A` the diagonalizer; in the transport
/// convention a linear change `C` maps the linear part `M` to `C·M·C⁻¹`.
pub fn diagonalize_at_critical(
    spec: &ProblemSpec,
    p: &[f64],
) -> Result<(Spectrum, CoordinateChange<f64>), SpectrumError> {
    let spectrum = morse_eigenvalues(spec, p)?;
    let n = spec.dimension;
    let a = spectrum.diagonalizer_matrix();
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(SpectrumError::DegenerateHessian {
            point: p.to_vec(),
            det_abs: 0.0,
        })?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        rows.push((0..n).map(|j| a_inv[(i, j)]).collect::<Vec<f64>>());
    }
    let change = CoordinateChange::from_linear(
        &Matrix::from_rows(&rows),
        spec.truncation_order,
    )
    .expect("diagonalizer invertible");
    Ok((spectrum, change))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemFile;

    fn spec_for(f: &str, metric: Option<Vec<Vec<String>>>) -> ProblemSpec {
        ProblemSpec::from_file(ProblemFile {
            dimension: 2,
            function: Some(f.to_string()),
            metric,
            field: None,
            order: Some(6),
            radius: None,
            bump: None,
            tolerances: None,
            resonance_order: None,
        })
        .unwrap()
    }

    #[test]
    fn saddle_spectrum() {
        let spec = spec_for("x1^2 - x2^2", None);
        let s = morse_eigenvalues(&spec, &[0.0, 0.0]).unwrap();
        assert_eq!(s.eigenvalues, vec![2.0, -2.0]);
        assert_eq!(s.morse_index, 1);
    }

    #[test]
    fn cross_term_spectrum() {
        // Hess = [[2,4],[4,2]] → eigenvalues (6,−2) by the 2×2 solve
        // tr ± √(tr²/4 − det): 2 ± 4.
        let spec = spec_for("x1^2 + 4*x1*x2 + x2^2", None);
        let s = morse_eigenvalues(&spec, &[0.0, 0.0]).unwrap();
        assert!((s.eigenvalues[0] - 6.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] + 2.0).abs() < 1e-12);
        assert_eq!(s.morse_index, 1);
    }

    #[test]
    fn scaled_metric_spectrum() {
        // g = diag(1/2, 1) ⇒ g⁻¹·Hess = diag(2,1)·diag(2,−2) = diag(4,−2).
        let spec = spec_for(
            "x1^2 - x2^2",
            Some(vec![
                vec!["1/2".into(), "0".into()],
                vec!["0".into(), "1".into()],
            ]),
        );
        let s = morse_eigenvalues(&spec, &[0.0, 0.0]).unwrap();
        assert!((s.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_diagonalization_property() {
        let spec = spec_for("x1^2 + 4*x1*x2 + x2^2", None);
        let s = morse_eigenvalues(&spec, &[0.0, 0.0]).unwrap();
        let a = s.diagonalizer_matrix();
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 2.0]);
        let prod = a.clone().try_inverse().unwrap() * h * &a;
        assert!((prod[(0, 0)] - 6.0).abs() < 1e-10);
        assert!((prod[(1, 1)] + 2.0).abs() < 1e-10);
        assert!(prod[(0, 1)].abs() < 1e-10 && prod[(1, 0)].abs() < 1e-10);
        // Congruence side: AᵀgA = I for g = identity here.
        let gram = a.transpose() * &a;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn newton_finds_both_critical_points() {
        // f = x₁² − x₂² + x₁³: ∂₁f = 2x₁+3x₁², ∂₂f = −2x₂
        // → roots (0,0) and (−2/3, 0).
        let spec = spec_for("x1^2 - x2^2 + x1^3", None);
        let mut seeds = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                seeds.push(vec![i as f64 * 0.3, j as f64 * 0.3]);
            }
        }
        let found = find_critical_points(&spec, &seeds).unwrap();
        assert_eq!(found.points.len(), 2);
        let mut points = found.points.clone();
        points.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((points[0][0] + 2.0 / 3.0).abs() < 1e-9 && points[0][1].abs() < 1e-9);
        assert!(points[1][0].abs() < 1e-9 && points[1][1].abs() < 1e-9);
    }

    #[test]
    fn quadratic_critical_point_from_one_seed() {
        let spec = spec_for("x1^2 + 4*x1*x2 + x2^2", None);
        let found = find_critical_points(&spec, &[vec![0.3, -0.2]]).unwrap();
        assert_eq!(found.points.len(), 1);
        assert!(found.points[0].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn resonance_example_lambda_2_1() {
        // λ = (2,1): within order 3 the only witness is a = (0,2), i = 0
        // (⟨a,λ⟩ = 2 = λ₁).
        let report = check_n_linearity_exact(&[Rat::new(2, 1), Rat::new(1, 1)], 3);
        assert!(!report.satisfied);
        assert_eq!(
            report.witnesses,
            vec![Witness {
                exponents: vec![0, 2],
                component: 0
            }]
        );
    }

    #[test]
    fn equal_positive_eigenvalues_nonresonant() {
        // λ = (1,1): ⟨a,λ⟩ = |a| ≥ 2 > 1 = λᵢ, so always satisfied.
        let report = check_n_linearity_exact(&[Rat::new(1, 1), Rat::new(1, 1)], 9);
        assert!(report.satisfied);
    }

    #[test]
    fn witness_at_order_five() {
        // λ = (6,−2): a = (2,3) gives 12 − 6 = 6 = λ₁.
        let report = check_n_linearity_exact(&[Rat::new(6, 1), Rat::new(-2, 1)], 6);
        assert!(report.witnesses.contains(&Witness {
            exponents: vec![2, 3],
            component: 0
        }));
        // Cross-check with the float policy.
        let fr = check_n_linearity_float(&[6.0, -2.0], 6, 1e-10);
        assert_eq!(fr.witnesses, report.witnesses);
    }

    #[test]
    fn raw_field_diagonal_spectrum() {
        let spec = ProblemSpec::from_file(ProblemFile {
            dimension: 2,
            function: None,
            metric: None,
            field: Some(vec!["2*(x1+x2^2)".into(), "x2".into()]),
            order: Some(6),
            radius: None,
            bump: None,
            tolerances: None,
            resonance_order: None,
        })
        .unwrap();
        let s = morse_eigenvalues(&spec, &[0.0, 0.0]).unwrap();
        assert_eq!(s.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(s.morse_index, 0);
    }

    #[test]
    fn rotation_field_rejected() {
        let spec = ProblemSpec::from_file(ProblemFile {
            dimension: 2,
            function: None,
            metric: None,
            field: Some(vec!["x1 - x2".into(), "x1 + x2".into()]),
            order: Some(4),
            radius: None,
            bump: None,
            tolerances: None,
            resonance_order: None,
        })
        .unwrap();
        assert!(matches!(
            morse_eigenvalues(&spec, &[0.0, 0.0]),
            Err(SpectrumError::ComplexSpectrum { .. })
        ));
    }

    #[test]
    fn diagonalize_produces_diagonal_linear_part() {
        use crate::field::pullback_field;
        let spec = spec_for("x1^2 + 4*x1*x2 + x2^2", None);
        let (s, change) = diagonalize_at_critical(&spec, &[0.0, 0.0]).unwrap();
        let v = spec.field_jets().unwrap().map_coeff(|c| c.to_f64());
        let w = pullback_field(&v, &change).unwrap();
        let m = w.linear_matrix();
        assert!((m.get(0, 0) - s.eigenvalues[0]).abs() < 1e-10);
        assert!((m.get(1, 1) - s.eigenvalues[1]).abs() < 1e-10);
        assert!(m.get(0, 1).abs() < 1e-10 && m.get(1, 0).abs() < 1e-10);
    }
}
