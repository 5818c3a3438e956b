//! Normal forms at a non-degenerate critical point: Morse-Lemma jets by
//! completing the square, order-by-order homological normalization toward
//! the diagonal standard form, cross-flattening of mixed terms, and
//! invariant-manifold graph jets with their straightening change.
//!
//! Everything here is ordinary jet algebra; in rational mode all removals,
//! divisions, and residuals are exact, which is what makes resonance
//! obstructions trustworthy.

use serde::Serialize;
use thiserror::Error;

use crate::change::{ChangeError, CoordinateChange};
use crate::coeff::Coefficient;
use crate::field::{pullback_field, FieldError, PolyVectorField};
use crate::jet::{Jet, JetError};
use crate::matrix::Matrix;
use crate::multi_index::MultiIndex;

#[derive(Debug, Error)]
pub enum NormalError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate Hessian: remaining quadratic block is singular at step {step}")]
    DegenerateHessian { step: usize },
    #[error("sign pattern mismatch: found {found_negative} negative squares, target has {target_negative}")]
    SignPattern {
        found_negative: usize,
        target_negative: usize,
    },
}

/// Zero test for resonance denominators.
#[derive(Debug, Clone, Copy)]
pub enum ZeroTest {
    /// Exact comparison (rational coefficients).
    Exact,
    /// `|value| ≤ tol·scale` with `scale = 1 + |⟨a,λ⟩|`.
    Relative(f64),
}

impl ZeroTest {
    pub fn is_zero<C: Coefficient>(&self, value: &C, scale: f64) -> bool {
        match self {
            ZeroTest::Exact => value.is_zero(),
            ZeroTest::Relative(tol) => value.abs_f64() <= tol * scale,
        }
    }
}

fn dot_lambda<C: Coefficient>(lambda: &[C], a: &MultiIndex) -> C {
    let mut acc = C::zero();
    for (j, l) in lambda.iter().enumerate() {
        let e = a.get(j);
        if e > 0 {
            acc = acc + l.clone() * C::from_int(e as i64);
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Morse Lemma
// ---------------------------------------------------------------------------

/// Result of the completing-the-square recursion: a coordinate change `Φ̂`
/// with rational-exact jets and positive/negative weights `c_r` such that
///
/// ```text
/// f ∘ Φ̂⁻¹ = ∑_r c_r x_r²     exactly through the truncation order.
/// ```
///
/// The fully standardized chart `Φ = Φ̂` followed by the diagonal scaling
/// `x_r ↦ √|c_r|·x_r` turns the right side into `∑ sign(c_r)·x_r²`; the
/// scaling is irrational in general and is materialized only in float mode
/// by [`MorseChart::standard_change_f64`].
#[derive(Debug, Clone)]
pub struct MorseChart<C: Coefficient> {
    pub change: CoordinateChange<C>,
    /// Diagonal weights `c_r`, nonzero, in coordinate order.
    pub weights: Vec<C>,
}

impl<C: Coefficient> MorseChart<C> {
    /// Signs of the squares, `+1`/`−1` per coordinate.
    pub fn signs(&self) -> Vec<i8> {
        self.weights
            .iter()
            .map(|c| if c.is_negative() { -1 } else { 1 })
            .collect()
    }

    /// `f∘Φ̂⁻¹ − ∑ c_r x_r²`; exactly zero when the recursion succeeded.
    pub fn weighted_square_residual(&self, f: &Jet<C>) -> Result<Jet<C>, NormalError> {
        let inv = self.change.invert_to_order()?;
        let mut res = inv.apply_to(f)?;
        let n = self.change.dimension();
        for (r, c) in self.weights.iter().enumerate() {
            let mut sq = MultiIndex::zero(n);
            sq = sq.add(&MultiIndex::unit(r, n)).add(&MultiIndex::unit(r, n));
            res = res.sub(&Jet::monomial(c.clone(), sq, res.order()))?;
        }
        Ok(res)
    }

    /// The chart including the final `√|c_r|` scaling, in float mode:
    /// `f∘Φ⁻¹ = ∑ sign(c_r)·x_r²` numerically.
    pub fn standard_change_f64(&self) -> CoordinateChange<f64> {
        let n = self.change.dimension();
        let base = self.change.map_coeff(|c| c.to_f64());
        let mut d = Matrix::<f64>::zeros(n);
        for (r, c) in self.weights.iter().enumerate() {
            d.set(r, r, c.abs_f64().sqrt());
        }
        let scale = CoordinateChange::from_linear(&d, self.change.order())
            .expect("positive diagonal is invertible");
        base.then(&scale).expect("same dims")
    }
}

/// Decompose a jet whose every term has degree ≥ 2 in the tail variables
/// `r..n` as `∑_{i,j≥r} xᵢxⱼ·Hᵢⱼ(x)` with `H` symmetric.
///
/// Per monomial `c·x^a` with tail degree `d ≥ 2`, the symmetric split puts
/// weight `aᵢ(aⱼ−δᵢⱼ)/(d(d−1))` on entry `(i,j)`.
fn tail_quadratic_decomposition<C: Coefficient>(
    f: &Jet<C>,
    r: usize,
    step: usize,
) -> Result<Vec<Vec<Jet<C>>>, NormalError> {
    let n = f.dimension();
    let order = f.order();
    let m = n - r;
    let mut h = vec![vec![Jet::<C>::zero(n, order); m]; m];
    for (a, c) in f.terms() {
        let d = a.degree_on(r..n);
        if d < 2 {
            return Err(NormalError::Precondition(format!(
                "completing the square at step {step}: term {a} has tail degree {d} < 2"
            )));
        }
        let dd = C::from_int((d as i64) * (d as i64 - 1));
        for i in r..n {
            let ai = a.get(i);
            if ai == 0 {
                continue;
            }
            for j in r..n {
                let ajd = if i == j { a.get(j).saturating_sub(1) } else { a.get(j) };
                if ajd == 0 {
                    continue;
                }
                let w = C::from_int(ai as i64) * C::from_int(ajd as i64) / dd.clone();
                let b = a
                    .dec(i)
                    .and_then(|x| x.dec(j))
                    .expect("exponents checked positive");
                let term = Jet::monomial(c.clone() * w, b, order);
                h[i - r][j - r] = h[i - r][j - r].add(&term)?;
            }
        }
    }
    Ok(h)
}

/// Constructive Morse Lemma on jets.
///
/// `f` must have zero constant and linear parts and a non-degenerate
/// Hessian. Returns the chart of the completing-the-square induction, with
/// pivoting by coordinate exchange (plus the classical sum/difference
/// substitution when an all-zero diagonal makes a plain exchange
/// insufficient, as for `x₁x₂`). When `target_signs` is given, coordinates
/// are finally permuted so the square signs appear in that order.
pub fn morse_lemma_jet<C: Coefficient>(
    f: &Jet<C>,
    target_signs: Option<&[i8]>,
) -> Result<MorseChart<C>, NormalError> {
    let n = f.dimension();
    let order = f.order();
    if !f.constant_term().is_zero() || !f.homogeneous_part(1).is_zero() {
        return Err(NormalError::Precondition(
            "f must vanish to second order at the origin".into(),
        ));
    }
    let mut change = CoordinateChange::<C>::identity(n, order);
    let mut weights: Vec<C> = Vec::with_capacity(n);

    for r in 0..n {
        // Current remainder in the current coordinates.
        let mut remainder = remainder_after(f, &change, &weights)?;
        if remainder.is_zero() {
            return Err(NormalError::DegenerateHessian { step: r });
        }
        let mut h = tail_quadratic_decomposition(&remainder, r, r)?;

        // Pivot: largest |H_ss(0)| on the tail diagonal.
        let (mut best_s, mut best_mag) = (r, h[0][0].constant_term().abs_f64());
        for s in r..n {
            let mag = h[s - r][s - r].constant_term().abs_f64();
            if mag > best_mag {
                best_mag = mag;
                best_s = s;
            }
        }
        if h[best_s - r][best_s - r].constant_term().is_zero() {
            // All tail diagonal entries vanish at 0; find an off-diagonal
            // H_st(0) ≠ 0 and substitute x_s ← x_s + x_t, x_t ← x_s − x_t,
            // which puts ±2H_st(0) on the diagonal.
            let mut found = None;
            'outer: for s in r..n {
                for t in (s + 1)..n {
                    if !h[s - r][t - r].constant_term().is_zero() {
                        found = Some((s, t));
                        break 'outer;
                    }
                }
            }
            let Some((s, t)) = found else {
                return Err(NormalError::DegenerateHessian { step: r });
            };
            let mut comps: Vec<Jet<C>> = (0..n).map(|i| Jet::variable(i, n, order)).collect();
            comps[s] = Jet::variable(s, n, order)
                .add(&Jet::variable(t, n, order))?;
            comps[t] = Jet::variable(s, n, order)
                .sub(&Jet::variable(t, n, order))?;
            let mix = CoordinateChange::new(comps)?;
            change = change.then(&mix)?;
            remainder = remainder_after(f, &change, &weights)?;
            h = tail_quadratic_decomposition(&remainder, r, r)?;
            best_s = s;
        }
        if best_s != r {
            // Swap coordinates r and best_s.
            let mut comps: Vec<Jet<C>> = (0..n).map(|i| Jet::variable(i, n, order)).collect();
            comps.swap(r, best_s);
            let swap = CoordinateChange::new(comps)?;
            change = change.then(&swap)?;
            remainder = remainder_after(f, &change, &weights)?;
            h = tail_quadratic_decomposition(&remainder, r, r)?;
        }

        let h_rr = h[0][0].clone();
        let c_r = h_rr.constant_term();
        if c_r.is_zero() {
            return Err(NormalError::DegenerateHessian { step: r });
        }
        // v_r = √(H_rr/c_r) · (x_r + ∑_{i>r} xᵢ·H_ir/H_rr)
        let unit = h_rr.scale(&(C::one() / c_r.clone()));
        let root = unit.sqrt_unit()?;
        let h_rr_inv = h_rr.recip_unit()?;
        let mut bracket = Jet::variable(r, n, order);
        for i in (r + 1)..n {
            let h_ir = h[i - r][0].clone();
            if h_ir.is_zero() {
                continue;
            }
            bracket = bracket.add(&Jet::variable(i, n, order).mul(&h_ir.mul(&h_rr_inv)?)?)?;
        }
        let v_r = root.mul(&bracket)?;
        let mut comps: Vec<Jet<C>> = (0..n).map(|i| Jet::variable(i, n, order)).collect();
        comps[r] = v_r;
        let step_change = CoordinateChange::new(comps)?;
        change = change.then(&step_change)?;
        weights.push(c_r);
    }

    if let Some(pattern) = target_signs {
        assert_eq!(pattern.len(), n, "sign pattern arity");
        let found_negative = weights.iter().filter(|c| c.is_negative()).count();
        let target_negative = pattern.iter().filter(|s| **s < 0).count();
        if found_negative != target_negative {
            return Err(NormalError::SignPattern {
                found_negative,
                target_negative,
            });
        }
        // Build the permutation sending current coordinates to slots of the
        // requested sign, preserving relative order within each sign class.
        let mut neg_slots: Vec<usize> = pattern
            .iter()
            .enumerate()
            .filter(|(_, s)| **s < 0)
            .map(|(i, _)| i)
            .collect();
        let mut pos_slots: Vec<usize> = pattern
            .iter()
            .enumerate()
            .filter(|(_, s)| **s >= 0)
            .map(|(i, _)| i)
            .collect();
        neg_slots.reverse();
        pos_slots.reverse();
        let mut dest = vec![0usize; n];
        for (r, c) in weights.iter().enumerate() {
            dest[r] = if c.is_negative() {
                neg_slots.pop().expect("counted")
            } else {
                pos_slots.pop().expect("counted")
            };
        }
        if dest.iter().enumerate().any(|(i, &d)| i != d) {
            let mut comps: Vec<Jet<C>> = vec![Jet::zero(n, order); n];
            for (r, &d) in dest.iter().enumerate() {
                comps[d] = Jet::variable(r, n, order);
            }
            let perm = CoordinateChange::new(comps)?;
            change = change.then(&perm)?;
            let mut new_weights = weights.clone();
            for (r, &d) in dest.iter().enumerate() {
                new_weights[d] = weights[r].clone();
            }
            weights = new_weights;
        }
    }

    Ok(MorseChart { change, weights })
}

fn remainder_after<C: Coefficient>(
    f: &Jet<C>,
    change: &CoordinateChange<C>,
    weights: &[C],
) -> Result<Jet<C>, NormalError> {
    let inv = change.invert_to_order()?;
    let mut rem = inv.apply_to(f)?;
    let n = f.dimension();
    for (s, c) in weights.iter().enumerate() {
        let sq = MultiIndex::unit(s, n).add(&MultiIndex::unit(s, n));
        rem = rem.sub(&Jet::monomial(c.clone(), sq, rem.order()))?;
    }
    Ok(rem)
}

// ---------------------------------------------------------------------------
// Homological normalization
// ---------------------------------------------------------------------------

/// One order of the normalization: degree-`m` terms of `V − V₀` split into
/// removable terms (with their correction) and resonance obstructions.
#[derive(Debug, Clone)]
pub struct HomologicalStep<C: Coefficient> {
    pub order: u32,
    /// `(a, i, c)` terms cancelled by the correction.
    pub removed_terms: Vec<(MultiIndex, usize, C)>,
    /// `identity + (degree-m corrections)`; pulling the field back along it
    /// cancels exactly the removed terms.
    pub correction: CoordinateChange<C>,
    /// `(a, i, c)` with `⟨a,λ⟩ − λᵢ = 0`: left in place.
    pub obstructions: Vec<(MultiIndex, usize, C)>,
}

impl<C: Coefficient> HomologicalStep<C> {
    pub fn is_trivial(&self) -> bool {
        self.removed_terms.is_empty() && self.obstructions.is_empty()
    }
}

fn require_diagonal<C: Coefficient>(
    v: &PolyVectorField<C>,
    lambda: &[C],
) -> Result<(), NormalError> {
    let n = v.dimension();
    if lambda.len() != n {
        return Err(NormalError::Precondition(format!(
            "eigenvalue count {} does not match dimension {n}",
            lambda.len()
        )));
    }
    let m = v.linear_matrix();
    let scale = lambda.iter().map(|l| l.abs_f64()).fold(1.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            let entry = m.get(i, j);
            let expect = if i == j { lambda[i].clone() } else { C::zero() };
            let diff = entry.clone() - expect;
            let bad = if C::EXACT {
                !diff.is_zero()
            } else {
                diff.abs_f64() > 1e-9 * scale
            };
            if bad {
                return Err(NormalError::Precondition(format!(
                    "linear part is not diag(λ) at entry ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Solve the order-`m` homological equation for `V` with linear part
/// `diag(λ)`.
///
/// For each degree-`m` term `c·x^a∂ᵢ` with denominator
/// `d = ⟨a,λ⟩ − λᵢ ≠ 0`, the correction takes `−c/d·x^a` in component `i`;
/// resonant terms become obstructions and stay. Residual terms of degree
/// `2..m` must themselves be resonant (the Poincaré–Dulac carry-forward);
/// any other lower-degree residual is a precondition violation.
pub fn homological_solve<C: Coefficient>(
    v: &PolyVectorField<C>,
    lambda: &[C],
    m: u32,
    zero: ZeroTest,
) -> Result<HomologicalStep<C>, NormalError> {
    require_diagonal(v, lambda)?;
    if m < 2 {
        return Err(NormalError::Precondition("order m must be ≥ 2".into()));
    }
    let n = v.dimension();
    let order = v.order();
    for d in 2..m {
        for (a, i, c) in v.degree_terms(d) {
            let den = dot_lambda(lambda, &a) - lambda[i].clone();
            let scale = 1.0 + dot_lambda(lambda, &a).abs_f64();
            if !zero.is_zero(&den, scale) {
                return Err(NormalError::Precondition(format!(
                    "non-resonant residual {c}·{a}∂{} of degree {d} below order {m}",
                    i + 1
                )));
            }
        }
    }
    let mut removed = Vec::new();
    let mut obstructions = Vec::new();
    let mut corr: Vec<Jet<C>> = (0..n).map(|i| Jet::variable(i, n, order)).collect();
    for (a, i, c) in v.degree_terms(m) {
        let dot = dot_lambda(lambda, &a);
        let den = dot.clone() - lambda[i].clone();
        let scale = 1.0 + dot.abs_f64();
        if zero.is_zero(&den, scale) {
            obstructions.push((a, i, c));
        } else {
            let coeff = -c.clone() / den;
            corr[i] = corr[i].add(&Jet::monomial(coeff, a.clone(), order))?;
            removed.push((a, i, c));
        }
    }
    Ok(HomologicalStep {
        order: m,
        removed_terms: removed,
        correction: CoordinateChange::new(corr)?,
        obstructions,
    })
}

/// Full normalization through the field's truncation order.
#[derive(Debug, Clone)]
pub struct Normalization<C: Coefficient> {
    /// Pipeline composition `ψ₂.then(ψ₃)…then(ψ_L)` of per-order corrections.
    pub change: CoordinateChange<C>,
    /// `pullback_field(V, change)`: `V₀` plus resonant monomials only
    /// (exactly, in rational mode).
    pub normalized: PolyVectorField<C>,
    pub steps: Vec<HomologicalStep<C>>,
}

impl<C: Coefficient> Normalization<C> {
    pub fn obstructions(&self) -> Vec<(MultiIndex, usize, C)> {
        let mut all: Vec<_> = self
            .steps
            .iter()
            .flat_map(|s| s.obstructions.iter().cloned())
            .collect();
        all.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
        all
    }

    pub fn is_fully_normalized(&self) -> bool {
        self.steps.iter().all(|s| s.obstructions.is_empty())
    }
}

/// Normalize `V` toward `V₀ = diag(λ)` order by order up to the truncation
/// order, composing corrections and re-pulling the field back each order.
/// Resonant monomials are carried forward untouched and reported.
pub fn normalize_to_order<C: Coefficient>(
    v: &PolyVectorField<C>,
    lambda: &[C],
    zero: ZeroTest,
) -> Result<Normalization<C>, NormalError> {
    require_diagonal(v, lambda)?;
    let n = v.dimension();
    let order = v.order();
    let mut current = v.clone();
    let mut change = CoordinateChange::<C>::identity(n, order);
    let mut steps = Vec::new();
    for m in 2..=order {
        let step = homological_solve(&current, lambda, m, zero)?;
        if !step.removed_terms.is_empty() {
            current = pullback_field(&current, &step.correction)?;
            change = change.then(&step.correction)?;
        }
        if !step.is_trivial() {
            steps.push(step);
        }
    }
    Ok(Normalization {
        change,
        normalized: current,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Cross-flattening of mixed terms
// ---------------------------------------------------------------------------

/// Result of removing mixed monomials with a small block degree.
#[derive(Debug, Clone)]
pub struct CrossFlattening<C: Coefficient> {
    pub change: CoordinateChange<C>,
    pub flattened: PolyVectorField<C>,
    /// Resonant mixed terms that had to stay, `(a, i, c)`.
    pub obstructions: Vec<(MultiIndex, usize, C)>,
}

/// Mixed monomials of the residual with `min(deg_u, deg_s) < α`, where the
/// degrees are taken on the unstable block `x₁..x_k` and the stable block
/// `x_{k+1}..x_n`.
pub fn mixed_terms_below<C: Coefficient>(
    v: &PolyVectorField<C>,
    k: usize,
    alpha: u32,
) -> Vec<(MultiIndex, usize, C)> {
    let n = v.dimension();
    v.nonlinear_terms()
        .into_iter()
        .filter(|(a, _, _)| {
            let du = a.degree_on(0..k);
            let ds = a.degree_on(k..n);
            du >= 1 && ds >= 1 && du.min(ds) < alpha
        })
        .collect()
}

/// Remove mixed monomials `x_u^a·x_s^b∂ᵢ` with `min(|a|,|b|) < α` whenever
/// the denominator `⟨a,λ_u⟩+⟨b,λ_s⟩−λᵢ` does not vanish.
///
/// The per-term correction coefficient is `−c` divided by that rate — the
/// closed form of the exponential integral the induction solves on
/// polynomial data. Precondition: every residual monomial of `V − V₀` is
/// mixed (the field already vanishes on both coordinate blocks).
pub fn cross_flatten<C: Coefficient>(
    v: &PolyVectorField<C>,
    lambda: &[C],
    k: usize,
    alpha: u32,
    zero: ZeroTest,
) -> Result<CrossFlattening<C>, NormalError> {
    require_diagonal(v, lambda)?;
    let n = v.dimension();
    if k == 0 || k >= n {
        return Err(NormalError::Precondition(format!(
            "index split k = {k} must satisfy 0 < k < n = {n}"
        )));
    }
    let order = v.order();
    for (a, i, c) in v.nonlinear_terms() {
        let du = a.degree_on(0..k);
        let ds = a.degree_on(k..n);
        if du == 0 || ds == 0 {
            return Err(NormalError::Precondition(format!(
                "residual term {c}·{a}∂{} is not mixed; straighten the invariant manifolds first",
                i + 1
            )));
        }
    }
    let mut current = v.clone();
    let mut change = CoordinateChange::<C>::identity(n, order);
    let mut obstructions = Vec::new();
    for m in 2..=order {
        let mut corr: Vec<Jet<C>> = (0..n).map(|i| Jet::variable(i, n, order)).collect();
        let mut any = false;
        for (a, i, c) in current.degree_terms(m) {
            let du = a.degree_on(0..k);
            let ds = a.degree_on(k..n);
            if du == 0 || ds == 0 || du.min(ds) >= alpha {
                continue;
            }
            let dot = dot_lambda(lambda, &a);
            let den = dot.clone() - lambda[i].clone();
            let scale = 1.0 + dot.abs_f64();
            if zero.is_zero(&den, scale) {
                obstructions.push((a, i, c));
            } else {
                corr[i] = corr[i].add(&Jet::monomial(-c.clone() / den, a.clone(), order))?;
                any = true;
            }
        }
        if any {
            let step = CoordinateChange::new(corr)?;
            current = pullback_field(&current, &step)?;
            change = change.then(&step)?;
        }
    }
    obstructions.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(CrossFlattening {
        change,
        flattened: current,
        obstructions,
    })
}

// ---------------------------------------------------------------------------
// Invariant-manifold jets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ManifoldSide {
    Unstable,
    Stable,
}

/// Taylor jet of an invariant-manifold graph over a coordinate block:
/// unstable `x_s = Y(x_u)` with `Y: ℝᵏ → ℝⁿ⁻ᵏ`, or stable `x_u = Z(x_s)`.
/// Graph components have zero constant and linear parts (tangency).
#[derive(Debug, Clone)]
pub struct ManifoldJet<C: Coefficient> {
    pub which: ManifoldSide,
    /// Split index: variables `0..k` unstable, `k..n` stable.
    pub split: usize,
    /// Ambient dimension.
    pub dimension: usize,
    /// Graph components as jets in the free block variables.
    pub graph: Vec<Jet<C>>,
}

impl<C: Coefficient> ManifoldJet<C> {
    pub fn is_flat(&self) -> bool {
        self.graph.iter().all(|g| g.is_zero())
    }
}

/// Solve the graph invariance equation order by order.
///
/// Unstable side: `DY(x_u)·V_u(x_u, Y) = V_s(x_u, Y)`; at degree `m` the
/// coefficient of `x_u^a` in component `j` picks up the factor
/// `⟨a,λ_u⟩ − λⱼ`, which cannot vanish across the sign split, so the
/// recursion never hits a small divisor (asserted).
pub fn invariant_manifold_jet<C: Coefficient>(
    v: &PolyVectorField<C>,
    lambda: &[C],
    k: usize,
    which: ManifoldSide,
) -> Result<ManifoldJet<C>, NormalError> {
    require_diagonal(v, lambda)?;
    let n = v.dimension();
    if k == 0 || k >= n {
        return Err(NormalError::Precondition(format!(
            "index split k = {k} must satisfy 0 < k < n = {n}"
        )));
    }
    for i in 0..n {
        let positive = !lambda[i].is_negative() && !lambda[i].is_zero();
        if (i < k) != positive {
            return Err(NormalError::Precondition(format!(
                "eigenvalue sign split at k = {k} violated at λ{}",
                i + 1
            )));
        }
    }
    let order = v.order();
    let (free, bound): (Vec<usize>, Vec<usize>) = match which {
        ManifoldSide::Unstable => ((0..k).collect(), (k..n).collect()),
        ManifoldSide::Stable => ((k..n).collect(), (0..k).collect()),
    };
    let fdim = free.len();
    let mut graph: Vec<Jet<C>> = vec![Jet::zero(fdim, order); bound.len()];

    for m in 2..=order {
        // Substitution (x_free, graph) into each component of V.
        let mut subst: Vec<Jet<C>> = vec![Jet::zero(fdim, order); n];
        for (local, &g) in free.iter().enumerate() {
            subst[g] = Jet::variable(local, fdim, order);
        }
        for (local, &g) in bound.iter().enumerate() {
            subst[g] = graph[local].clone();
        }
        let v_on_graph: Vec<Jet<C>> = v
            .components()
            .iter()
            .map(|c| c.compose(&subst))
            .collect::<Result<Vec<_>, _>>()?;
        // E_j = ∑_i ∂graph_j/∂x_i · V_free_i − V_bound_j, on the graph.
        for (local, &gj) in bound.iter().enumerate() {
            let mut e = v_on_graph[gj].neg();
            for (flocal, &fi) in free.iter().enumerate() {
                let term = graph[local]
                    .partial_derivative(flocal)
                    .mul(&v_on_graph[fi])?;
                e = e.add(&term)?;
            }
            for (a, c) in e.homogeneous_part(m).terms() {
                let mut dot = C::zero();
                for (flocal, &fi) in free.iter().enumerate() {
                    dot = dot + lambda[fi].clone() * C::from_int(a.get(flocal) as i64);
                }
                let den = dot - lambda[gj].clone();
                assert!(
                    !den.is_zero() && den.abs_f64() > 0.0,
                    "graph equation denominator vanished; sign split violated"
                );
                let delta = -c.clone() / den;
                graph[local] = graph[local].add(&Jet::monomial(delta, a.clone(), order))?;
            }
        }
    }

    Ok(ManifoldJet {
        which,
        split: k,
        dimension: n,
        graph,
    })
}

/// The change flattening both graphs onto their coordinate blocks:
///
/// ```text
/// g(x) = (x_u − Z(x_s), x_s − Y(x_u))
/// ```
///
/// so that `pullback_field(V, g)` has invariant-manifold jets identically
/// zero through the order. Its inverse `x ↦ (x_u + Z(x_s), x_s + Y(x_u))`
/// (exact to first order in the graphs) sends the blocks onto the graphs.
pub fn straighten_manifolds<C: Coefficient>(
    y: &ManifoldJet<C>,
    z: &ManifoldJet<C>,
) -> Result<CoordinateChange<C>, NormalError> {
    if y.which != ManifoldSide::Unstable || z.which != ManifoldSide::Stable {
        return Err(NormalError::Precondition(
            "straighten_manifolds expects (unstable Y, stable Z)".into(),
        ));
    }
    if y.split != z.split || y.dimension != z.dimension {
        return Err(NormalError::Precondition(
            "manifold jets disagree on dimension or split".into(),
        ));
    }
    let n = y.dimension;
    let k = y.split;
    let order = y
        .graph
        .iter()
        .chain(z.graph.iter())
        .map(|g| g.order())
        .min()
        .unwrap_or(2);
    for g in y.graph.iter().chain(z.graph.iter()) {
        if !g.constant_term().is_zero() || !g.homogeneous_part(1).is_zero() {
            return Err(NormalError::Precondition(
                "graph jets must be tangent to their blocks (no constant or linear part)".into(),
            ));
        }
    }
    let unstable_vars: Vec<usize> = (0..k).collect();
    let stable_vars: Vec<usize> = (k..n).collect();
    let mut comps: Vec<Jet<C>> = Vec::with_capacity(n);
    for i in 0..k {
        let zi = z.graph[i].embed(n, &stable_vars);
        comps.push(Jet::variable(i, n, order).sub(&zi)?);
    }
    for j in 0..(n - k) {
        let yj = y.graph[j].embed(n, &unstable_vars);
        comps.push(Jet::variable(k + j, n, order).sub(&yj)?);
    }
    Ok(CoordinateChange::new(comps)?)
}
