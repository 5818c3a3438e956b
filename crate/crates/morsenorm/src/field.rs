//! Polynomial vector fields `V = ∑ᵢ Vᵢ ∂/∂xᵢ` as n-tuples of jets, with the
//! Lie-calculus operations the normalization pipeline needs: Lie derivative
//! of a function, transport under a coordinate change, and the bracket with
//! the diagonal linear part.
//!
//! A field whose degree-1 part is exactly `diag(λ)` may carry its eigenvalue
//! vector; the diagonal part is then the standard form `V₀ = ∑ λᵢxᵢ∂ᵢ` and
//! the remaining terms are the higher-order residual.

use thiserror::Error;

use crate::change::{ChangeError, CoordinateChange};
use crate::coeff::Coefficient;
use crate::jet::{Jet, JetError};
use crate::matrix::Matrix;
use crate::multi_index::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error("component {component} has degree-1 part inconsistent with the declared eigenvalues")]
    EigenMismatch { component: usize },
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
}

#[derive(Clone, PartialEq, Debug)]
pub struct PolyVectorField<C: Coefficient> {
    n: usize,
    order: u32,
    comps: Vec<Jet<C>>,
    eigen: Option<Vec<C>>,
}

impl<C: Coefficient> PolyVectorField<C> {
    pub fn new(comps: Vec<Jet<C>>) -> Result<Self, FieldError> {
        let n = comps.len();
        assert!(n > 0, "empty vector field");
        let order = comps.iter().map(|c| c.order()).min().unwrap();
        for c in &comps {
            if c.dimension() != n {
                return Err(FieldError::ComponentCount {
                    expected: n,
                    found: c.dimension(),
                });
            }
        }
        let comps = comps.into_iter().map(|c| c.truncated(order)).collect();
        Ok(PolyVectorField {
            n,
            order,
            comps,
            eigen: None,
        })
    }

    /// Declare that the degree-1 part is exactly `diag(λ)`; validated.
    pub fn with_eigen(mut self, lambda: Vec<C>) -> Result<Self, FieldError> {
        assert_eq!(lambda.len(), self.n);
        for i in 0..self.n {
            let lin = self.comps[i].homogeneous_part(1);
            let expect = Jet::monomial(lambda[i].clone(), MultiIndex::unit(i, self.n), self.order);
            if lin != expect {
                return Err(FieldError::EigenMismatch { component: i });
            }
        }
        self.eigen = Some(lambda);
        Ok(self)
    }

    /// The standard form `V₀ = ∑ λᵢxᵢ∂ᵢ`.
    pub fn standard_form(lambda: &[C], order: u32) -> Self {
        let n = lambda.len();
        let comps = (0..n)
            .map(|i| Jet::monomial(lambda[i].clone(), MultiIndex::unit(i, n), order))
            .collect();
        PolyVectorField {
            n,
            order,
            comps,
            eigen: Some(lambda.to_vec()),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn components(&self) -> &[Jet<C>] {
        &self.comps
    }

    pub fn eigenvalues(&self) -> Option<&[C]> {
        self.eigen.as_deref()
    }

    /// Degree-1 coefficient matrix `M` with `V(x) = Mx + O(|x|²)`.
    pub fn linear_matrix(&self) -> Matrix<C> {
        let mut m = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, self.comps[i].coeff(&MultiIndex::unit(j, self.n)));
            }
        }
        m
    }

    /// Try to read a diagonal degree-1 part off the jets; `None` when the
    /// linear part is not diagonal (exact test in rational mode).
    pub fn detect_diagonal(&self) -> Option<Vec<C>> {
        let m = self.linear_matrix();
        let scale: f64 = (0..self.n)
            .map(|i| m.get(i, i).abs_f64())
            .fold(0.0, f64::max)
            .max(1.0);
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && !m.get(i, j).is_negligible(scale) {
                    return None;
                }
            }
        }
        Some((0..self.n).map(|i| m.get(i, i).clone()).collect())
    }

    /// Higher-order residual: every term of total degree ≥ 2. When the
    /// linear part is `diag(λ)` this is exactly `V − V₀`.
    pub fn residual(&self) -> Result<Self, FieldError> {
        let comps = self
            .comps
            .iter()
            .map(|c| {
                let mut r = Jet::zero(self.n, self.order);
                for (a, coeff) in c.terms() {
                    if a.degree() >= 2 {
                        r = r
                            .add(&Jet::monomial(coeff.clone(), a.clone(), self.order))
                            .expect("same dims");
                    }
                }
                r
            })
            .collect();
        Self::new(comps)
    }

    /// Terms of total degree `m` across all components, ordered by
    /// (multi-index graded-lex, component).
    pub fn degree_terms(&self, m: u32) -> Vec<(MultiIndex, usize, C)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (a, c) in self.comps[i].terms() {
                if a.degree() == m {
                    out.push((a.clone(), i, c.clone()));
                }
            }
        }
        out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
        out
    }

    /// All nonlinear terms, same ordering as [`Self::degree_terms`].
    pub fn nonlinear_terms(&self) -> Vec<(MultiIndex, usize, C)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (a, c) in self.comps[i].terms() {
                if a.degree() >= 2 {
                    out.push((a.clone(), i, c.clone()));
                }
            }
        }
        out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
        out
    }

    pub fn map_coeff<D: Coefficient>(&self, f: impl Fn(&C) -> D + Copy) -> PolyVectorField<D> {
        PolyVectorField {
            n: self.n,
            order: self.order,
            comps: self.comps.iter().map(|c| c.map_coeff(f)).collect(),
            eigen: self
                .eigen
                .as_ref()
                .map(|l| l.iter().map(|c| f(c)).collect()),
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval_f64(x)).collect()
    }
}

/// Lie derivative `L_V f = ∑ᵢ Vᵢ ∂f/∂xᵢ`, truncated to the common order.
///
/// The top-degree slice of the result would need order-(L+1) data of `f`;
/// it is reliable through `L − max(0, 1 − min_deg(V))`, i.e. through `L`
/// whenever `V` has no constant part.
pub fn lie_derivative<C: Coefficient>(
    v: &PolyVectorField<C>,
    f: &Jet<C>,
) -> Result<Jet<C>, FieldError> {
    if v.dimension() != f.dimension() {
        return Err(FieldError::ComponentCount {
            expected: v.dimension(),
            found: f.dimension(),
        });
    }
    let mut out = Jet::zero(f.dimension(), f.order().min(v.order()));
    for i in 0..v.dimension() {
        out = out.add(&v.components()[i].mul(&f.partial_derivative(i))?)?;
    }
    Ok(out)
}

/// Express `V` in the coordinates `y = g(x)`.
///
/// Returns the field `W` with `W(g(x)) = Dg(x)·V(x)`, computed componentwise
/// as `Wᵢ = (L_V gᵢ) ∘ g⁻¹`; flows of `W` are the `g`-images of flows of
/// `V`. Transport by the identity is the identity, and transport along a
/// pipeline `g.then(h)` equals transport along `g` followed by transport
/// along `h`.
pub fn pullback_field<C: Coefficient>(
    v: &PolyVectorField<C>,
    g: &CoordinateChange<C>,
) -> Result<PolyVectorField<C>, FieldError> {
    if v.dimension() != g.dimension() {
        return Err(FieldError::ComponentCount {
            expected: v.dimension(),
            found: g.dimension(),
        });
    }
    let g_inv = g.invert_to_order()?;
    let comps = g
        .components()
        .iter()
        .map(|gi| {
            let lv = lie_derivative(v, gi)?;
            Ok(g_inv.apply_to(&lv)?)
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    PolyVectorField::new(comps)
}

/// Lie bracket `[V, W]ᵢ = L_V Wᵢ − L_W Vᵢ`.
pub fn bracket<C: Coefficient>(
    v: &PolyVectorField<C>,
    w: &PolyVectorField<C>,
) -> Result<PolyVectorField<C>, FieldError> {
    if v.dimension() != w.dimension() {
        return Err(FieldError::ComponentCount {
            expected: v.dimension(),
            found: w.dimension(),
        });
    }
    let comps = (0..v.dimension())
        .map(|i| {
            let a = lie_derivative(v, &w.components()[i])?;
            let b = lie_derivative(w, &v.components()[i])?;
            Ok(a.sub(&b)?)
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    PolyVectorField::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Rat;

    fn r(p: i64, q: i64) -> Rat {
        Rat::new(p, q)
    }

    fn mono(c: Rat, exps: &[u8], order: u32) -> Jet<Rat> {
        Jet::monomial(c, MultiIndex::from_slice(exps), order)
    }

    #[test]
    fn lie_derivative_on_eigenbasis() {
        // V₀ = ∑λᵢxᵢ∂ᵢ, f = x^a → ⟨a,λ⟩·x^a.
        let v0 = PolyVectorField::standard_form(&[r(3, 1), r(-2, 1)], 6);
        let f = mono(r(1, 1), &[2, 3], 6);
        let lv = lie_derivative(&v0, &f).unwrap();
        // ⟨(2,3),(3,−2)⟩ = 0 here, so the derivative vanishes.
        assert!(lv.is_zero());

        let f2 = mono(r(1, 1), &[1, 2], 6);
        let lv2 = lie_derivative(&v0, &f2).unwrap();
        assert_eq!(lv2, mono(r(-1, 1), &[1, 2], 6));
    }

    #[test]
    fn lie_derivative_annihilates_constants() {
        let v = PolyVectorField::new(vec![mono(r(1, 1), &[0, 1], 4), mono(r(1, 1), &[1, 0], 4)])
            .unwrap();
        let one = Jet::one(2, 4);
        assert!(lie_derivative(&v, &one).unwrap().is_zero());
    }

    #[test]
    fn lie_derivative_by_hand() {
        // V = x₂∂₁, f = x₁² → 2x₁x₂.
        let v =
            PolyVectorField::new(vec![mono(r(1, 1), &[0, 1], 4), Jet::zero(2, 4)]).unwrap();
        let f = mono(r(1, 1), &[2, 0], 4);
        assert_eq!(lie_derivative(&v, &f).unwrap(), mono(r(2, 1), &[1, 1], 4));
    }

    #[test]
    fn pullback_by_identity() {
        let v = PolyVectorField::new(vec![
            mono(r(2, 1), &[1, 0], 4),
            mono(r(1, 1), &[0, 1], 4),
        ])
        .unwrap();
        let id = CoordinateChange::identity(2, 4);
        assert_eq!(pullback_field(&v, &id).unwrap(), v);
    }

    #[test]
    fn pullback_removes_nonresonant_term() {
        // V = 3x₁∂₁ + x₂∂₂ + x₂²∂₁ under g = (x₁+x₂², x₂) becomes
        // 3y₁∂₁ + y₂∂₂ (oracle: L_V(x₁+x₂²) = 3(x₁+x₂²)).
        let v1 = mono(r(3, 1), &[1, 0], 4)
            .add(&mono(r(1, 1), &[0, 2], 4))
            .unwrap();
        let v = PolyVectorField::new(vec![v1, mono(r(1, 1), &[0, 1], 4)]).unwrap();
        let g1 = mono(r(1, 1), &[1, 0], 4).add(&mono(r(1, 1), &[0, 2], 4)).unwrap();
        let g = CoordinateChange::new(vec![g1, Jet::variable(1, 2, 4)]).unwrap();

        // Oracle first: the Lie derivative identity.
        let lv = lie_derivative(&v, &g.components()[0]).unwrap();
        assert_eq!(lv, g.components()[0].scale(&r(3, 1)));

        let w = pullback_field(&v, &g).unwrap();
        let expect = PolyVectorField::standard_form(&[r(3, 1), r(1, 1)], 4);
        assert_eq!(w.truncate_cmp(&expect, 2), true);
    }

    impl PolyVectorField<Rat> {
        /// Test helper: equality of components through total degree `d`.
        fn truncate_cmp(&self, other: &Self, d: u32) -> bool {
            (0..self.n).all(|i| {
                self.comps[i].truncated(d) == other.comps[i].truncated(d)
            })
        }
    }

    #[test]
    fn pullback_functorial_on_pipeline() {
        // Transport along g.then(h) = transport along g, then along h.
        let v = PolyVectorField::new(vec![
            mono(r(2, 1), &[1, 0], 4).add(&mono(r(1, 2), &[0, 2], 4)).unwrap(),
            mono(r(-1, 1), &[0, 1], 4).add(&mono(r(1, 3), &[2, 0], 4)).unwrap(),
        ])
        .unwrap();
        let g1 = mono(r(1, 1), &[1, 0], 4).add(&mono(r(1, 1), &[1, 1], 4)).unwrap();
        let g = CoordinateChange::new(vec![g1, Jet::variable(1, 2, 4)]).unwrap();
        let h2 = mono(r(1, 1), &[0, 1], 4).add(&mono(r(-1, 2), &[2, 0], 4)).unwrap();
        let h = CoordinateChange::new(vec![Jet::variable(0, 2, 4), h2]).unwrap();

        let combined = pullback_field(&v, &g.then(&h).unwrap()).unwrap();
        let sequential = pullback_field(&pullback_field(&v, &g).unwrap(), &h).unwrap();
        assert!(combined.truncate_cmp(&sequential, 3));
    }

    #[test]
    fn bracket_eigenrelation() {
        // [V₀, x^a∂ᵢ] = (⟨a,λ⟩−λᵢ)x^a∂ᵢ, coefficientwise.
        let lambda = [r(5, 2), r(-1, 3)];
        let v0 = PolyVectorField::standard_form(&lambda, 5);
        for a in MultiIndex::degree_range(2, 2, 5) {
            for i in 0..2 {
                let mut comps = vec![Jet::zero(2, 5), Jet::zero(2, 5)];
                comps[i] = Jet::monomial(r(1, 1), a.clone(), 5);
                let w = PolyVectorField::new(comps).unwrap();
                let br = bracket(&v0, &w).unwrap();
                let factor = (0..2).fold(Rat::new(0, 1), |acc, j| {
                    acc + lambda[j].clone() * Rat::new(a.get(j) as i64, 1)
                }) - lambda[i].clone();
                let mut expect = vec![Jet::zero(2, 5), Jet::zero(2, 5)];
                expect[i] = Jet::monomial(factor, a.clone(), 5);
                assert_eq!(br.components(), &expect[..]);
            }
        }
    }
}
