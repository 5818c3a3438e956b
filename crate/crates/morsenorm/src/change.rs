//! Coordinate-change germs: n-tuples of jets with invertible linear part
//! and no constant term.
//!
//! Orientation convention, used consistently across the crate: a
//! [`CoordinateChange`] `g` maps *current* coordinates to *new* ones,
//! `y = g(x)`. Changes compose as pipelines with [`CoordinateChange::then`]
//! (apply `self` first), functions transform by substituting the inverse,
//! and vector fields transform with [`crate::field::pullback_field`].

use thiserror::Error;

use crate::coeff::Coefficient;
use crate::jet::{Jet, JetError};
use crate::matrix::Matrix;
use crate::multi_index::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChangeError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("linear part is singular (|det| = {det_abs:.3e} below tolerance {tol:.3e})")]
    SingularLinearPart { det_abs: f64, tol: f64 },
    #[error("component {component} has a nonzero constant term; changes must fix the origin")]
    NonzeroConstantTerm { component: usize },
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
}

/// Default lower bound on |det| of the linear part in float mode.
pub const DEFAULT_DET_TOL: f64 = 1e-12;

/// Germ of a diffeomorphism fixing the origin, truncated at order `L`.
#[derive(Clone, PartialEq, Debug)]
pub struct CoordinateChange<C: Coefficient> {
    n: usize,
    order: u32,
    comps: Vec<Jet<C>>,
}

impl<C: Coefficient> CoordinateChange<C> {
    /// Validating constructor: origin fixed, linear part invertible.
    pub fn new(comps: Vec<Jet<C>>) -> Result<Self, ChangeError> {
        Self::with_det_tol(comps, DEFAULT_DET_TOL)
    }

    pub fn with_det_tol(comps: Vec<Jet<C>>, det_tol: f64) -> Result<Self, ChangeError> {
        let n = comps.len();
        assert!(n > 0, "empty coordinate change");
        let order = comps.iter().map(|c| c.order()).min().unwrap();
        for (i, c) in comps.iter().enumerate() {
            if c.dimension() != n {
                return Err(ChangeError::ComponentCount {
                    expected: n,
                    found: c.dimension(),
                });
            }
            if !c.constant_term().is_zero() {
                return Err(ChangeError::NonzeroConstantTerm { component: i });
            }
        }
        let comps: Vec<_> = comps.into_iter().map(|c| c.truncated(order)).collect();
        let change = CoordinateChange { n, order, comps };
        let det = change.linear_part().determinant();
        let singular = if C::EXACT {
            det.is_zero()
        } else {
            det.abs_f64() < det_tol
        };
        if singular {
            return Err(ChangeError::SingularLinearPart {
                det_abs: det.abs_f64(),
                tol: det_tol,
            });
        }
        Ok(change)
    }

    pub fn identity(n: usize, order: u32) -> Self {
        CoordinateChange {
            n,
            order,
            comps: (0..n).map(|i| Jet::variable(i, n, order)).collect(),
        }
    }

    /// Linear change `x ↦ Ax`.
    pub fn from_linear(a: &Matrix<C>, order: u32) -> Result<Self, ChangeError> {
        let n = a.dim();
        let comps = (0..n)
            .map(|i| {
                Jet::from_terms(
                    n,
                    order,
                    (0..n).map(|j| (MultiIndex::unit(j, n), a.get(i, j).clone())),
                )
            })
            .collect();
        Self::new(comps)
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

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.n, self.order)
    }

    /// Degree-1 coefficient matrix.
    pub fn linear_part(&self) -> Matrix<C> {
        let mut m = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, self.comps[i].coeff(&MultiIndex::unit(j, self.n)));
            }
        }
        m
    }

    /// Substitute this change into a jet: `f ∘ g`.
    pub fn apply_to(&self, f: &Jet<C>) -> Result<Jet<C>, ChangeError> {
        Ok(f.compose(&self.comps)?)
    }

    /// Pipeline composition: apply `self` first, then `next`.
    /// `(self.then(next))(x) = next(self(x))`.
    pub fn then(&self, next: &Self) -> Result<Self, ChangeError> {
        if self.n != next.n {
            return Err(ChangeError::ComponentCount {
                expected: self.n,
                found: next.n,
            });
        }
        let comps = next
            .comps
            .iter()
            .map(|f| f.compose(&self.comps))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(comps)
    }

    /// Inverse germ through the truncation order: returns `h` with
    /// `g∘h = h∘g = id + O(|x|^{L+1})`, exact in rational mode.
    ///
    /// Order-by-order recursion: start from the inverse of the linear part,
    /// then cancel the lowest-degree error of `g∘h` at each step.
    pub fn invert_to_order(&self) -> Result<Self, ChangeError> {
        let a_inv = self
            .linear_part()
            .inverse()
            .ok_or(ChangeError::SingularLinearPart {
                det_abs: 0.0,
                tol: DEFAULT_DET_TOL,
            })?;
        let mut h = Self::from_linear(&a_inv, self.order)?;
        for _ in 2..=self.order {
            // e = g∘h − id; its lowest degree strictly increases per pass.
            let gh = h.then(self)?;
            let id = Self::identity(self.n, self.order);
            let mut lowest: Option<u32> = None;
            let mut err: Vec<Jet<C>> = Vec::with_capacity(self.n);
            for i in 0..self.n {
                let e = gh.comps[i].sub(&id.comps[i])?;
                if let Some(d) = e.min_degree() {
                    lowest = Some(lowest.map_or(d, |l: u32| l.min(d)));
                }
                err.push(e);
            }
            let Some(m) = lowest else { break };
            if m > self.order {
                break;
            }
            // h ← h − A⁻¹·(degree-m part of error), evaluated at h's input.
            let em: Vec<Jet<C>> = err.iter().map(|e| e.homogeneous_part(m)).collect();
            let mut comps = h.comps.clone();
            for i in 0..self.n {
                let mut corr = Jet::zero(self.n, self.order);
                for j in 0..self.n {
                    corr = corr.add(&em[j].scale(a_inv.get(i, j)))?;
                }
                comps[i] = comps[i].sub(&corr)?;
            }
            h = Self::new(comps)?;
        }
        Ok(h)
    }

    pub fn map_coeff<D: Coefficient>(&self, f: impl Fn(&C) -> D + Copy) -> CoordinateChange<D> {
        CoordinateChange {
            n: self.n,
            order: self.order,
            comps: self.comps.iter().map(|c| c.map_coeff(f)).collect(),
        }
    }

    /// Evaluate the polynomial map at a point.
    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval_f64(x)).collect()
    }
}
