//! Truncated multivariate power series ("jets") in canonical sparse form.
//!
//! A [`Jet`] stores the coefficients of a polynomial truncated at a graded
//! order `L`: every kept exponent satisfies `|a| ≤ L` and no stored
//! coefficient is zero. Arithmetic truncates to the weakest operand order,
//! so a jet is always trustworthy through its own `order`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::coeff::Coefficient;
use crate::multi_index::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JetError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("composition target must fix the origin (component {component} has a constant term)")]
    CompositionConstantTerm { component: usize },
    #[error("series {op} requires constant term {expected}, found {found}")]
    BadConstantTerm {
        op: &'static str,
        expected: &'static str,
        found: String,
    },
}

/// Truncated power series: sparse exponent → coefficient map at order `L`.
#[derive(Clone, PartialEq)]
pub struct Jet<C: Coefficient> {
    n: usize,
    order: u32,
    terms: BTreeMap<MultiIndex, C>,
}

impl<C: Coefficient> Jet<C> {
    pub fn zero(n: usize, order: u32) -> Self {
        Jet {
            n,
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: C, n: usize, order: u32) -> Self {
        let mut jet = Self::zero(n, order);
        if !c.is_zero() {
            jet.terms.insert(MultiIndex::zero(n), c);
        }
        jet
    }

    pub fn one(n: usize, order: u32) -> Self {
        Self::constant(C::one(), n, order)
    }

    /// The coordinate function `xᵢ` (0-based index).
    pub fn variable(i: usize, n: usize, order: u32) -> Self {
        assert!(i < n);
        let mut jet = Self::zero(n, order);
        if order >= 1 {
            jet.terms.insert(MultiIndex::unit(i, n), C::one());
        }
        jet
    }

    /// A single monomial `c·x^a` (dropped silently when `|a| > order`).
    pub fn monomial(c: C, a: MultiIndex, order: u32) -> Self {
        let n = a.len();
        let mut jet = Self::zero(n, order);
        jet.insert_add(a, c);
        jet
    }

    pub fn from_terms(
        n: usize,
        order: u32,
        terms: impl IntoIterator<Item = (MultiIndex, C)>,
    ) -> Self {
        let mut jet = Self::zero(n, order);
        for (a, c) in terms {
            assert_eq!(a.len(), n, "exponent arity mismatch");
            jet.insert_add(a, c);
        }
        jet.canonicalize();
        jet
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, a: &MultiIndex) -> C {
        self.terms.get(a).cloned().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&MultiIndex::zero(self.n))
    }

    /// Largest coefficient magnitude, as the pruning scale.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.abs_f64())
            .fold(0.0, f64::max)
    }

    fn insert_add(&mut self, a: MultiIndex, c: C) {
        if a.degree() > self.order || c.is_zero() {
            return;
        }
        match self.terms.remove(&a) {
            None => {
                self.terms.insert(a, c);
            }
            Some(prev) => {
                let sum = prev + c;
                if !sum.is_zero() {
                    self.terms.insert(a, sum);
                }
            }
        }
    }

    /// Re-establish canonical sparse form: drop exact zeros, and in float
    /// mode drop coefficients below `1e-14` of the largest magnitude.
    pub fn canonicalize(&mut self) {
        if C::EXACT {
            self.terms.retain(|_, c| !c.is_zero());
        } else {
            let scale = self.max_abs_coeff();
            self.terms.retain(|_, c| !c.is_negligible(scale));
        }
    }

    /// Copy with a (possibly lower) truncation order.
    pub fn truncated(&self, order: u32) -> Self {
        let mut out = Self::zero(self.n, order);
        for (a, c) in &self.terms {
            if a.degree() <= order {
                out.terms.insert(a.clone(), c.clone());
            }
        }
        out
    }

    /// The homogeneous part of total degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> Self {
        let mut out = Self::zero(self.n, self.order);
        for (a, c) in &self.terms {
            if a.degree() == d {
                out.terms.insert(a.clone(), c.clone());
            }
        }
        out
    }

    /// Lowest total degree of a nonzero term, or `None` for the zero jet.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|a| a.degree()).min()
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(|a| a.degree()).max()
    }

    fn check_dim(&self, other: &Self) -> Result<(), JetError> {
        if self.n != other.n {
            return Err(JetError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dim(other)?;
        let order = self.order.min(other.order);
        let mut out = self.truncated(order);
        out.order = order;
        for (a, c) in &other.terms {
            if a.degree() <= order {
                out.insert_add(a.clone(), c.clone());
            }
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, JetError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn scale(&self, s: &C) -> Self {
        if s.is_zero() {
            return Self::zero(self.n, self.order);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.clone() * s.clone();
        }
        out.canonicalize();
        out
    }

    /// Product truncated to `min(L_a, L_b)`.
    pub fn mul(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dim(other)?;
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.n, order);
        for (a, ca) in &self.terms {
            if a.degree() > order {
                continue;
            }
            for (b, cb) in &other.terms {
                if a.degree() + b.degree() > order {
                    continue;
                }
                out.insert_add(a.add(b), ca.clone() * cb.clone());
            }
        }
        out.canonicalize();
        Ok(out)
    }

    /// Integer power by repeated multiplication.
    pub fn pow(&self, e: u32) -> Result<Self, JetError> {
        let mut out = Self::one(self.n, self.order);
        for _ in 0..e {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Partial derivative ∂/∂xᵢ. The result keeps the same truncation order;
    /// its degree-`L` slice would need order-`L+1` data and is zero here.
    pub fn partial_derivative(&self, i: usize) -> Self {
        assert!(i < self.n);
        let mut out = Self::zero(self.n, self.order);
        for (a, c) in &self.terms {
            if let Some(b) = a.dec(i) {
                let factor = C::from_int(a.get(i) as i64);
                out.insert_add(b, c.clone() * factor);
            }
        }
        out.canonicalize();
        out
    }

    /// Substitute `args[j]` for variable `xⱼ`: Taylor coefficients of
    /// `f ∘ (args)` to the weakest order involved. Each `args[j]` must fix
    /// the origin so truncation is exact.
    pub fn compose(&self, args: &[Jet<C>]) -> Result<Self, JetError> {
        if args.len() != self.n {
            return Err(JetError::DimensionMismatch {
                left: self.n,
                right: args.len(),
            });
        }
        let m = args.first().map_or(0, |g| g.dimension());
        let mut order = self.order;
        for (j, g) in args.iter().enumerate() {
            if g.dimension() != m {
                return Err(JetError::DimensionMismatch {
                    left: m,
                    right: g.dimension(),
                });
            }
            if !g.constant_term().is_zero() {
                return Err(JetError::CompositionConstantTerm { component: j });
            }
            order = order.min(g.order());
        }
        // Cache powers of each argument as needed.
        let mut powers: Vec<Vec<Jet<C>>> = args
            .iter()
            .map(|g| vec![Jet::one(m, order), g.truncated(order)])
            .collect();
        let mut out = Jet::zero(m, order);
        for (a, c) in &self.terms {
            if a.degree() > order {
                continue;
            }
            let mut term = Jet::constant(c.clone(), m, order);
            for j in 0..self.n {
                let e = a.get(j) as usize;
                if e == 0 {
                    continue;
                }
                while powers[j].len() <= e {
                    let next = powers[j].last().unwrap().mul(&powers[j][1])?;
                    powers[j].push(next);
                }
                term = term.mul(&powers[j][e])?;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Recenter: the expansion of `x ↦ f(x + p)` (exact polynomial identity).
    pub fn shift(&self, p: &[C]) -> Self {
        assert_eq!(p.len(), self.n);
        let mut out = Self::zero(self.n, self.order);
        for (a, c) in &self.terms {
            // Expand ∏ᵢ (xᵢ + pᵢ)^{aᵢ} by binomials.
            let mut partial: Vec<(MultiIndex, C)> = vec![(MultiIndex::zero(self.n), c.clone())];
            for i in 0..self.n {
                let e = a.get(i);
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (b, cb) in &partial {
                    let mut coeff_k = C::one(); // C(e,0)
                    for k in 0..=e {
                        let mut exps = b.clone();
                        for _ in 0..k {
                            exps = exps.add(&MultiIndex::unit(i, self.n));
                        }
                        let mut pw = C::one(); // pᵢ^{e−k}
                        for _ in 0..(e - k) {
                            pw = pw * p[i].clone();
                        }
                        next.push((exps, cb.clone() * coeff_k.clone() * pw));
                        if k < e {
                            // C(e,k+1) = C(e,k)·(e−k)/(k+1)
                            coeff_k = coeff_k * C::from_int((e - k) as i64)
                                / C::from_int((k + 1) as i64);
                        }
                    }
                }
                partial = next;
            }
            for (b, cb) in partial {
                out.insert_add(b, cb);
            }
        }
        out.canonicalize();
        out
    }

    /// Reciprocal of a jet with nonzero constant term, via the geometric
    /// series of `1/(c₀(1+w))`.
    pub fn recip_unit(&self) -> Result<Self, JetError> {
        let c0 = self.constant_term();
        if c0.is_zero() {
            return Err(JetError::BadConstantTerm {
                op: "recip",
                expected: "nonzero",
                found: "0".into(),
            });
        }
        let inv0 = C::one() / c0.clone();
        // w = f/c0 − 1 has no constant term, so the series terminates.
        let w = self
            .scale(&inv0)
            .sub(&Self::one(self.n, self.order))
            .expect("same dims");
        let mut sum = Self::one(self.n, self.order);
        let mut wpow = Self::one(self.n, self.order);
        let mut negative = true; // sign of (−1)^k, k = 1, 2, …
        for _ in 1..=self.order {
            wpow = wpow.mul(&w)?;
            if wpow.is_zero() {
                break;
            }
            sum = if negative {
                sum.sub(&wpow)?
            } else {
                sum.add(&wpow)?
            };
            negative = !negative;
        }
        Ok(sum.scale(&inv0))
    }

    /// Square root of a jet with constant term exactly 1, via the binomial
    /// series of `(1+w)^{1/2}`. Restricting to unit constant keeps the
    /// result exact in rational mode; callers handle scalar factors.
    pub fn sqrt_unit(&self) -> Result<Self, JetError> {
        let c0 = self.constant_term();
        if c0 != C::one() {
            return Err(JetError::BadConstantTerm {
                op: "sqrt",
                expected: "1",
                found: format!("{c0}"),
            });
        }
        let w = self.sub(&Self::one(self.n, self.order)).expect("same dims");
        let mut sum = Self::one(self.n, self.order);
        let mut wpow = Self::one(self.n, self.order);
        let mut coeff = C::one(); // binomial(1/2, k)
        for k in 1..=self.order {
            wpow = wpow.mul(&w)?;
            if wpow.is_zero() {
                break;
            }
            // binomial(1/2,k) = binomial(1/2,k−1) · (1/2 − (k−1))/k
            let half = C::from_ratio(1, 2);
            coeff = coeff * (half - C::from_int(k as i64 - 1)) / C::from_int(k as i64);
            sum = sum.add(&wpow.scale(&coeff))?;
        }
        Ok(sum)
    }

    /// Evaluate at a point (float mode of the coefficients).
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for (a, c) in &self.terms {
            let mut m = c.to_f64();
            for i in 0..self.n {
                for _ in 0..a.get(i) {
                    m *= x[i];
                }
            }
            acc += m;
        }
        acc
    }

    /// Convert coefficients (e.g. rational → f64).
    pub fn map_coeff<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Jet<D> {
        let mut out = Jet::zero(self.n, self.order);
        for (a, c) in &self.terms {
            out.insert_add(a.clone(), f(c));
        }
        out.canonicalize();
        out
    }

    /// Re-embed into `n_total` variables, sending local variable `j` to the
    /// global variable `var_map[j]`.
    pub fn embed(&self, n_total: usize, var_map: &[usize]) -> Jet<C> {
        assert_eq!(var_map.len(), self.n);
        let mut out = Jet::zero(n_total, self.order);
        for (a, c) in &self.terms {
            let mut exps = vec![0u8; n_total];
            for j in 0..self.n {
                exps[var_map[j]] += a.get(j) as u8;
            }
            out.insert_add(MultiIndex::from_slice(&exps), c.clone());
        }
        out
    }

    /// Keep only variables listed in `vars` (others must not occur),
    /// producing a jet in `vars.len()` variables.
    pub fn restrict(&self, vars: &[usize]) -> Jet<C> {
        let keep: Vec<bool> = (0..self.n).map(|i| vars.contains(&i)).collect();
        let mut out = Jet::zero(vars.len(), self.order);
        for (a, c) in &self.terms {
            assert!(
                a.supported_on(&keep),
                "restrict: term {a:?} uses a dropped variable"
            );
            let exps: Vec<u8> = vars.iter().map(|&i| a.get(i) as u8).collect();
            out.insert_add(MultiIndex::from_slice(&exps), c.clone());
        }
        out
    }
}

impl<C: Coefficient> fmt::Display for Jet<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (a, c) in &self.terms {
            if first {
                first = false;
            } else {
                write!(f, " + ")?;
            }
            if a.degree() == 0 {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{a}")?;
            }
        }
        Ok(())
    }
}

impl<C: Coefficient> fmt::Debug for Jet<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(n={}, L={}, {})", self.n, self.order, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Rat;

    fn rj(n: usize, order: u32, terms: &[(&[u8], i64, i64)]) -> Jet<Rat> {
        Jet::from_terms(
            n,
            order,
            terms
                .iter()
                .map(|(e, p, q)| (MultiIndex::from_slice(e), Rat::new(*p, *q))),
        )
    }

    #[test]
    fn difference_of_squares() {
        // (1+x₁)(1−x₁) at L=2 → 1−x₁²
        let a = rj(1, 2, &[(&[0], 1, 1), (&[1], 1, 1)]);
        let b = rj(1, 2, &[(&[0], 1, 1), (&[1], -1, 1)]);
        let expect = rj(1, 2, &[(&[0], 1, 1), (&[2], -1, 1)]);
        assert_eq!(a.mul(&b).unwrap(), expect);
    }

    #[test]
    fn truncation_drops_top_degree() {
        // x₁·x₁ at L=1 → 0
        let x = Jet::<Rat>::variable(0, 1, 1);
        assert!(x.mul(&x).unwrap().is_zero());
    }

    #[test]
    fn square_of_trinomial() {
        // (1+x₁+x₂)² at L=2, by brute-force convolution oracle.
        let t = rj(2, 2, &[(&[0, 0], 1, 1), (&[1, 0], 1, 1), (&[0, 1], 1, 1)]);
        let sq = t.mul(&t).unwrap();
        let expect = rj(
            2,
            2,
            &[
                (&[0, 0], 1, 1),
                (&[1, 0], 2, 1),
                (&[0, 1], 2, 1),
                (&[2, 0], 1, 1),
                (&[1, 1], 2, 1),
                (&[0, 2], 1, 1),
            ],
        );
        assert_eq!(sq, expect);
    }

    #[test]
    fn mul_dimension_mismatch() {
        let a = Jet::<Rat>::variable(0, 1, 3);
        let b = Jet::<Rat>::variable(0, 2, 3);
        assert!(matches!(
            a.mul(&b),
            Err(JetError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn compose_direct_substitution() {
        // f = x₁², g = (x₁+x₂², x₂), L = 4 → x₁² + 2x₁x₂² + x₂⁴
        let f = rj(2, 4, &[(&[2, 0], 1, 1)]);
        let g = vec![
            rj(2, 4, &[(&[1, 0], 1, 1), (&[0, 2], 1, 1)]),
            Jet::variable(1, 2, 4),
        ];
        let expect = rj(2, 4, &[(&[2, 0], 1, 1), (&[1, 2], 2, 1), (&[0, 4], 1, 1)]);
        assert_eq!(f.compose(&g).unwrap(), expect);
    }

    #[test]
    fn compose_identity_and_linear() {
        let f = rj(2, 3, &[(&[1, 0], 1, 1), (&[1, 1], 5, 2)]);
        let id = vec![Jet::variable(0, 2, 3), Jet::variable(1, 2, 3)];
        assert_eq!(f.compose(&id).unwrap(), f);

        // f = x₁, g = (2x₁, x₂) → 2x₁
        let f1 = Jet::<Rat>::variable(0, 2, 3);
        let g = vec![
            Jet::variable(0, 2, 3).scale(&Rat::new(2, 1)),
            Jet::variable(1, 2, 3),
        ];
        assert_eq!(f1.compose(&g).unwrap(), rj(2, 3, &[(&[1, 0], 2, 1)]));
    }

    #[test]
    fn compose_rejects_constant_terms() {
        let f = Jet::<Rat>::variable(0, 1, 3);
        let g = vec![Jet::one(1, 3)];
        assert!(matches!(
            f.compose(&g),
            Err(JetError::CompositionConstantTerm { component: 0 })
        ));
    }

    #[test]
    fn derivative_drops_degree() {
        let f = rj(2, 3, &[(&[2, 1], 3, 1)]); // 3x₁²x₂
        let d = f.partial_derivative(0);
        assert_eq!(d, rj(2, 3, &[(&[1, 1], 6, 1)]));
    }

    #[test]
    fn sqrt_unit_squares_back() {
        // √(1+x₁) at L=4, squared, is 1+x₁ exactly.
        let f = rj(1, 4, &[(&[0], 1, 1), (&[1], 1, 1)]);
        let s = f.sqrt_unit().unwrap();
        assert_eq!(s.coeff(&MultiIndex::from_slice(&[1])), Rat::new(1, 2));
        assert_eq!(s.coeff(&MultiIndex::from_slice(&[2])), Rat::new(-1, 8));
        assert_eq!(s.mul(&s).unwrap(), f);
    }

    #[test]
    fn recip_unit_multiplies_back() {
        let f = rj(2, 5, &[(&[0, 0], 2, 1), (&[1, 0], 1, 1), (&[0, 2], -1, 3)]);
        let r = f.recip_unit().unwrap();
        assert_eq!(f.mul(&r).unwrap(), Jet::one(2, 5));
    }

    #[test]
    fn shift_recenters_exactly() {
        // f = x² shifted by p=1: (x+1)² = x² + 2x + 1.
        let f = rj(1, 3, &[(&[2], 1, 1)]);
        let s = f.shift(&[Rat::new(1, 1)]);
        assert_eq!(
            s,
            rj(1, 3, &[(&[0], 1, 1), (&[1], 2, 1), (&[2], 1, 1)])
        );
    }

    #[test]
    fn float_pruning_is_relative() {
        let jet = Jet::<f64>::from_terms(
            1,
            2,
            [
                (MultiIndex::from_slice(&[1]), 1.0),
                (MultiIndex::from_slice(&[2]), 1e-16),
            ],
        );
        assert_eq!(jet.num_terms(), 1);
    }
}
