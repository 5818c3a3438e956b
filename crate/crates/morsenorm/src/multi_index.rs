//! Exponent multi-indices `a ∈ ℕⁿ` with graded-lexicographic ordering.
//!
//! Graded-lex is the canonical term order of the whole crate: jets iterate
//! their terms in it, resonance witnesses and obstruction ledgers are
//! reported in it, and reports serialize in it, so every run is reproducible.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

/// Exponent vector of a monomial `x₁^{a₁}·…·xₙ^{aₙ}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(SmallVec<[u8; 6]>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(SmallVec::from_elem(0, n))
    }

    /// The exponent of the single variable `xᵢ` (0-based).
    pub fn unit(i: usize, n: usize) -> Self {
        let mut e = Self::zero(n);
        e.0[i] = 1;
        e
    }

    pub fn from_slice(exps: &[u8]) -> Self {
        MultiIndex(SmallVec::from_slice(exps))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exps(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i] as u32
    }

    /// Total degree |a| = a₁+…+aₙ.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.len(), other.len());
        MultiIndex(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(&a, &b)| a.checked_add(b).expect("exponent overflow"))
                .collect(),
        )
    }

    /// `self − eᵢ`, or `None` when `aᵢ = 0`.
    pub fn dec(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut out = self.clone();
        out.0[i] -= 1;
        Some(out)
    }

    /// Degree restricted to a subset of variables.
    pub fn degree_on(&self, vars: impl Iterator<Item = usize>) -> u32 {
        vars.map(|i| self.0[i] as u32).sum()
    }

    /// Whether the monomial only involves variables from `vars`.
    pub fn supported_on(&self, vars: &[bool]) -> bool {
        self.0.iter().enumerate().all(|(i, &e)| e == 0 || vars[i])
    }

    /// All multi-indices in `n` variables of total degree exactly `d`,
    /// in graded-lex order.
    pub fn of_degree(n: usize, d: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut current = vec![0u8; n];
        fn rec(n: usize, pos: usize, left: u32, current: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if pos == n - 1 {
                current[pos] = left as u8;
                out.push(MultiIndex::from_slice(current));
                return;
            }
            // Lex order within a degree block: larger leading exponent first.
            for e in (0..=left).rev() {
                current[pos] = e as u8;
                rec(n, pos + 1, left - e, current, out);
            }
            current[pos] = 0;
        }
        if n == 0 {
            if d == 0 {
                out.push(MultiIndex::zero(0));
            }
            return out;
        }
        rec(n, 0, d, &mut current, &mut out);
        out
    }

    /// All multi-indices with `lo ≤ |a| ≤ hi`, graded-lex.
    pub fn degree_range(n: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
        (lo..=hi).flat_map(|d| Self::of_degree(n, d)).collect()
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.len(), other.len());
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Within a degree, lex with larger leading exponents first, so that
        // e.g. x₁² < x₁x₂ < x₂² reads left to right.
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match b.cmp(a) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.exps())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let lo = MultiIndex::from_slice(&[1, 0]);
        let hi = MultiIndex::from_slice(&[0, 2]);
        assert!(lo < hi, "degree dominates");
        let a = MultiIndex::from_slice(&[2, 0]);
        let b = MultiIndex::from_slice(&[1, 1]);
        let c = MultiIndex::from_slice(&[0, 2]);
        assert!(a < b && b < c, "within a degree, x1-heavy first");
    }

    #[test]
    fn enumeration_counts() {
        // Degree-d monomials in n variables: C(n+d-1, d).
        assert_eq!(MultiIndex::of_degree(2, 3).len(), 4);
        assert_eq!(MultiIndex::of_degree(3, 4).len(), 15);
        let all = MultiIndex::degree_range(2, 2, 3);
        assert_eq!(all.len(), 3 + 4);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn display_names_variables_from_one() {
        let m = MultiIndex::from_slice(&[2, 0, 1]);
        assert_eq!(m.to_string(), "x1^2*x3");
        assert_eq!(MultiIndex::zero(2).to_string(), "1");
    }
}
