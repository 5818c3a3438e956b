//! Small dense matrices over a generic coefficient, for linear parts of
//! coordinate changes. Exact Gaussian elimination in rational mode, partial
//! pivoting in float mode. Dimensions here are the chart dimension `n`,
//! which is small; no attempt at large-scale performance.

use crate::coeff::Coefficient;

#[derive(Clone, PartialEq, Debug)]
pub struct Matrix<C: Coefficient> {
    n: usize,
    // Row-major.
    data: Vec<C>,
}

impl<C: Coefficient> Matrix<C> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![C::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, C::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Matrix {
            n,
            data: rows.iter().flat_map(|r| r.iter().cloned()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &C {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut acc = C::zero();
                for k in 0..self.n {
                    acc = acc + self.get(i, k).clone() * other.get(k, j).clone();
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C]) -> Vec<C> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = C::zero();
                for j in 0..self.n {
                    acc = acc + self.get(i, j).clone() * v[j].clone();
                }
                acc
            })
            .collect()
    }

    /// Gauss-Jordan inverse. Returns `None` when singular (exact zero pivot
    /// in rational mode, pivot below `1e-300` absolute in float mode — the
    /// caller applies its own conditioning policy on top).
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            // Pivot selection: max |entry| (exact mode still benefits from
            // avoiding huge intermediate rationals only marginally; any
            // nonzero pivot is correct there).
            let mut pivot = col;
            let mut best = a.get(col, col).abs_f64();
            for r in (col + 1)..n {
                let mag = a.get(r, col).abs_f64();
                if mag > best {
                    best = mag;
                    pivot = r;
                }
            }
            if a.get(pivot, col).is_zero() || (!C::EXACT && best < 1e-300) {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a.get(col, j).clone();
                    a.set(col, j, a.get(pivot, j).clone());
                    a.set(pivot, j, tmp);
                    let tmp = inv.get(col, j).clone();
                    inv.set(col, j, inv.get(pivot, j).clone());
                    inv.set(pivot, j, tmp);
                }
            }
            let p = a.get(col, col).clone();
            for j in 0..n {
                a.set(col, j, a.get(col, j).clone() / p.clone());
                inv.set(col, j, inv.get(col, j).clone() / p.clone());
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.get(r, col).clone();
                if factor.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let av = a.get(r, j).clone() - factor.clone() * a.get(col, j).clone();
                    a.set(r, j, av);
                    let iv = inv.get(r, j).clone() - factor.clone() * inv.get(col, j).clone();
                    inv.set(r, j, iv);
                }
            }
        }
        Some(inv)
    }

    pub fn determinant(&self) -> C {
        let n = self.n;
        let mut a = self.clone();
        let mut det = C::one();
        for col in 0..n {
            let mut pivot = col;
            let mut best = a.get(col, col).abs_f64();
            for r in (col + 1)..n {
                let mag = a.get(r, col).abs_f64();
                if mag > best {
                    best = mag;
                    pivot = r;
                }
            }
            if a.get(pivot, col).is_zero() {
                return C::zero();
            }
            if pivot != col {
                det = -det;
                for j in 0..n {
                    let tmp = a.get(col, j).clone();
                    a.set(col, j, a.get(pivot, j).clone());
                    a.set(pivot, j, tmp);
                }
            }
            let p = a.get(col, col).clone();
            det = det * p.clone();
            for r in (col + 1)..n {
                let factor = a.get(r, col).clone() / p.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in col..n {
                    let v = a.get(r, j).clone() - factor.clone() * a.get(col, j).clone();
                    a.set(r, j, v);
                }
            }
        }
        det
    }

    pub fn map<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Matrix<D> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }
}
