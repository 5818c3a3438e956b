//! Weighted Sobolev norms on sampled trajectories `u : [−T_max, 0] → ℝⁿ`,
//! the integral operator `𝔉` whose fixed point encodes the conjugacy via
//! `Φ(x) = p(0,x) + x`, and the fixed-point iteration with measured
//! contraction ratios.
//!
//! The norm is
//!
//! ```text
//! ‖u‖_{p,k,δ} = ∑_{j=0}^{k} [ ∫ e^{−δpt} |(d/dt)^j u(t)|^p dt ]^{1/p}
//! ```
//!
//! with the `j = 0` term included for both the weighted and unweighted
//! variants. Integrals are composite trapezoid on the grid, derivatives are
//! finite-difference stencils (centered inside, one-sided at the ends).

use serde::Serialize;
use thiserror::Error;

use crate::flow::{flow_f, norm2, FlowError, TruncatedField};

#[derive(Debug, Error)]
pub enum SobolevError {
    #[error("grid too coarse: {nodes} nodes cannot support k = {k} derivatives")]
    GridTooCoarse { nodes: usize, k: u32 },
    #[error("weight overflow: δ·p·T_max = {exponent:.1} exceeds the f64 range")]
    WeightOverflow { exponent: f64 },
    #[error("derivative count k = {k} unsupported (grids carry stencils up to k = 2)")]
    UnsupportedK { k: u32 },
    #[error("iteration is not contracting: recent ratios {recent:?}; δ may be too small or the radius too large")]
    NonContraction { recent: Vec<f64> },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Weighted-norm parameters `(p, k, δ)` with `p > 1`, `δ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNormParams {
    pub p: f64,
    pub k: u32,
    pub delta: f64,
}

impl WeightedNormParams {
    pub fn new(p: f64, k: u32, delta: f64) -> Self {
        assert!(p > 1.0, "p must exceed 1");
        assert!(delta > 0.0, "δ must be positive");
        WeightedNormParams { p, k, delta }
    }
}

/// Time grid on `[−T_max, 0]`, uniform or geometrically graded so that
/// nodes accumulate near `t = 0` where the weight is tame and the
/// reconstruction `p(0,x)` is read off.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub nodes: usize,
    /// 0 for uniform; `β > 0` grades spacing by `e^β` from end to end.
    pub grading: f64,
}

impl GridSpec {
    pub fn build(&self) -> Vec<f64> {
        assert!(self.nodes >= 4, "need at least 4 nodes");
        assert!(self.t_max > 0.0);
        let n = self.nodes - 1;
        (0..=n)
            .map(|m| {
                if self.grading == 0.0 {
                    -self.t_max * (1.0 - m as f64 / n as f64)
                } else {
                    let b = self.grading;
                    let s = 1.0 - m as f64 / n as f64;
                    -self.t_max * ((b * s).exp_m1()) / b.exp_m1()
                }
            })
            .collect()
    }
}

/// A sampled trajectory with its norm parameters. The last node is `t = 0`.
#[derive(Debug, Clone)]
pub struct TrajectoryGrid {
    t: Vec<f64>,
    /// One n-vector per node.
    values: Vec<Vec<f64>>,
    params: WeightedNormParams,
}

impl TrajectoryGrid {
    pub fn zero(t_nodes: Vec<f64>, dim: usize, params: WeightedNormParams) -> Self {
        assert!(t_nodes.windows(2).all(|w| w[0] < w[1]), "nodes must increase");
        assert!(
            t_nodes.last().is_some_and(|t| *t == 0.0),
            "grid must end at t = 0"
        );
        let values = vec![vec![0.0; dim]; t_nodes.len()];
        TrajectoryGrid {
            t: t_nodes,
            values,
            params,
        }
    }

    pub fn from_values(
        t_nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
        params: WeightedNormParams,
    ) -> Self {
        assert_eq!(t_nodes.len(), values.len());
        let mut g = Self::zero(t_nodes, values.first().map_or(0, Vec::len), params);
        g.values = values;
        g
    }

    /// Sample a function of `t` on the grid.
    pub fn sample(
        t_nodes: Vec<f64>,
        dim: usize,
        params: WeightedNormParams,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Self {
        let values = t_nodes.iter().map(|&t| f(t)).collect::<Vec<_>>();
        let _ = dim;
        Self::from_values(t_nodes, values, params)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn params(&self) -> WeightedNormParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Value at the final node `t = 0`.
    pub fn at_zero(&self) -> &[f64] {
        self.values.last().expect("nonempty grid")
    }

    pub fn sub(&self, other: &TrajectoryGrid) -> TrajectoryGrid {
        assert_eq!(self.t.len(), other.t.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        TrajectoryGrid {
            t: self.t.clone(),
            values,
            params: self.params,
        }
    }

    pub fn scale(&self, c: f64) -> TrajectoryGrid {
        TrajectoryGrid {
            t: self.t.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| c * x).collect())
                .collect(),
            params: self.params,
        }
    }

    /// j-th finite-difference derivative at every node (j ≤ 2).
    fn derivative(&self, j: u32) -> Result<Vec<Vec<f64>>, SobolevError> {
        match j {
            0 => Ok(self.values.clone()),
            1 => Ok(stencil_apply(&self.t, &self.values, false)),
            2 => Ok(stencil_apply(&self.t, &self.values, true)),
            k => Err(SobolevError::UnsupportedK { k }),
        }
    }
}

/// Derivative of the quadratic through three nodes, evaluated at `tau`
/// (first derivative), or its curvature (second derivative, constant).
fn lagrange3(t: [f64; 3], u: [&[f64]; 3], tau: f64, second: bool) -> Vec<f64> {
    let (t0, t1, t2) = (t[0], t[1], t[2]);
    let d0 = (t0 - t1) * (t0 - t2);
    let d1 = (t1 - t0) * (t1 - t2);
    let d2 = (t2 - t0) * (t2 - t1);
    let (c0, c1, c2) = if second {
        (2.0 / d0, 2.0 / d1, 2.0 / d2)
    } else {
        (
            (2.0 * tau - t1 - t2) / d0,
            (2.0 * tau - t0 - t2) / d1,
            (2.0 * tau - t0 - t1) / d2,
        )
    };
    (0..u[0].len())
        .map(|i| c0 * u[0][i] + c1 * u[1][i] + c2 * u[2][i])
        .collect()
}

fn stencil_apply(t: &[f64], values: &[Vec<f64>], second: bool) -> Vec<Vec<f64>> {
    let n = t.len();
    (0..n)
        .map(|m| {
            let (i0, i1, i2) = if m == 0 {
                (0, 1, 2)
            } else if m == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (m - 1, m, m + 1)
            };
            lagrange3(
                [t[i0], t[i1], t[i2]],
                [&values[i0], &values[i1], &values[i2]],
                t[m],
                second,
            )
        })
        .collect()
}

/// The weighted Sobolev norm of the sampled trajectory.
pub fn weighted_norm(u: &TrajectoryGrid) -> Result<f64, SobolevError> {
    let params = u.params();
    if u.len() < (params.k as usize) + 2 || u.len() < 4 {
        return Err(SobolevError::GridTooCoarse {
            nodes: u.len(),
            k: params.k,
        });
    }
    let exponent = params.delta * params.p * u.t_nodes()[0].abs();
    if exponent > 700.0 {
        return Err(SobolevError::WeightOverflow { exponent });
    }
    let mut total = 0.0;
    for j in 0..=params.k {
        let der = u.derivative(j)?;
        let integrand: Vec<f64> = u
            .t_nodes()
            .iter()
            .zip(&der)
            .map(|(&t, v)| (-params.delta * params.p * t).exp() * norm2(v).powf(params.p))
            .collect();
        total += trapezoid(u.t_nodes(), &integrand).powf(1.0 / params.p);
    }
    Ok(total)
}

fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for m in 1..t.len() {
        acc += 0.5 * (t[m] - t[m - 1]) * (f[m] + f[m - 1]);
    }
    acc
}

/// Cumulative trapezoid from the left end: out[m] = ∫_{t₀}^{t_m}.
fn cumulative_trapezoid(t: &[f64], f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = f.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(t.len());
    out.push(vec![0.0; dim]);
    for m in 1..t.len() {
        let prev = &out[m - 1];
        let h = t[m] - t[m - 1];
        let row: Vec<f64> = (0..dim)
            .map(|i| prev[i] + 0.5 * h * (f[m][i] + f[m - 1][i]))
            .collect();
        out.push(row);
    }
    out
}

/// The operator `𝔉ₓ(u)(t) = ∫_{−T_max}^t [V(u(s)+F_s(x)) − V₀(F_s(x))] ds`
/// on the shared grid, with `V` the bump-truncated field.
pub fn operator_f(
    field: &TruncatedField,
    x: &[f64],
    u: &TrajectoryGrid,
) -> Result<TrajectoryGrid, SobolevError> {
    let lambda = field.lambda();
    let integrand: Vec<Vec<f64>> = u
        .t_nodes()
        .iter()
        .zip(u.values())
        .map(|(&s, us)| {
            let fs = flow_f(lambda, x, s)?;
            let shifted: Vec<f64> = us.iter().zip(&fs).map(|(a, b)| a + b).collect();
            let v = field.eval(&shifted);
            Ok((0..x.len())
                .map(|i| v[i] - lambda[i] * fs[i])
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, FlowError>>()?;
    let values = cumulative_trapezoid(u.t_nodes(), &integrand);
    Ok(TrajectoryGrid::from_values(
        u.t_nodes().to_vec(),
        values,
        u.params(),
    ))
}

/// Diagnostics of one fixed-point run.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointDiagnostics {
    /// Successive-difference norms `d_m = ‖u_{m+1} − u_m‖`.
    pub difference_norms: Vec<f64>,
    /// Empirical contraction ratios `ρ_m = d_m / d_{m−1}`.
    pub ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `Φ_fp(x) = p(0,x) + x`.
    pub phi: Vec<f64>,
}

impl FixedPointDiagnostics {
    /// Representative measured contraction constant: geometric mean of the
    /// tail ratios (they settle once the iteration is in regime).
    pub fn contraction_estimate(&self) -> Option<f64> {
        if self.ratios.len() < 2 {
            return None;
        }
        let tail = &self.ratios[self.ratios.len() / 2..];
        let log_mean = tail.iter().map(|r| r.max(1e-300).ln()).sum::<f64>() / tail.len() as f64;
        Some(log_mean.exp())
    }
}

/// Iterate `u_{m+1} = 𝔉ₓ(u_m)` from `u₀ = 0` until the successive
/// difference drops below `fp_tol` in `‖·‖_{p,k,δ}` or `m_cap` is reached.
pub fn fixed_point_iterate(
    field: &TruncatedField,
    x: &[f64],
    params: WeightedNormParams,
    grid: &GridSpec,
    fp_tol: f64,
    m_cap: usize,
) -> Result<(TrajectoryGrid, FixedPointDiagnostics), SobolevError> {
    let t_nodes = grid.build();
    let mut u = TrajectoryGrid::zero(t_nodes, x.len(), params);
    let mut difference_norms = Vec::new();
    let mut ratios = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for m in 0..m_cap {
        iterations = m + 1;
        let next = operator_f(field, x, &u)?;
        let d = weighted_norm(&next.sub(&u))?;
        if let Some(prev) = difference_norms.last() {
            if *prev > 0.0 {
                ratios.push(d / prev);
            }
        }
        difference_norms.push(d);
        u = next;
        if d < fp_tol {
            converged = true;
            break;
        }
        // Persistent expansion means δ is too small for this field/radius.
        if ratios.len() >= 4 && ratios.iter().rev().take(4).all(|r| *r >= 1.0) {
            return Err(SobolevError::NonContraction {
                recent: ratios.iter().rev().take(4).rev().copied().collect(),
            });
        }
    }
    if !converged && ratios.iter().rev().take(4).filter(|r| **r >= 1.0).count() >= 4 {
        return Err(SobolevError::NonContraction {
            recent: ratios.iter().rev().take(4).rev().copied().collect(),
        });
    }
    let phi: Vec<f64> = u.at_zero().iter().zip(x).map(|(p, xi)| p + xi).collect();
    let diag = FixedPointDiagnostics {
        difference_norms,
        ratios,
        iterations,
        converged,
        phi,
    };
    Ok((u, diag))
}

/// Root of `1 = ((p−1)^{p−1}/p^p)·c^p + c` by bisection; the lemma constant
/// is `C₀ = 1/c` and depends only on `p`.
pub fn lemma_integration_constant(p: f64) -> f64 {
    assert!(p > 1.0, "p must exceed 1");
    let coeff = (p - 1.0).powf(p - 1.0) / p.powf(p);
    let f = |c: f64| coeff * c.powf(p) + c - 1.0;
    // f(0) = −1 < 0 and f(1) = coeff > 0: bracket (0, 1].
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    1.0 / (0.5 * (lo + hi))
}

/// Heuristic lower bound for a contracting weight:
/// `δ_min = 4·C₀(p)·(max|λᵢ| + sup ‖D(V−V₀)‖_F)`, the supremum estimated on
/// a sample grid over the bump support.
pub fn delta_min_heuristic(field: &TruncatedField, p: f64) -> f64 {
    let n = field.dimension();
    let r = field.bump().r_out;
    let res = field.residual_field();
    let jac: Vec<Vec<crate::jet::Jet<f64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| res.components()[i].partial_derivative(j))
                .collect()
        })
        .collect();
    let per_axis = match n {
        1 => 41,
        2 => 17,
        3 => 9,
        _ => 5,
    };
    let mut sup = 0.0f64;
    let mut point = vec![0.0f64; n];
    let mut index = vec![0usize; n];
    loop {
        for (d, idx) in index.iter().enumerate() {
            point[d] = -r + 2.0 * r * (*idx as f64) / (per_axis as f64 - 1.0);
        }
        if norm2(&point) <= r {
            let mut frob = 0.0;
            for row in &jac {
                for e in row {
                    let v = e.eval_f64(&point);
                    frob += v * v;
                }
            }
            sup = sup.max(frob.sqrt());
        }
        // Odometer increment.
        let mut d = 0;
        loop {
            index[d] += 1;
            if index[d] < per_axis {
                break;
            }
            index[d] = 0;
            d += 1;
            if d == n {
                let max_l = field.lambda().iter().fold(0.0f64, |m, l| m.max(l.abs()));
                return 4.0 * lemma_integration_constant(p) * (max_l + sup);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Bump;
    use crate::jet::Jet;
    use crate::multi_index::MultiIndex;
    use crate::field::PolyVectorField;

    fn params(p: f64, k: u32, delta: f64) -> WeightedNormParams {
        WeightedNormParams::new(p, k, delta)
    }

    #[test]
    fn zero_trajectory_has_zero_norm() {
        let grid = GridSpec {
            t_max: 5.0,
            nodes: 64,
            grading: 0.0,
        };
        let u = TrajectoryGrid::zero(grid.build(), 2, params(2.0, 1, 1.0));
        assert_eq!(weighted_norm(&u).unwrap(), 0.0);
    }

    #[test]
    fn exponential_norm_closed_form() {
        // u(t) = e^{2t}e₁, p = 2, k = 0, δ = 1:
        // ∫_{−∞}^0 e^{−2t}e^{4t}dt = 1/2, norm = √(1/2).
        let grid = GridSpec {
            t_max: 18.0,
            nodes: 6000,
            grading: 3.0,
        };
        let u = TrajectoryGrid::sample(grid.build(), 2, params(2.0, 0, 1.0), |t| {
            vec![(2.0 * t).exp(), 0.0]
        });
        let norm = weighted_norm(&u).unwrap();
        assert!(
            (norm - 0.5f64.sqrt()).abs() < 1e-4,
            "norm {norm} vs {}",
            0.5f64.sqrt()
        );
    }

    #[test]
    fn norm_is_homogeneous() {
        let grid = GridSpec {
            t_max: 6.0,
            nodes: 300,
            grading: 2.0,
        };
        let u = TrajectoryGrid::sample(grid.build(), 1, params(2.0, 1, 2.0), |t| {
            vec![(t).exp() * (1.0 + t).cos()]
        });
        let a = weighted_norm(&u.scale(-3.5)).unwrap();
        let b = 3.5 * weighted_norm(&u).unwrap();
        assert!((a - b).abs() < 1e-12 * b.max(1.0));
    }

    #[test]
    fn weight_overflow_guarded() {
        let grid = GridSpec {
            t_max: 50.0,
            nodes: 32,
            grading: 0.0,
        };
        let u = TrajectoryGrid::zero(grid.build(), 1, params(2.0, 0, 16.0));
        assert!(matches!(
            weighted_norm(&u),
            Err(SobolevError::WeightOverflow { .. })
        ));
    }

    #[test]
    fn coarse_grid_rejected() {
        let u = TrajectoryGrid::zero(vec![-1.0, -0.5, 0.0], 1, params(2.0, 0, 1.0));
        assert!(matches!(
            weighted_norm(&u),
            Err(SobolevError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn lemma_constant_p2_closed_form() {
        // 1 = c²/4 + c has positive root c = 2(√2−1); C₀ = (1+√2)/2.
        let c0 = lemma_integration_constant(2.0);
        let expect = (1.0 + 2.0f64.sqrt()) / 2.0;
        assert!((c0 - expect).abs() < 1e-12, "{c0} vs {expect}");
        let c = 2.0 * (2.0f64.sqrt() - 1.0);
        assert!((1.0 / c0 - c).abs() < 1e-12);
    }

    #[test]
    fn lemma_constant_sane_across_p() {
        for p in [1.5, 2.0, 3.0, 5.0] {
            let c0 = lemma_integration_constant(p);
            assert!(c0.is_finite() && c0 > 0.0);
            // The root is in (0,1], so C₀ ≥ 1.
            assert!(c0 >= 1.0);
        }
        // Near p → 1⁺ the root stays in (0,1].
        let c0 = lemma_integration_constant(1.0 + 1e-6);
        assert!((1.0 / c0) > 0.0 && (1.0 / c0) <= 1.0);
    }

    fn benchmark_field() -> TruncatedField {
        // λ = (1,−φ) with a mixed quadratic perturbation.
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let v = PolyVectorField::new(vec![
            Jet::from_terms(
                2,
                3,
                [
                    (MultiIndex::from_slice(&[1, 0]), 1.0),
                    (MultiIndex::from_slice(&[1, 1]), 0.25),
                ],
            ),
            Jet::monomial(-phi, MultiIndex::from_slice(&[0, 1]), 3),
        ])
        .unwrap();
        TruncatedField::new(&v, &[1.0, -phi], Bump::new(0.5, 1.0))
    }

    #[test]
    fn operator_on_zero_with_linear_field_is_zero() {
        let field = TruncatedField::linear(&[1.0, -1.0], Bump::new(0.5, 1.0));
        let grid = GridSpec {
            t_max: 6.0,
            nodes: 200,
            grading: 2.0,
        };
        let u = TrajectoryGrid::zero(grid.build(), 2, params(2.0, 0, 4.0));
        let out = operator_f(&field, &[0.2, 0.1], &u).unwrap();
        let norm = weighted_norm(&out).unwrap();
        assert_eq!(norm, 0.0);
    }

    #[test]
    fn operator_linear_shift_hand_integral() {
        // u ≡ c constant and V = V₀: 𝔉(u)(t) = ∫ V₀(c) ds grows linearly.
        let field = TruncatedField::linear(&[2.0, -1.0], Bump::new(0.5, 1.0));
        let t_max = 4.0;
        let grid = GridSpec {
            t_max,
            nodes: 1500,
            grading: 0.0,
        };
        let c = [0.3, -0.2];
        let u = TrajectoryGrid::sample(grid.build(), 2, params(2.0, 0, 4.0), |_| c.to_vec());
        let out = operator_f(&field, &[0.0, 0.0], &u).unwrap();
        // At t = 0 the integral is ∫_{−4}^0 V₀(c) ds = 4·(2·0.3, −(−0.2)).
        let end = out.at_zero();
        assert!((end[0] - t_max * 2.0 * c[0]).abs() < 1e-9);
        assert!((end[1] - t_max * -1.0 * c[1]).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_on_linear_field_is_trivial() {
        let field = TruncatedField::linear(&[1.0, -1.618], Bump::new(0.5, 1.0));
        let grid = GridSpec {
            t_max: 8.0,
            nodes: 400,
            grading: 2.0,
        };
        let (u, diag) = fixed_point_iterate(
            &field,
            &[0.2, 0.15],
            params(2.0, 0, 8.0),
            &grid,
            1e-13,
            50,
        )
        .unwrap();
        assert!(diag.converged);
        assert!(weighted_norm(&u).unwrap() < 1e-12);
        assert!((diag.phi[0] - 0.2).abs() < 1e-12);
        assert!((diag.phi[1] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_matches_exit_conjugacy() {
        use crate::flow::conjugacy_phi;
        let field = benchmark_field();
        let x = [0.2, 0.2];
        let delta = delta_min_heuristic(&field, 2.0);
        let grid = GridSpec {
            t_max: 8.0,
            nodes: 4000,
            grading: 2.0,
        };
        let (_, diag) = fixed_point_iterate(
            &field,
            &x,
            params(2.0, 0, delta),
            &grid,
            1e-12,
            120,
        )
        .unwrap();
        assert!(diag.converged, "ratios: {:?}", diag.ratios);
        let exit = conjugacy_phi(&field, &x, 1e-11).unwrap();
        for i in 0..2 {
            assert!(
                (diag.phi[i] - exit[i]).abs() < 5e-6,
                "component {i}: {} vs {}",
                diag.phi[i],
                exit[i]
            );
        }
        // Measured contraction is strict.
        let rho = diag.contraction_estimate().unwrap();
        assert!(rho < 1.0, "ρ = {rho}");
    }

    #[test]
    fn contraction_improves_with_delta() {
        let field = benchmark_field();
        let x = [0.2, 0.15];
        let delta = delta_min_heuristic(&field, 2.0);
        let grid = GridSpec {
            t_max: 8.0,
            nodes: 2000,
            grading: 2.0,
        };
        let rho_at = |d: f64| {
            let (_, diag) =
                fixed_point_iterate(&field, &x, params(2.0, 0, d), &grid, 1e-12, 120).unwrap();
            diag.contraction_estimate().unwrap()
        };
        let r1 = rho_at(delta);
        let r2 = rho_at(2.0 * delta);
        assert!(r1 < 1.0 && r2 < 1.0);
        assert!(r2 < r1, "ρ(2δ) = {r2} should beat ρ(δ) = {r1}");
    }

    #[test]
    fn graded_grid_shape() {
        let g = GridSpec {
            t_max: 10.0,
            nodes: 11,
            grading: 2.0,
        };
        let t = g.build();
        assert_eq!(t.len(), 11);
        assert_eq!(*t.last().unwrap(), 0.0);
        assert!((t[0] + 10.0).abs() < 1e-12);
        // Spacing shrinks toward t = 0.
        let first_gap = t[1] - t[0];
        let last_gap = t[10] - t[9];
        assert!(last_gap < first_gap);
    }
}
