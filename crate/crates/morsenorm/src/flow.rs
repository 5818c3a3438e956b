//! Numerical flows: the closed-form linear flow `F_t`, the adaptively
//! integrated nonlinear flow `G_t` of the bump-truncated field, and the
//! exit-time construction of the conjugacy `Φ = lim G_t∘F_{−t}` together
//! with the on-manifold conjugacies `Ψ_u`, `Ψ_s`.

use serde::Serialize;
use thiserror::Error;

use crate::coeff::Coefficient;
use crate::field::PolyVectorField;

#[derive(Debug, Error, Clone)]
pub enum FlowError {
    #[error("exponential overflow in linear flow: λ·t = {exponent}")]
    Overflow { exponent: f64 },
    #[error("step size underflow at t = {t}; last state {state:?}")]
    StepSizeUnderflow { t: f64, state: Vec<f64> },
    #[error("point lies outside the chart: |x| = {norm} ≥ {bound}")]
    OutsideChart { norm: f64, bound: f64 },
    #[error("manifold limit did not converge within T = {t_cap}; residual {residual:.3e}")]
    ManifoldNonConvergence { t_cap: f64, residual: f64 },
    #[error("point is not on the {side} block: off-block norm {off:.3e}")]
    OffBlock { side: &'static str, off: f64 },
}

/// Radial C^∞ cutoff built from the `exp(−1/t)` profile: identically 1 for
/// `|x| ≤ r_in`, identically 0 for `|x| ≥ r_out`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bump {
    pub r_in: f64,
    pub r_out: f64,
}

impl Bump {
    pub fn new(r_in: f64, r_out: f64) -> Self {
        assert!(0.0 < r_in && r_in < r_out, "bump radii must satisfy 0 < r_in < r_out");
        Bump { r_in, r_out }
    }

    fn profile(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }

    /// χ(ρ): exactly 1 below `r_in`, exactly 0 above `r_out`.
    pub fn chi(&self, rho: f64) -> f64 {
        let w = self.r_out - self.r_in;
        let up = Self::profile((self.r_out - rho) / w);
        let down = Self::profile((rho - self.r_in) / w);
        if up == 0.0 {
            0.0
        } else {
            up / (up + down)
        }
    }
}

/// The analyzed field truncated to agree with its linear part outside a
/// compact ball: `x ↦ V₀(x) + χ(|x|)·(V−V₀)(x)`.
#[derive(Debug, Clone)]
pub struct TruncatedField {
    lambda: Vec<f64>,
    residual: PolyVectorField<f64>,
    bump: Bump,
}

impl TruncatedField {
    /// `field` must have linear part `diag(λ)`; the remainder is bumped.
    pub fn new<C: Coefficient>(
        field: &PolyVectorField<C>,
        lambda: &[f64],
        bump: Bump,
    ) -> Self {
        let f = field.map_coeff(|c| c.to_f64());
        let residual = f.residual().expect("residual of valid field");
        assert_eq!(lambda.len(), field.dimension());
        TruncatedField {
            lambda: lambda.to_vec(),
            residual,
            bump,
        }
    }

    /// Purely linear field (empty residual).
    pub fn linear(lambda: &[f64], bump: Bump) -> Self {
        let v0 = PolyVectorField::standard_form(&lambda.iter().copied().collect::<Vec<f64>>(), 2);
        TruncatedField {
            lambda: lambda.to_vec(),
            residual: v0.residual().expect("zero residual"),
            bump,
        }
    }

    pub fn dimension(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn bump(&self) -> Bump {
        self.bump
    }

    pub fn residual_field(&self) -> &PolyVectorField<f64> {
        &self.residual
    }

    /// Evaluate the truncated field.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let rho = norm2(x);
        let chi = self.bump.chi(rho);
        let mut out: Vec<f64> = (0..x.len()).map(|i| self.lambda[i] * x[i]).collect();
        if chi != 0.0 {
            let res = self.residual.eval_f64(x);
            for i in 0..x.len() {
                out[i] += chi * res[i];
            }
        }
        out
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Closed-form linear flow `F_t(x)ᵢ = xᵢ·e^{λᵢt}`; satisfies the group law
/// to round-off.
pub fn flow_f(lambda: &[f64], x: &[f64], t: f64) -> Result<Vec<f64>, FlowError> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let e = lambda[i] * t;
        if e > 700.0 {
            return Err(FlowError::Overflow { exponent: e });
        }
        out.push(x[i] * e.exp());
    }
    Ok(out)
}

// Dormand–Prince 5(4) embedded pair.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) with a PI step controller. Deterministic
/// for fixed `(x, t, tol)`.
pub fn flow_g(field: &TruncatedField, x: &[f64], t: f64, tol: f64) -> Result<Vec<f64>, FlowError> {
    integrate(|y| field.eval(y), x, t, tol)
}

/// Generic driver used by `flow_g` and the trajectory samplers.
pub fn integrate(
    rhs: impl Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Vec<f64>, FlowError> {
    if t_end == 0.0 {
        return Ok(x0.to_vec());
    }
    let n = x0.len();
    let dir = t_end.signum();
    let total = t_end.abs();
    let mut y = x0.to_vec();
    let mut t = 0.0f64;
    let mut h = (total / 100.0).min(0.1).max(1e-8);
    let mut err_prev: f64 = 1.0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = rhs(&y);
    let mut steps = 0usize;
    while t < total {
        if steps > 2_000_000 {
            return Err(FlowError::StepSizeUnderflow { t: dir * t, state: y });
        }
        steps += 1;
        let h_eff = h.min(total - t);
        // Stages.
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = if s < 6 { A[s - 1][j] } else { B5[j] };
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += dir * h_eff * a * kj[i];
                    }
                }
            }
            k[s] = rhs(&ys);
        }
        // 5th-order solution and embedded error. The error scale is
        // relative to the solution and local increment magnitudes (with a
        // denormal floor), not to an absolute unit: trajectories here decay
        // or grow exponentially and are later re-amplified by e^{λT}, so
        // relative accuracy must survive arbitrarily small |y|.
        let mut y5 = y.clone();
        let mut err = 0.0f64;
        let mut scale_norm = 0.0f64;
        for i in 0..n {
            let mut dy5 = 0.0;
            let mut dy4 = 0.0;
            for s in 0..7 {
                dy5 += B5[s] * k[s][i];
                dy4 += B4[s] * k[s][i];
            }
            let v5 = y[i] + dir * h_eff * dy5;
            let mag = y[i].abs().max(v5.abs()) + h_eff * k[0][i].abs();
            let scale = tol * mag + 1e-300;
            err += ((dir * h_eff * (dy5 - dy4)) / scale).powi(2);
            scale_norm += 1.0;
            y5[i] = v5;
        }
        let err = (err / scale_norm).sqrt();
        if err <= 1.0 {
            t += h_eff;
            // FSAL: stage 7 is the derivative at the new point.
            k[0] = k[6].clone();
            y = y5;
            // PI controller.
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h = h_eff * fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-10);
        } else {
            h = h_eff * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-14 * total.max(1.0) {
            return Err(FlowError::StepSizeUnderflow { t: dir * t, state: y });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(FlowError::StepSizeUnderflow { t: dir * t, state: y });
        }
    }
    Ok(y)
}

/// First time `t ≥ 0` with `|F_{−t}(x)| ≥ r_out`, or `None` when the
/// backward linear flow never exits (all components on stable directions
/// vanish). `h(t) = ∑xᵢ²e^{−2λᵢt}` is convex, so after the first crossing
/// the flow stays outside.
pub fn exit_time(lambda: &[f64], x: &[f64], r_out: f64) -> Option<f64> {
    let h = |t: f64| -> f64 {
        x.iter()
            .zip(lambda)
            .map(|(xi, li)| xi * xi * (-2.0 * li * t).exp())
            .sum::<f64>()
    };
    let target = r_out * r_out;
    if h(0.0) >= target {
        return Some(0.0);
    }
    // Backward growth comes from components with λᵢ < 0.
    let growing = x
        .iter()
        .zip(lambda)
        .any(|(xi, li)| *li < 0.0 && xi.abs() > 0.0);
    if !growing {
        return None;
    }
    // Closed-form single-component candidates bound the crossing above:
    // |xᵢ|e^{|λᵢ|t} = r_out.
    let mut t_hi = f64::INFINITY;
    for (xi, li) in x.iter().zip(lambda) {
        if *li < 0.0 && xi.abs() > 0.0 {
            let t = (r_out / xi.abs()).ln() / li.abs();
            t_hi = t_hi.min(t.max(0.0));
        }
    }
    debug_assert!(t_hi.is_finite());
    // Make sure the bracket is valid, then bisect the unique up-crossing.
    let mut hi = t_hi;
    while h(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Exit-time conjugacy `Φ(x) = G_{T*}(F_{−T*}(x))`, with the manifold rule
/// `Φ(x) = x` when the backward linear flow never leaves the bump (the
/// stable components of `x` all vanish). Stationary in the horizon: for
/// `T ≥ T*` the value is unchanged because `G = F` outside the bump.
pub fn conjugacy_phi(field: &TruncatedField, x: &[f64], tol: f64) -> Result<Vec<f64>, FlowError> {
    let r_out = field.bump().r_out;
    let nx = norm2(x);
    if nx >= r_out {
        return Err(FlowError::OutsideChart {
            norm: nx,
            bound: r_out,
        });
    }
    match exit_time(field.lambda(), x, r_out) {
        None => Ok(x.to_vec()),
        Some(t_star) => {
            let y = flow_f(field.lambda(), x, -t_star)?;
            flow_g(field, &y, t_star, tol)
        }
    }
}

/// On-manifold conjugacy `Ψ_u = lim_{T→∞} F_T∘G_{−T}` (unstable block) or
/// `Ψ_s = lim F_{−T}∘G_T` (stable block).
///
/// The nonlinear flow is run toward the critical point until `|G_∓T(x)|`
/// drops below `eps_stop`, then the linear flow blows the limit back up;
/// convergence is confirmed by a Richardson check at the doubled horizon.
pub fn conjugacy_psi_manifold(
    field: &TruncatedField,
    x: &[f64],
    unstable: bool,
    tol: f64,
) -> Result<Vec<f64>, FlowError> {
    let n = field.dimension();
    let lambda = field.lambda();
    // The point must lie on the invariant block.
    let mut off = 0.0f64;
    for i in 0..n {
        let on_block = if unstable { lambda[i] > 0.0 } else { lambda[i] < 0.0 };
        if !on_block {
            off = off.max(x[i].abs());
        }
    }
    if off > 1e-12 * (1.0 + norm2(x)) {
        return Err(FlowError::OffBlock {
            side: if unstable { "unstable" } else { "stable" },
            off,
        });
    }
    let min_rate = lambda
        .iter()
        .filter(|l| if unstable { **l > 0.0 } else { **l < 0.0 })
        .fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let t_cap = 400.0 / min_rate;
    let eval_at = |t_total: f64| -> Result<Vec<f64>, FlowError> {
        let dir = if unstable { -1.0 } else { 1.0 };
        let y = flow_g(field, x, dir * t_total, tol)?;
        flow_f(lambda, &y, -dir * t_total)
    };
    // Find a horizon where the contracted point is small, then Richardson.
    let mut t = 4.0 / min_rate;
    let eps_stop = 1e-9;
    loop {
        let dir = if unstable { -1.0 } else { 1.0 };
        let y = flow_g(field, x, dir * t, tol)?;
        if norm2(&y) < eps_stop || t >= t_cap {
            break;
        }
        t *= 2.0;
    }
    let first = eval_at(t)?;
    let second = eval_at(2.0 * t)?;
    let residual = first
        .iter()
        .zip(&second)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if residual > 100.0 * tol.max(1e-12) && t >= t_cap {
        return Err(FlowError::ManifoldNonConvergence { t_cap, residual });
    }
    Ok(second)
}
