//! Path following for V(Ψ₀, s) + t·s = 0 from t = 1 down to a small t.
//!
//! Ψ₀ is carried as a framed metric g₀·(0, 0, φ), and V(Ψ₀, s) is the compact
//! moment map of the frame e^{s/2}g₀, so the metric moves to g₀*e^{s}g₀ and the
//! deformation itself costs no discretization error. Starting from Ψ* with
//! s* = V(Ψ*), Ψ₀ = e^{s*/2}·Ψ* and s = −s* solve the t = 1 problem exactly.
//! When s* is too large for that product to survive in floating point,
//! `init_direct` starts from Ψ₀ = Ψ*, s = 0 and the t = 1 problem is solved by Newton.
//!
//! Each Newton step works around Ψ_cur = e^{s/2}·Ψ₀ and updates s through
//! e^{s'} = e^{s/2}e^{αδ}e^{s/2}; the step δ comes from (c/2)(−Δ_{Ψ_cur}) + t,
//! or from GMRES on finite-difference Jacobian products preconditioned by it.
//! Steps are damped by backtracking on the sup norm.

use crate::algebra::{hermitian_sum, HermTraceless, Mat2C};
use crate::config::{ConfigError, ConfigLaplacian, FramedMetric, HermitianField};
use crate::geometry::Grid3;
use crate::linsolve::fgmres;
use crate::model_solver::linear_fit;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("line search failed at t = {t} (α < {alpha_min})")]
    LineSearch { t: f64, alpha_min: f64 },
    #[error("t must be positive for a Newton step, got {0}")]
    NonPositiveT(f64),
    #[error("linear solve did not converge at t = {t} (relative residual {residual:e})")]
    LinearSolve { t: f64, residual: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationParams {
    /// Descending t values; the last one is the final t.
    pub schedule: Vec<f64>,
    /// Absolute tolerance on sup|V(Ψ₀, s) + t·s| at each t.
    pub step_tol: f64,
    pub max_steps_per_t: usize,
    /// Linearization constant c in c·(−Δ_Ψ).
    pub c: f64,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub alpha_min: f64,
    /// How many times a t-interval may be bisected after a failure.
    pub max_refinements: usize,
    pub jacobian_free: bool,
}

impl ContinuationParams {
    /// t_k = 2^{−k} down to t_final, then t_final itself.
    pub fn geometric(t_final: f64, step_tol: f64) -> Self {
        let mut schedule = vec![1.0];
        let mut t = 0.5;
        while t > t_final {
            schedule.push(t);
            t *= 0.5;
        }
        schedule.push(t_final);
        ContinuationParams {
            schedule,
            step_tol,
            max_steps_per_t: 25,
            c: 2.0,
            linear_tol: 1e-8,
            linear_max_iter: 400,
            alpha_min: 1e-4,
            max_refinements: 6,
            jacobian_free: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryRow {
    pub t: f64,
    pub residual: f64,
    pub steps: usize,
    pub alpha: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct ContinuationState {
    pub psi0: FramedMetric,
    pub t: f64,
    pub s: HermitianField,
    pub history: Vec<HistoryRow>,
}

impl ContinuationState {
    /// Frame of Ψ_cur = e^{s/2}·Ψ₀.
    pub fn current(&self) -> FramedMetric {
        self.psi0.deformed(&self.s.scale(0.5))
    }
}

/// V(Ψ₀, s).
pub fn v_of(psi0: &FramedMetric, s: &HermitianField) -> Result<Vec<Mat2C>, ConfigError> {
    psi0.deformed(&s.scale(0.5)).moment_map()
}

/// V(Ψ₀, s) + t·s and its interior sup.
pub fn step_residual(psi0: &FramedMetric, s: &HermitianField, t: f64) -> Result<(Vec<Mat2C>, f64), ConfigError> {
    let v = v_of(psi0, s)?;
    let r: Vec<Mat2C> = v.iter().zip(&s.values).map(|(v, s)| *v + s.matrix().scale(t)).collect();
    let sup = psi0.grid.sup_interior(|n| r[n].norm());
    Ok((r, sup))
}

#[derive(Clone, Debug, Serialize)]
pub struct InitReport {
    /// sup|V(Ψ*)| over interior nodes.
    pub s_star_sup: f64,
    /// Largest eigenvalue of s* anywhere.
    pub s_star_lambda: f64,
    /// sup|V(Ψ₀, −s*) − s*| over interior nodes; infinite if Ψ₀ broke down.
    pub identity_error: f64,
}

fn sup_v(grid: &Grid3, v: &[Mat2C]) -> f64 {
    grid.sup_interior(|n| v[n].norm())
}

/// Ψ₀ = e^{s*/2}·Ψ* and s = −s* at t = 1.
pub fn init_state(psi_star: &FramedMetric) -> Result<(ContinuationState, HermitianField, InitReport), ConfigError> {
    let grid = &psi_star.grid;
    let v = psi_star.moment_map()?;
    let s_star = HermitianField { values: v.iter().map(|m| HermTraceless::project(*m)).collect() };
    let s_star_sup = sup_v(grid, &v);
    let s_star_lambda = s_star.values.iter().map(|x| x.lambda()).fold(0.0, f64::max);
    let psi0 = psi_star.deformed(&s_star.scale(0.5));
    let s1 = s_star.scale(-1.0);
    let identity_error = match v_of(&psi0, &s1) {
        Ok(back) => {
            let e = grid.sup_interior(|n| (back[n] - s_star.values[n].matrix()).norm());
            if e.is_finite() {
                e
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    };
    let state = ContinuationState { psi0, t: 1.0, s: s1, history: Vec::new() };
    Ok((state, s_star, InitReport { s_star_sup, s_star_lambda, identity_error }))
}

/// Ψ₀ = Ψ*, s = 0, to be brought onto the t = 1 solution by Newton.
pub fn init_direct(psi_star: &FramedMetric) -> ContinuationState {
    ContinuationState {
        psi0: psi_star.clone(),
        t: 1.0,
        s: HermitianField::zero(psi_star.grid.len()),
        history: Vec::new(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepOutcome {
    pub residual_before: f64,
    pub residual_after: f64,
    pub alpha: f64,
    pub linear_iterations: usize,
}

/// s ⊕ δ: e^{s'} = e^{s/2}e^{δ}e^{s/2}.
fn update(s_half: &HermitianField, delta: &[HermTraceless], alpha: f64) -> HermitianField {
    HermitianField {
        values: delta
            .iter()
            .zip(&s_half.values)
            .map(|(d, h)| hermitian_sum(&d.scale(0.5 * alpha), h).scale(2.0))
            .collect(),
    }
}

fn flatten(r: &[Mat2C]) -> Vec<f64> {
    r.iter().flat_map(|m| m.pauli_coords()).collect()
}

fn unflatten(x: &[f64]) -> Vec<HermTraceless> {
    x.chunks_exact(3).map(|c| HermTraceless::from_coords([c[0], c[1], c[2]])).collect()
}

fn triples(x: &[f64]) -> Vec<[f64; 3]> {
    x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// One damped Newton step at fixed t > 0; the state is only updated on success.
pub fn newton_step(
    state: &mut ContinuationState,
    t: f64,
    params: &ContinuationParams,
) -> Result<StepOutcome, ContinuationError> {
    if !(t > 0.0) {
        return Err(ContinuationError::NonPositiveT(t));
    }
    let half = state.s.scale(0.5);
    let (r, before) = step_residual(&state.psi0, &state.s, t)?;
    let f0 = flatten(&r);
    let rhs: Vec<f64> = f0.iter().map(|x| -x).collect();
    let op = ConfigLaplacian::new(&state.current().configuration()?);
    let alpha_op = 0.5 * params.c;
    let mut delta = vec![0.0; f0.len()];
    let rep = if params.jacobian_free {
        let psi0 = &state.psi0;
        let s_scale = 1.0 + state.s.values.iter().map(|x| x.lambda()).fold(0.0, f64::max);
        let jac = |x: &[f64], y: &mut [f64]| {
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if xmax == 0.0 {
                y.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let eps = 1e-7 * s_scale / xmax;
            let rp = match step_residual(psi0, &update(&half, &unflatten(x), eps), t) {
                Ok((rp, _)) => rp,
                Err(_) => {
                    y.iter_mut().for_each(|v| *v = f64::NAN);
                    return;
                }
            };
            for (n, m) in rp.iter().enumerate() {
                let c = m.pauli_coords();
                for a in 0..3 {
                    y[3 * n + a] = (c[a] - f0[3 * n + a]) / eps;
                }
            }
        };
        let pre = |x: &[f64], z: &mut [f64]| {
            let (sol, _) = op.solve(alpha_op, t, &triples(x), 1e-3, 100);
            for (n, c) in sol.iter().enumerate() {
                z[3 * n..3 * n + 3].copy_from_slice(c);
            }
        };
        fgmres(jac, pre, &rhs, &mut delta, params.linear_tol, 30, params.linear_max_iter)
    } else {
        let (sol, rep) = op.solve(alpha_op, t, &triples(&rhs), params.linear_tol, params.linear_max_iter);
        for (n, c) in sol.iter().enumerate() {
            delta[3 * n..3 * n + 3].copy_from_slice(c);
        }
        rep
    };
    if !rep.converged && !(rep.relative_residual <= 0.5) {
        return Err(ContinuationError::LinearSolve { t, residual: rep.relative_residual });
    }
    let delta = unflatten(&delta);
    let mut alpha = 1.0;
    while alpha >= params.alpha_min {
        let s_new = update(&half, &delta, alpha);
        if let Ok((_, after)) = step_residual(&state.psi0, &s_new, t) {
            if after < before {
                state.s = s_new;
                state.t = t;
                return Ok(StepOutcome {
                    residual_before: before,
                    residual_after: after,
                    alpha,
                    linear_iterations: rep.iterations,
                });
            }
        }
        alpha *= 0.5;
    }
    Err(ContinuationError::LineSearch { t, alpha_min: params.alpha_min })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// sup ρ|s| over interior nodes, ρ = (|z|² + y²)^{1/2}.
    pub rho_s_sup: f64,
    /// max |s|/√y over the bottom layers (collar excluded).
    pub sqrt_y_constant: f64,
    /// Slope of log max|s| against log y over the bottom layers.
    pub bottom_slope: Option<f64>,
    /// Upper y of the layers used.
    pub bottom_y: f64,
}

/// Fits over layers k ≥ 2 with y ≤ `y_bottom`.
pub fn decay_report(grid: &Grid3, s: &HermitianField, y_bottom: f64) -> DecayReport {
    let norm = |n: usize| s.values[n].matrix().norm();
    let rho_s_sup = grid.sup_interior(|n| {
        let (i, j, k) = grid.ijk(n);
        (grid.z(i, j).norm_sqr() + grid.y[k] * grid.y[k]).sqrt() * norm(n)
    });
    let [n1, n2, ny] = grid.dims();
    let mut c: f64 = 0.0;
    let mut pts = Vec::new();
    for k in 2..ny - 2 {
        let y = grid.y[k];
        if y > y_bottom {
            break;
        }
        let mut m: f64 = 0.0;
        for j in 2..n2 - 2 {
            for i in 2..n1 - 2 {
                m = m.max(norm(grid.idx(i, j, k)));
            }
        }
        c = c.max(m / y.sqrt());
        if m > 0.0 {
            pts.push((y.ln(), m.ln()));
        }
    }
    let bottom_slope = (pts.len() >= 3).then(|| linear_fit(&pts).1);
    DecayReport { rho_s_sup, sqrt_y_constant: c, bottom_slope, bottom_y: y_bottom }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub success: bool,
    pub final_t: f64,
    /// sup|V(Ψ*)| and sup|V(Ψ₀, s)| at the end, over interior nodes.
    pub initial_v: f64,
    pub final_v: f64,
    pub decay: DecayReport,
}

/// Walks the schedule; a failed t is retried from the last accepted t through
/// the midpoint, up to `max_refinements` times.
pub fn run_schedule(
    state: &mut ContinuationState,
    params: &ContinuationParams,
    initial_v: f64,
    y_bottom: f64,
) -> RunOutcome {
    let grid = state.psi0.grid.clone();
    let mut pending: Vec<f64> = params.schedule.iter().rev().copied().filter(|&t| t <= state.t).collect();
    let mut refinements = 0;
    let mut success = true;
    while let Some(t) = pending.pop() {
        let saved = state.s.clone();
        let (mut res, mut steps, mut alpha) =
            (step_residual(&state.psi0, &state.s, t).map_or(f64::INFINITY, |r| r.1), 0, 1.0);
        let mut failed = false;
        while res > params.step_tol {
            if steps == params.max_steps_per_t {
                failed = true;
                break;
            }
            match newton_step(state, t, params) {
                Ok(out) => {
                    res = out.residual_after;
                    alpha = out.alpha;
                    steps += 1;
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        state.history.push(HistoryRow { t, residual: res, steps, alpha, accepted: !failed });
        if failed {
            state.s = saved;
            let last = state.t;
            if refinements == params.max_refinements || last <= t {
                success = false;
                break;
            }
            refinements += 1;
            pending.push(t);
            pending.push(0.5 * (t + last));
            continue;
        }
        state.t = t;
    }
    let final_v = v_of(&state.psi0, &state.s).map_or(f64::INFINITY, |v| sup_v(&grid, &v));
    RunOutcome { success, final_t: state.t, initial_v, final_v, decay: decay_report(&grid, &state.s, y_bottom) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::C64;
    use crate::config::{Higgs, MetricPair};
    use crate::geometry::GridSpec;
    use crate::poly::CPoly;

    fn smooth(g: &Grid3) -> FramedMetric {
        let m = MetricPair::new(
            g.sample(|x1, x2, y| 0.3 * (x1 * x2).sin() + y.sinh().ln()),
            g.sample(|x1, _, y| C64::new(0.1 * x1 * y, 0.05)),
            Higgs::lower(CPoly::one()),
        );
        FramedMetric::from_metric(g, &m).unwrap()
    }

    #[test]
    fn vanishing_residual_is_a_fixed_point() {
        let g = Grid3::new(GridSpec::cube([9, 9, 9], 1.0, 0.5, 2.0, 0.0)).unwrap();
        // H = I with φ = 0
        let psi = FramedMetric { grid: g.clone(), g: vec![Mat2C::IDENTITY; g.len()], phi: vec![Mat2C::ZERO; g.len()] };
        let (mut state, s_star, rep) = init_state(&psi).unwrap();
        assert_eq!(rep.s_star_sup, 0.0);
        assert!(s_star.values.iter().all(|v| v.matrix().max_abs() == 0.0));
        let params = ContinuationParams::geometric(1e-3, 1e-10);
        let out = run_schedule(&mut state, &params, 0.0, 1.0);
        assert!(out.success);
        assert_eq!(out.final_t, 1e-3);
        assert!(out.final_v < 1e-12);
        assert!(state.history.iter().all(|h| h.steps == 0));
    }

    #[test]
    fn init_identity_holds_to_rounding() {
        let g = Grid3::new(GridSpec::cube([11, 11, 11], 1.0, 0.5, 2.5, 0.0)).unwrap();
        let (state, s_star, rep) = init_state(&smooth(&g)).unwrap();
        assert!(rep.s_star_sup > 0.1);
        assert!(rep.identity_error < 1e-10 * rep.s_star_sup, "{rep:?}");
        let (_, r) = step_residual(&state.psi0, &state.s, 1.0).unwrap();
        assert!(r < 1e-10 * rep.s_star_sup);
        assert_eq!(s_star.len(), g.len());
    }

    #[test]
    fn newton_contracts_on_a_smooth_configuration() {
        let g = Grid3::new(GridSpec::cube([13, 13, 13], 1.0, 0.5, 2.5, 0.0)).unwrap();
        for jacobian_free in [false, true] {
            let mut state = init_direct(&smooth(&g));
            let mut params = ContinuationParams::geometric(0.5, 1e-9);
            params.jacobian_free = jacobian_free;
            let mut last = f64::INFINITY;
            while last > 1e-9 {
                let out = newton_step(&mut state, 0.5, &params).unwrap();
                assert!(out.residual_after < 0.5 * out.residual_before, "{out:?}");
                assert!(out.residual_before <= last);
                last = out.residual_after;
            }
            // history rows are written per t by run_schedule, not per step
            assert!(state.history.is_empty());
            assert!(matches!(newton_step(&mut state, 0.0, &params), Err(ContinuationError::NonPositiveT(_))));
        }
    }
}
