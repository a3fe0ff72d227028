//! The scalar model equation Δu + e^{−2u}|P(z)|² = 0 on the truncated grid.
//!
//! Each outer step solves the lifting equation
//! `Δv_{n+1} − C v_{n+1} = −e^{−2v_n}|P|² − C v_n` with Dirichlet data, written
//! in correction form `(−Δ_h + C)δ = Δ_h v_n + e^{−2v_n}|P|²`. Since `−Δ_h + C`
//! is an M-matrix, a discrete sub-solution seed produces a nondecreasing
//! sequence of sub-solutions whenever `C ≥ 2e^{−2v_n}|P|²` pointwise.

use crate::geometry::{Grid3, ScalarField};
use crate::linsolve::{Multigrid, SolveReport};
use crate::poly::CPoly;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("P vanishes on a boundary face near {0:?}; enable knotted mode")]
    BoundaryRoot((f64, f64, f64)),
    #[error("seed is not a discrete sub-solution (min residual {0:e})")]
    NotSubSolution(f64),
    #[error("monotonicity violated by {0:e}; relaxation too small")]
    Monotonicity(f64),
    #[error("inner linear solve did not converge: {0:?}")]
    InnerSolver(SolveReportSummary),
    #[error("outer iteration did not reach tolerance in {0} steps")]
    MaxIterations(usize),
    #[error("field length {0} does not match grid ({1} nodes)")]
    Length(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReportSummary {
    pub iterations: usize,
    pub relative_residual: f64,
}

impl From<&SolveReport> for SolveReportSummary {
    fn from(r: &SolveReport) -> Self {
        SolveReportSummary { iterations: r.iterations, relative_residual: r.relative_residual }
    }
}

/// Knotless data use ln(|P| sinh y); knotted data regularize with ε = h_min.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    Knotless,
    Knotted,
}

/// Relaxation constant of the lifting equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Relaxation {
    /// A single constant C.
    Scalar(f64),
    /// C(x) = 2e^{−2v_n(x)}|P(x)|² + floor, refreshed every outer step.
    Pointwise { floor: f64 },
}

#[derive(Clone, Debug)]
pub struct ModelProblem {
    pub p: CPoly,
    pub grid: Grid3,
    /// Dirichlet data; only face values are used.
    pub bc: ScalarField,
    pub relaxation: Relaxation,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
}

impl ModelProblem {
    pub fn new(p: CPoly, grid: Grid3, mode: BoundaryMode) -> Result<Self, ModelError> {
        let bc = boundary_data(&p, &grid, mode)?;
        Ok(ModelProblem {
            p,
            grid,
            bc,
            relaxation: Relaxation::Pointwise { floor: 0.0 },
            outer_tol: 1e-11,
            inner_tol: 1e-10,
            max_outer: 60,
        })
    }

    /// |P|² at every node.
    pub fn p_abs2(&self) -> ScalarField {
        p_abs2(&self.p, &self.grid)
    }
}

pub fn p_abs2(p: &CPoly, grid: &Grid3) -> ScalarField {
    grid.all_indices().map(|(_, i, j, _)| p.eval(grid.z(i, j)).norm_sqr()).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationReport {
    pub sup_change: Vec<f64>,
    pub residual: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    /// Most negative increment seen at each step.
    pub min_increment: Vec<f64>,
    pub monotonicity_violations: usize,
    pub final_residual: f64,
    pub iterations: usize,
}

fn is_face(grid: &Grid3, i: usize, j: usize, k: usize) -> bool {
    !grid.is_interior(i, j, k)
}

/// u_bc = ln(|P| sinh y), or ½ln(|P|² sinh² y + ε²) with ε = h_min when knotted.
///
/// Returned on the whole grid; callers read the face values.
pub fn boundary_data(p: &CPoly, grid: &Grid3, mode: BoundaryMode) -> Result<ScalarField, ModelError> {
    let eps = grid.h_min();
    let mut out = Vec::with_capacity(grid.len());
    for (_, i, j, k) in grid.all_indices() {
        let pa = p.eval(grid.z(i, j)).norm();
        let y = grid.y[k];
        let v = match mode {
            BoundaryMode::Knotless => {
                if pa < 1e-12 && is_face(grid, i, j, k) {
                    return Err(ModelError::BoundaryRoot((grid.x1[i], grid.x2[j], y)));
                }
                pa.ln() + y.sinh().ln()
            }
            BoundaryMode::Knotted => 0.5 * (pa * pa * y.sinh().powi(2) + eps * eps).ln(),
        };
        out.push(v);
    }
    Ok(out)
}

/// f(y) = y − C ln(y/C) − C for y ≥ C and 0 below; C¹ at y = C.
pub fn sub_profile(y: f64, c: f64) -> f64 {
    if y <= c {
        0.0
    } else {
        y - c * (y / c).ln() - c
    }
}

#[derive(Clone, Debug)]
pub struct Seeds {
    pub sub: ScalarField,
    pub sup: ScalarField,
}

/// Continuum seeds: u_super = u₀ˢ + y and u_sub = u₀ˢ + f(y), u₀ˢ = ln(y|P|).
///
/// In knotted mode u₀ˢ = ½ln(y²|P|² + ε²) (still a sub-solution) and the
/// super seed is ln y + ln(max|P| + ε/y_min) + y.
pub fn sub_super_seeds(p: &CPoly, grid: &Grid3, mode: BoundaryMode, c: f64) -> Seeds {
    let eps = grid.h_min();
    let pmax = grid.all_indices().map(|(_, i, j, _)| p.eval(grid.z(i, j)).norm()).fold(0.0, f64::max);
    let mut sub = Vec::with_capacity(grid.len());
    let mut sup = Vec::with_capacity(grid.len());
    for (_, i, j, k) in grid.all_indices() {
        let pa = p.eval(grid.z(i, j)).norm();
        let y = grid.y[k];
        match mode {
            BoundaryMode::Knotless => {
                let u0 = (y * pa).ln();
                sub.push(u0 + sub_profile(y, c));
                sup.push(u0 + y);
            }
            BoundaryMode::Knotted => {
                let u0 = 0.5 * (y * y * pa * pa + eps * eps).ln();
                sub.push(u0 + sub_profile(y, c));
                sup.push(y.ln() + (pmax + eps / grid.spec.y_min).ln() + y);
            }
        }
    }
    Seeds { sub, sup }
}

/// Interior values of Δ_h u + e^{−2u}|P|² (zero on faces).
pub fn model_residual(grid: &Grid3, u: &[f64], pa2: &[f64]) -> ScalarField {
    let mut r = vec![0.0; grid.len()];
    for (n, i, j, k) in grid.interior_indices() {
        r[n] = grid.laplacian_at(u, i, j, k) + (-2.0 * u[n]).exp() * pa2[n];
    }
    r
}

/// Lowers a continuum sub-solution by the smallest constant making it a
/// discrete sub-solution, then imposes the boundary data on the faces.
pub fn prepare_seed(prob: &ModelProblem, u_sub: &[f64]) -> ScalarField {
    let grid = &prob.grid;
    let pa2 = prob.p_abs2();
    let mut kappa: f64 = 0.0;
    for (n, i, j, k) in grid.interior_indices() {
        let lap = grid.laplacian_at(u_sub, i, j, k);
        let q = (-2.0 * u_sub[n]).exp() * pa2[n];
        if lap < 0.0 && q > 1e-300 {
            kappa = kappa.max(0.5 * (-lap / q).ln());
        }
    }
    let shift = if kappa > 0.0 { kappa + 1e-9 } else { 0.0 };
    let mut seed: ScalarField = u_sub.iter().map(|v| v - shift).collect();
    for (n, i, j, k) in grid.all_indices() {
        if is_face(grid, i, j, k) {
            seed[n] = prob.bc[n];
        }
    }
    seed
}

/// Monotone lifting iteration from a discrete sub-solution seed.
pub fn solve_monotone(prob: &ModelProblem, seed: &[f64]) -> Result<(ScalarField, IterationReport), ModelError> {
    solve_monotone_observed(prob, seed, |_, _| {})
}

/// As `solve_monotone`, calling `observe(n, v_n)` on every iterate including the seed.
pub fn solve_monotone_observed(
    prob: &ModelProblem,
    seed: &[f64],
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<(ScalarField, IterationReport), ModelError> {
    let grid = &prob.grid;
    if seed.len() != grid.len() {
        return Err(ModelError::Length(seed.len(), grid.len()));
    }
    let pa2 = prob.p_abs2();
    let mut v = seed.to_vec();
    for (n, i, j, k) in grid.all_indices() {
        if is_face(grid, i, j, k) {
            v[n] = prob.bc[n];
        }
    }
    let mut report = IterationReport::default();
    let mut r = model_residual(grid, &v, &pa2);
    let scale = grid.sup_interior(|n| (-2.0 * v[n]).exp() * pa2[n]).max(1.0);
    let rmin = grid.interior_indices().map(|(n, ..)| r[n]).fold(f64::INFINITY, f64::min);
    if rmin < -1e-9 * scale {
        return Err(ModelError::NotSubSolution(rmin));
    }
    observe(0, &v);
    let scalar_c = match prob.relaxation {
        Relaxation::Scalar(c) => Some(c),
        Relaxation::Pointwise { .. } => None,
    };
    let mut scalar_mg = scalar_c.map(|c| Multigrid::new(grid, &vec![c; grid.len()]));
    let mut delta = vec![0.0; grid.len()];
    for it in 1..=prob.max_outer {
        let res = grid.sup_interior(|n| r[n].abs());
        report.residual.push(res);
        let owned;
        let mg = match (&mut scalar_mg, prob.relaxation) {
            (Some(mg), _) => &*mg,
            (None, Relaxation::Pointwise { floor }) => {
                let coef: Vec<f64> = (0..grid.len()).map(|n| 2.0 * (-2.0 * v[n]).exp() * pa2[n] + floor).collect();
                owned = Multigrid::new(grid, &coef);
                &owned
            }
            (None, Relaxation::Scalar(_)) => unreachable!(),
        };
        delta.iter_mut().for_each(|d| *d = 0.0);
        let rep = mg.solve(&r, &mut delta, prob.inner_tol, 500);
        report.inner_iterations.push(rep.iterations);
        if !rep.converged && rep.relative_residual > prob.inner_tol * 100.0 {
            return Err(ModelError::InnerSolver((&rep).into()));
        }
        let mut dmin: f64 = 0.0;
        let mut dmax: f64 = 0.0;
        for (n, ..) in grid.interior_indices() {
            dmin = dmin.min(delta[n]);
            dmax = dmax.max(delta[n].abs());
            if delta[n] < -1e-12 {
                report.monotonicity_violations += 1;
            }
        }
        report.min_increment.push(dmin);
        if dmin < -1e-10 {
            return Err(ModelError::Monotonicity(dmin));
        }
        for (n, ..) in grid.interior_indices() {
            v[n] += delta[n];
        }
        observe(it, &v);
        report.sup_change.push(dmax);
        report.iterations = it;
        r = model_residual(grid, &v, &pa2);
        if dmax < prob.outer_tol {
            report.final_residual = grid.sup_interior(|n| r[n].abs());
            return Ok((v, report));
        }
    }
    report.final_residual = grid.sup_interior(|n| r[n].abs());
    Err(ModelError::MaxIterations(prob.max_outer))
}

/// Boundary data, seeds, seed preparation and the monotone solve in one call.
pub fn solve_model(p: &CPoly, grid: &Grid3, mode: BoundaryMode) -> Result<(ScalarField, IterationReport), ModelError> {
    let prob = ModelProblem::new(p.clone(), grid.clone(), mode)?;
    let seeds = sub_super_seeds(p, grid, mode, 1.0);
    let seed = prepare_seed(&prob, &seeds.sub);
    solve_monotone(&prob, &seed)
}

/// Default scalar relaxation 2·sup(e^{−2u_sub}|P|²) + 1.
pub fn default_scalar_relaxation(grid: &Grid3, u_sub: &[f64], pa2: &[f64]) -> f64 {
    2.0 * grid.sup_interior(|n| (-2.0 * u_sub[n]).exp() * pa2[n]) + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Sub,
    Super,
    Solution,
    Neither,
}

#[derive(Clone, Debug)]
pub struct SubSuperReport {
    /// −Δ_h u − e^{−2u}|P|² on interior nodes.
    pub signed_residual: ScalarField,
    pub classification: Classification,
    pub max_positive: f64,
    pub max_negative: f64,
}

/// Classifies u by the sign of −Δ_h u − e^{−2u}|P|² with slack
/// 1e-8 + 2·(estimated local truncation error).
pub fn check_sub_super(grid: &Grid3, u: &[f64], p: &CPoly) -> SubSuperReport {
    let pa2 = p_abs2(p, grid);
    let mut signed = vec![0.0; grid.len()];
    let (mut has_pos, mut has_neg) = (false, false);
    let (mut max_pos, mut max_neg): (f64, f64) = (0.0, 0.0);
    for (n, i, j, k) in grid.interior_indices() {
        let s = -grid.laplacian_at(u, i, j, k) - (-2.0 * u[n]).exp() * pa2[n];
        signed[n] = s;
        let slack = 1e-8 + 2.0 * truncation_estimate(grid, u, i, j, k);
        if s > slack {
            has_pos = true;
        }
        if s < -slack {
            has_neg = true;
        }
        max_pos = max_pos.max(s);
        max_neg = max_neg.min(s);
    }
    let classification = match (has_pos, has_neg) {
        (false, false) => Classification::Solution,
        (true, false) => Classification::Super,
        (false, true) => Classification::Sub,
        (true, true) => Classification::Neither,
    };
    SubSuperReport { signed_residual: signed, classification, max_positive: max_pos, max_negative: max_neg }
}

/// Leading truncation error of the three-point stencil, summed over axes:
/// |h₊ − h₋|/3·|u‴| + (h₊² − h₊h₋ + h₋²)/12·|u⁗|, with the derivatives taken
/// from divided differences on a five-node window shifted inside the box.
fn truncation_estimate(grid: &Grid3, u: &[f64], i: usize, j: usize, k: usize) -> f64 {
    let pos = [i, j, k];
    let dims = grid.dims();
    let mut total = 0.0;
    for axis in 0..3 {
        let n = dims[axis];
        let p = pos[axis];
        let start = p.saturating_sub(2).min(n - 5);
        let st = grid.stride(axis);
        let base = grid.idx(i, j, k) - (p - start) * st;
        let coord = |m: usize| match axis {
            0 => grid.x1[m],
            1 => grid.x2[m],
            _ => grid.y[m],
        };
        let xs: [f64; 5] = std::array::from_fn(|m| coord(start + m));
        let mut dd: [f64; 5] = std::array::from_fn(|m| u[base + m * st]);
        let mut d3 = 0.0;
        for order in 1..5 {
            for m in (order..5).rev() {
                dd[m] = (dd[m] - dd[m - 1]) / (xs[m] - xs[m - order]);
            }
            if order == 3 {
                d3 = dd[3].abs().max(dd[4].abs()) * 6.0;
            }
        }
        let d4 = dd[4].abs() * 24.0;
        let (lo, hi) = (coord(p) - coord(p - 1), coord(p + 1) - coord(p));
        total += (hi - lo).abs() / 3.0 * d3 + (hi * hi - hi * lo + lo * lo) / 12.0 * d4;
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// (y, max over the slice) for every layer.
    pub profile: Vec<(f64, f64)>,
    pub max_value: f64,
    /// Minimum over interior layers of the discrete second difference of the profile.
    pub min_second_difference: f64,
}

/// Slice maxima f(y) = max_{x} v(x, y) and their convexity.
pub fn comparison_diagnostic(grid: &Grid3, v: &[f64]) -> ComparisonReport {
    let [n1, n2, ny] = grid.dims();
    let mut profile = Vec::with_capacity(ny);
    for k in 0..ny {
        let mut m = f64::NEG_INFINITY;
        for j in 0..n2 {
            for i in 0..n1 {
                m = m.max(v[grid.idx(i, j, k)]);
            }
        }
        profile.push((grid.y[k], m));
    }
    let mut min_d2 = f64::INFINITY;
    for k in 1..ny - 1 {
        let w = grid.d2_weights(2, k);
        let d2 = w[0] * profile[k - 1].1 + w[1] * profile[k].1 + w[2] * profile[k + 1].1;
        min_d2 = min_d2.min(d2);
    }
    let max_value = profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    ComparisonReport { profile, max_value, min_second_difference: min_d2 }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsReport {
    /// Fitted a in |∂_y u − 1| ≈ K e^{−a y} over the top third; None when the deviation vanishes.
    pub top_decay_rate: Option<f64>,
    pub top_max_deviation: f64,
    /// Range of y·e^{−u}|P| over the bottom third.
    pub bottom_min: f64,
    pub bottom_max: f64,
}

/// Least-squares fits of the real-symmetry-breaking and Nahm-pole asymptotics.
pub fn asymptotics_fit(grid: &Grid3, u: &[f64], p: &CPoly) -> AsymptoticsReport {
    let [n1, n2, ny] = grid.dims();
    let top_start = (2 * ny) / 3;
    let mut pts = Vec::new();
    let mut top_max: f64 = 0.0;
    for k in top_start.max(1)..ny - 1 {
        let mut m: f64 = 0.0;
        for j in 1..n2 - 1 {
            for i in 1..n1 - 1 {
                m = m.max((grid.d(2, u, i, j, k) - 1.0).abs());
            }
        }
        top_max = top_max.max(m);
        if m > 1e-300 {
            pts.push((grid.y[k], m.ln()));
        }
    }
    let top_decay_rate = if pts.len() >= 2 && top_max > 1e-13 { Some(-linear_fit(&pts).1) } else { None };
    let (mut bmin, mut bmax) = (f64::INFINITY, 0.0f64);
    for k in 1..(ny / 3).max(2) {
        for j in 1..n2 - 1 {
            for i in 1..n1 - 1 {
                let n = grid.idx(i, j, k);
                let val = grid.y[k] * (-u[n]).exp() * p.eval(grid.z(i, j)).norm();
                bmin = bmin.min(val);
                bmax = bmax.max(val);
            }
        }
    }
    AsymptoticsReport { top_decay_rate, top_max_deviation: top_max, bottom_min: bmin, bottom_max: bmax }
}

/// Ordinary least squares y = a + b x; returns (a, b).
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;

    fn small_grid() -> Grid3 {
        Grid3::new(GridSpec::cube([17, 17, 33], 2.0, 0.05, 6.0, 3.0)).unwrap()
    }

    #[test]
    fn boundary_examples() {
        let g = small_grid();
        let bc = boundary_data(&CPoly::one(), &g, BoundaryMode::Knotless).unwrap();
        assert!((bc[g.idx(3, 4, 0)] - 0.05f64.sinh().ln()).abs() < 1e-15);
        let bc2 = boundary_data(&CPoly::from_real(&[2.0]), &g, BoundaryMode::Knotless).unwrap();
        assert!((bc2[5] - (2.0 * 0.05f64.sinh()).ln()).abs() < 1e-14);
        let err = boundary_data(&CPoly::z(), &g, BoundaryMode::Knotless);
        assert!(matches!(err, Err(ModelError::BoundaryRoot(_))));
        assert!(boundary_data(&CPoly::z(), &g, BoundaryMode::Knotted).is_ok());
    }

    #[test]
    fn sub_profile_glue() {
        for c in [1.0, 2.5] {
            assert_eq!(sub_profile(c, c), 0.0);
            let h = 1e-6;
            assert!(sub_profile(c + h, c).abs() < 1e-11);
            for y in [0.3, 1.0, 2.0, 7.0] {
                assert!(sub_profile(y, c) <= y);
            }
        }
    }

    #[test]
    fn exact_seed_converges_immediately() {
        let g = small_grid();
        let prob = ModelProblem::new(CPoly::one(), g.clone(), BoundaryMode::Knotless).unwrap();
        let exact = g.sample(|_, _, y| y.sinh().ln());
        // lower slightly to make the exact profile a discrete sub-solution
        let seed = prepare_seed(&prob, &exact);
        let (u, rep) = solve_monotone(&prob, &seed).unwrap();
        assert!(rep.iterations <= 4, "{rep:?}");
        assert_eq!(rep.monotonicity_violations, 0);
        let err = g.sup_all(|n| (u[n] - exact[n]).abs());
        assert!(err < 2e-2, "err {err}");
    }

    #[test]
    fn classification_examples() {
        let g = small_grid();
        let p = CPoly::one();
        let seeds = sub_super_seeds(&p, &g, BoundaryMode::Knotless, 1.0);
        assert_eq!(check_sub_super(&g, &seeds.sup, &p).classification, Classification::Super);
        assert_eq!(check_sub_super(&g, &seeds.sub, &p).classification, Classification::Sub);
        let exact = g.sample(|_, _, y| y.sinh().ln());
        assert_eq!(check_sub_super(&g, &exact, &p).classification, Classification::Solution);
    }

    #[test]
    fn comparison_examples() {
        let g = small_grid();
        let zero = vec![0.0; g.len()];
        let rep = comparison_diagnostic(&g, &zero);
        assert_eq!(rep.max_value, 0.0);
        assert_eq!(rep.min_second_difference, 0.0);
        let v = g.sample(|_, _, y| -y * y);
        let rep = comparison_diagnostic(&g, &v);
        assert!((rep.min_second_difference + 2.0).abs() < 1e-9);
        assert!((rep.profile[3].1 + g.y[3] * g.y[3]).abs() < 1e-15);
    }

    #[test]
    fn asymptotics_examples() {
        let g = Grid3::new(GridSpec::cube([9, 9, 65], 1.0, 0.05, 6.0, 0.0)).unwrap();
        let u = g.sample(|_, _, y| y.sinh().ln());
        let rep = asymptotics_fit(&g, &u, &CPoly::one());
        let rate = rep.top_decay_rate.unwrap();
        assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
        assert!(rep.bottom_max <= 1.0);
        let lin = g.sample(|_, _, y| y);
        assert!(asymptotics_fit(&g, &lin, &CPoly::one()).top_decay_rate.is_none());
    }

    #[test]
    fn fit_is_exact_on_lines() {
        let (a, b) = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((a - 1.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
    }
}
