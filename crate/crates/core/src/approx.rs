//! Approximate solution (H*, φ) for a triple (P, Q, R) with φ = [[0, 0], [P, 0]].
//!
//! Far frame: h = e^{u₃}, w = χ(|z|/y)·R/Q with χ = 0 for |z|/y ≤ 1 and χ = 1
//! for |z|/y ≥ 2. Near frame: the basis change u = [[Q, T], [−R, S]] with
//! QS + TR = 1 turns φ into [[−PQT, −PT²], [PQ², PQT]] and the metric into
//! diag(e^{u₃'}, e^{−u₃'}), u₃' the knotted solution for PQ². The two are joined
//! by a product cutoff in |z| and y; the middle of the box simply carries the
//! blended fields.

use crate::algebra::{Mat2C, MetricMatrix, C64};
use crate::config::{
    moment_map, psi_from_metric, residual_first, special1_point, ConfigError, ConfigLaplacian, Configuration,
    FramedMetric, HermitianField, Higgs, MetricPair, Special1Point,
};
use crate::geometry::{ComplexField, Cutoff, Grid3, ScalarField};
use crate::linsolve::SolveReport;
use crate::model_solver::linear_fit;
use crate::poly::{bezout, bezout_residual, resultant, CPoly, PolyError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("invalid triple: {0}")]
    Triple(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("root {root} of Q lies where the far-frame cutoff is nonzero (y = {y})")]
    RootInCutoff { root: C64, y: f64 },
    #[error("near and far regions do not overlap on this grid")]
    EmptyOverlap,
    #[error("field length {0} does not match grid ({1} nodes)")]
    Length(usize, usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("correction solve did not converge (relative residual {0:e})")]
    Solve(f64),
}

/// Monic P, Q with deg R < deg Q and Q, R coprime.
#[derive(Clone, Debug, PartialEq)]
pub struct TriplePQR {
    pub p: CPoly,
    pub q: CPoly,
    pub r: CPoly,
}

impl TriplePQR {
    pub fn new(p: CPoly, q: CPoly, r: CPoly) -> Result<Self, ApproxError> {
        if !p.is_monic() || !q.is_monic() {
            return Err(ApproxError::Triple("P and Q must be monic".into()));
        }
        if !r.is_zero() && r.degree() >= q.degree() {
            return Err(ApproxError::Triple(format!("deg R = {} must be below deg Q = {}", r.degree(), q.degree())));
        }
        if r.is_zero() && q.degree() > 0 {
            return Err(ApproxError::Triple("R = 0 requires Q = 1".into()));
        }
        let t = TriplePQR { p, q, r };
        t.bezout()?;
        Ok(t)
    }

    /// The trivial triple (P, 1, 0).
    pub fn trivial(p: CPoly) -> Self {
        TriplePQR { p, q: CPoly::one(), r: CPoly::zero() }
    }

    /// (S, T) with QS + TR = 1.
    pub fn bezout(&self) -> Result<(CPoly, CPoly), ApproxError> {
        Ok(bezout(&self.q, &self.r)?)
    }

    pub fn resultant(&self) -> C64 {
        resultant(&self.q, &self.r)
    }

    /// PQ², the polynomial of the near-frame model equation.
    pub fn knotted_p(&self) -> CPoly {
        self.p.mul(&self.q).mul(&self.q)
    }

    /// The near-frame Higgs field [[−PQT, −PT²], [PQ², PQT]].
    pub fn near_higgs(&self) -> Result<Higgs, ApproxError> {
        let (_, t) = self.bezout()?;
        let pq = self.p.mul(&self.q);
        Ok(Higgs {
            a: pq.mul(&t).scale(C64::new(-1.0, 0.0)),
            b: self.p.mul(&t).mul(&t).scale(C64::new(-1.0, 0.0)),
            p: pq.mul(&self.q),
        })
    }

    fn max_root_q(&self) -> f64 {
        self.q.roots().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Region thresholds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regions {
    /// Far region: ρ = (|z|² + y²)^{1/2} ≥ rho_far.
    pub rho_far: f64,
    /// Near frame is used where |z| ≤ z_near.0 and y ≤ y_near.0; cut off by z_near.1, y_near.1.
    pub z_near: (f64, f64),
    pub y_near: (f64, f64),
    /// Annulus cutoff in |z|/y.
    pub annulus: (f64, f64),
}

impl Regions {
    pub fn for_triple(t: &TriplePQR) -> Self {
        let rr = t.max_root_q();
        let za = (2.0 * rr).max(1.0);
        Regions { rho_far: (2.0 * rr).max(4.0), z_near: (za, za + 1.0), y_near: (0.5, 1.0), annulus: (1.0, 2.0) }
    }

    /// Weight of the near frame, 1 on the near region and 0 on the far frame.
    pub fn near_weight(&self, z: C64, y: f64) -> f64 {
        let kz = Cutoff { a: self.z_near.0, b: self.z_near.1 }.eval(z.norm());
        if kz == 0.0 {
            return 0.0;
        }
        kz * Cutoff { a: self.y_near.0, b: self.y_near.1 }.eval(y)
    }

    fn annulus_cutoff(&self) -> Cutoff {
        Cutoff { a: self.annulus.0, b: self.annulus.1 }
    }

    /// χ(|z|/y) = 1 − K(|z|/y).
    pub fn chi(&self, z: C64, y: f64) -> f64 {
        1.0 - self.annulus_cutoff().eval(z.norm() / y)
    }
}

/// Far-frame fields with exact w derivatives.
#[derive(Clone, Debug)]
pub struct FarMetric {
    pub u: ScalarField,
    pub w: ComplexField,
    pub dbar_w: ComplexField,
    pub dy_w: ComplexField,
    pub lap_w: ComplexField,
}

/// w = χ(t)g with t = |z|/y and g = R/Q: (w, ∂̄w, ∂_y w, Δw).
fn far_w(cut: &Cutoff, g: C64, dg: C64, z: C64, y: f64) -> (C64, C64, C64, C64) {
    let az = z.norm();
    let t = az / y;
    let chi = 1.0 - cut.eval(t);
    let c1 = -cut.deriv(t);
    let c2 = -cut.deriv2(t);
    let w = g * chi;
    if c1 == 0.0 && c2 == 0.0 {
        return (w, C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    }
    let dbar_t = z / (2.0 * az * y);
    let dy_t = -az / (y * y);
    let grad2 = 1.0 / (y * y) + az * az / (y * y * y * y);
    let lap_t = 1.0 / (az * y) + 2.0 * az / (y * y * y);
    let dbar = g * dbar_t * c1;
    let dyw = g * (c1 * dy_t);
    let lap = g * (c2 * grad2 + c1 * lap_t) + dg * z * (2.0 * c1 / (az * y));
    (w, dbar, dyw, lap)
}

/// h = e^{u₃}, w = χ(|z|/y)·R/Q, evaluated where the far frame carries weight.
pub fn build_far(u3: &[f64], triple: &TriplePQR, grid: &Grid3, regions: &Regions) -> Result<FarMetric, ApproxError> {
    if u3.len() != grid.len() {
        return Err(ApproxError::Length(u3.len(), grid.len()));
    }
    let cut = regions.annulus_cutoff();
    for root in triple.q.roots() {
        if root.re.abs() > grid.spec.l1 || root.im.abs() > grid.spec.l2 {
            continue;
        }
        for &y in &grid.y {
            if regions.near_weight(root, y) < 1.0 && 1.0 - cut.eval(root.norm() / y) > 0.0 {
                return Err(ApproxError::RootInCutoff { root, y });
            }
        }
    }
    let zero = C64::new(0.0, 0.0);
    let mut far = FarMetric {
        u: u3.to_vec(),
        w: vec![zero; grid.len()],
        dbar_w: vec![zero; grid.len()],
        dy_w: vec![zero; grid.len()],
        lap_w: vec![zero; grid.len()],
    };
    if triple.r.is_zero() {
        return Ok(far);
    }
    for (n, i, j, k) in grid.all_indices() {
        let z = grid.z(i, j);
        let y = grid.y[k];
        if regions.near_weight(z, y) == 1.0 || 1.0 - cut.eval(z.norm() / y) == 0.0 {
            continue;
        }
        let (q, dq, _) = triple.q.eval_derivs(z);
        let (r, dr, _) = triple.r.eval_derivs(z);
        let g = r / q;
        let dg = (dr * q - r * dq) / (q * q);
        let (w, dbar, dy, lap) = far_w(&cut, g, dg, z, y);
        far.w[n] = w;
        far.dbar_w[n] = dbar;
        far.dy_w[n] = dy;
        far.lap_w[n] = lap;
    }
    Ok(far)
}

/// Near-frame fields: h̃ = 1/H₂[1][1], w̃ = H₂[1][0]·h̃.
#[derive(Clone, Debug)]
pub struct NearMetric {
    pub u: ScalarField,
    pub w: ComplexField,
    pub h2: Vec<Mat2C>,
    pub u3p: ScalarField,
    pub s: CPoly,
    pub t: CPoly,
}

/// H₂ = [[S̄, R̄], [−T̄, Q̄]]·diag(e^{u'}, e^{−u'})·[[S, −T], [R, Q]].
pub fn near_h2(q: C64, r: C64, s: C64, t: C64, u3p: f64) -> Mat2C {
    let (e, em) = (u3p.exp(), (-u3p).exp());
    Mat2C::new(
        C64::new(s.norm_sqr() * e + em * r.norm_sqr(), 0.0),
        -t * s.conj() * e + r.conj() * q * em,
        -t.conj() * s * e + r * q.conj() * em,
        C64::new(t.norm_sqr() * e + q.norm_sqr() * em, 0.0),
    )
}

pub fn build_near(triple: &TriplePQR, grid: &Grid3, u3p: &[f64]) -> Result<NearMetric, ApproxError> {
    if u3p.len() != grid.len() {
        return Err(ApproxError::Length(u3p.len(), grid.len()));
    }
    let (s, t) = triple.bezout()?;
    let mut out = NearMetric {
        u: Vec::with_capacity(grid.len()),
        w: Vec::with_capacity(grid.len()),
        h2: Vec::with_capacity(grid.len()),
        u3p: u3p.to_vec(),
        s: s.clone(),
        t: t.clone(),
    };
    for (n, i, j, _) in grid.all_indices() {
        let z = grid.z(i, j);
        let h2 = near_h2(triple.q.eval(z), triple.r.eval(z), s.eval(z), t.eval(z), u3p[n]);
        let inv_h = h2.d().re;
        out.u.push(-inv_h.ln());
        out.w.push(h2.c() / inv_h);
        out.h2.push(h2);
    }
    Ok(out)
}

impl NearMetric {
    /// max |det H₂ − 1| over all nodes.
    pub fn det_error(&self) -> f64 {
        self.h2.iter().map(|m| (m.det() - 1.0).norm()).fold(0.0, f64::max)
    }

    /// Preferred configuration of the near-frame pair (diag(e^{u₃'}, e^{−u₃'}), u⁻¹φu).
    pub fn frame_configuration(&self, grid: &Grid3, triple: &TriplePQR) -> Result<Configuration, ApproxError> {
        let m = MetricPair::new(self.u3p.clone(), vec![C64::new(0.0, 0.0); grid.len()], triple.near_higgs()?);
        Ok(psi_from_metric(grid, &m)?)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlendReport {
    /// (y, max |ũ − u₃|, max |w̃ − R/Q|) over the |z| transition strip below y_near.
    pub layers: Vec<(f64, f64, f64)>,
    pub slope_u: Option<f64>,
    pub slope_w: Option<f64>,
}

#[derive(Clone, Debug, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    Near,
    Blend,
    Far,
}

#[derive(Clone, Debug)]
pub struct GluedMetric {
    pub u: ScalarField,
    pub w: ComplexField,
    /// Near-frame weight β.
    pub weight: ScalarField,
    pub region: Vec<Region>,
    /// w derivatives, exact on far-frame nodes and by finite differences elsewhere.
    pub dbar_w: ComplexField,
    pub dy_w: ComplexField,
    pub lap_w: ComplexField,
    pub s: CPoly,
    pub t: CPoly,
    pub regions: Regions,
    pub blend: BlendReport,
}

/// far + β(near − far), exactly `far` where β = 0 and exactly `near` where β = 1.
pub fn glue(grid: &Grid3, far: &FarMetric, near: &NearMetric, regions: &Regions) -> Result<GluedMetric, ApproxError> {
    let len = grid.len();
    let mut u = Vec::with_capacity(len);
    let mut w = Vec::with_capacity(len);
    let mut weight = Vec::with_capacity(len);
    let mut region = Vec::with_capacity(len);
    for (n, i, j, k) in grid.all_indices() {
        let b = regions.near_weight(grid.z(i, j), grid.y[k]);
        weight.push(b);
        if b == 0.0 {
            u.push(far.u[n]);
            w.push(far.w[n]);
            region.push(Region::Far);
        } else if b == 1.0 {
            u.push(near.u[n]);
            w.push(near.w[n]);
            region.push(Region::Near);
        } else {
            u.push(far.u[n] + b * (near.u[n] - far.u[n]));
            w.push(far.w[n] + (near.w[n] - far.w[n]) * b);
            region.push(Region::Blend);
        }
    }
    if !region.iter().any(|r| *r == Region::Blend) {
        return Err(ApproxError::EmptyOverlap);
    }
    let zero = C64::new(0.0, 0.0);
    let mut dbar_w = vec![zero; len];
    let mut dy_w = vec![zero; len];
    let mut lap_w = vec![zero; len];
    for (n, i, j, k) in grid.all_indices() {
        if region[n] == Region::Far {
            dbar_w[n] = far.dbar_w[n];
            dy_w[n] = far.dy_w[n];
            lap_w[n] = far.lap_w[n];
        } else {
            dbar_w[n] = grid.dbar_at(&w, i, j, k);
            dy_w[n] = grid.d(2, &w, i, j, k);
            if grid.is_interior(i, j, k) {
                lap_w[n] = grid.laplacian_at(&w, i, j, k);
            }
        }
    }
    let blend = blend_report(grid, far, near, regions);
    Ok(GluedMetric {
        u,
        w,
        weight,
        region,
        dbar_w,
        dy_w,
        lap_w,
        s: near.s.clone(),
        t: near.t.clone(),
        regions: regions.clone(),
        blend,
    })
}

fn blend_report(grid: &Grid3, far: &FarMetric, near: &NearMetric, regions: &Regions) -> BlendReport {
    let mut layers = Vec::new();
    for k in 0..grid.ny() {
        let y = grid.y[k];
        if y > regions.y_near.0 {
            break;
        }
        let (mut du, mut dw) = (0.0f64, 0.0f64);
        let mut any = false;
        for j in 0..grid.n2() {
            for i in 0..grid.n1() {
                let az = grid.z(i, j).norm();
                if az < regions.z_near.0 || az > regions.z_near.1 {
                    continue;
                }
                let n = grid.idx(i, j, k);
                any = true;
                du = du.max((near.u[n] - far.u[n]).abs());
                dw = dw.max((near.w[n] - far.w[n]).norm());
            }
        }
        if any {
            layers.push((y, du, dw));
        }
    }
    let fit = |sel: fn(&(f64, f64, f64)) -> f64| {
        let pts: Vec<(f64, f64)> = layers.iter().filter(|l| sel(l) > 1e-300).map(|l| (l.0.ln(), sel(l).ln())).collect();
        (pts.len() >= 3).then(|| linear_fit(&pts).1)
    };
    let slope_u = fit(|l| l.1);
    let slope_w = fit(|l| l.2);
    BlendReport { layers, slope_u, slope_w }
}

/// Ψ* = Ψ_{H*, φ} with φ = [[0, 0], [P, 0]].
pub fn assemble(grid: &Grid3, g: &GluedMetric, p: &CPoly) -> Result<Configuration, ApproxError> {
    let m = MetricPair::new(g.u.clone(), g.w.clone(), Higgs::lower(p.clone()));
    Ok(psi_from_metric(grid, &m)?)
}

/// The glued metric rewritten in the near frame, u*H*u with u = [[Q, T], [−R, S]],
/// paired with u⁻¹φu. On the near region this is (u₃', 0) exactly.
///
/// Both frames give SU(2)-equivalent configurations, but the far frame has
/// structure of width e^{u₃'} around the roots of Q that no grid resolves; the
/// near frame is smooth there.
pub fn near_frame_metric(
    grid: &Grid3,
    g: &GluedMetric,
    near: &NearMetric,
    triple: &TriplePQR,
) -> Result<MetricPair, ApproxError> {
    let mut u = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    for (n, i, j, _) in grid.all_indices() {
        if g.region[n] == Region::Near {
            u.push(near.u3p[n]);
            w.push(C64::new(0.0, 0.0));
            continue;
        }
        let z = grid.z(i, j);
        let m = MetricMatrix::new(g.u[n].exp(), g.w[n]).map_err(ConfigError::from)?.matrix();
        let um = Mat2C::new(triple.q.eval(z), near.t.eval(z), -triple.r.eval(z), near.s.eval(z));
        let hn = um.adjoint() * m * um;
        let d = hn.d().re;
        u.push(-d.ln());
        w.push(hn.c() / d);
    }
    Ok(MetricPair::new(u, w, triple.near_higgs()?))
}

/// Ψ* in the far frame as a framed metric, the form the continuation consumes.
pub fn framed_glued(grid: &Grid3, g: &GluedMetric, p: &CPoly) -> Result<FramedMetric, ApproxError> {
    let far = MetricPair::new(g.u.clone(), g.w.clone(), Higgs::lower(p.clone()));
    Ok(FramedMetric::from_metric(grid, &far)?)
}

/// Ψ* assembled in the near frame; gauge equivalent to `assemble`.
pub fn assemble_near_frame(
    grid: &Grid3,
    g: &GluedMetric,
    near: &NearMetric,
    triple: &TriplePQR,
) -> Result<Configuration, ApproxError> {
    Ok(psi_from_metric(grid, &near_frame_metric(grid, g, near, triple)?)?)
}

/// |b₁| from the special-case-1 scalars: ½|[[E, F̄],[F, −E]]|.
fn b1_norm(e: f64, f: C64) -> f64 {
    0.5 * (2.0 * e * e + 2.0 * f.norm_sqr()).sqrt()
}

/// Metric-level first residual: special-case-1 (E, F) from the compact Laplacian
/// of u and the stored w derivatives.
pub fn metric_residual(grid: &Grid3, g: &GluedMetric, p: &CPoly) -> (ScalarField, ComplexField) {
    let len = grid.len();
    let zero = C64::new(0.0, 0.0);
    let (mut e, mut f) = (vec![0.0; len], vec![zero; len]);
    let uc: ComplexField = g.u.iter().map(|&v| C64::new(v, 0.0)).collect();
    for (n, i, j, k) in grid.interior_indices() {
        let q = Special1Point {
            u: g.u[n],
            lap_u: grid.laplacian_at(&g.u, i, j, k),
            dz_u: grid.dz_at(&uc, i, j, k),
            dy_u: grid.d(2, &g.u, i, j, k),
            w_lap: g.lap_w[n],
            dbar_w: g.dbar_w[n],
            dy_w: g.dy_w[n],
            p: p.eval(grid.z(i, j)),
        };
        (e[n], f[n]) = special1_point(&q);
    }
    (e, f)
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionStat {
    pub name: String,
    pub nodes: usize,
    /// sup |residual_first(Ψ*)| two or more nodes away from the faces.
    pub sup_first: f64,
    /// sup of the metric-level |b₁|.
    pub sup_metric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub regions: Vec<RegionStat>,
    /// (ρ, max metric-level |b₁|) per shell of the far region.
    pub far_shells: Vec<(f64, f64)>,
    pub far_slope: Option<f64>,
    /// Slope of log max|residual_first| against log y on the near region.
    pub bottom_slope: Option<f64>,
    pub zero_region_sup: f64,
    pub zero_region_nodes: usize,
    /// Far-frame interior nodes off the annulus with a nonzero w-term.
    pub annulus_leaks: usize,
    /// max |Ψ*|/(1/y + 1) over interior nodes.
    pub psi_bound: f64,
}

/// Shell values below this are treated as solver noise in the far fit.
pub const FIT_FLOOR: f64 = 1e-8;

/// Region statistics of Ψ* (pass the near-frame assembly: its discrete
/// residual is resolved around the roots of Q) and of the metric-level residual
/// of the glued far-frame fields.
pub fn residual_profile(grid: &Grid3, psi: &Configuration, g: &GluedMetric, p: &CPoly) -> ProfileReport {
    let first = residual_first(psi);
    let (e, f) = metric_residual(grid, g, p);
    let regs = &g.regions;
    let cut = regs.annulus_cutoff();
    let [n1, n2, ny] = grid.dims();
    let mut stats: Vec<(String, Vec<usize>)> =
        ["near", "blend", "far", "middle", "zero"].iter().map(|s| (s.to_string(), Vec::new())).collect();
    let mut annulus_leaks = 0;
    let mut zero_sup: f64 = 0.0;
    for (n, i, j, k) in grid.interior_indices() {
        let z = grid.z(i, j);
        let y = grid.y[k];
        let rho = (z.norm_sqr() + y * y).sqrt();
        let slot = match g.region[n] {
            Region::Near => 0,
            Region::Blend => 1,
            Region::Far if rho >= regs.rho_far => 2,
            Region::Far => 3,
        };
        stats[slot].1.push(n);
        if g.region[n] == Region::Far {
            let t = z.norm() / y;
            if (t <= regs.annulus.0 || t >= regs.annulus.1) && w_terms(g, n) != 0.0 {
                annulus_leaks += 1;
            }
            let stencil_far = [(1usize, 0usize, 0usize), (0, 1, 0), (0, 0, 1)].iter().all(|&(a, b, c)| {
                let st = a * grid.stride(0) + b * grid.stride(1) + c * grid.stride(2);
                g.region[n - st] == Region::Far && g.region[n + st] == Region::Far
            });
            let band_free = cut.deriv(t) == 0.0 && cut.deriv2(t) == 0.0;
            if stencil_far && band_free {
                stats[4].1.push(n);
                zero_sup = zero_sup.max(b1_norm(e[n], f[n]));
            }
        }
    }
    let regions = stats
        .iter()
        .map(|(name, nodes)| RegionStat {
            name: name.clone(),
            nodes: nodes.len(),
            sup_first: nodes
                .iter()
                .filter(|&&n| {
                    let (i, j, k) = grid.ijk(n);
                    grid.in_collar(2, i, j, k)
                })
                .map(|&n| first.v[n].norm())
                .fold(0.0, f64::max),
            sup_metric: nodes.iter().map(|&n| b1_norm(e[n], f[n])).fold(0.0, f64::max),
        })
        .collect();

    let dr = grid.h1.max(grid.h2);
    let mut shells: std::collections::BTreeMap<i64, f64> = Default::default();
    for &n in &stats[2].1 {
        let (i, j, k) = grid.ijk(n);
        let rho = (grid.z(i, j).norm_sqr() + grid.y[k] * grid.y[k]).sqrt();
        let key = ((rho - regs.rho_far) / dr).floor() as i64;
        let v = shells.entry(key).or_insert(0.0);
        *v = v.max(b1_norm(e[n], f[n]));
    }
    let far_shells: Vec<(f64, f64)> =
        shells.iter().map(|(key, v)| (regs.rho_far + (*key as f64 + 0.5) * dr, *v)).collect();
    let pts: Vec<(f64, f64)> = far_shells.iter().filter(|s| s.1 > FIT_FLOOR).map(|s| (s.0, s.1.ln())).collect();
    let far_slope = (pts.len() >= 3).then(|| linear_fit(&pts).1);

    let mut bottom = Vec::new();
    for k in 2..ny - 2 {
        let mut m: f64 = 0.0;
        for j in 2..n2 - 2 {
            for i in 2..n1 - 2 {
                let n = grid.idx(i, j, k);
                if g.region[n] == Region::Near {
                    m = m.max(first.v[n].norm());
                }
            }
        }
        if m > 0.0 {
            bottom.push((grid.y[k].ln(), m.ln()));
        }
    }
    let bottom_slope = (bottom.len() >= 3).then(|| linear_fit(&bottom).1);

    let norm = psi.pointwise_norm();
    let psi_bound = grid.interior_indices().map(|(n, _, _, k)| norm[n] / (1.0 / grid.y[k] + 1.0)).fold(0.0, f64::max);

    ProfileReport {
        regions,
        far_shells,
        far_slope,
        bottom_slope,
        zero_region_sup: zero_sup,
        zero_region_nodes: stats[4].1.len(),
        annulus_leaks,
        psi_bound,
    }
}

/// Every w-term of (E, F) carries one of these derivatives.
fn w_terms(g: &GluedMetric, n: usize) -> f64 {
    g.lap_w[n].norm() + g.dy_w[n].norm() + g.dbar_w[n].norm()
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectionReport {
    pub masked_before: f64,
    pub masked_after: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// One linearized solve c(−Δ_Ψ)s = −χV with s = 0 on faces, then Ψ ↦ Ψ_s.
pub fn correction_step(
    psi: &Configuration,
    mask: &[f64],
    c: f64,
) -> Result<(HermitianField, Configuration, CorrectionReport), ApproxError> {
    let grid = &psi.grid;
    if mask.len() != grid.len() {
        return Err(ApproxError::Length(mask.len(), grid.len()));
    }
    let v = moment_map(psi);
    let masked = |vv: &[Mat2C]| grid.sup_interior(|n| mask[n].abs() * vv[n].norm());
    let before = masked(&v);
    let rhs: Vec<[f64; 3]> = (0..grid.len())
        .map(|n| {
            let x = v[n].pauli_coords();
            [-mask[n] * x[0], -mask[n] * x[1], -mask[n] * x[2]]
        })
        .collect();
    if rhs.iter().all(|x| x.iter().all(|c| *c == 0.0)) {
        let report =
            CorrectionReport { masked_before: before, masked_after: before, iterations: 0, relative_residual: 0.0 };
        return Ok((HermitianField::zero(grid.len()), psi.clone(), report));
    }
    let op = ConfigLaplacian::new(psi);
    let (x, rep): (Vec<[f64; 3]>, SolveReport) = op.solve(c, 0.0, &rhs, 1e-10, 400);
    if !rep.converged && rep.relative_residual > 1e-6 {
        return Err(ApproxError::Solve(rep.relative_residual));
    }
    let s = HermitianField::from_coords(&x);
    let out = crate::config::deform(psi, &s);
    let after = masked(&moment_map(&out));
    let report = CorrectionReport {
        masked_before: before,
        masked_after: after,
        iterations: rep.iterations,
        relative_residual: rep.relative_residual,
    };
    Ok((s, out, report))
}

/// Smooth bump: 1 on |z| ≤ z.0, y ∈ [y.0, y.1], falling to 0 by |z| = z.1 and y.0 − dy / y.1 + dy.
pub fn box_mask(grid: &Grid3, z: (f64, f64), y: (f64, f64), dy: f64) -> ScalarField {
    let kz = Cutoff { a: z.0, b: z.1 };
    let top = Cutoff { a: y.1, b: y.1 + dy };
    let bottom = Cutoff { a: y.0 - dy, b: y.0 };
    grid.sample(|x1, x2, yy| kz.eval(C64::new(x1, x2).norm()) * top.eval(yy) * (1.0 - bottom.eval(yy)))
}

pub fn bezout_check(t: &TriplePQR) -> Result<f64, ApproxError> {
    let (s, tt) = t.bezout()?;
    Ok(bezout_residual(&t.q, &t.r, &s, &tt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;

    fn zq() -> TriplePQR {
        TriplePQR::new(CPoly::one(), CPoly::z(), CPoly::one()).unwrap()
    }

    #[test]
    fn triple_validation() {
        assert!(TriplePQR::new(CPoly::one(), CPoly::z(), CPoly::z()).is_err());
        assert!(TriplePQR::new(CPoly::from_real(&[0.0, 2.0]), CPoly::z(), CPoly::one()).is_err());
        assert!(TriplePQR::new(CPoly::one(), CPoly::from_real(&[0.0, 0.0, 1.0]), CPoly::z()).is_err());
        let t = zq();
        let h = t.near_higgs().unwrap();
        // u⁻¹φu with Q = z, R = 1: S = 0, T = 1
        let z = C64::new(0.3, -0.7);
        let u = Mat2C::new(z, C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.0));
        let phi = Mat2C::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let conj = u.inverse().unwrap() * phi * u;
        assert!((conj - h.matrix(z)).max_abs() < 1e-14);
    }

    #[test]
    fn far_frame_examples() {
        let g = Grid3::new(GridSpec::cube([17, 17, 17], 4.0, 0.1, 4.0, 0.0)).unwrap();
        let t = zq();
        let regs = Regions::for_triple(&t);
        let far = build_far(&vec![0.0; g.len()], &t, &g, &regs).unwrap();
        for (n, i, j, k) in g.all_indices() {
            let z = g.z(i, j);
            let ratio = z.norm() / g.y[k];
            if regs.near_weight(z, g.y[k]) == 1.0 {
                continue;
            }
            if ratio <= 1.0 {
                assert_eq!(far.w[n], C64::new(0.0, 0.0));
            } else if ratio >= 2.0 {
                assert!((far.w[n] - 1.0 / z).norm() < 1e-15);
                assert_eq!(far.dbar_w[n], C64::new(0.0, 0.0));
            }
        }
        let trivial = TriplePQR::trivial(CPoly::one());
        let far = build_far(&vec![0.0; g.len()], &trivial, &g, &Regions::for_triple(&trivial)).unwrap();
        assert!(far.w.iter().all(|w| *w == C64::new(0.0, 0.0)));
    }

    #[test]
    fn root_in_cutoff_is_rejected() {
        let g = Grid3::new(GridSpec::cube([17, 17, 17], 4.0, 0.1, 4.0, 0.0)).unwrap();
        let t =
            TriplePQR::new(CPoly::one(), CPoly::from_roots(&[C64::new(1.0, 0.0)], C64::new(1.0, 0.0)), CPoly::one())
                .unwrap();
        let regs = Regions { z_near: (0.5, 0.8), ..Regions::for_triple(&t) };
        assert!(matches!(build_far(&vec![0.0; g.len()], &t, &g, &regs), Err(ApproxError::RootInCutoff { .. })));
    }

    #[test]
    fn analytic_w_derivatives_match_differences() {
        let cut = Cutoff { a: 1.0, b: 2.0 };
        let gfun = |z: C64| C64::new(1.0, 0.0) / (z * z + 0.5);
        let dgfun = |z: C64| -(z * 2.0) / ((z * z + 0.5) * (z * z + 0.5));
        let w = |x1: f64, x2: f64, y: f64| {
            let z = C64::new(x1, x2);
            far_w(&cut, gfun(z), dgfun(z), z, y).0
        };
        let (x1, x2, y) = (1.1, 0.6, 0.85);
        let h = 1e-4;
        let d1 = (w(x1 + h, x2, y) - w(x1 - h, x2, y)) / (2.0 * h);
        let d2 = (w(x1, x2 + h, y) - w(x1, x2 - h, y)) / (2.0 * h);
        let dy = (w(x1, x2, y + h) - w(x1, x2, y - h)) / (2.0 * h);
        let c = w(x1, x2, y);
        let lap = (w(x1 + h, x2, y)
            + w(x1 - h, x2, y)
            + w(x1, x2 + h, y)
            + w(x1, x2 - h, y)
            + w(x1, x2, y + h)
            + w(x1, x2, y - h)
            - c * 6.0)
            / (h * h);
        let z = C64::new(x1, x2);
        let (_, dbar, dyw, lapw) = far_w(&cut, gfun(z), dgfun(z), z, y);
        assert!((dbar - (d1 + d2 * C64::new(0.0, 1.0)) * 0.5).norm() < 1e-7);
        assert!((dyw - dy).norm() < 1e-7);
        assert!((lapw - lap).norm() < 1e-4, "{lapw} vs {lap}");
    }

    #[test]
    fn trivial_triple_near_frame_is_diagonal() {
        let g = Grid3::new(GridSpec::cube([9, 9, 9], 1.0, 0.1, 2.0, 0.0)).unwrap();
        let t = TriplePQR::trivial(CPoly::one());
        let u3 = g.sample(|_, _, y| y.sinh().ln());
        let near = build_near(&t, &g, &u3).unwrap();
        for n in 0..g.len() {
            let e = u3[n].exp();
            assert!((near.h2[n] - Mat2C::real(e, 0.0, 0.0, 1.0 / e)).max_abs() < 1e-14 * e.max(1.0 / e));
            assert!((near.u[n] - u3[n]).abs() < 1e-14);
            assert_eq!(near.w[n], C64::new(0.0, 0.0));
        }
        assert!(near.det_error() < 1e-12);
    }

    #[test]
    fn glue_is_exact_outside_blend() {
        let g = Grid3::new(GridSpec::cube([17, 17, 17], 3.0, 0.1, 3.0, 0.0)).unwrap();
        let t = zq();
        let regs = Regions::for_triple(&t);
        let u3 = g.sample(|_, _, y| y.sinh().ln());
        let u3p = g.sample(|x1, x2, y| 0.5 * ((x1 * x1 + x2 * x2).powi(2) * y.sinh().powi(2) + 1e-4).ln());
        let far = build_far(&u3, &t, &g, &regs).unwrap();
        let near = build_near(&t, &g, &u3p).unwrap();
        let glued = glue(&g, &far, &near, &regs).unwrap();
        for n in 0..g.len() {
            match glued.region[n] {
                Region::Far => assert!(glued.u[n] == far.u[n] && glued.w[n] == far.w[n]),
                Region::Near => assert!(glued.u[n] == near.u[n] && glued.w[n] == near.w[n]),
                Region::Blend => {}
            }
        }
        let same = FarMetric { u: near.u.clone(), w: near.w.clone(), ..far.clone() };
        let glued = glue(&g, &same, &near, &regs).unwrap();
        assert!(glued.u == near.u && glued.w == near.w);
        let tiny = Regions { z_near: (0.01, 0.02), y_near: (0.01, 0.02), ..regs };
        assert!(matches!(glue(&g, &far, &near, &tiny), Err(ApproxError::EmptyOverlap)));
    }

    #[test]
    fn zero_mask_leaves_configuration() {
        let g = Grid3::new(GridSpec::cube([9, 9, 9], 1.0, 0.5, 2.5, 0.0)).unwrap();
        let m = MetricPair::new(
            g.sample(|x1, _, y| 0.2 * x1 + y),
            vec![C64::new(0.0, 0.0); g.len()],
            Higgs::lower(CPoly::one()),
        );
        let psi = psi_from_metric(&g, &m).unwrap();
        let (s, out, rep) = correction_step(&psi, &vec![0.0; g.len()], 2.0).unwrap();
        assert!(s.values.iter().all(|v| v.matrix().max_abs() == 0.0));
        assert_eq!(out.sup_distance(&psi), 0.0);
        assert_eq!(rep.iterations, 0);
    }
}
