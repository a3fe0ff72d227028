//! Configurations Ψ = (A₁, A₂, A_y, Φ₁, Φ₂, Φ₃), the metric representation
//! (H, φ) ↦ Ψ, the seven residuals, gauge actions and the deformation calculus.
//!
//! Conventions used throughout:
//! * `residual_first` returns the anti-Hermitian first bullet b₁. The moment map
//!   V = Σ[D_i, D_i*] is the Hermitian field 2i·b₁ (`moment_map`).
//! * In the special-case frames b₁ = (i/2)[[E, F̄],[F, −E]], so E and F are read
//!   off from −2i·b₁.

use crate::algebra::{exp_herm, inner, log_herm, v_op, AlgebraError, HermTraceless, Mat2C, C64, I};
use crate::geometry::{ComplexField, Grid3, ScalarField};
use crate::linsolve::{pcg, Multigrid, SolveReport};
use crate::poly::CPoly;
use serde::Serialize;
use thiserror::Error;

pub const A1: usize = 0;
pub const A2: usize = 1;
pub const AY: usize = 2;
pub const PHI1: usize = 3;
pub const PHI2: usize = 4;
pub const PHI3: usize = 5;

pub const FIELD_NAMES: [&str; 6] = ["A1", "A2", "Ay", "Phi1", "Phi2", "Phi3"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("h is not positive at node {0}")]
    NonPositiveH(usize),
    #[error("field {0} is not anti-Hermitian traceless at node {1}")]
    NotAntiHermitian(&'static str, usize),
    #[error("gauge transformation has det ≠ 1 at node {0}")]
    NotUnimodular(usize),
    #[error("field length {0} does not match grid ({1} nodes)")]
    Length(usize, usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Clone, Debug)]
pub struct Configuration {
    pub grid: Grid3,
    pub fields: [Vec<Mat2C>; 6],
}

impl Configuration {
    pub fn zero(grid: &Grid3) -> Self {
        let z = vec![Mat2C::ZERO; grid.len()];
        Configuration { grid: grid.clone(), fields: [z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z] }
    }

    /// Validates that every value is anti-Hermitian traceless to 1e-12 (relative).
    pub fn new(grid: &Grid3, fields: [Vec<Mat2C>; 6]) -> Result<Self, ConfigError> {
        for (f, name) in fields.iter().zip(FIELD_NAMES) {
            if f.len() != grid.len() {
                return Err(ConfigError::Length(f.len(), grid.len()));
            }
            for (n, m) in f.iter().enumerate() {
                let tol = 1e-12 * m.max_abs().max(1.0);
                if (*m + m.adjoint()).max_abs() > tol || m.trace().norm() > tol {
                    return Err(ConfigError::NotAntiHermitian(name, n));
                }
            }
        }
        Ok(Configuration { grid: grid.clone(), fields })
    }

    pub fn field(&self, k: usize) -> &[Mat2C] {
        &self.fields[k]
    }

    /// (A₁ + iA₂, A_y − iΦ₃, Φ₁ − iΦ₂) at node n.
    #[inline]
    pub fn complex_triple(&self, n: usize) -> (Mat2C, Mat2C, Mat2C) {
        let f = &self.fields;
        (f[A1][n] + f[A2][n] * I, f[AY][n] - f[PHI3][n] * I, f[PHI1][n] - f[PHI2][n] * I)
    }

    /// Inverse of `complex_triple`, node by node.
    pub fn from_complex(grid: &Grid3, x: &[Mat2C], y: &[Mat2C], phi: &[Mat2C]) -> Self {
        let mut out = Configuration::zero(grid);
        for n in 0..grid.len() {
            let (a1, a2) = split(x[n]);
            let (ay, p3) = split(y[n]);
            let (p1, p2) = split(phi[n]);
            out.fields[A1][n] = a1;
            out.fields[A2][n] = a2;
            out.fields[AY][n] = ay;
            out.fields[PHI3][n] = p3 * -1.0;
            out.fields[PHI1][n] = p1;
            out.fields[PHI2][n] = p2 * -1.0;
        }
        out
    }

    /// Pointwise Σ_k |field_k| (Frobenius).
    pub fn pointwise_norm(&self) -> ScalarField {
        (0..self.grid.len()).map(|n| self.fields.iter().map(|f| f[n].norm()).sum()).collect()
    }

    /// Sup over interior nodes of Σ_k |field_k − other_k|.
    pub fn sup_distance(&self, other: &Configuration) -> f64 {
        self.grid.sup_interior(|n| (0..6).map(|k| (self.fields[k][n] - other.fields[k][n]).norm()).sum())
    }

    /// 48 reals per node: six matrices, four complex entries each, (re, im) pairs.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len() * 48);
        for n in 0..self.grid.len() {
            for f in &self.fields {
                for c in f[n].0 {
                    out.push(c.re);
                    out.push(c.im);
                }
            }
        }
        out
    }

    pub fn from_flat(grid: &Grid3, data: &[f64]) -> Result<Self, ConfigError> {
        if data.len() != grid.len() * 48 {
            return Err(ConfigError::Length(data.len() / 48, grid.len()));
        }
        let mut out = Configuration::zero(grid);
        for n in 0..grid.len() {
            for k in 0..6 {
                let base = n * 48 + k * 8;
                let e: [C64; 4] = std::array::from_fn(|m| C64::new(data[base + 2 * m], data[base + 2 * m + 1]));
                out.fields[k][n] = Mat2C(e);
            }
        }
        Configuration::new(grid, out.fields)
    }
}

/// Z = P + iQ with P, Q anti-Hermitian: P = (Z − Z*)/2, Q = −i(Z + Z*)/2.
#[inline]
fn split(z: Mat2C) -> (Mat2C, Mat2C) {
    let za = z.adjoint();
    ((z - za) * 0.5, (z + za) * C64::new(0.0, -0.5))
}

/// φ = [[A, B], [P, −A]] with polynomial entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Higgs {
    pub a: CPoly,
    pub b: CPoly,
    pub p: CPoly,
}

impl Higgs {
    /// φ = [[0, 0], [P, 0]].
    pub fn lower(p: CPoly) -> Self {
        Higgs { a: CPoly::zero(), b: CPoly::zero(), p }
    }

    pub fn zero() -> Self {
        Higgs::lower(CPoly::zero())
    }

    pub fn matrix(&self, z: C64) -> Mat2C {
        let a = self.a.eval(z);
        Mat2C::new(a, self.b.eval(z), self.p.eval(z), -a)
    }
}

/// Metric representation with h = e^u stored as u.
#[derive(Clone, Debug)]
pub struct MetricPair {
    pub u: ScalarField,
    pub w: ComplexField,
    pub phi: Higgs,
}

impl MetricPair {
    pub fn new(u: ScalarField, w: ComplexField, phi: Higgs) -> Self {
        MetricPair { u, w, phi }
    }

    pub fn from_h(h: &[f64], w: ComplexField, phi: Higgs) -> Result<Self, ConfigError> {
        let mut u = Vec::with_capacity(h.len());
        for (n, &v) in h.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::NonPositiveH(n));
            }
            u.push(v.ln());
        }
        Ok(MetricPair { u, w, phi })
    }

    pub fn h(&self) -> ScalarField {
        self.u.iter().map(|u| u.exp()).collect()
    }
}

/// First derivatives entering the metric formulas.
#[derive(Clone, Debug)]
pub struct MetricDerivatives {
    pub dbar_u: ComplexField,
    pub dy_u: ScalarField,
    pub dbar_w: ComplexField,
    pub dy_w: ComplexField,
}

impl MetricDerivatives {
    /// Finite differences on every node (one-sided on faces).
    pub fn numeric(grid: &Grid3, m: &MetricPair) -> Self {
        let uc: ComplexField = m.u.iter().map(|&u| C64::new(u, 0.0)).collect();
        let mut d = MetricDerivatives {
            dbar_u: Vec::with_capacity(grid.len()),
            dy_u: Vec::with_capacity(grid.len()),
            dbar_w: Vec::with_capacity(grid.len()),
            dy_w: Vec::with_capacity(grid.len()),
        };
        for (_, i, j, k) in grid.all_indices() {
            d.dbar_u.push(grid.dbar_at(&uc, i, j, k));
            d.dy_u.push(grid.d(2, &m.u, i, j, k));
            d.dbar_w.push(grid.dbar_at(&m.w, i, j, k));
            d.dy_w.push(grid.d(2, &m.w, i, j, k));
        }
        d
    }
}

/// Ψ_{H,φ} from the displayed metric formulas, derivatives by finite differences.
pub fn psi_from_metric(grid: &Grid3, m: &MetricPair) -> Result<Configuration, ConfigError> {
    let d = MetricDerivatives::numeric(grid, m);
    psi_from_metric_with(grid, m, &d)
}

/// Ψ_{H,φ} with caller-supplied first derivatives of u and w.
pub fn psi_from_metric_with(grid: &Grid3, m: &MetricPair, d: &MetricDerivatives) -> Result<Configuration, ConfigError> {
    for f in [m.u.len(), m.w.len(), d.dy_u.len(), d.dbar_w.len()] {
        if f != grid.len() {
            return Err(ConfigError::Length(f, grid.len()));
        }
    }
    let mut x = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    let mut phi = Vec::with_capacity(grid.len());
    for (n, i, j, _) in grid.all_indices() {
        let u = m.u[n];
        if !u.is_finite() {
            return Err(ConfigError::NonPositiveH(n));
        }
        let (eu, emu) = (u.exp(), (-u).exp());
        let w = m.w[n];
        let du = d.dbar_u[n];
        x.push(Mat2C::new(-du, C64::new(0.0, 0.0), d.dbar_w[n] * (-2.0 * emu), du));
        let uy = C64::new(0.5 * d.dy_u[n], 0.0);
        y.push(Mat2C::new(-uy, C64::new(0.0, 0.0), d.dy_w[n] * (-emu), uy));
        let z = grid.z(i, j);
        let (a, b, p) = (m.phi.a.eval(z), m.phi.b.eval(z), m.phi.p.eval(z));
        phi.push(Mat2C::new(a - w * b, b * eu, (w * a * 2.0 + p - w * w * b) * emu, w * b - a));
    }
    Ok(Configuration::from_complex(grid, &x, &y, &phi))
}

/// Pointwise Hermitian traceless section s.
#[derive(Clone, Debug)]
pub struct HermitianField {
    pub values: Vec<HermTraceless>,
}

impl HermitianField {
    pub fn zero(len: usize) -> Self {
        HermitianField { values: vec![HermTraceless::ZERO; len] }
    }

    pub fn from_fn(grid: &Grid3, f: impl Fn(f64, f64, f64) -> HermTraceless) -> Self {
        HermitianField { values: grid.sample(f) }
    }

    /// diag(a, −a) at each node.
    pub fn diagonal(a: &[f64]) -> Self {
        HermitianField { values: a.iter().map(|&v| HermTraceless::diag(v)).collect() }
    }

    pub fn from_coords(x: &[[f64; 3]]) -> Self {
        HermitianField { values: x.iter().map(|&c| HermTraceless::from_coords(c)).collect() }
    }

    pub fn coords(&self) -> Vec<[f64; 3]> {
        self.values.iter().map(|s| s.coords()).collect()
    }

    pub fn scale(&self, t: f64) -> Self {
        HermitianField { values: self.values.iter().map(|s| s.scale(t)).collect() }
    }

    pub fn matrices(&self) -> Vec<Mat2C> {
        self.values.iter().map(|s| s.matrix()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First residual b₁, optionally with the special-frame scalars (E, F).
#[derive(Clone, Debug)]
pub struct ResidualField {
    pub v: Vec<Mat2C>,
    pub special: Option<(ScalarField, ComplexField)>,
}

impl ResidualField {
    /// Reads (E, F) from M = −2i·b₁ = [[E, F̄],[F, −E]].
    pub fn special_pair(&self) -> (ScalarField, ComplexField) {
        let mut e = Vec::with_capacity(self.v.len());
        let mut f = Vec::with_capacity(self.v.len());
        for m in &self.v {
            let mm = *m * C64::new(0.0, -2.0);
            e.push(mm.a().re);
            f.push(mm.c());
        }
        (e, f)
    }

    pub fn with_special(mut self) -> Self {
        self.special = Some(self.special_pair());
        self
    }

    /// Sup of the Frobenius norm over interior nodes.
    pub fn sup(&self, grid: &Grid3) -> f64 {
        grid.sup_interior(|n| self.v[n].norm())
    }
}

/// ∂₁A₂ − ∂₂A₁ + [A₁,A₂] − [Φ₁,Φ₂] − ∂_yΦ₃ − [A_y,Φ₃] on interior nodes.
pub fn residual_first(psi: &Configuration) -> ResidualField {
    let g = &psi.grid;
    let f = &psi.fields;
    let mut v = vec![Mat2C::ZERO; g.len()];
    for (n, i, j, k) in g.interior_indices() {
        v[n] = g.d(0, &f[A2], i, j, k) - g.d(1, &f[A1], i, j, k) + Mat2C::commutator(&f[A1][n], &f[A2][n])
            - Mat2C::commutator(&f[PHI1][n], &f[PHI2][n])
            - g.d(2, &f[PHI3], i, j, k)
            - Mat2C::commutator(&f[AY][n], &f[PHI3][n]);
    }
    ResidualField { v, special: None }
}

/// V = Σ[D_i, D_i*] = 2i·b₁ (Hermitian traceless).
pub fn moment_map(psi: &Configuration) -> Vec<Mat2C> {
    residual_first(psi).v.into_iter().map(|m| m * C64::new(0.0, 2.0)).collect()
}

#[derive(Clone, Debug)]
pub struct FullResidual {
    pub bullets: [Vec<Mat2C>; 7],
    pub sup: [f64; 7],
}

/// All seven residuals on interior nodes and their sup norms.
pub fn residual_full(psi: &Configuration) -> FullResidual {
    let g = &psi.grid;
    let f = &psi.fields;
    let first = residual_first(psi).v;
    let zero = vec![Mat2C::ZERO; g.len()];
    let mut b: [Vec<Mat2C>; 7] = [first, zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero];
    let cm = Mat2C::commutator;
    for (n, i, j, k) in g.interior_indices() {
        let d = |axis: usize, fld: usize| g.d(axis, &f[fld], i, j, k);
        let (a1, a2, ay, p1, p2, p3) = (&f[A1][n], &f[A2][n], &f[AY][n], &f[PHI1][n], &f[PHI2][n], &f[PHI3][n]);
        b[1][n] = d(2, PHI1) + cm(ay, p1) + cm(p2, p3);
        b[2][n] = d(2, PHI2) + cm(ay, p2) + cm(p3, p1);
        b[3][n] = d(0, AY) - d(2, A1) + cm(a1, ay) + d(1, PHI3) + cm(a2, p3);
        b[4][n] = d(1, AY) - d(2, A2) + cm(a2, ay) - d(0, PHI3) - cm(a1, p3);
        b[5][n] = -d(1, PHI1) - cm(a2, p1) + d(0, PHI2) + cm(a1, p2);
        b[6][n] = d(0, PHI1) + cm(a1, p1) + d(1, PHI2) + cm(a2, p2);
    }
    let sup = std::array::from_fn(|m| g.sup_interior(|n| b[m][n].norm()));
    FullResidual { bullets: b, sup }
}

/// Values at one node entering the special-case-1 formulas.
#[derive(Clone, Copy, Debug)]
pub struct Special1Point {
    pub u: f64,
    pub lap_u: f64,
    pub dz_u: C64,
    pub dy_u: f64,
    pub w_lap: C64,
    pub dbar_w: C64,
    pub dy_w: C64,
    pub p: C64,
}

/// E = Δu + e^{−2u}(4|∂̄w|² + |∂_y w|² + |P|²), F = e^{−u}(Δw − 2u_y w_y − 8(∂̄w)(∂u)).
pub fn special1_point(q: &Special1Point) -> (f64, C64) {
    let e2 = (-2.0 * q.u).exp();
    let e = q.lap_u + e2 * (4.0 * q.dbar_w.norm_sqr() + q.dy_w.norm_sqr() + q.p.norm_sqr());
    let f = (q.w_lap - q.dy_w * (2.0 * q.dy_u) - q.dbar_w * q.dz_u * 8.0) * (-q.u).exp();
    (e, f)
}

/// Special case 1 on interior nodes (faces left at zero).
pub fn residual_special1(grid: &Grid3, u: &[f64], w: &[C64], p: &CPoly) -> (ScalarField, ComplexField) {
    let uc: ComplexField = u.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut e = vec![0.0; grid.len()];
    let mut f = vec![C64::new(0.0, 0.0); grid.len()];
    for (n, i, j, k) in grid.interior_indices() {
        let q = Special1Point {
            u: u[n],
            lap_u: grid.laplacian_at(u, i, j, k),
            dz_u: grid.dz_at(&uc, i, j, k),
            dy_u: grid.d(2, u, i, j, k),
            w_lap: grid.laplacian_at(w, i, j, k),
            dbar_w: grid.dbar_at(w, i, j, k),
            dy_w: grid.d(2, w, i, j, k),
            p: p.eval(grid.z(i, j)),
        };
        let (en, fnv) = special1_point(&q);
        e[n] = en;
        f[n] = fnv;
    }
    (e, f)
}

/// E = Δu + e^{−2u}|P|² − e^{2u}|B|², F = 2e^u AB̄ − 2e^{−u}PĀ on interior nodes.
///
/// F is the lower-left entry of the commutator term; the closed form usually
/// quoted for it is the conjugate entry with a doubled real part.
pub fn residual_special2(grid: &Grid3, u: &[f64], a: &CPoly, b: &CPoly, p: &CPoly) -> (ScalarField, ComplexField) {
    let mut e = vec![0.0; grid.len()];
    let mut f = vec![C64::new(0.0, 0.0); grid.len()];
    for (n, i, j, k) in grid.interior_indices() {
        let z = grid.z(i, j);
        let (av, bv, pv) = (a.eval(z), b.eval(z), p.eval(z));
        let (eu, emu) = (u[n].exp(), (-u[n]).exp());
        e[n] = grid.laplacian_at(u, i, j, k) + emu * emu * pv.norm_sqr() - eu * eu * bv.norm_sqr();
        f[n] = av * bv.conj() * (2.0 * eu) - pv * av.conj() * (2.0 * emu);
    }
    (e, f)
}

/// The displayed gauge action of a det-1 field g; derivatives of g by finite differences.
pub fn apply_gauge(psi: &Configuration, g: &[Mat2C]) -> Result<Configuration, ConfigError> {
    let grid = &psi.grid;
    if g.len() != grid.len() {
        return Err(ConfigError::Length(g.len(), grid.len()));
    }
    let mut ginv = Vec::with_capacity(g.len());
    for (n, gn) in g.iter().enumerate() {
        let det = gn.det();
        if (det - 1.0).norm() > 1e-9 * gn.norm_sqr().max(1.0) {
            return Err(ConfigError::NotUnimodular(n));
        }
        ginv.push(gn.inverse()?);
    }
    let mut x = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    let mut phi = Vec::with_capacity(grid.len());
    for (n, i, j, k) in grid.all_indices() {
        let (xn, yn, pn) = psi.complex_triple(n);
        let (gn, gi) = (g[n], ginv[n]);
        let dg = grid.d(0, g, i, j, k) + grid.d(1, g, i, j, k) * I;
        let dgy = grid.d(2, g, i, j, k);
        x.push(gn * xn * gi - dg * gi);
        y.push(gn * yn * gi - dgy * gi);
        phi.push(gn * pn * gi);
    }
    Ok(Configuration::from_complex(grid, &x, &y, &phi))
}

/// Positive unimodular Hermitian part of a matrix that should already be one,
/// with the determinant renormalised away.
fn clean_metric(m: &Mat2C) -> Result<Mat2C, AlgebraError> {
    let a = m.0[0].re;
    let d = m.0[3].re;
    let b = (m.0[1] + m.0[2].conj()) * 0.5;
    let det = a * d - b.norm_sqr();
    if !(det > 0.0) || !(a > 0.0) {
        return Err(AlgebraError::NotPositiveDefinite);
    }
    let r = det.sqrt().recip();
    Ok(Mat2C::new(C64::new(a * r, 0.0), b * r, b.conj() * r, C64::new(d * r, 0.0)))
}

/// Moment map of the configuration g·(0, 0, φ) computed from H = g*g:
/// V = g·M·g⁻¹ with M = −Σ_i ∂_i(H⁻¹∂_iH) − i[H⁻¹∂₁H, H⁻¹∂₂H] + [φ, H⁻¹φ*H].
///
/// The fluxes H⁻¹∂H on links are log(H_n⁻¹H_{n+1})/h, so the stencil is
/// compact and reproduces the scalar Laplacian of u exactly when H = diag(e^u, e^{−u}).
/// Faces are left at zero.
pub fn moment_map_compact(grid: &Grid3, g: &[Mat2C], phi: &[Mat2C]) -> Result<Vec<Mat2C>, ConfigError> {
    let len = grid.len();
    if g.len() != len || phi.len() != len {
        return Err(ConfigError::Length(g.len().min(phi.len()), len));
    }
    let mut h = Vec::with_capacity(len);
    let mut half = Vec::with_capacity(len);
    for gn in g {
        let hn = clean_metric(&(gn.adjoint() * *gn))?;
        let l = log_herm(&hn)?;
        half.push((exp_herm(&l.scale(0.5)), exp_herm(&l.scale(-0.5))));
        h.push(hn);
    }
    let link = |n: usize, m: usize, step: f64| -> Result<Mat2C, ConfigError> {
        let (sq, isq) = half[n];
        let p = clean_metric(&(isq * h[m] * isq))?;
        let l = log_herm(&p)?.matrix();
        Ok(isq * l * sq * (1.0 / step))
    };
    let [n1, n2, ny] = grid.dims();
    let mut m_out = vec![Mat2C::ZERO; len];
    let mut mean = [vec![Mat2C::ZERO; len], vec![Mat2C::ZERO; len]];
    for axis in 0..3 {
        let st = grid.stride(axis);
        // flux[n] runs from n to n + stride
        let mut flux = vec![Mat2C::ZERO; len];
        for (n, i, j, k) in grid.all_indices() {
            let (pos, top) = match axis {
                0 => (i, n1),
                1 => (j, n2),
                _ => (k, ny),
            };
            if pos + 1 < top {
                let step = match axis {
                    0 => grid.h1,
                    1 => grid.h2,
                    _ => grid.y[k + 1] - grid.y[k],
                };
                flux[n] = link(n, n + st, step)?;
            }
        }
        for (n, _, _, k) in grid.interior_indices() {
            let (fp, fm) = (flux[n], flux[n - st]);
            let width = match axis {
                0 => 2.0 * grid.h1,
                1 => 2.0 * grid.h2,
                _ => grid.y[k + 1] - grid.y[k - 1],
            };
            m_out[n] = m_out[n] - (fp - fm) * (2.0 / width);
            if axis < 2 {
                mean[axis][n] = (fp + fm) * 0.5;
            }
        }
    }
    let mut v = vec![Mat2C::ZERO; len];
    for (n, _, _, _) in grid.interior_indices() {
        let phi_dag = h[n].inverse_unimodular() * phi[n].adjoint() * h[n];
        let m = m_out[n] - Mat2C::commutator(&mean[0][n], &mean[1][n]) * I + Mat2C::commutator(&phi[n], &phi_dag);
        v[n] = (g[n] * m * g[n].inverse_unimodular()).hermitian_traceless_part();
    }
    Ok(v)
}

/// Ψ = g·(0, 0, φ): a metric H = g*g in the unitary frame picked by g.
#[derive(Clone, Debug)]
pub struct FramedMetric {
    pub grid: Grid3,
    pub g: Vec<Mat2C>,
    pub phi: Vec<Mat2C>,
}

impl FramedMetric {
    /// Frame g = [[h^{1/2}, 0], [h^{-1/2}w, h^{-1/2}]], the one `psi_from_metric` uses.
    pub fn from_metric(grid: &Grid3, m: &MetricPair) -> Result<Self, ConfigError> {
        let mut g = Vec::with_capacity(grid.len());
        let mut phi = Vec::with_capacity(grid.len());
        for (n, i, j, _) in grid.all_indices() {
            let mm =
                crate::algebra::MetricMatrix::new(m.u[n].exp(), m.w[n]).map_err(|_| ConfigError::NonPositiveH(n))?;
            g.push(crate::algebra::metric_factor(&mm)?);
            phi.push(m.phi.matrix(grid.z(i, j)));
        }
        Ok(FramedMetric { grid: grid.clone(), g, phi })
    }

    /// The gauge action of g on (0, 0, φ), derivatives of g by finite differences.
    pub fn configuration(&self) -> Result<Configuration, ConfigError> {
        let zero = vec![Mat2C::ZERO; self.grid.len()];
        apply_gauge(&Configuration::from_complex(&self.grid, &zero, &zero, &self.phi), &self.g)
    }

    pub fn moment_map(&self) -> Result<Vec<Mat2C>, ConfigError> {
        moment_map_compact(&self.grid, &self.g, &self.phi)
    }

    /// e^s·g, the frame of the deformed configuration.
    pub fn deformed(&self, s: &HermitianField) -> FramedMetric {
        let g = self.g.iter().zip(&s.values).map(|(g, s)| exp_herm(s) * *g).collect();
        FramedMetric { grid: self.grid.clone(), g, phi: self.phi.clone() }
    }
}

/// Ψ_s: the gauge action of e^s.
pub fn deform(psi: &Configuration, s: &HermitianField) -> Configuration {
    let g: Vec<Mat2C> = s.values.iter().map(exp_herm).collect();
    apply_gauge(psi, &g).expect("exp of a traceless Hermitian field has det 1")
}

/// Δ_Ψ s on interior nodes (zero on faces).
pub fn laplacian_config(psi: &Configuration, s: &HermitianField) -> HermitianField {
    let op = ConfigLaplacian::new(psi);
    let x = s.coords();
    let y = op.neg_laplacian(&x);
    HermitianField::from_coords(&y.iter().map(|v| [-v[0], -v[1], -v[2]]).collect::<Vec<_>>())
}

type Mat3 = [f64; 9];

fn mat3_apply(m: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        m[0] * x[0] + m[1] * x[1] + m[2] * x[2],
        m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
        m[6] * x[0] + m[7] * x[1] + m[8] * x[2],
    ]
}

fn mat3_apply_t(m: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        m[0] * x[0] + m[3] * x[1] + m[6] * x[2],
        m[1] * x[0] + m[4] * x[1] + m[7] * x[2],
        m[2] * x[0] + m[5] * x[1] + m[8] * x[2],
    ]
}

/// Matrix of a real-linear map on Hermitian traceless matrices in Pauli coordinates.
fn pauli_matrix(f: impl Fn(Mat2C) -> Mat2C) -> Mat3 {
    let mut m = [0.0; 9];
    for col in 0..3 {
        let mut e = [0.0; 3];
        e[col] = 1.0;
        let img = f(Mat2C::from_pauli_coords(e)).pauli_coords();
        for row in 0..3 {
            m[row * 3 + col] = img[row];
        }
    }
    m
}

/// −Δ_Ψ in link form on Pauli coordinates of s.
///
/// ∇_a is discretized with the transport U = exp(h·Ā) along each edge (Ā the
/// edge average of A_a), which keeps the volume-weighted operator symmetric and
/// positive for every Ψ.
pub struct ConfigLaplacian {
    grid: Grid3,
    /// Ad of the transport from the + neighbor along each axis.
    links: Vec<[Mat3; 3]>,
    /// −Σ_i ad²_{Φ_i}, positive semidefinite.
    pot: Vec<Mat3>,
}

impl ConfigLaplacian {
    pub fn new(psi: &Configuration) -> Self {
        let g = &psi.grid;
        let f = &psi.fields;
        let dims = g.dims();
        let mut links = vec![[[0.0; 9]; 3]; g.len()];
        let mut pot = vec![[0.0; 9]; g.len()];
        for (n, i, j, k) in g.all_indices() {
            let pos = [i, j, k];
            for axis in 0..3 {
                if pos[axis] + 1 >= dims[axis] {
                    continue;
                }
                let m = n + g.stride(axis);
                let h = match axis {
                    0 => g.h1,
                    1 => g.h2,
                    _ => g.y[k + 1] - g.y[k],
                };
                let conn = [A1, A2, AY][axis];
                let amid = (f[conn][n] + f[conn][m]) * (0.5 * h);
                let u = crate::algebra::SpecialUnitary::exp_su2(amid.su2_coords()).matrix();
                let ua = u.adjoint();
                links[n][axis] = pauli_matrix(|s| u * s * ua);
            }
            let phis = [f[PHI1][n], f[PHI2][n], f[PHI3][n]];
            pot[n] = pauli_matrix(|s| {
                let mut acc = Mat2C::ZERO;
                for p in &phis {
                    acc -= Mat2C::commutator(p, &Mat2C::commutator(p, &s));
                }
                acc
            });
        }
        ConfigLaplacian { grid: g.clone(), links, pot }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// −Δ_Ψ x at interior nodes (zero on faces); face values of x act as data.
    pub fn neg_laplacian(&self, x: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let mut out = vec![[0.0; 3]; g.len()];
        for (n, i, j, k) in g.interior_indices() {
            out[n] = self.neg_lap_at(x, n, [i, j, k]);
        }
        out
    }

    #[inline]
    fn neg_lap_at(&self, x: &[[f64; 3]], n: usize, pos: [usize; 3]) -> [f64; 3] {
        let g = &self.grid;
        let mut acc = mat3_apply(&self.pot[n], &x[n]);
        for axis in 0..3 {
            let st = g.stride(axis);
            let w = g.d2_weights(axis, pos[axis]);
            let up = mat3_apply(&self.links[n][axis], &x[n + st]);
            let down = mat3_apply_t(&self.links[n - st][axis], &x[n - st]);
            for c in 0..3 {
                acc[c] -= w[0] * down[c] + w[1] * x[n][c] + w[2] * up[c];
            }
        }
        acc
    }

    /// y = vol·(α(−Δ_Ψ) + β)x on interior nodes with x = 0 assumed on faces;
    /// vectors interleave the three Pauli coordinates.
    pub fn apply_weighted(&self, alpha: f64, beta: f64, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let xs: &[[f64; 3]] = as_triples(x);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (n, i, j, k) in g.interior_indices() {
            let l = self.neg_lap_at(xs, n, [i, j, k]);
            let vol = g.volume_y(k);
            for c in 0..3 {
                y[3 * n + c] = vol * (alpha * l[c] + beta * xs[n][c]);
            }
        }
    }

    /// Solves (α(−Δ_Ψ) + β)δ = r for δ vanishing on faces, preconditioned by a
    /// scalar multigrid V-cycle per component with coefficient (β + α|Φ|²)/α.
    pub fn solve(
        &self,
        alpha: f64,
        beta: f64,
        r: &[[f64; 3]],
        tol: f64,
        max_iter: usize,
    ) -> (Vec<[f64; 3]>, SolveReport) {
        let g = &self.grid;
        let coef: Vec<f64> = (0..g.len())
            .map(|n| {
                let tr = self.pot[n][0] + self.pot[n][4] + self.pot[n][8];
                (beta + alpha * tr / 3.0) / alpha
            })
            .collect();
        let mg = Multigrid::new(g, &coef);
        let mut b = vec![0.0; 3 * g.len()];
        for (n, _, _, k) in g.interior_indices() {
            for c in 0..3 {
                b[3 * n + c] = g.volume_y(k) * r[n][c];
            }
        }
        let len = g.len();
        let precond = |res: &[f64], z: &mut [f64]| {
            let mut comp = vec![0.0; len];
            let mut sol = vec![0.0; len];
            for c in 0..3 {
                for n in 0..len {
                    comp[n] = res[3 * n + c] / alpha;
                }
                mg.vcycle(&comp, &mut sol);
                for n in 0..len {
                    z[3 * n + c] = sol[n];
                }
            }
        };
        let mut x = vec![0.0; 3 * len];
        let rep = pcg(|v, out| self.apply_weighted(alpha, beta, v, out), precond, &b, &mut x, tol, max_iter);
        (as_triples(&x).to_vec(), rep)
    }
}

fn as_triples(x: &[f64]) -> &[[f64; 3]] {
    assert_eq!(x.len() % 3, 0);
    // SAFETY: [f64; 3] has the size and alignment of three consecutive f64.
    unsafe { std::slice::from_raw_parts(x.as_ptr() as *const [f64; 3], x.len() / 3) }
}

/// Which constants appear on the right of the Weitzenböck identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeitzenbockConvention {
    /// −Δ|s|² + Σ 2|v(−2s)D_i*s|²
    DoubledExponent,
    /// −½Δ|s|² + Σ |v(−s)D_i*s|²
    SingleExponent,
}

/// (D₁*s, D₂*s, D₃*s) at an interior node.
pub fn adjoint_actions(psi: &Configuration, s: &[Mat2C], i: usize, j: usize, k: usize) -> [Mat2C; 3] {
    let g = &psi.grid;
    let f = &psi.fields;
    let n = g.idx(i, j, k);
    let cm = Mat2C::commutator;
    let nab = |axis: usize, conn: usize| g.d(axis, s, i, j, k) + cm(&f[conn][n], &s[n]);
    let d1 = (nab(0, A1) - nab(1, A2) * I) * -1.0;
    let d2 = cm(&(f[PHI1][n] * -1.0 - f[PHI2][n] * I), &s[n]);
    let d3 = nab(2, AY) * -1.0 - cm(&f[PHI3][n], &s[n]) * I;
    [d1, d2, d3]
}

/// ⟨V(Ψ_s) − V(Ψ), s⟩ minus the selected right-hand side, on interior nodes.
pub fn weitzenbock_gap(psi: &Configuration, s: &HermitianField, convention: WeitzenbockConvention) -> ScalarField {
    let g = &psi.grid;
    let v0 = moment_map(psi);
    let v1 = moment_map(&deform(psi, s));
    let sm = s.matrices();
    let norm2: ScalarField = sm.iter().map(|m| inner(m, m)).collect();
    let (factor, lap_factor, exp_factor) = match convention {
        WeitzenbockConvention::DoubledExponent => (2.0, 1.0, -2.0),
        WeitzenbockConvention::SingleExponent => (1.0, 0.5, -1.0),
    };
    let mut gap = vec![0.0; g.len()];
    for (n, i, j, k) in g.interior_indices() {
        let lhs = inner(&(v1[n] - v0[n]), &sm[n]);
        let se = s.values[n].scale(exp_factor);
        let mut rhs = -lap_factor * g.laplacian_at(&norm2, i, j, k);
        for d in adjoint_actions(psi, &sm, i, j, k) {
            let t = v_op(&se, &d);
            rhs += factor * inner(&t, &t);
        }
        gap[n] = lhs - rhs;
    }
    gap
}

/// (V(Ψ_{ts}) − V(Ψ))/t on interior nodes.
pub fn linearization_slope(psi: &Configuration, s: &HermitianField, t: f64) -> Vec<Mat2C> {
    let v0 = moment_map(psi);
    let v1 = moment_map(&deform(psi, &s.scale(t)));
    v1.iter().zip(&v0).map(|(a, b)| (*a - *b) * (1.0 / t)).collect()
}

/// Least-squares fit of slope ≈ c·(−Δ_Ψ s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearizationFit {
    pub c: f64,
    /// ‖slope − c·(−Δ_Ψ s)‖₂ / ‖slope‖₂ over the fitted nodes.
    pub relative_residual: f64,
}

/// Fits over nodes at least two layers from the faces.
pub fn linearization_fit(psi: &Configuration, s: &HermitianField, t: f64) -> LinearizationFit {
    let g = &psi.grid;
    let slope = linearization_slope(psi, s, t);
    let lap = laplacian_config(psi, s);
    let [n1, n2, ny] = g.dims();
    let nodes: Vec<usize> = g
        .interior_indices()
        .filter(|&(_, i, j, k)| i >= 2 && j >= 2 && k >= 2 && i + 2 < n1 && j + 2 < n2 && k + 2 < ny)
        .map(|(n, ..)| n)
        .collect();
    let (mut num, mut den, mut ss) = (0.0, 0.0, 0.0);
    for &n in &nodes {
        let l = lap.values[n].matrix() * -1.0;
        num += inner(&slope[n], &l);
        den += inner(&l, &l);
        ss += inner(&slope[n], &slope[n]);
    }
    let c = num / den;
    let mut rr = 0.0;
    for &n in &nodes {
        let d = slope[n] - lap.values[n].matrix() * -c;
        rr += inner(&d, &d);
    }
    LinearizationFit { c, relative_residual: (rr / ss).sqrt() }
}

pub fn linearization_constant(psi: &Configuration, s: &HermitianField, t: f64) -> f64 {
    linearization_fit(psi, s, t).c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;

    fn grid(n: usize) -> Grid3 {
        Grid3::new(GridSpec::cube([n, n, n], 1.0, 0.5, 2.5, 0.0)).unwrap()
    }

    fn close(a: Mat2C, b: Mat2C, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn metric_examples() {
        let g = grid(9);
        let zero_w = vec![C64::new(0.0, 0.0); g.len()];
        let psi = psi_from_metric(&g, &MetricPair::new(vec![0.0; g.len()], zero_w.clone(), Higgs::zero())).unwrap();
        assert!(psi.fields.iter().all(|f| f.iter().all(|m| m.max_abs() == 0.0)));

        let u = g.sample(|_, _, y| y);
        let psi = psi_from_metric(&g, &MetricPair::new(u, zero_w.clone(), Higgs::zero())).unwrap();
        let expect = Mat2C::diag(C64::new(0.0, -0.5), C64::new(0.0, 0.5));
        for n in 0..g.len() {
            assert!(close(psi.fields[PHI3][n], expect, 1e-12));
            for k in [A1, A2, AY, PHI1, PHI2] {
                assert!(psi.fields[k][n].max_abs() < 1e-12);
            }
        }

        let w = g.sample(|x1, _, _| C64::new(x1, 0.0));
        let psi = psi_from_metric(&g, &MetricPair::new(vec![0.0; g.len()], w, Higgs::zero())).unwrap();
        let a1 = Mat2C::real(0.0, 0.5, -0.5, 0.0);
        let a2 = Mat2C::new(C64::new(0.0, 0.0), C64::new(0.0, 0.5), C64::new(0.0, 0.5), C64::new(0.0, 0.0));
        for n in 0..g.len() {
            assert!(close(psi.fields[A1][n], a1, 1e-12));
            assert!(close(psi.fields[A2][n], a2, 1e-12));
            assert!(psi.fields[AY][n].max_abs() < 1e-12 && psi.fields[PHI3][n].max_abs() < 1e-12);
        }
        assert!(matches!(
            MetricPair::from_h(&vec![-1.0; g.len()], zero_w, Higgs::zero()),
            Err(ConfigError::NonPositiveH(0))
        ));
    }

    fn factor_field(g: &Grid3, m: &MetricPair) -> (Vec<Mat2C>, Vec<Mat2C>) {
        let mut f = Vec::new();
        let mut p = Vec::new();
        for (n, i, j, _) in g.all_indices() {
            let mm = crate::algebra::MetricMatrix::new(m.u[n].exp(), m.w[n]).unwrap();
            f.push(crate::algebra::metric_factor(&mm).unwrap());
            p.push(m.phi.matrix(g.z(i, j)));
        }
        (f, p)
    }

    #[test]
    fn compact_moment_map_agrees_with_configuration_route() {
        let higgs = Higgs {
            a: CPoly::new(vec![C64::new(0.1, 0.2), C64::new(0.3, 0.0)]),
            b: CPoly::constant(C64::new(0.2, -0.1)),
            p: CPoly::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.5), C64::new(0.2, 0.0)]),
        };
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let g = grid(n);
            let u = g.sample(|x1, x2, y| 0.3 * (x1 + 0.5 * x2).sin() + 0.2 * y * y);
            let w = g.sample(|x1, x2, y| C64::new(0.4 * (x2 - y).cos(), 0.3 * x1 * y));
            let m = MetricPair::new(u, w, higgs.clone());
            let v_ref = moment_map(&psi_from_metric(&g, &m).unwrap());
            let (f, p) = factor_field(&g, &m);
            let v = moment_map_compact(&g, &f, &p).unwrap();
            let c = g.idx(n / 2, n / 2, n / 2);
            assert!((v[c] - v[c].adjoint()).max_abs() < 1e-12);
            errs.push((v[c] - v_ref[c]).norm());
        }
        assert!(errs[1] < 0.35 * errs[0] && errs[2] < 0.35 * errs[1], "{errs:?}");
    }

    #[test]
    fn compact_moment_map_is_frame_covariant_and_exact_for_diagonal_metrics() {
        let g = grid(11);
        let u = g.sample(|x1, x2, y| (x1 * x2).sin() + y);
        let zero_w = vec![C64::new(0.0, 0.0); g.len()];
        let m = MetricPair::new(u.clone(), zero_w, Higgs::lower(CPoly::z()));
        let (f, p) = factor_field(&g, &m);
        let v = moment_map_compact(&g, &f, &p).unwrap();
        let (e, _) = residual_special1(&g, &u, &vec![C64::new(0.0, 0.0); g.len()], &CPoly::z());
        for (n, _, _, _) in g.interior_indices() {
            assert!((v[n].a().re + e[n]).abs() < 1e-10 * e[n].abs().max(1.0), "{} {}", v[n].a().re, e[n]);
        }
        // a unitary change of frame rotates V
        let rot = crate::algebra::SpecialUnitary::exp_su2([0.3, -0.2, 0.5]).matrix();
        let f2: Vec<Mat2C> = f.iter().map(|x| rot * *x).collect();
        let v2 = moment_map_compact(&g, &f2, &p).unwrap();
        for (n, _, _, _) in g.interior_indices() {
            assert!(close(v2[n], rot * v[n] * rot.adjoint(), 1e-10 * v[n].norm().max(1.0)));
        }
    }

    #[test]
    fn flat_metric_gives_unit_e() {
        let g = grid(9);
        let psi = psi_from_metric(
            &g,
            &MetricPair::new(vec![0.0; g.len()], vec![C64::new(0.0, 0.0); g.len()], Higgs::lower(CPoly::one())),
        )
        .unwrap();
        let (e, f) = residual_first(&psi).special_pair();
        let n = g.idx(4, 4, 4);
        assert!((e[n] - 1.0).abs() < 1e-13, "E = {}", e[n]);
        assert!(f[n].norm() < 1e-13);
    }

    #[test]
    fn special2_examples() {
        let g = grid(9);
        let zero = vec![0.0; g.len()];
        let n = g.idx(3, 4, 5);
        let (e, f) = residual_special2(&g, &zero, &CPoly::zero(), &CPoly::zero(), &CPoly::one());
        assert!((e[n] - 1.0).abs() < 1e-15 && f[n].norm() < 1e-15);
        let (e, f) = residual_special2(&g, &zero, &CPoly::one(), &CPoly::one(), &CPoly::one());
        assert!(e[n].abs() < 1e-15 && f[n].norm() < 1e-15);
    }

    #[test]
    fn laplacian_examples() {
        let g = grid(9);
        let zero = Configuration::zero(&g);
        assert!(laplacian_config(&zero, &HermitianField::zero(g.len()))
            .values
            .iter()
            .all(|v| v.matrix().max_abs() == 0.0));
        // quadratic s is differentiated exactly
        let s = HermitianField::from_fn(&g, |x1, x2, y| HermTraceless::from_coords([x1 * x1, x2 * y, y * y]));
        let l = laplacian_config(&zero, &s);
        let n = g.idx(3, 5, 4);
        let c = l.values[n].coords();
        assert!((c[0] - 2.0).abs() < 1e-10 && c[1].abs() < 1e-10 && (c[2] - 2.0).abs() < 1e-10);

        let mut psi = Configuration::zero(&g);
        let c0 = 0.7;
        let phi1 = Mat2C::pauli(1) * C64::new(0.0, 0.5 * c0);
        psi.fields[PHI1] = vec![phi1; g.len()];
        let s0 = HermTraceless::from_coords([0.3, -0.2, 0.5]);
        let s = HermitianField { values: vec![s0; g.len()] };
        let expect = Mat2C::commutator(&phi1, &Mat2C::commutator(&phi1, &s0.matrix()));
        let l = laplacian_config(&psi, &s);
        assert!(close(l.values[n].matrix(), expect, 1e-13));
    }

    #[test]
    fn deform_scales_lower_entry() {
        let g = grid(9);
        let mut psi = Configuration::zero(&g);
        let phi = Mat2C::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.5, -0.5), C64::new(0.0, 0.0));
        let trivial = Configuration::from_complex(
            &g,
            &vec![Mat2C::ZERO; g.len()],
            &vec![Mat2C::ZERO; g.len()],
            &vec![phi; g.len()],
        );
        psi.fields = trivial.fields;
        let s = HermitianField { values: vec![HermTraceless::diag(0.4); g.len()] };
        let out = deform(&psi, &s);
        let (_, _, p) = out.complex_triple(g.idx(4, 4, 4));
        assert!((p.c() - phi.c() * (-0.8f64).exp()).norm() < 1e-14);
        assert!(p.a().norm() < 1e-14 && p.b().norm() < 1e-14);
    }

    #[test]
    fn gauge_identity_and_errors() {
        let g = grid(9);
        let m = MetricPair::new(
            g.sample(|x1, x2, y| 0.3 * x1 * x2 + y),
            g.sample(|x1, _, y| C64::new(0.2 * x1, 0.1 * y)),
            Higgs::lower(CPoly::z()),
        );
        let psi = psi_from_metric(&g, &m).unwrap();
        let same = apply_gauge(&psi, &vec![Mat2C::IDENTITY; g.len()]).unwrap();
        assert!(same.sup_distance(&psi) < 1e-15);
        let bad = vec![Mat2C::IDENTITY.scale(2.0); g.len()];
        assert!(matches!(apply_gauge(&psi, &bad), Err(ConfigError::NotUnimodular(0))));
    }
}
