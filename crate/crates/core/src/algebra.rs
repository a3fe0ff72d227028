//! 2×2 complex matrix calculus for su(2) and sl(2, C).
//!
//! Hermitian traceless matrices are the sections `s` of the deformation
//! calculus; their exponentials are positive with unit determinant. The
//! operators `gamma` and `v_op` are functions of `ad_s`, evaluated through the
//! spectral projectors of `s` rather than by series.

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use thiserror::Error;

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Tolerance used when validating Hermitian, traceless and unitary inputs.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Below this eigenvalue size the spectral formulas switch to Taylor branches.
const SMALL_LAMBDA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not traceless (trace magnitude {0:e})")]
    NotTraceless(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("determinant {0} is not 1")]
    NotUnitDeterminant(C64),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not special unitary (deviation {0:e})")]
    NotSpecialUnitary(f64),
    #[error("metric scale h = {0} must be positive")]
    NonPositiveScale(f64),
    #[error("non-finite entry")]
    NonFinite,
}

#[inline]
fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Row-major 2×2 complex matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2C(pub [C64; 4]);

impl Mat2C {
    pub const ZERO: Mat2C = Mat2C([C64 { re: 0.0, im: 0.0 }; 4]);
    pub const IDENTITY: Mat2C =
        Mat2C([C64 { re: 1.0, im: 0.0 }, C64 { re: 0.0, im: 0.0 }, C64 { re: 0.0, im: 0.0 }, C64 { re: 1.0, im: 0.0 }]);

    #[inline]
    pub fn new(a: C64, b: C64, cc: C64, d: C64) -> Self {
        Mat2C([a, b, cc, d])
    }

    #[inline]
    pub fn real(a: f64, b: f64, cc: f64, d: f64) -> Self {
        Mat2C([c(a, 0.0), c(b, 0.0), c(cc, 0.0), c(d, 0.0)])
    }

    #[inline]
    pub fn diag(a: C64, d: C64) -> Self {
        Mat2C([a, C64::default(), C64::default(), d])
    }

    /// Matrix unit with a single 1 at (row, col).
    pub fn unit(row: usize, col: usize) -> Self {
        let mut m = Self::ZERO;
        m.0[2 * row + col] = c(1.0, 0.0);
        m
    }

    /// The Pauli matrices σ₁, σ₂, σ₃.
    pub fn pauli(k: usize) -> Self {
        match k {
            1 => Mat2C::real(0.0, 1.0, 1.0, 0.0),
            2 => Mat2C::new(C64::default(), -I, I, C64::default()),
            3 => Mat2C::real(1.0, 0.0, 0.0, -1.0),
            _ => panic!("Pauli index must be 1, 2 or 3"),
        }
    }

    #[inline]
    pub fn a(&self) -> C64 {
        self.0[0]
    }
    #[inline]
    pub fn b(&self) -> C64 {
        self.0[1]
    }
    #[inline]
    pub fn c(&self) -> C64 {
        self.0[2]
    }
    #[inline]
    pub fn d(&self) -> C64 {
        self.0[3]
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        let [a, b, cc, d] = self.0;
        Mat2C([a.conj(), cc.conj(), b.conj(), d.conj()])
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn inverse(&self) -> Result<Self, AlgebraError> {
        let det = self.det();
        let scale = self.max_abs().max(1e-300);
        if det.norm() <= 1e-14 * scale * scale {
            return Err(AlgebraError::Singular);
        }
        let [a, b, cc, d] = self.0;
        let inv = det.inv();
        Ok(Mat2C([d * inv, -b * inv, -cc * inv, a * inv]))
    }

    /// Inverse of a matrix with unit determinant (adjugate), no checks.
    #[inline]
    pub fn inverse_unimodular(&self) -> Self {
        let [a, b, cc, d] = self.0;
        Mat2C([d, -b, -cc, a])
    }

    #[inline]
    pub fn scale(&self, f: f64) -> Self {
        let [a, b, cc, d] = self.0;
        Mat2C([a * f, b * f, cc * f, d * f])
    }

    #[inline]
    pub fn cscale(&self, f: C64) -> Self {
        let [a, b, cc, d] = self.0;
        Mat2C([a * f, b * f, cc * f, d * f])
    }

    #[inline]
    pub fn commutator(x: &Mat2C, y: &Mat2C) -> Mat2C {
        *x * *y - *y * *x
    }

    /// Frobenius norm squared, tr(M*M).
    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    #[inline]
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// (M + M*)/2 with the trace removed.
    #[inline]
    pub fn hermitian_traceless_part(&self) -> Mat2C {
        let h = (*self + self.adjoint()).scale(0.5);
        let t = (h.0[0].re + h.0[3].re) * 0.5;
        Mat2C([c(h.0[0].re - t, 0.0), h.0[1], h.0[1].conj(), c(h.0[3].re - t, 0.0)])
    }

    /// (M − M*)/2 with the trace removed.
    #[inline]
    pub fn anti_hermitian_traceless_part(&self) -> Mat2C {
        let h = (*self - self.adjoint()).scale(0.5);
        let t = (h.0[0].im + h.0[3].im) * 0.5;
        Mat2C([c(0.0, h.0[0].im - t), h.0[1], -h.0[1].conj(), c(0.0, h.0[3].im - t)])
    }

    /// Coordinates (x₁, x₂, x₃) of a Hermitian traceless matrix in the Pauli basis.
    #[inline]
    pub fn pauli_coords(&self) -> [f64; 3] {
        [self.0[1].re, -self.0[1].im, self.0[0].re]
    }

    #[inline]
    pub fn from_pauli_coords(x: [f64; 3]) -> Mat2C {
        Mat2C([c(x[2], 0.0), c(x[0], -x[1]), c(x[0], x[1]), c(-x[2], 0.0)])
    }

    /// Coordinates of an anti-Hermitian traceless matrix `M = i·(x·σ)`.
    #[inline]
    pub fn su2_coords(&self) -> [f64; 3] {
        (*self * (-I)).pauli_coords()
    }

    #[inline]
    pub fn from_su2_coords(x: [f64; 3]) -> Mat2C {
        Mat2C::from_pauli_coords(x) * I
    }

    fn hermitian_deviation(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }
}

impl Add for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn add(self, o: Mat2C) -> Mat2C {
        Mat2C([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn sub(self, o: Mat2C) -> Mat2C {
        Mat2C([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2], self.0[3] - o.0[3]])
    }
}

impl Neg for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn neg(self) -> Mat2C {
        self.scale(-1.0)
    }
}

impl AddAssign for Mat2C {
    #[inline]
    fn add_assign(&mut self, o: Mat2C) {
        *self = *self + o;
    }
}

impl SubAssign for Mat2C {
    #[inline]
    fn sub_assign(&mut self, o: Mat2C) {
        *self = *self - o;
    }
}

impl Mul for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn mul(self, o: Mat2C) -> Mat2C {
        let [a, b, cc, d] = self.0;
        let [e, f, g, h] = o.0;
        Mat2C([a * e + b * g, a * f + b * h, cc * e + d * g, cc * f + d * h])
    }
}

impl Mul<f64> for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn mul(self, f: f64) -> Mat2C {
        self.scale(f)
    }
}

impl Mul<C64> for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn mul(self, f: C64) -> Mat2C {
        self.cscale(f)
    }
}

/// Hermitian traceless 2×2 matrix, an element of isu(2).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct HermTraceless(Mat2C);

impl HermTraceless {
    pub const ZERO: HermTraceless = HermTraceless(Mat2C::ZERO);

    /// Validates to `VALIDATION_TOL` (relative to the entry scale) and re-symmetrizes.
    pub fn new(m: Mat2C) -> Result<Self, AlgebraError> {
        if !m.is_finite() {
            return Err(AlgebraError::NonFinite);
        }
        let tol = VALIDATION_TOL * m.max_abs().max(1.0);
        let dev = m.hermitian_deviation();
        if dev > tol {
            return Err(AlgebraError::NotHermitian(dev));
        }
        let tr = m.trace().norm();
        if tr > tol {
            return Err(AlgebraError::NotTraceless(tr));
        }
        Ok(HermTraceless(m.hermitian_traceless_part()))
    }

    /// Projects an arbitrary matrix onto isu(2) without validation.
    #[inline]
    pub fn project(m: Mat2C) -> Self {
        HermTraceless(m.hermitian_traceless_part())
    }

    #[inline]
    pub fn from_coords(x: [f64; 3]) -> Self {
        HermTraceless(Mat2C::from_pauli_coords(x))
    }

    #[inline]
    pub fn diag(a: f64) -> Self {
        HermTraceless(Mat2C::real(a, 0.0, 0.0, -a))
    }

    #[inline]
    pub fn matrix(&self) -> Mat2C {
        self.0
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        self.0.pauli_coords()
    }

    /// λ ≥ 0 with eigenvalues ±λ, λ² = −det s.
    #[inline]
    pub fn lambda(&self) -> f64 {
        let [x, y, z] = self.coords();
        (x * x + y * y + z * z).sqrt()
    }

    #[inline]
    pub fn scale(&self, f: f64) -> Self {
        HermTraceless(self.0.scale(f))
    }
}

impl Neg for HermTraceless {
    type Output = HermTraceless;
    fn neg(self) -> HermTraceless {
        HermTraceless(-self.0)
    }
}

/// Special unitary 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialUnitary(Mat2C);

impl SpecialUnitary {
    pub fn new(g: Mat2C) -> Result<Self, AlgebraError> {
        if !g.is_finite() {
            return Err(AlgebraError::NonFinite);
        }
        let dev = (g.adjoint() * g - Mat2C::IDENTITY).max_abs();
        let ddev = (g.det() - 1.0).norm();
        if dev > VALIDATION_TOL * 10.0 || ddev > VALIDATION_TOL * 10.0 {
            return Err(AlgebraError::NotSpecialUnitary(dev.max(ddev)));
        }
        Ok(SpecialUnitary(g))
    }

    /// exp of an su(2) element given by its Pauli coordinates, `exp(i x·σ)`.
    pub fn exp_su2(x: [f64; 3]) -> Self {
        let theta = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let sinc = if theta < SMALL_LAMBDA { 1.0 - theta * theta / 6.0 } else { theta.sin() / theta };
        let m = Mat2C::IDENTITY.scale(theta.cos()) + Mat2C::from_su2_coords(x).scale(sinc);
        SpecialUnitary(m)
    }

    #[inline]
    pub fn matrix(&self) -> Mat2C {
        self.0
    }
}

/// Metric data (h, w) with h > 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricMatrix {
    pub h: f64,
    pub w: C64,
}

impl MetricMatrix {
    pub fn new(h: f64, w: C64) -> Result<Self, AlgebraError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(AlgebraError::NonPositiveScale(h));
        }
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(AlgebraError::NonFinite);
        }
        Ok(MetricMatrix { h, w })
    }

    /// H = [[h + |w|²/h, w̄/h], [w/h, 1/h]].
    pub fn matrix(&self) -> Mat2C {
        let hi = 1.0 / self.h;
        Mat2C::new(c(self.h + self.w.norm_sqr() * hi, 0.0), self.w.conj() * hi, self.w * hi, c(hi, 0.0))
    }

    /// Reads (h, w) back from a positive unimodular Hermitian matrix.
    pub fn from_matrix(m: &Mat2C) -> Result<Self, AlgebraError> {
        let d = m.d().re;
        if !(d > 0.0) {
            return Err(AlgebraError::NotPositiveDefinite);
        }
        let h = 1.0 / d;
        MetricMatrix::new(h, m.c() * h)
    }
}

/// cosh(λ)·I + (sinh λ/λ)·s.
pub fn exp_herm(s: &HermTraceless) -> Mat2C {
    let lam = s.lambda();
    let shc = sinhc(lam);
    let m = Mat2C::IDENTITY.scale(lam.cosh()) + s.matrix().scale(shc);
    // exact Hermitian symmetry
    Mat2C([c(m.0[0].re, 0.0), m.0[1], m.0[1].conj(), c(m.0[3].re, 0.0)])
}

#[inline]
fn sinhc(lam: f64) -> f64 {
    if lam < SMALL_LAMBDA {
        1.0 + lam * lam / 6.0
    } else {
        lam.sinh() / lam
    }
}

/// Logarithm of a Hermitian positive definite matrix with det 1.
///
/// With `P = m·I + N`, `N` traceless with eigenvalues ±n, the eigenvalues of `P`
/// are `m ± n` and `log P = ½ln(m² − n²)·I + atanh(n/m)·N/n`.
pub fn log_herm(p: &Mat2C) -> Result<HermTraceless, AlgebraError> {
    if !p.is_finite() {
        return Err(AlgebraError::NonFinite);
    }
    let scale = p.max_abs().max(1.0);
    let dev = p.hermitian_deviation();
    if dev > VALIDATION_TOL * scale {
        return Err(AlgebraError::NotHermitian(dev));
    }
    let det = p.det();
    if (det - 1.0).norm() > 1e-9 * scale * scale {
        return Err(AlgebraError::NotUnitDeterminant(det));
    }
    let m = 0.5 * (p.0[0].re + p.0[3].re);
    let n_mat = p.hermitian_traceless_part();
    let n = HermTraceless(n_mat).lambda();
    if !(m > n) {
        return Err(AlgebraError::NotPositiveDefinite);
    }
    let x = n / m;
    let factor = if x < SMALL_LAMBDA { (1.0 + x * x / 3.0) / m } else { x.atanh() / n };
    Ok(HermTraceless(n_mat.scale(factor)))
}

/// Applies `f(ad_s)` to `m` via the spectral projectors `Π± = (I ± s/λ)/2`.
///
/// `taylor` holds f(0), f'(0), f''(0)/2 for the small-λ branch.
fn ad_function(s: &HermTraceless, m: &Mat2C, f: impl Fn(f64) -> f64, taylor: [f64; 3]) -> Mat2C {
    let lam = s.lambda();
    let sm = s.matrix();
    if lam < SMALL_LAMBDA {
        let ad1 = Mat2C::commutator(&sm, m);
        let ad2 = Mat2C::commutator(&sm, &ad1);
        return m.scale(taylor[0]) + ad1.scale(taylor[1]) + ad2.scale(taylor[2]);
    }
    let unit = sm.scale(1.0 / lam);
    let pp = (Mat2C::IDENTITY + unit).scale(0.5);
    let pm = (Mat2C::IDENTITY - unit).scale(0.5);
    let f0 = f(0.0);
    let fp = f(2.0 * lam);
    let fm = f(-2.0 * lam);
    (pp * *m * pp + pm * *m * pm).scale(f0) + (pp * *m * pm).scale(fp) + (pm * *m * pp).scale(fm)
}

/// f₁(x) = (eˣ − 1)/x with f₁(0) = 1.
pub fn f_gamma(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// γ(s)(M) = f₁(ad_s)(M).
pub fn gamma(s: &HermTraceless, m: &Mat2C) -> Mat2C {
    ad_function(s, m, f_gamma, [1.0, 0.5, 1.0 / 6.0])
}

/// v(s)(M) = f₁(ad_s)^{1/2}(M).
pub fn v_op(s: &HermTraceless, m: &Mat2C) -> Mat2C {
    ad_function(s, m, |x| f_gamma(x).sqrt(), [1.0, 0.25, 5.0 / 96.0])
}

/// σ with e^{2σ} = e^{s₂}e^{2s₁}e^{s₂}.
pub fn hermitian_sum(s1: &HermTraceless, s2: &HermTraceless) -> HermTraceless {
    let e2 = exp_herm(s2);
    let e1 = exp_herm(&s1.scale(2.0));
    let p = e2 * e1 * e2;
    let p =
        Mat2C([c(p.0[0].re, 0.0), (p.0[1] + p.0[2].conj()) * 0.5, (p.0[2] + p.0[1].conj()) * 0.5, c(p.0[3].re, 0.0)]);
    // rescale the determinant to exactly one before taking the logarithm
    let det = p.det().re;
    let p = p.scale(1.0 / det.sqrt());
    log_herm(&p).expect("product of positive unimodular matrices").scale(0.5)
}

/// g = u·e^s with u ∈ SU(2) and s ∈ isu(2), for det g = 1.
pub fn polar(g: &Mat2C) -> Result<(SpecialUnitary, HermTraceless), AlgebraError> {
    if !g.is_finite() {
        return Err(AlgebraError::NonFinite);
    }
    let det = g.det();
    let scale = g.max_abs().max(1.0);
    if det.norm() < 1e-14 * scale * scale {
        return Err(AlgebraError::Singular);
    }
    if (det - 1.0).norm() > 1e-9 * scale * scale {
        return Err(AlgebraError::NotUnitDeterminant(det));
    }
    let gg = g.adjoint() * *g;
    let gg = (gg + gg.adjoint()).scale(0.5);
    let gg = gg.scale(1.0 / gg.det().re.sqrt());
    let s = log_herm(&gg)?.scale(0.5);
    let u = *g * exp_herm(&-s);
    Ok((SpecialUnitary(u), s))
}

/// g = [[h^{1/2}, 0], [h^{-1/2}w, h^{-1/2}]] with g*g = H.
pub fn metric_factor(hm: &MetricMatrix) -> Result<Mat2C, AlgebraError> {
    if !(hm.h > 0.0) {
        return Err(AlgebraError::NonPositiveScale(hm.h));
    }
    let r = hm.h.sqrt();
    let ri = 1.0 / r;
    Ok(Mat2C::new(c(r, 0.0), C64::default(), hm.w * ri, c(ri, 0.0)))
}

/// ½tr(a*b + b*a) = Re tr(a*b).
#[inline]
pub fn inner(a: &Mat2C, b: &Mat2C) -> f64 {
    a.0.iter().zip(b.0.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Series oracles, kept independent of the spectral evaluation path.
pub mod reference {
    use super::*;

    /// Σ_{k<terms} ad_s^k(M)/(k+1)!.
    pub fn gamma_series(s: &Mat2C, m: &Mat2C, terms: usize) -> Mat2C {
        let mut term = *m;
        let mut acc = *m;
        for k in 1..terms {
            term = Mat2C::commutator(s, &term).scale(1.0 / (k as f64 + 1.0));
            acc += term;
        }
        acc
    }

    /// Σ_{k<terms} s^k/k!.
    pub fn exp_series(s: &Mat2C, terms: usize) -> Mat2C {
        let mut term = Mat2C::IDENTITY;
        let mut acc = Mat2C::IDENTITY;
        for k in 1..terms {
            term = (term * *s).scale(1.0 / k as f64);
            acc += term;
        }
        acc
    }
}
