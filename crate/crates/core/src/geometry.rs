//! Truncated half-space grid, finite-difference stencils, compactification
//! coordinates, cutoffs and discrete weighted sup-norms.
//!
//! Nodes are indexed `(k * n2 + j) * n1 + i` with `y` slowest. The x-axes are
//! uniform; the y-axis may be graded towards `y_min` through
//! `y(η) = y_min + (y_max − y_min)·expm1(aη)/expm1(a)`, `η ∈ [0, 1]`, with `a = 0`
//! meaning uniform spacing. First derivatives are centered three-point Lagrange
//! stencils in the interior and four-point one-sided stencils on faces.

use crate::algebra::{Mat2C, C64};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cutoff interval [{0}, {1}] is empty")]
    EmptyCutoff(f64, f64),
}

/// Values that can be differenced on the grid.
pub trait FieldValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl FieldValue for f64 {}
impl FieldValue for C64 {}
impl FieldValue for Mat2C {}

pub type ScalarField = Vec<f64>;
pub type ComplexField = Vec<C64>;

/// Box and resolution parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub ny: usize,
    /// Half-widths of the x₁ and x₂ intervals.
    pub l1: f64,
    pub l2: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Grading exponent `a` of the y-map; 0 is uniform.
    pub y_stretch: f64,
}

impl GridSpec {
    pub fn cube(n: [usize; 3], l: f64, y_min: f64, y_max: f64, y_stretch: f64) -> Self {
        GridSpec { n1: n[0], n2: n[1], ny: n[2], l1: l, l2: l, y_min, y_max, y_stretch }
    }

    /// Same box with every spacing halved (n → 2n − 1).
    pub fn refined(&self) -> Self {
        GridSpec { n1: 2 * self.n1 - 1, n2: 2 * self.n2 - 1, ny: 2 * self.ny - 1, ..self.clone() }
    }
}

#[derive(Clone, Debug)]
struct AxisStencil {
    /// First derivative: first node of the window and its weights. Interior
    /// nodes use the centered three-point window (fourth weight zero); face
    /// nodes use a four-point one-sided window so that differencing a
    /// differentiated field stays second order next to the faces.
    first: Vec<(usize, [f64; 4])>,
    /// Second derivative on interior nodes, weights for (i−1, i, i+1).
    second: Vec<[f64; 3]>,
}

/// Three-point Lagrange weights for the first and second derivative at `x`.
fn lagrange3(x: f64, n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let denom = (n[a] - n[b]) * (n[a] - n[c]);
        d1[a] = ((x - n[b]) + (x - n[c])) / denom;
        d2[a] = 2.0 / denom;
    }
    (d1, d2)
}

/// First-derivative Lagrange weights at `x` for the nodes `n`.
fn lagrange_d1<const M: usize>(x: f64, n: [f64; M]) -> [f64; M] {
    let mut w = [0.0; M];
    for a in 0..M {
        let mut denom = 1.0;
        let mut num = 0.0;
        for b in 0..M {
            if b == a {
                continue;
            }
            denom *= n[a] - n[b];
            let mut prod = 1.0;
            for c in 0..M {
                if c != a && c != b {
                    prod *= x - n[c];
                }
            }
            num += prod;
        }
        w[a] = num / denom;
    }
    w
}

impl AxisStencil {
    fn new(x: &[f64]) -> Self {
        let n = x.len();
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for i in 0..n {
            if i == 0 || i == n - 1 {
                let start = if i == 0 { 0 } else { n - 4 };
                let d1 = lagrange_d1(x[i], [x[start], x[start + 1], x[start + 2], x[start + 3]]);
                first.push((start, d1));
            } else {
                let (d1, _) = lagrange3(x[i], [x[i - 1], x[i], x[i + 1]]);
                first.push((i - 1, [d1[0], d1[1], d1[2], 0.0]));
            }
            if i > 0 && i < n - 1 {
                let (_, d2) = lagrange3(x[i], [x[i - 1], x[i], x[i + 1]]);
                second.push(d2);
            } else {
                second.push([0.0; 3]);
            }
        }
        AxisStencil { first, second }
    }
}

/// The computational box `[−l1, l1]×[−l2, l2]×[y_min, y_max]`.
#[derive(Clone, Debug)]
pub struct Grid3 {
    pub spec: GridSpec,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y: Vec<f64>,
    pub h1: f64,
    pub h2: f64,
    stencils: [AxisStencil; 3],
    /// Control-volume weights per node (dual cell volumes).
    vol_y: Vec<f64>,
}

pub fn y_map(eta: f64, y_min: f64, y_max: f64, a: f64) -> f64 {
    if a.abs() < 1e-12 {
        y_min + (y_max - y_min) * eta
    } else {
        y_min + (y_max - y_min) * (a * eta).exp_m1() / a.exp_m1()
    }
}

impl Grid3 {
    pub fn new(spec: GridSpec) -> Result<Self, GeometryError> {
        let s = &spec;
        if s.n1 < 8 || s.n2 < 8 || s.ny < 8 {
            return Err(GeometryError::InvalidGrid(format!(
                "node counts must be at least 8, got {}×{}×{}",
                s.n1, s.n2, s.ny
            )));
        }
        if !(s.y_min > 0.0) || !(s.y_max > s.y_min) {
            return Err(GeometryError::InvalidGrid(format!("need 0 < y_min < y_max, got [{}, {}]", s.y_min, s.y_max)));
        }
        if !(s.l1 > 0.0) || !(s.l2 > 0.0) || !s.y_stretch.is_finite() || s.y_stretch < 0.0 {
            return Err(GeometryError::InvalidGrid("box half-widths must be positive and stretch ≥ 0".into()));
        }
        Ok(Self::new_unchecked(spec))
    }

    /// Builds a grid without the minimum-size check (coarse multigrid levels).
    pub(crate) fn new_unchecked(spec: GridSpec) -> Self {
        let s = &spec;
        let lin = |n: usize, l: f64| -> Vec<f64> { (0..n).map(|i| -l + 2.0 * l * i as f64 / (n - 1) as f64).collect() };
        let x1 = lin(s.n1, s.l1);
        let x2 = lin(s.n2, s.l2);
        let y: Vec<f64> =
            (0..s.ny).map(|k| y_map(k as f64 / (s.ny - 1) as f64, s.y_min, s.y_max, s.y_stretch)).collect();
        let vol_y = (0..s.ny)
            .map(|k| {
                let lo = if k == 0 { y[0] } else { 0.5 * (y[k - 1] + y[k]) };
                let hi = if k == s.ny - 1 { y[k] } else { 0.5 * (y[k] + y[k + 1]) };
                hi - lo
            })
            .collect();
        let h1 = 2.0 * s.l1 / (s.n1 - 1) as f64;
        let h2 = 2.0 * s.l2 / (s.n2 - 1) as f64;
        let stencils = [AxisStencil::new(&x1), AxisStencil::new(&x2), AxisStencil::new(&y)];
        Grid3 { spec, x1, x2, y, h1, h2, stencils, vol_y }
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.spec.n1
    }
    #[inline]
    pub fn n2(&self) -> usize {
        self.spec.n2
    }
    #[inline]
    pub fn ny(&self) -> usize {
        self.spec.ny
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.spec.n1 * self.spec.n2 * self.spec.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.spec.n1, self.spec.n2, self.spec.ny]
    }
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.spec.n1,
            _ => self.spec.n1 * self.spec.n2,
        }
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.spec.n2 + j) * self.spec.n1 + i
    }
    #[inline]
    pub fn ijk(&self, n: usize) -> (usize, usize, usize) {
        let i = n % self.spec.n1;
        let r = n / self.spec.n1;
        (i, r % self.spec.n2, r / self.spec.n2)
    }
    #[inline]
    pub fn z(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x1[i], self.x2[j])
    }
    #[inline]
    pub fn is_interior(&self, i: usize, j: usize, k: usize) -> bool {
        i > 0 && j > 0 && k > 0 && i + 1 < self.spec.n1 && j + 1 < self.spec.n2 && k + 1 < self.spec.ny
    }

    /// Smallest spacing over all axes.
    pub fn h_min(&self) -> f64 {
        let hy = self.y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        self.h1.min(self.h2).min(hy)
    }

    /// Largest spacing over all axes.
    pub fn h_max(&self) -> f64 {
        let hy = self.y.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        self.h1.max(self.h2).max(hy)
    }

    /// Spacing below and above node k in y.
    #[inline]
    pub fn hy(&self, k: usize) -> (f64, f64) {
        let lo = if k > 0 { self.y[k] - self.y[k - 1] } else { f64::NAN };
        let hi = if k + 1 < self.spec.ny { self.y[k + 1] - self.y[k] } else { f64::NAN };
        (lo, hi)
    }

    /// Dual-cell volume of a node.
    #[inline]
    pub fn volume(&self, n: usize) -> f64 {
        let (i, j, k) = self.ijk(n);
        let w1 = if i == 0 || i + 1 == self.spec.n1 { 0.5 } else { 1.0 };
        let w2 = if j == 0 || j + 1 == self.spec.n2 { 0.5 } else { 1.0 };
        w1 * w2 * self.h1 * self.h2 * self.vol_y[k]
    }

    /// Dual-cell y-extent of layer k.
    #[inline]
    pub fn volume_y(&self, k: usize) -> f64 {
        self.vol_y[k]
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let [n1, n2, ny] = self.dims();
        (1..ny - 1)
            .flat_map(move |k| (1..n2 - 1).flat_map(move |j| (1..n1 - 1).map(move |i| (self.idx(i, j, k), i, j, k))))
    }

    pub fn all_indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let [n1, n2, ny] = self.dims();
        (0..ny).flat_map(move |k| (0..n2).flat_map(move |j| (0..n1).map(move |i| (self.idx(i, j, k), i, j, k))))
    }

    /// Samples a function of (x₁, x₂, y) at every node.
    pub fn sample<T>(&self, f: impl Fn(f64, f64, f64) -> T) -> Vec<T> {
        self.all_indices().map(|(_, i, j, k)| f(self.x1[i], self.x2[j], self.y[k])).collect()
    }

    /// First derivative along `axis` at node (i, j, k).
    #[inline]
    pub fn d<T: FieldValue>(&self, axis: usize, f: &[T], i: usize, j: usize, k: usize) -> T {
        let pos = [i, j, k][axis];
        let (start, w) = self.stencils[axis].first[pos];
        let st = self.stride(axis);
        let base = self.idx(i, j, k) - (pos - start) * st;
        let v = f[base] * w[0] + f[base + st] * w[1] + f[base + 2 * st] * w[2];
        if w[3] == 0.0 {
            v
        } else {
            v + f[base + 3 * st] * w[3]
        }
    }

    /// Second derivative along `axis` at an interior node.
    #[inline]
    pub fn d2<T: FieldValue>(&self, axis: usize, f: &[T], i: usize, j: usize, k: usize) -> T {
        let pos = [i, j, k][axis];
        let w = self.stencils[axis].second[pos];
        let st = self.stride(axis);
        let n = self.idx(i, j, k);
        f[n - st] * w[0] + f[n] * w[1] + f[n + st] * w[2]
    }

    /// Second-derivative weights (below, center, above) along `axis` at position `pos`.
    #[inline]
    pub fn d2_weights(&self, axis: usize, pos: usize) -> [f64; 3] {
        self.stencils[axis].second[pos]
    }

    /// Compact seven-point Laplacian at an interior node.
    #[inline]
    pub fn laplacian_at<T: FieldValue>(&self, f: &[T], i: usize, j: usize, k: usize) -> T {
        self.d2(0, f, i, j, k) + self.d2(1, f, i, j, k) + self.d2(2, f, i, j, k)
    }

    /// ∂̄f = ½(∂₁ + i∂₂)f at a node.
    #[inline]
    pub fn dbar_at(&self, f: &[C64], i: usize, j: usize, k: usize) -> C64 {
        (self.d(0, f, i, j, k) + self.d(1, f, i, j, k) * C64::new(0.0, 1.0)) * 0.5
    }

    /// ∂f = ½(∂₁ − i∂₂)f at a node.
    #[inline]
    pub fn dz_at(&self, f: &[C64], i: usize, j: usize, k: usize) -> C64 {
        (self.d(0, f, i, j, k) - self.d(1, f, i, j, k) * C64::new(0.0, 1.0)) * 0.5
    }

    /// Sup of `g(n)` over interior nodes (the face layer is excluded).
    pub fn sup_interior(&self, g: impl Fn(usize) -> f64) -> f64 {
        self.interior_indices().map(|(n, ..)| g(n)).fold(0.0, f64::max)
    }

    /// Sup of `g(n)` over nodes at least `collar` layers away from every face.
    pub fn sup_collar(&self, collar: usize, g: impl Fn(usize) -> f64) -> f64 {
        self.all_indices()
            .filter(|&(_, i, j, k)| self.in_collar(collar, i, j, k))
            .map(|(n, ..)| g(n))
            .fold(0.0, f64::max)
    }

    /// At least `collar` nodes away from every face.
    pub fn in_collar(&self, collar: usize, i: usize, j: usize, k: usize) -> bool {
        let [n1, n2, ny] = self.dims();
        i >= collar && j >= collar && k >= collar && i + collar < n1 && j + collar < n2 && k + collar < ny
    }

    /// Sup of `g(n)` over all nodes.
    pub fn sup_all(&self, g: impl Fn(usize) -> f64) -> f64 {
        (0..self.len()).map(g).fold(0.0, f64::max)
    }
}

/// Interior Laplacian of a field; boundary entries are left at zero.
pub fn laplacian<T: FieldValue>(grid: &Grid3, f: &[T]) -> Result<Vec<T>, GeometryError> {
    check_len(grid, f.len())?;
    let mut out = vec![T::default(); grid.len()];
    for (n, i, j, k) in grid.interior_indices() {
        out[n] = grid.laplacian_at(f, i, j, k);
    }
    Ok(out)
}

fn check_len(grid: &Grid3, len: usize) -> Result<(), GeometryError> {
    if len != grid.len() {
        return Err(GeometryError::InvalidGrid(format!("field has {} values, grid has {} nodes", len, grid.len())));
    }
    Ok(())
}

/// Derivative along one axis at every node.
pub fn partial<T: FieldValue>(grid: &Grid3, axis: usize, f: &[T]) -> Vec<T> {
    grid.all_indices().map(|(_, i, j, k)| grid.d(axis, f, i, j, k)).collect()
}

pub fn dbar(grid: &Grid3, f: &[C64]) -> ComplexField {
    grid.all_indices().map(|(_, i, j, k)| grid.dbar_at(f, i, j, k)).collect()
}

pub fn dz(grid: &Grid3, f: &[C64]) -> ComplexField {
    grid.all_indices().map(|(_, i, j, k)| grid.dz_at(f, i, j, k)).collect()
}

pub fn dy(grid: &Grid3, f: &[C64]) -> ComplexField {
    partial(grid, 2, f)
}

/// Quintic smoothstep cutoff: 1 for t ≤ a, 0 for t ≥ b.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
}

impl Cutoff {
    pub fn new(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a < b) {
            return Err(GeometryError::EmptyCutoff(a, b));
        }
        Ok(Cutoff { a, b })
    }

    #[inline]
    fn x(&self, t: f64) -> f64 {
        (t - self.a) / (self.b - self.a)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.a {
            1.0
        } else if t >= self.b {
            0.0
        } else {
            let x = self.x(t);
            1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
        }
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            0.0
        } else {
            let x = self.x(t);
            -30.0 * x * x * (1.0 - x) * (1.0 - x) / (self.b - self.a)
        }
    }

    #[inline]
    pub fn deriv2(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            0.0
        } else {
            let x = self.x(t);
            let l = self.b - self.a;
            -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (l * l)
        }
    }

    /// True where the profile is not locally constant.
    #[inline]
    pub fn in_band(&self, t: f64) -> bool {
        t > self.a && t < self.b
    }
}

/// Smooth rise from 0 (x ≤ 0) to 1 (x ≥ 1).
#[inline]
fn rise(x: f64) -> f64 {
    1.0 - Cutoff { a: 0.0, b: 1.0 }.eval(x)
}

/// Compactification coordinates ρ, r, ψ sampled on the grid.
#[derive(Clone, Debug)]
pub struct Coordinates {
    pub big_r: ScalarField,
    pub rho: ScalarField,
    pub r: ScalarField,
    pub psi: ScalarField,
    pub y: ScalarField,
    pub knots: Vec<C64>,
}

/// Blend radius scale for r around knots: r = d for d ≤ ½, r = 1 for d ≥ 1.
const KNOT_INNER: f64 = 0.5;

impl Coordinates {
    pub fn new(grid: &Grid3, knots: &[C64]) -> Self {
        let mut big_r = Vec::with_capacity(grid.len());
        let mut rho = Vec::with_capacity(grid.len());
        let mut r = Vec::with_capacity(grid.len());
        let mut psi = Vec::with_capacity(grid.len());
        let mut ys = Vec::with_capacity(grid.len());
        for (_, i, j, k) in grid.all_indices() {
            let z = grid.z(i, j);
            let y = grid.y[k];
            let (bigr, rh, rr, ps) = Self::point(z, y, knots);
            big_r.push(bigr);
            rho.push(rh);
            r.push(rr);
            psi.push(ps);
            ys.push(y);
        }
        Coordinates { big_r, rho, r, psi, y: ys, knots: knots.to_vec() }
    }

    /// (R, ρ, r, ψ) at a point.
    pub fn point(z: C64, y: f64, knots: &[C64]) -> (f64, f64, f64, f64) {
        let bigr = (z.norm_sqr() + y * y).sqrt();
        let s = rise(bigr - 1.0);
        let rho = (1.0 - s) + s * bigr;
        let d = knots.iter().map(|&z0| ((z - z0).norm_sqr() + y * y).sqrt()).fold(f64::INFINITY, f64::min);
        let r = if d.is_finite() {
            let s = rise((d - KNOT_INNER) / (1.0 - KNOT_INNER));
            (1.0 - s) * d + s
        } else {
            1.0
        };
        let q = y / (rho * r);
        let s = rise((q - 0.5) / 0.5);
        let psi = q + (1.0 - q) * s;
        (bigr, rho, r, psi.min(1.0))
    }
}

/// Weight exponents of ψ^μ r^v ρ^δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub mu: f64,
    pub v: f64,
    pub delta: f64,
}

/// max over nodes of ψ^{−μ} r^{−v} ρ^{−δ} |f|.
pub fn weighted_sup_norm(coords: &Coordinates, f_abs: &[f64], spec: &WeightedNormSpec) -> f64 {
    f_abs
        .iter()
        .enumerate()
        .map(|(n, &f)| {
            f.abs() * coords.psi[n].powf(-spec.mu) * coords.r[n].powf(-spec.v) * coords.rho[n].powf(-spec.delta)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, stretch: f64) -> Grid3 {
        Grid3::new(GridSpec::cube([n, n, n], 1.0, 0.5, 2.5, stretch)).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid3::new(GridSpec::cube([4, 8, 8], 1.0, 0.1, 1.0, 0.0)).is_err());
        assert!(Grid3::new(GridSpec::cube([8, 8, 8], 1.0, 0.0, 1.0, 0.0)).is_err());
        assert!(Grid3::new(GridSpec::cube([8, 8, 8], -1.0, 0.1, 1.0, 0.0)).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g =
            Grid3::new(GridSpec { n1: 9, n2: 10, ny: 11, l1: 1.0, l2: 2.0, y_min: 0.1, y_max: 1.0, y_stretch: 1.0 })
                .unwrap();
        for n in [0, 17, 433, g.len() - 1] {
            let (i, j, k) = g.ijk(n);
            assert_eq!(g.idx(i, j, k), n);
        }
        assert!((g.y[0] - 0.1).abs() < 1e-15 && (g.y[10] - 1.0).abs() < 1e-14);
        assert!((g.x2[9] - 2.0).abs() < 1e-15);
        let total: f64 = (0..g.len()).map(|n| g.volume(n)).sum();
        assert!((total - 2.0 * 4.0 * 0.9).abs() < 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        for stretch in [0.0, 2.0] {
            let g = grid(10, stretch);
            let c = vec![3.5; g.len()];
            let l = laplacian(&g, &c).unwrap();
            assert!(g.sup_interior(|n| l[n].abs()) < 1e-10);
            let q = g.sample(|x1, _, y| x1 * x1 + 0.5 * y * y);
            let l = laplacian(&g, &q).unwrap();
            assert!(g.sup_interior(|n| (l[n] - 3.0).abs()) < 1e-9);
        }
    }

    #[test]
    fn first_derivatives_exact_for_quadratics() {
        let g = grid(9, 1.5);
        let f = g.sample(|x1, x2, y| C64::new(x1 * x1 - y * y, x2 * y));
        for (n, i, j, k) in g.all_indices() {
            let (x1, x2, y) = (g.x1[i], g.x2[j], g.y[k]);
            let fy = g.d(2, &f, i, j, k);
            assert!((fy - C64::new(-2.0 * y, x2)).norm() < 1e-11, "node {n}");
            let f1 = g.d(0, &f, i, j, k);
            assert!((f1 - C64::new(2.0 * x1, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn complex_derivative_examples() {
        let g = grid(9, 0.0);
        let z = g.sample(|x1, x2, _| C64::new(x1, x2));
        let zb = g.sample(|x1, x2, _| C64::new(x1, -x2));
        let m2 = g.sample(|x1, x2, _| C64::new(x1 * x1 + x2 * x2, 0.0));
        let (db_z, dz_z) = (dbar(&g, &z), dz(&g, &z));
        let db_zb = dbar(&g, &zb);
        let db_m2 = dbar(&g, &m2);
        for (n, i, j, _) in g.all_indices() {
            assert!(db_z[n].norm() < 1e-13);
            assert!((dz_z[n] - 1.0).norm() < 1e-13);
            assert!((db_zb[n] - 1.0).norm() < 1e-13);
            assert!((db_m2[n] - g.z(i, j)).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_examples() {
        let c = Cutoff::new(1.0, 2.0).unwrap();
        assert_eq!(c.eval(0.3), 1.0);
        assert_eq!(c.eval(1.0), 1.0);
        assert_eq!(c.eval(2.0), 0.0);
        assert_eq!(c.eval(7.0), 0.0);
        assert!((c.eval(1.5) - 0.5).abs() < 1e-15);
        assert!(Cutoff::new(2.0, 2.0).is_err());
        let h = 1e-5;
        for &t in &[1.1, 1.37, 1.8] {
            let fd = (c.eval(t + h) - c.eval(t - h)) / (2.0 * h);
            assert!((fd - c.deriv(t)).abs() < 1e-8);
            let fd2 = (c.deriv(t + h) - c.deriv(t - h)) / (2.0 * h);
            assert!((fd2 - c.deriv2(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn coordinate_shapes() {
        let (bigr, rho, r, psi) = Coordinates::point(C64::new(0.1, 0.0), 0.2, &[]);
        assert!(bigr < 1.0 && rho == 1.0 && r == 1.0 && (psi - 0.2).abs() < 1e-15);
        let (bigr, rho, _, psi) = Coordinates::point(C64::new(5.0, 0.0), 0.3, &[]);
        assert_eq!(rho, bigr);
        assert!((psi - 0.3 / bigr).abs() < 1e-15);
        let (_, _, r, psi) = Coordinates::point(C64::new(0.1, 0.1), 0.05, &[C64::new(0.1, 0.0)]);
        assert!((r - (0.01f64 + 0.0025).sqrt()).abs() < 1e-15);
        assert!((psi - 0.05 / r).abs() < 1e-12);
        let (_, _, _, psi) = Coordinates::point(C64::new(0.0, 0.0), 3.0, &[]);
        assert_eq!(psi, 1.0);
    }

    #[test]
    fn weighted_norm_examples() {
        let g = grid(9, 0.0);
        let coords = Coordinates::new(&g, &[]);
        let spec = WeightedNormSpec { mu: 1.0, v: 1.0, delta: 0.5 };
        assert_eq!(weighted_sup_norm(&coords, &vec![0.0; g.len()], &spec), 0.0);
        let exact: Vec<f64> = (0..g.len()).map(|n| coords.psi[n] * coords.r[n] * coords.rho[n].powf(0.5)).collect();
        assert!((weighted_sup_norm(&coords, &exact, &spec) - 1.0).abs() < 1e-14);
    }
}
