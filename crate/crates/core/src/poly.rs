//! Complex polynomials in z and the Bézout identity QS + TR = 1.

use crate::algebra::C64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TRIM_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("Q and R are not coprime (resultant {0:e} below threshold)")]
    NotCoprime(f64),
    #[error("Q must be monic")]
    NotMonic,
    #[error("Sylvester system is singular")]
    Singular,
}

/// Coefficients in ascending degree; trailing coefficients below 1e-14 are trimmed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPoly {
    coeffs: Vec<C64>,
}

impl CPoly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() < TRIM_TOL) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(C64::default());
        }
        if coeffs.len() == 1 && coeffs[0].norm() < TRIM_TOL {
            coeffs[0] = C64::default();
        }
        CPoly { coeffs }
    }

    pub fn from_real(c: &[f64]) -> Self {
        CPoly::new(c.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn constant(c: C64) -> Self {
        CPoly::new(vec![c])
    }

    pub fn zero() -> Self {
        CPoly::new(vec![])
    }

    pub fn one() -> Self {
        CPoly::from_real(&[1.0])
    }

    /// The monomial z.
    pub fn z() -> Self {
        CPoly::from_real(&[0.0, 1.0])
    }

    /// lead·Π(z − r).
    pub fn from_roots(roots: &[C64], lead: C64) -> Self {
        let mut p = CPoly::constant(lead);
        for &r in roots {
            p = p.mul(&CPoly::new(vec![-r, C64::new(1.0, 0.0)]));
        }
        p
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == C64::default()
    }

    pub fn leading(&self) -> C64 {
        *self.coeffs.last().unwrap()
    }

    pub fn is_monic(&self) -> bool {
        (self.leading() - 1.0).norm() < 1e-12
    }

    pub fn monic(&self) -> Self {
        let l = self.leading();
        if l.norm() == 0.0 {
            return self.clone();
        }
        CPoly::new(self.coeffs.iter().map(|c| c / l).collect())
    }

    /// Horner evaluation.
    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::default(), |acc, &c| acc * z + c)
    }

    /// Value and first two derivatives.
    pub fn eval_derivs(&self, z: C64) -> (C64, C64, C64) {
        let mut p = C64::default();
        let mut dp = C64::default();
        let mut ddp = C64::default();
        for &c in self.coeffs.iter().rev() {
            ddp = ddp * z + dp * 2.0;
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp, ddp)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return CPoly::zero();
        }
        CPoly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect())
    }

    pub fn add(&self, o: &CPoly) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let get = |p: &CPoly, k: usize| p.coeffs.get(k).copied().unwrap_or_default();
        CPoly::new((0..n).map(|k| get(self, k) + get(o, k)).collect())
    }

    pub fn sub(&self, o: &CPoly) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, f: C64) -> Self {
        CPoly::new(self.coeffs.iter().map(|&c| c * f).collect())
    }

    pub fn mul(&self, o: &CPoly) -> Self {
        let mut out = vec![C64::default(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPoly::new(out)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Fujiwara bound on the modulus of every root.
    pub fn root_radius_bound(&self) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = self.leading().norm();
        let mut b: f64 = 0.0;
        for k in 1..=n {
            let mut a = self.coeffs[n - k].norm() / lead;
            if k == n {
                a *= 0.5;
            }
            b = b.max(a.powf(1.0 / k as f64));
        }
        2.0 * b
    }

    /// All roots by Durand–Kerner iteration from a fixed starting pattern.
    pub fn roots(&self) -> Vec<C64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let p = self.monic();
        let radius = p.root_radius_bound().max(1e-3);
        let seed = C64::new(0.4, 0.9);
        let mut z: Vec<C64> = (0..n).map(|k| seed.powu(k as u32) * radius * 0.5).collect();
        if n == 1 {
            return vec![-p.coeffs[0]];
        }
        for _ in 0..2000 {
            let mut change: f64 = 0.0;
            for i in 0..n {
                let mut denom = C64::new(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        denom *= z[i] - z[j];
                    }
                }
                if denom.norm() == 0.0 {
                    denom = C64::new(1e-12, 0.0);
                }
                let step = p.eval(z[i]) / denom;
                z[i] -= step;
                change = change.max(step.norm());
            }
            if change < 1e-15 * radius.max(1.0) {
                break;
            }
        }
        z
    }
}

fn sylvester(q: &CPoly, r: &CPoly) -> DMatrix<C64> {
    let m = q.degree();
    let n = r.degree();
    let size = m + n;
    let mut s = DMatrix::<C64>::zeros(size, size);
    for i in 0..n {
        for k in 0..=m {
            s[(i, i + k)] = q.coeffs[m - k];
        }
    }
    for j in 0..m {
        for k in 0..=n {
            s[(n + j, j + k)] = r.coeffs[n - k];
        }
    }
    s
}

/// Determinant of the Sylvester matrix.
pub fn resultant(q: &CPoly, r: &CPoly) -> C64 {
    if q.is_zero() || r.is_zero() {
        return C64::default();
    }
    if q.degree() + r.degree() == 0 {
        return C64::new(1.0, 0.0);
    }
    sylvester(q, r).determinant()
}

/// Minimal-degree S, T with QS + TR = 1 (deg S < deg R, deg T < deg Q).
///
/// The Sylvester system is square for any degrees, so deg R ≥ deg Q is accepted
/// here; the stricter triple constraint is enforced by the approx module.
pub fn bezout(q: &CPoly, r: &CPoly) -> Result<(CPoly, CPoly), PolyError> {
    let m = q.degree();
    if !q.is_monic() {
        return Err(PolyError::NotMonic);
    }
    if r.is_zero() {
        if m == 0 {
            return Ok((CPoly::one(), CPoly::zero()));
        }
        return Err(PolyError::NotCoprime(0.0));
    }
    let n = r.degree();
    if n == 0 {
        return Ok((CPoly::zero(), CPoly::constant(r.coeffs[0].inv())));
    }
    let res = resultant(q, r);
    let scale = q.max_coeff().powi(n as i32) * r.max_coeff().powi(m as i32);
    if res.norm() < 1e-10 * scale {
        return Err(PolyError::NotCoprime(res.norm()));
    }
    // unknowns: S_0..S_{n-1}, T_0..T_{m-1}; equations: coefficient of z^k, k < m + n
    let size = m + n;
    let mut a = DMatrix::<C64>::zeros(size, size);
    for j in 0..n {
        for (k, &qc) in q.coeffs.iter().enumerate() {
            a[(j + k, j)] += qc;
        }
    }
    for j in 0..m {
        for (k, &rc) in r.coeffs.iter().enumerate() {
            a[(j + k, n + j)] += rc;
        }
    }
    let col_scale: Vec<f64> = (0..size)
        .map(|j| {
            let nrm = a.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if nrm > 0.0 {
                1.0 / nrm
            } else {
                1.0
            }
        })
        .collect();
    for j in 0..size {
        let f = col_scale[j];
        a.column_mut(j).iter_mut().for_each(|z| *z *= f);
    }
    let mut rhs = nalgebra::DVector::<C64>::zeros(size);
    rhs[0] = C64::new(1.0, 0.0);
    let lu = a.clone().full_piv_lu();
    let mut x = lu.solve(&rhs).ok_or(PolyError::Singular)?;
    // one step of iterative refinement
    let resid = &rhs - &a * &x;
    if let Some(dx) = lu.solve(&resid) {
        x += dx;
    }
    let s = CPoly::new((0..n).map(|j| x[j] * col_scale[j]).collect());
    let t = CPoly::new((0..m).map(|j| x[n + j] * col_scale[n + j]).collect());
    Ok((s, t))
}

/// Coefficient sup-norm of QS + TR − 1.
pub fn bezout_residual(q: &CPoly, r: &CPoly, s: &CPoly, t: &CPoly) -> f64 {
    q.mul(s).add(&t.mul(r)).sub(&CPoly::one()).max_coeff()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(CPoly::one().eval(c(3.0, -7.0)), c(1.0, 0.0));
        let z2 = CPoly::from_real(&[0.0, 0.0, 1.0]);
        assert!((z2.eval(c(1.0, 1.0)) - c(0.0, 2.0)).norm() < 1e-15);
        assert_eq!(CPoly::from_real(&[-1.0, 1.0]).eval(c(1.0, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn trimming_and_degree() {
        let p = CPoly::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(1e-16, 0.0)]);
        assert_eq!(p.degree(), 1);
        assert!(CPoly::new(vec![c(1e-20, 0.0)]).is_zero());
        assert_eq!(CPoly::from_real(&[2.0, 4.0]).monic(), CPoly::from_real(&[0.5, 1.0]));
    }

    #[test]
    fn derivatives_match() {
        let p = CPoly::new(vec![c(1.0, -1.0), c(0.5, 0.0), c(0.0, 2.0), c(-1.0, 0.3)]);
        let z = c(0.7, -0.4);
        let (v, d, dd) = p.eval_derivs(z);
        assert!((v - p.eval(z)).norm() < 1e-14);
        assert!((d - p.derivative().eval(z)).norm() < 1e-14);
        assert!((dd - p.derivative().derivative().eval(z)).norm() < 1e-14);
    }

    #[test]
    fn bezout_examples() {
        let (s, t) = bezout(&CPoly::z(), &CPoly::one()).unwrap();
        assert!(s.is_zero());
        assert_eq!(t, CPoly::one());

        let (s, t) = bezout(&CPoly::from_real(&[-1.0, 1.0]), &CPoly::from_real(&[1.0, 1.0])).unwrap();
        assert!((s.coeffs()[0] - c(-0.5, 0.0)).norm() < 1e-14 && s.degree() == 0);
        assert!((t.coeffs()[0] - c(0.5, 0.0)).norm() < 1e-14 && t.degree() == 0);

        let q = CPoly::from_real(&[0.0, 0.0, 1.0]);
        let r = CPoly::from_real(&[1.0, 1.0]);
        let (s, t) = bezout(&q, &r).unwrap();
        assert!(s.sub(&CPoly::one()).max_coeff() < 1e-13);
        assert!(t.sub(&CPoly::from_real(&[1.0, -1.0])).max_coeff() < 1e-13);
        assert!(bezout_residual(&q, &r, &s, &t) < 1e-14);
    }

    #[test]
    fn bezout_errors() {
        let q = CPoly::from_real(&[-1.0, 1.0]);
        assert!(matches!(bezout(&q, &q), Err(PolyError::NotCoprime(_))));
        let q2 = CPoly::from_real(&[1.0, -2.0, 1.0]);
        assert!(matches!(bezout(&q2, &CPoly::from_real(&[-1.0, 1.0])), Err(PolyError::NotCoprime(_))));
        assert!(matches!(bezout(&CPoly::from_real(&[0.0, 2.0]), &CPoly::one()), Err(PolyError::NotMonic)));
        let (s, t) = bezout(&CPoly::one(), &CPoly::zero()).unwrap();
        assert_eq!(s, CPoly::one());
        assert!(t.is_zero());
    }

    #[test]
    fn resultant_examples() {
        assert_eq!(resultant(&CPoly::z(), &CPoly::one()), c(1.0, 0.0));
        let zm1 = CPoly::from_real(&[-1.0, 1.0]);
        assert!(resultant(&zm1, &zm1).norm() < 1e-14);
        let r = resultant(&CPoly::from_real(&[0.0, 0.0, 1.0]), &CPoly::from_real(&[1.0, 1.0]));
        assert!((r - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn roots_recovered() {
        let want = [c(0.3, -0.2), c(-0.5, 0.1), c(2.0, 0.0)];
        let p = CPoly::from_roots(&want, c(1.0, 0.0));
        let got = p.roots();
        for w in want {
            assert!(got.iter().any(|g| (g - w).norm() < 1e-10));
        }
        assert!(p.root_radius_bound() >= 2.0);
        assert_eq!(CPoly::z().root_radius_bound(), 0.0);
    }
}
