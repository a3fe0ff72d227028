//! Conjugate gradients with a geometric multigrid preconditioner for the
//! volume-weighted Dirichlet operator `vol·(−Δ_h + c(x))`, and flexible GMRES
//! for nonsymmetric systems.
//!
//! Coarse levels use the same box and y-grading with `n → n/2 + 1` nodes per
//! axis (nested when `n` is odd). Transfers are trilinear interpolation in the
//! index coordinate and its transpose; smoothing is y-line Gauss–Seidel, forward
//! before the coarse correction and backward after it, so the V-cycle is a
//! symmetric preconditioner.

use crate::geometry::{Grid3, GridSpec};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients on vectors whose fixed entries are kept at zero.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> SolveReport {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveReport { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    SolveReport { iterations: it, relative_residual: rel, converged: rel <= tol }
}

/// Flexible GMRES(m) with right preconditioning; `precond` may change between
/// iterations (an inner iterative solve).
pub fn fgmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> SolveReport {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveReport { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut it = 0;
    let mut r = vec![0.0; n];
    let mut rel;
    loop {
        apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = dot(&r, &r).sqrt();
        rel = beta / bnorm;
        if rel <= tol || it >= max_iter {
            break;
        }
        let m = restart.min(max_iter - it);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut z = vec![0.0; n];
            precond(&v[j], &mut z);
            let mut w = vec![0.0; n];
            apply(&z, &mut w);
            zs.push(z);
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(&w, vi);
                for q in 0..n {
                    w[q] -= h[i][j] * vi[q];
                }
            }
            h[j + 1][j] = dot(&w, &w).sqrt();
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = if d == 0.0 { 1.0 } else { h[j][j] / d };
            sn[j] = if d == 0.0 { 0.0 } else { h[j + 1][j] / d };
            let hj1 = h[j + 1][j];
            h[j][j] = cs[j] * h[j][j] + sn[j] * hj1;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            it += 1;
            let wn = dot(&w, &w).sqrt();
            if g[j + 1].abs() / bnorm <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|a| a / wn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { acc / h[i][i] };
        }
        for (k, z) in zs.iter().take(used).enumerate() {
            for q in 0..n {
                x[q] += y[k] * z[q];
            }
        }
    }
    SolveReport { iterations: it, relative_residual: rel, converged: rel <= tol }
}

/// One-dimensional interpolation table: fine index → (coarse index, weight of the upper node).
fn interp_table(nf: usize, nc: usize) -> Vec<(usize, f64)> {
    (0..nf)
        .map(|i| {
            let t = i as f64 * (nc - 1) as f64 / (nf - 1) as f64;
            let m = (t.floor() as usize).min(nc - 2);
            (m, t - m as f64)
        })
        .collect()
}

struct Level {
    dims: [usize; 3],
    /// x₁ and x₂ couplings per y-layer.
    cx1: Vec<f64>,
    cx2: Vec<f64>,
    /// y-coupling between layers k−1 and k, stored at k.
    cy: Vec<f64>,
    vol: Vec<f64>,
    diag: Vec<f64>,
    coef: Vec<f64>,
}

impl Level {
    fn new(grid: &Grid3, coef: Vec<f64>) -> Self {
        let [n1, n2, ny] = grid.dims();
        let (h1, h2) = (grid.h1, grid.h2);
        let mut cx1 = vec![0.0; ny];
        let mut cx2 = vec![0.0; ny];
        let mut cy = vec![0.0; ny];
        let mut vol = vec![0.0; ny];
        for k in 0..ny {
            let vy = grid.volume_y(k);
            cx1[k] = h2 * vy / h1;
            cx2[k] = h1 * vy / h2;
            vol[k] = h1 * h2 * vy;
            if k > 0 {
                cy[k] = h1 * h2 / (grid.y[k] - grid.y[k - 1]);
            }
        }
        let mut lvl = Level { dims: [n1, n2, ny], cx1, cx2, cy, vol, diag: vec![0.0; grid.len()], coef };
        for k in 1..ny - 1 {
            for j in 1..n2 - 1 {
                for i in 1..n1 - 1 {
                    let n = (k * n2 + j) * n1 + i;
                    lvl.diag[n] =
                        2.0 * lvl.cx1[k] + 2.0 * lvl.cx2[k] + lvl.cy[k] + lvl.cy[k + 1] + lvl.vol[k] * lvl.coef[n];
                }
            }
        }
        lvl
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [n1, n2, ny] = self.dims;
        let s2 = n1;
        let s3 = n1 * n2;
        y.iter_mut().for_each(|v| *v = 0.0);
        for k in 1..ny - 1 {
            let (c1, c2, cl, cu) = (self.cx1[k], self.cx2[k], self.cy[k], self.cy[k + 1]);
            for j in 1..n2 - 1 {
                let row = (k * n2 + j) * n1;
                for i in 1..n1 - 1 {
                    let n = row + i;
                    y[n] = self.diag[n] * x[n]
                        - c1 * (x[n - 1] + x[n + 1])
                        - c2 * (x[n - s2] + x[n + s2])
                        - cl * x[n - s3]
                        - cu * x[n + s3];
                }
            }
        }
    }

    /// One y-line Gauss–Seidel sweep over all interior columns.
    fn line_sweep(&self, b: &[f64], x: &mut [f64], backward: bool, scratch: &mut (Vec<f64>, Vec<f64>)) {
        let [n1, n2, ny] = self.dims;
        let s2 = n1;
        let s3 = n1 * n2;
        let m = ny - 2;
        let (cp, dp) = scratch;
        cp.resize(m, 0.0);
        dp.resize(m, 0.0);
        let cols: Vec<(usize, usize)> = (1..n2 - 1).flat_map(|j| (1..n1 - 1).map(move |i| (i, j))).collect();
        let mut solve_col = |i: usize, j: usize, x: &mut [f64]| {
            // Thomas algorithm on k = 1..ny-2
            for (t, k) in (1..ny - 1).enumerate() {
                let n = (k * n2 + j) * n1 + i;
                let rhs = b[n]
                    + self.cx1[k] * (x[n - 1] + x[n + 1])
                    + self.cx2[k] * (x[n - s2] + x[n + s2])
                    + if k == 1 { self.cy[k] * x[n - s3] } else { 0.0 }
                    + if k == ny - 2 { self.cy[k + 1] * x[n + s3] } else { 0.0 };
                let a = if k > 1 { -self.cy[k] } else { 0.0 };
                let c = if k < ny - 2 { -self.cy[k + 1] } else { 0.0 };
                let d = self.diag[n];
                if t == 0 {
                    cp[t] = c / d;
                    dp[t] = rhs / d;
                } else {
                    let den = d - a * cp[t - 1];
                    cp[t] = c / den;
                    dp[t] = (rhs - a * dp[t - 1]) / den;
                }
            }
            let mut next = 0.0;
            for t in (0..m).rev() {
                let k = t + 1;
                let n = (k * n2 + j) * n1 + i;
                let v = if t == m - 1 { dp[t] } else { dp[t] - cp[t] * next };
                x[n] = v;
                next = v;
            }
        };
        if backward {
            for &(i, j) in cols.iter().rev() {
                solve_col(i, j, x);
            }
        } else {
            for &(i, j) in cols.iter() {
                solve_col(i, j, x);
            }
        }
    }
}

/// Multigrid hierarchy for `vol·(−Δ_h + c)` with homogeneous Dirichlet faces.
pub struct Multigrid {
    levels: Vec<Level>,
    /// Interpolation tables from level l+1 to level l, one per axis.
    tables: Vec<[Vec<(usize, f64)>; 3]>,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    pub coarse_sweeps: usize,
}

fn coarse_dims(d: [usize; 3]) -> [usize; 3] {
    [d[0] / 2 + 1, d[1] / 2 + 1, d[2] / 2 + 1]
}

impl Multigrid {
    pub fn new(grid: &Grid3, coef: &[f64]) -> Self {
        assert_eq!(coef.len(), grid.len());
        let mut levels = vec![Level::new(grid, coef.to_vec())];
        let mut tables = Vec::new();
        let mut spec = grid.spec.clone();
        let mut fine_coef = coef.to_vec();
        let mut fine_vol: Vec<f64> = (0..grid.len()).map(|n| grid.volume(n)).collect();
        loop {
            let d = [spec.n1, spec.n2, spec.ny];
            if d.iter().any(|&n| n <= 5) || levels.len() >= 12 {
                break;
            }
            let cd = coarse_dims(d);
            let cspec = GridSpec { n1: cd[0], n2: cd[1], ny: cd[2], ..spec.clone() };
            let cgrid = Grid3::new_unchecked(cspec.clone());
            let tab = [interp_table(d[0], cd[0]), interp_table(d[1], cd[1]), interp_table(d[2], cd[2])];
            let weighted: Vec<f64> = fine_coef.iter().zip(&fine_vol).map(|(c, v)| c * v).collect();
            let num = restrict_raw(&tab, d, cd, &weighted);
            let den = restrict_raw(&tab, d, cd, &fine_vol);
            let ccoef: Vec<f64> = num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect();
            levels.push(Level::new(&cgrid, ccoef.clone()));
            tables.push(tab);
            fine_vol = (0..cgrid.len()).map(|n| cgrid.volume(n)).collect();
            fine_coef = ccoef;
            spec = cspec;
        }
        Multigrid { levels, tables, pre_sweeps: 1, post_sweeps: 1, coarse_sweeps: 40 }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// y = A x on the finest level.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.levels[0].apply(x, y);
    }

    /// Volume weight of the finest level at node n (interior nodes).
    pub fn volume(&self, n: usize) -> f64 {
        let l = &self.levels[0];
        let k = n / (l.dims[0] * l.dims[1]);
        l.vol[k]
    }

    /// One symmetric V-cycle applied to `b` from a zero initial guess.
    pub fn vcycle(&self, b: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut scratch = (Vec::new(), Vec::new());
        self.cycle(0, b, x, &mut scratch);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64], scratch: &mut (Vec<f64>, Vec<f64>)) {
        let lvl = &self.levels[l];
        if l + 1 == self.levels.len() {
            for _ in 0..self.coarse_sweeps {
                lvl.line_sweep(b, x, false, scratch);
                lvl.line_sweep(b, x, true, scratch);
            }
            return;
        }
        for _ in 0..self.pre_sweeps {
            lvl.line_sweep(b, x, false, scratch);
        }
        let mut r = vec![0.0; lvl.len()];
        lvl.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        zero_faces(lvl.dims, &mut r);
        let cl = &self.levels[l + 1];
        let mut rc = restrict_raw(&self.tables[l], lvl.dims, cl.dims, &r);
        zero_faces(cl.dims, &mut rc);
        let mut ec = vec![0.0; cl.len()];
        self.cycle(l + 1, &rc, &mut ec, scratch);
        let mut e = prolong_raw(&self.tables[l], cl.dims, lvl.dims, &ec);
        zero_faces(lvl.dims, &mut e);
        for (xi, ei) in x.iter_mut().zip(&e) {
            *xi += ei;
        }
        for _ in 0..self.post_sweeps {
            lvl.line_sweep(b, x, true, scratch);
        }
    }

    /// Solves `(−Δ_h + c) u = f` on interior nodes with `u = 0` on faces.
    pub fn solve(&self, f: &[f64], u: &mut [f64], tol: f64, max_iter: usize) -> SolveReport {
        let lvl = &self.levels[0];
        let mut b = vec![0.0; lvl.len()];
        let [n1, n2, _] = lvl.dims;
        for (n, bn) in b.iter_mut().enumerate() {
            *bn = f[n] * lvl.vol[n / (n1 * n2)];
        }
        zero_faces(lvl.dims, &mut b);
        zero_faces(lvl.dims, u);
        pcg(|x, y| lvl.apply(x, y), |r, z| self.vcycle(r, z), &b, u, tol, max_iter)
    }
}

fn zero_faces(d: [usize; 3], v: &mut [f64]) {
    let [n1, n2, ny] = d;
    for k in 0..ny {
        for j in 0..n2 {
            for i in 0..n1 {
                if i == 0 || j == 0 || k == 0 || i == n1 - 1 || j == n2 - 1 || k == ny - 1 {
                    v[(k * n2 + j) * n1 + i] = 0.0;
                }
            }
        }
    }
}

fn prolong_raw(tab: &[Vec<(usize, f64)>; 3], cd: [usize; 3], fd: [usize; 3], c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fd[0] * fd[1] * fd[2]];
    for k in 0..fd[2] {
        let (mk, tk) = tab[2][k];
        for j in 0..fd[1] {
            let (mj, tj) = tab[1][j];
            for i in 0..fd[0] {
                let (mi, ti) = tab[0][i];
                let mut acc = 0.0;
                for (dk, wk) in [(0, 1.0 - tk), (1, tk)] {
                    if wk == 0.0 {
                        continue;
                    }
                    for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                        if wj == 0.0 {
                            continue;
                        }
                        let base = ((mk + dk) * cd[1] + mj + dj) * cd[0] + mi;
                        acc += wk * wj * ((1.0 - ti) * c[base] + if ti != 0.0 { ti * c[base + 1] } else { 0.0 });
                    }
                }
                out[(k * fd[1] + j) * fd[0] + i] = acc;
            }
        }
    }
    out
}

fn restrict_raw(tab: &[Vec<(usize, f64)>; 3], fd: [usize; 3], cd: [usize; 3], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cd[0] * cd[1] * cd[2]];
    for k in 0..fd[2] {
        let (mk, tk) = tab[2][k];
        for j in 0..fd[1] {
            let (mj, tj) = tab[1][j];
            for i in 0..fd[0] {
                let (mi, ti) = tab[0][i];
                let v = f[(k * fd[1] + j) * fd[0] + i];
                if v == 0.0 {
                    continue;
                }
                for (dk, wk) in [(0, 1.0 - tk), (1, tk)] {
                    if wk == 0.0 {
                        continue;
                    }
                    for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                        if wj == 0.0 {
                            continue;
                        }
                        let base = ((mk + dk) * cd[1] + mj + dj) * cd[0] + mi;
                        let w = wk * wj * v;
                        out[base] += w * (1.0 - ti);
                        if ti != 0.0 {
                            out[base + 1] += w * ti;
                        }
                    }
                }
            }
        }
    }
    out
}
