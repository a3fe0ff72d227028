//! The verification suite: algebra identities, closed-form oracles,
//! refinement studies. Failures are verdicts, never panics.

use ebe_core::algebra::{
    exp_herm, gamma, hermitian_sum, polar, reference, v_op, HermTraceless, Mat2C, SpecialUnitary, C64,
};
use ebe_core::approx::{build_near, TriplePQR};
use ebe_core::config::{
    linearization_fit, psi_from_metric, residual_first, residual_full, special1_point, weitzenbock_gap, Configuration,
    HermitianField, Higgs, MetricPair, Special1Point, WeitzenbockConvention,
};
use ebe_core::geometry::{Grid3, GridSpec};
use ebe_core::poly::{bezout, bezout_residual, CPoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const ALL_CHECKS: [&str; 10] = [
    "gamma_series",
    "v_squared",
    "hermitian_sum",
    "polar",
    "bezout",
    "special1_oracle",
    "special2_oracle",
    "bullets_vanish",
    "weitzenbock",
    "linearization",
];

/// Replaceable entry points, for fault injection.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub gamma: fn(&HermTraceless, &Mat2C) -> Mat2C,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks { gamma }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub checks: Vec<String>,
    pub algebra_samples: usize,
    pub oracle_instances: usize,
    pub bezout_pairs: usize,
    pub linearization_configs: usize,
    /// Node counts per axis of the refinement levels.
    pub levels: Vec<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 7,
            checks: ALL_CHECKS.iter().map(|s| s.to_string()).collect(),
            algebra_samples: 200,
            oracle_instances: 10,
            bezout_pairs: 100,
            linearization_configs: 5,
            levels: vec![17, 33, 65],
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    /// The decisive measured quantity (an error, or an order).
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WeitzenbockRow {
    pub n: usize,
    pub h: f64,
    pub gap_doubled: f64,
    pub gap_single: f64,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct VerifyReport {
    pub verdicts: Vec<Verdict>,
    /// Filled when the weitzenbock check runs.
    pub weitzenbock_table: Vec<WeitzenbockRow>,
    pub weitzenbock_convention: Option<String>,
    pub linearization_c: Option<f64>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }
}

/// Each check draws from its own stream so subsets reproduce the full run.
fn rng_for(seed: u64, check: &str) -> ChaCha8Rng {
    let salt = check.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

pub fn verify_suite(opts: &VerifyOptions, hooks: &Hooks) -> VerifyReport {
    let mut rep = VerifyReport::default();
    for name in &opts.checks {
        let mut rng = rng_for(opts.seed, name);
        let v = match name.as_str() {
            "gamma_series" => check_gamma_series(&mut rng, opts, hooks),
            "v_squared" => check_v_squared(&mut rng, opts),
            "hermitian_sum" => check_hermitian_sum(&mut rng, opts),
            "polar" => check_polar(&mut rng, opts),
            "bezout" => check_bezout(&mut rng, opts),
            "special1_oracle" => check_special1(&mut rng, opts),
            "special2_oracle" => check_special2(&mut rng, opts),
            "bullets_vanish" => check_bullets(&mut rng, opts),
            "weitzenbock" => {
                let (v, table, conv) = check_weitzenbock(&mut rng, opts);
                rep.weitzenbock_table = table;
                rep.weitzenbock_convention = conv;
                v
            }
            "linearization" => {
                let (v, c) = check_linearization(&mut rng, opts);
                rep.linearization_c = c;
                v
            }
            other => Verdict {
                check: other.to_string(),
                pass: false,
                measured: f64::NAN,
                threshold: f64::NAN,
                detail: "unknown check".into(),
            },
        };
        rep.verdicts.push(v);
    }
    rep
}

fn verdict_le(check: &str, measured: f64, threshold: f64, detail: String) -> Verdict {
    Verdict { check: check.into(), pass: measured <= threshold, measured, threshold, detail }
}

fn uniform(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    rng.gen_range(-a..a)
}

fn cplx(rng: &mut ChaCha8Rng, a: f64) -> C64 {
    C64::new(uniform(rng, a), uniform(rng, a))
}

/// Hermitian traceless with Frobenius norm at most `r`.
fn herm_in_ball(rng: &mut ChaCha8Rng, r: f64) -> HermTraceless {
    let x = [uniform(rng, 1.0), uniform(rng, 1.0), uniform(rng, 1.0)];
    let len = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt().max(1e-300);
    // Frobenius norm of Σ x_k σ_k is √2·|x|
    let scale = r * rng.gen_range(0.0..1.0f64) / (len * 2f64.sqrt());
    HermTraceless::from_coords([x[0] * scale, x[1] * scale, x[2] * scale])
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Mat2C {
    Mat2C::new(cplx(rng, 1.0), cplx(rng, 1.0), cplx(rng, 1.0), cplx(rng, 1.0))
}

fn check_gamma_series(rng: &mut ChaCha8Rng, opts: &VerifyOptions, hooks: &Hooks) -> Verdict {
    let mut err: f64 = 0.0;
    for _ in 0..opts.algebra_samples {
        let s = herm_in_ball(rng, 2.0);
        let m = random_matrix(rng);
        err = err.max(((hooks.gamma)(&s, &m) - reference::gamma_series(&s.matrix(), &m, 20)).max_abs());
    }
    verdict_le("gamma_series", err, 1e-10, format!("{} samples, |s| <= 2, 20 series terms", opts.algebra_samples))
}

fn check_v_squared(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let mut err: f64 = 0.0;
    for _ in 0..opts.algebra_samples {
        let s = herm_in_ball(rng, 2.0);
        let m = random_matrix(rng);
        err = err.max((v_op(&s, &v_op(&s, &m)) - gamma(&s, &m)).max_abs());
    }
    verdict_le("v_squared", err, 1e-10, format!("{} samples", opts.algebra_samples))
}

fn check_hermitian_sum(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let mut commuting: f64 = 0.0;
    let mut witness: f64 = 0.0;
    for _ in 0..opts.algebra_samples {
        // commuting pair: both multiples of one direction
        let s = herm_in_ball(rng, 1.0);
        let (a, b) = (uniform(rng, 2.0), uniform(rng, 2.0));
        let (s1, s2) = (s.scale(a), s.scale(b));
        commuting = commuting.max((hermitian_sum(&s1, &s2).matrix() - s.scale(a + b).matrix()).max_abs());
        let (t1, t2) = (herm_in_ball(rng, 2.0), herm_in_ball(rng, 2.0));
        witness = witness.max((hermitian_sum(&t1, &t2).matrix() - (t1.matrix() + t2.matrix())).max_abs());
    }
    let pass = commuting <= 1e-12 && witness >= 1e-3;
    Verdict {
        check: "hermitian_sum".into(),
        pass,
        measured: commuting,
        threshold: 1e-12,
        detail: format!("commuting error {commuting:e} (<= 1e-12); non-commuting witness {witness:e} (>= 1e-3)"),
    }
}

fn check_polar(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let mut err: f64 = 0.0;
    for _ in 0..opts.algebra_samples {
        let u = SpecialUnitary::exp_su2([uniform(rng, 3.0), uniform(rng, 3.0), uniform(rng, 3.0)]);
        let s = herm_in_ball(rng, 2.0);
        let g = u.matrix() * exp_herm(&s);
        let e = match polar(&g) {
            Ok((u2, s2)) => (u2.matrix() * exp_herm(&s2) - g).max_abs().max((s2.matrix() - s.matrix()).max_abs()),
            Err(_) => f64::INFINITY,
        };
        err = err.max(e);
    }
    verdict_le("polar", err, 1e-10, format!("{} samples", opts.algebra_samples))
}

/// Monic Q of degree 1..=6 and R of lower degree, roots uniform in the unit disk.
pub fn random_coprime_pair(rng: &mut ChaCha8Rng) -> (CPoly, CPoly) {
    let disk = |rng: &mut ChaCha8Rng| {
        let r = rng.gen_range(0.0..1.0f64).sqrt();
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        C64::from_polar(r, a)
    };
    let dq = rng.gen_range(1..=6usize);
    let dr = rng.gen_range(0..dq);
    let qr: Vec<C64> = (0..dq).map(|_| disk(rng)).collect();
    let rr: Vec<C64> = (0..dr).map(|_| disk(rng)).collect();
    let lead = C64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
    (CPoly::from_roots(&qr, C64::new(1.0, 0.0)), CPoly::from_roots(&rr, lead))
}

/// |det H − 1| over the rounding scale |h₁₁|·|h₂₂| of a 2×2 determinant.
fn scaled_det_error(h: &Mat2C) -> f64 {
    (h.det() - 1.0).norm() / (h.a().norm() * h.d().norm()).max(1.0)
}

fn check_bezout(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let grid = Grid3::new(GridSpec::cube([9, 9, 9], 1.5, 0.1, 2.0, 0.0)).expect("fixed grid");
    let u3p = grid.sample(|_, _, y| y.sinh().ln());
    let (mut res, mut det, mut det_abs): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = 0;
    for _ in 0..opts.bezout_pairs {
        let (q, r) = random_coprime_pair(rng);
        match bezout(&q, &r) {
            Ok((s, t)) => res = res.max(bezout_residual(&q, &r, &s, &t)),
            Err(_) => failures += 1,
        }
        match TriplePQR::new(CPoly::one(), q, r).and_then(|t| build_near(&t, &grid, &u3p)) {
            Ok(near) => {
                det = near.h2.iter().map(scaled_det_error).fold(det, f64::max);
                det_abs = det_abs.max(near.det_error());
            }
            Err(_) => failures += 1,
        }
    }
    Verdict {
        check: "bezout".into(),
        pass: failures == 0 && res <= 1e-8 && det <= 1e-10,
        measured: res.max(det),
        threshold: 1e-10,
        detail: format!(
            "{} pairs: sup|QS+TR-1| {res:e} (<= 1e-8); sup|det H2 - 1|/max(1,|h11||h22|) {det:e} (<= 1e-10); unscaled {det_abs:e}; {failures} failures",
            opts.bezout_pairs
        ),
    }
}

/// u = c₀ + c₁ sin(a·x + θ) + c₂ cos(b y + θ'), w = α e^{λ·x}, with closed-form derivatives.
#[derive(Clone, Debug)]
pub struct SmoothMetric {
    c: [f64; 3],
    a: [f64; 2],
    theta: [f64; 2],
    b: f64,
    alpha: C64,
    lambda: [C64; 3],
}

pub struct MetricValues {
    pub u: f64,
    pub u_grad: [f64; 3],
    pub u_lap: f64,
    pub w: C64,
    pub w_grad: [C64; 3],
    pub w_lap: C64,
}

impl SmoothMetric {
    pub fn random(rng: &mut ChaCha8Rng, with_w: bool) -> Self {
        SmoothMetric {
            c: [uniform(rng, 0.5), uniform(rng, 0.4), uniform(rng, 0.4)],
            a: [uniform(rng, 1.0), uniform(rng, 1.0)],
            theta: [uniform(rng, 3.0), uniform(rng, 3.0)],
            b: uniform(rng, 1.0),
            alpha: if with_w { cplx(rng, 0.4) } else { C64::new(0.0, 0.0) },
            lambda: [cplx(rng, 0.4), cplx(rng, 0.4), cplx(rng, 0.4)],
        }
    }

    pub fn eval(&self, x1: f64, x2: f64, y: f64) -> MetricValues {
        let ph = self.a[0] * x1 + self.a[1] * x2 + self.theta[0];
        let py = self.b * y + self.theta[1];
        let u = self.c[0] + self.c[1] * ph.sin() + self.c[2] * py.cos();
        let u_grad =
            [self.c[1] * self.a[0] * ph.cos(), self.c[1] * self.a[1] * ph.cos(), -self.c[2] * self.b * py.sin()];
        let a2 = self.a[0] * self.a[0] + self.a[1] * self.a[1];
        let u_lap = -self.c[1] * a2 * ph.sin() - self.c[2] * self.b * self.b * py.cos();
        let l = self.lambda;
        let w = self.alpha * (l[0] * x1 + l[1] * x2 + l[2] * y).exp();
        MetricValues {
            u,
            u_grad,
            u_lap,
            w,
            w_grad: [l[0] * w, l[1] * w, l[2] * w],
            w_lap: (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]) * w,
        }
    }

    pub fn pair(&self, grid: &Grid3, phi: Higgs) -> MetricPair {
        MetricPair::new(grid.sample(|a, b, c| self.eval(a, b, c).u), grid.sample(|a, b, c| self.eval(a, b, c).w), phi)
    }
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> CPoly {
    let d = rng.gen_range(0..=max_degree);
    CPoly::new((0..=d).map(|_| cplx(rng, 1.0)).collect())
}

/// Gaps are read this many layers away from the faces, where one-sided
/// differences leave an O(h) footprint.
const COLLAR: usize = 2;

fn level_grid(n: usize) -> Grid3 {
    Grid3::new(GridSpec::cube([n, n, n], 1.0, 0.5, 1.5, 0.0)).expect("fixed grid")
}

/// Observed order of decay of `err` against h from the two finest levels
/// (None when the errors sit at rounding level).
fn order(hs: &[f64], errs: &[f64]) -> Option<f64> {
    if errs.iter().all(|&e| e <= 1e-11) || errs.len() < 2 {
        return None;
    }
    let m = errs.len();
    Some((errs[m - 2] / errs[m - 1]).ln() / (hs[m - 2] / hs[m - 1]).ln())
}

fn level_hs(opts: &VerifyOptions) -> Vec<f64> {
    opts.levels.iter().map(|&n| level_grid(n).h_max()).collect()
}

/// Minimum order over instances, and the worst finest-level gap.
fn oracle_study(
    name: &str,
    opts: &VerifyOptions,
    threshold: f64,
    mut gap: impl FnMut(usize, &Grid3) -> Vec<f64>,
    instances: usize,
) -> Verdict {
    let hs = level_hs(opts);
    let mut worst = f64::INFINITY;
    let mut finest: f64 = 0.0;
    let mut orders = Vec::new();
    for inst in 0..instances {
        let mut per_level: Vec<Vec<f64>> = Vec::new();
        for &n in &opts.levels {
            per_level.push(gap(inst, &level_grid(n)));
        }
        // one column per quantity (a single gap, or one per bullet)
        for q in 0..per_level[0].len() {
            let errs: Vec<f64> = per_level.iter().map(|l| l[q]).collect();
            finest = finest.max(*errs.last().unwrap_or(&0.0));
            if let Some(o) = order(&hs, &errs) {
                worst = worst.min(o);
                orders.push(o);
            }
        }
    }
    let measured = if orders.is_empty() { f64::INFINITY } else { worst };
    Verdict {
        check: name.into(),
        pass: measured >= threshold && measured.is_finite() || orders.is_empty() && finest <= 1e-11,
        measured,
        threshold,
        detail: format!(
            "{instances} instances, levels {:?}; minimum order {measured:.3}; finest-level gap {finest:e}",
            opts.levels
        ),
    }
}

fn check_special1(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let inst: Vec<(SmoothMetric, CPoly)> =
        (0..opts.oracle_instances).map(|_| (SmoothMetric::random(rng, true), random_poly(rng, 2))).collect();
    oracle_study(
        "special1_oracle",
        opts,
        1.8,
        |k, g| {
            let (m, p) = &inst[k];
            let psi = match psi_from_metric(g, &m.pair(g, Higgs::lower(p.clone()))) {
                Ok(psi) => psi,
                Err(_) => return vec![f64::INFINITY],
            };
            let (e, f) = residual_first(&psi).special_pair();
            let gap = g.sup_collar(COLLAR, |n| {
                let (i, j, kk) = g.ijk(n);
                let (x1, x2, y) = (g.x1[i], g.x2[j], g.y[kk]);
                let v = m.eval(x1, x2, y);
                let q = Special1Point {
                    u: v.u,
                    lap_u: v.u_lap,
                    dz_u: C64::new(0.5 * v.u_grad[0], -0.5 * v.u_grad[1]),
                    dy_u: v.u_grad[2],
                    w_lap: v.w_lap,
                    dbar_w: (v.w_grad[0] + v.w_grad[1] * C64::new(0.0, 1.0)) * 0.5,
                    dy_w: v.w_grad[2],
                    p: p.eval(C64::new(x1, x2)),
                };
                let (ee, ff) = special1_point(&q);
                (e[n] - ee).abs().max((f[n] - ff).norm())
            });
            vec![gap]
        },
        opts.oracle_instances,
    )
}

fn check_special2(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let inst: Vec<(SmoothMetric, Higgs)> = (0..opts.oracle_instances)
        .map(|_| {
            let m = SmoothMetric::random(rng, false);
            let h = Higgs { a: random_poly(rng, 2), b: random_poly(rng, 2), p: random_poly(rng, 2) };
            (m, h)
        })
        .collect();
    oracle_study(
        "special2_oracle",
        opts,
        1.8,
        |k, g| {
            let (m, h) = &inst[k];
            let psi = match psi_from_metric(g, &m.pair(g, h.clone())) {
                Ok(psi) => psi,
                Err(_) => return vec![f64::INFINITY],
            };
            let (e, f) = residual_first(&psi).special_pair();
            let gap = g.sup_collar(COLLAR, |n| {
                let (i, j, kk) = g.ijk(n);
                let (x1, x2, y) = (g.x1[i], g.x2[j], g.y[kk]);
                let v = m.eval(x1, x2, y);
                let z = C64::new(x1, x2);
                let (a, b, p) = (h.a.eval(z), h.b.eval(z), h.p.eval(z));
                let (eu, emu) = (v.u.exp(), (-v.u).exp());
                let ee = v.u_lap + emu * emu * p.norm_sqr() - eu * eu * b.norm_sqr();
                let ff = a * b.conj() * (2.0 * eu) - p * a.conj() * (2.0 * emu);
                (e[n] - ee).abs().max((f[n] - ff).norm())
            });
            vec![gap]
        },
        opts.oracle_instances,
    )
}

/// Special-case-1 and special-case-2 style metrics, alternating.
fn corpus_pair(rng: &mut ChaCha8Rng, k: usize) -> (SmoothMetric, Higgs) {
    if k % 2 == 0 {
        (SmoothMetric::random(rng, true), Higgs::lower(random_poly(rng, 2)))
    } else {
        (
            SmoothMetric::random(rng, false),
            Higgs { a: random_poly(rng, 2), b: random_poly(rng, 2), p: random_poly(rng, 2) },
        )
    }
}

fn check_bullets(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Verdict {
    let inst: Vec<(SmoothMetric, Higgs)> = (0..opts.oracle_instances).map(|k| corpus_pair(rng, k)).collect();
    oracle_study(
        "bullets_vanish",
        opts,
        1.8,
        |k, g| {
            let (m, h) = &inst[k];
            match psi_from_metric(g, &m.pair(g, h.clone())) {
                Ok(psi) => {
                    let full = residual_full(&psi);
                    full.bullets[1..].iter().map(|b| g.sup_collar(COLLAR, |n| b[n].norm())).collect()
                }
                Err(_) => vec![f64::INFINITY; 6],
            }
        },
        opts.oracle_instances,
    )
}

/// s = Σ ε_m sin(k_m·x + θ_m) σ_m, with |s| ≤ 0.1.
fn smooth_s(rng: &mut ChaCha8Rng) -> impl Fn(&Grid3) -> HermitianField {
    let amp: Vec<f64> = (0..3).map(|_| uniform(rng, 0.04)).collect();
    let k: Vec<[f64; 3]> = (0..3).map(|_| [uniform(rng, 2.0), uniform(rng, 2.0), uniform(rng, 2.0)]).collect();
    let th: Vec<f64> = (0..3).map(|_| uniform(rng, 3.0)).collect();
    move |g: &Grid3| {
        HermitianField::from_fn(g, |x1, x2, y| {
            let c: [f64; 3] =
                std::array::from_fn(|m| amp[m] * (k[m][0] * x1 + k[m][1] * x2 + k[m][2] * y + th[m]).sin());
            HermTraceless::from_coords(c)
        })
    }
}

type SFactory = Box<dyn Fn(&Grid3) -> HermitianField>;

fn synthetic_pairs(rng: &mut ChaCha8Rng, count: usize) -> Vec<(SmoothMetric, Higgs, SFactory)> {
    (0..count)
        .map(|k| {
            let (m, h) = corpus_pair(rng, k);
            let s: SFactory = Box::new(smooth_s(rng));
            (m, h, s)
        })
        .collect()
}

fn psi_or_none(g: &Grid3, m: &SmoothMetric, h: &Higgs) -> Option<Configuration> {
    psi_from_metric(g, &m.pair(g, h.clone())).ok()
}

fn check_weitzenbock(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> (Verdict, Vec<WeitzenbockRow>, Option<String>) {
    let pairs = synthetic_pairs(rng, 3);
    let hs = level_hs(opts);
    let mut table = Vec::new();
    for (&n, &h) in opts.levels.iter().zip(&hs) {
        let g = level_grid(n);
        let (mut gd, mut gs): (f64, f64) = (0.0, 0.0);
        for (m, hg, s) in &pairs {
            let Some(psi) = psi_or_none(&g, m, hg) else {
                gd = f64::INFINITY;
                gs = f64::INFINITY;
                continue;
            };
            let s = s(&g);
            let a = weitzenbock_gap(&psi, &s, WeitzenbockConvention::DoubledExponent);
            let b = weitzenbock_gap(&psi, &s, WeitzenbockConvention::SingleExponent);
            gd = gd.max(g.sup_collar(COLLAR, |i| a[i].abs()));
            gs = gs.max(g.sup_collar(COLLAR, |i| b[i].abs()));
        }
        table.push(WeitzenbockRow { n, h, gap_doubled: gd, gap_single: gs });
    }
    let od = order(&hs, &table.iter().map(|r| r.gap_doubled).collect::<Vec<_>>()).unwrap_or(f64::INFINITY);
    let os = order(&hs, &table.iter().map(|r| r.gap_single).collect::<Vec<_>>()).unwrap_or(f64::INFINITY);
    let (hd, hs_) = (od >= 1.5, os >= 1.5);
    let conv = match (hd, hs_) {
        (true, false) => Some("doubled_exponent".to_string()),
        (false, true) => Some("single_exponent".to_string()),
        _ => None,
    };
    let v = Verdict {
        check: "weitzenbock".into(),
        pass: hd != hs_,
        measured: od.max(os),
        threshold: 1.5,
        detail: format!(
            "order {od:.3} for -Lap|s|^2 + sum 2|v(-2s)D*s|^2, order {os:.3} for -Lap|s|^2/2 + sum |v(-s)D*s|^2; holding: {}",
            conv.as_deref().unwrap_or("ambiguous")
        ),
    };
    (v, table, conv)
}

fn check_linearization(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> (Verdict, Option<f64>) {
    let pairs = synthetic_pairs(rng, opts.linearization_configs);
    let n = *opts.levels.last().unwrap_or(&17);
    let g = level_grid(n);
    let mut fits = Vec::new();
    for (m, h, s) in &pairs {
        match psi_or_none(&g, m, h) {
            Some(psi) => fits.push(linearization_fit(&psi, &s(&g), 1e-4)),
            None => return (verdict_le("linearization", f64::INFINITY, 0.05, "assembly failed".into()), None),
        }
    }
    let worst_res = fits.iter().map(|f| f.relative_residual).fold(0.0, f64::max);
    let mean_c = fits.iter().map(|f| f.c).sum::<f64>() / fits.len().max(1) as f64;
    let c = if (mean_c - 1.0).abs() < (mean_c - 2.0).abs() { 1.0 } else { 2.0 };
    let spread = fits.iter().map(|f| (f.c - c).abs() / c).fold(0.0, f64::max);
    let measured = worst_res.max(spread);
    let v = Verdict {
        check: "linearization".into(),
        pass: measured <= 0.05,
        measured,
        threshold: 0.05,
        detail: format!(
            "c = {c} from {} configurations at n = {n}; fitted c in [{:.4}, {:.4}], worst relative fit residual {worst_res:.3e}",
            fits.len(),
            fits.iter().map(|f| f.c).fold(f64::INFINITY, f64::min),
            fits.iter().map(|f| f.c).fold(f64::NEG_INFINITY, f64::max)
        ),
    };
    (v, (measured <= 0.05).then_some(c))
}
