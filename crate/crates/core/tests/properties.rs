use ebe_core::algebra::{
    exp_herm, gamma, hermitian_sum, log_herm, polar, reference, v_op, HermTraceless, Mat2C, MetricMatrix,
    SpecialUnitary, C64,
};
use ebe_core::config::{apply_gauge, residual_first, Configuration};
use ebe_core::geometry::{Cutoff, Grid3, GridSpec};
use ebe_core::poly::{bezout, CPoly};
use proptest::prelude::*;

fn coords(r: f64) -> impl Strategy<Value = [f64; 3]> {
    [-r..r, -r..r, -r..r]
}

/// Hermitian traceless with Frobenius norm at most `r`.
fn herm(r: f64) -> impl Strategy<Value = HermTraceless> {
    coords(1.0).prop_map(move |x| {
        let s = HermTraceless::from_coords(x);
        let n = s.matrix().norm();
        if n > 1.0 {
            s.scale(r / n)
        } else {
            s.scale(r)
        }
    })
}

fn mat(r: f64) -> impl Strategy<Value = Mat2C> {
    [-r..r, -r..r, -r..r, -r..r, -r..r, -r..r, -r..r, -r..r].prop_map(|v| {
        Mat2C::new(C64::new(v[0], v[1]), C64::new(v[2], v[3]), C64::new(v[4], v[5]), C64::new(v[6], v[7]))
    })
}

fn close(a: &Mat2C, b: &Mat2C) -> f64 {
    (*a - *b).max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn exp_is_positive_unimodular(s in herm(3.0)) {
        let e = exp_herm(&s);
        prop_assert!((e.det() - 1.0).norm() <= 1e-12 * e.max_abs().powi(2));
        prop_assert!(close(&e, &e.adjoint()) <= 1e-12 * e.max_abs());
        prop_assert!(e.a().re > 0.0 && e.trace().re > 0.0);
        let back = log_herm(&e).unwrap();
        prop_assert!(close(&back.matrix(), &s.matrix()) <= 1e-10);
    }

    #[test]
    fn gamma_matches_series(s in herm(2.0), m in mat(1.0)) {
        let series = reference::gamma_series(&s.matrix(), &m, 21);
        prop_assert!(close(&gamma(&s, &m), &series) <= 1e-10);
    }

    #[test]
    fn v_twice_is_gamma(s in herm(3.0), m in mat(1.0)) {
        let vv = v_op(&s, &v_op(&s, &m));
        prop_assert!(close(&vv, &gamma(&s, &m)) <= 1e-10 * m.max_abs().max(1.0) * gamma(&s, &m).max_abs().max(1.0));
    }

    #[test]
    fn hermitian_sum_units_and_commuting(s in herm(2.0), a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let zero = HermTraceless::diag(0.0);
        prop_assert!(close(&hermitian_sum(&s, &zero).matrix(), &s.matrix()) <= 1e-12);
        prop_assert!(close(&hermitian_sum(&zero, &s).matrix(), &s.matrix()) <= 1e-12);
        let sum = hermitian_sum(&HermTraceless::diag(a), &HermTraceless::diag(b));
        prop_assert!(close(&sum.matrix(), &HermTraceless::diag(a + b).matrix()) <= 1e-12);
    }

    #[test]
    fn polar_round_trip(x in coords(3.0), s in herm(1.5)) {
        let u = SpecialUnitary::exp_su2(x).matrix();
        let g = u * exp_herm(&s);
        let (pu, ps) = polar(&g).unwrap();
        let pu = pu.matrix();
        prop_assert!(close(&(pu.adjoint() * pu), &Mat2C::IDENTITY) <= 1e-10);
        prop_assert!((pu.det() - 1.0).norm() <= 1e-10);
        prop_assert!(close(&(pu * exp_herm(&ps)), &g) <= 1e-10 * g.max_abs());
        prop_assert!(close(&ps.matrix(), &s.matrix()) <= 1e-9);
    }

    #[test]
    fn metric_matrix_is_unimodular_and_positive(h in 0.05f64..20.0, wr in -5.0f64..5.0, wi in -5.0f64..5.0) {
        let m = MetricMatrix::new(h, C64::new(wr, wi)).unwrap().matrix();
        prop_assert!(close(&m, &m.adjoint()) <= 1e-12 * m.max_abs());
        prop_assert!((m.det() - 1.0).norm() <= 1e-12 * m.max_abs().powi(2));
        prop_assert!(m.a().re > 0.0);
    }

    #[test]
    fn bezout_identity_at_random_points(
        qr in proptest::collection::vec((0.0f64..0.95, 0.0f64..std::f64::consts::TAU), 1..=6),
        rr in proptest::collection::vec((0.0f64..0.95, 0.0f64..std::f64::consts::TAU), 1..=6),
        pts in proptest::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 20),
    ) {
        let roots = |v: &[(f64, f64)]| v.iter().map(|&(r, t)| C64::from_polar(r, t)).collect::<Vec<_>>();
        let (qz, rz) = (roots(&qr), roots(&rr));
        let sep = qz.iter().flat_map(|a| rz.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min);
        prop_assume!(sep > 0.2);
        let one = C64::new(1.0, 0.0);
        let (q, r) = (CPoly::from_roots(&qz, one), CPoly::from_roots(&rz, one));
        let (s, t) = bezout(&q, &r).unwrap();
        for (x, y) in pts {
            let z = C64::new(x, y);
            let v = q.eval(z) * s.eval(z) + t.eval(z) * r.eval(z);
            prop_assert!((v - 1.0).norm() <= 1e-8, "{v} at {z}");
        }
    }

    #[test]
    fn cutoff_is_monotone_between_one_and_zero(a in -3.0f64..3.0, w in 0.1f64..4.0, t1 in -5.0f64..8.0, t2 in -5.0f64..8.0) {
        let c = Cutoff::new(a, a + w).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(c.eval(lo) >= c.eval(hi));
        prop_assert!((0.0..=1.0).contains(&c.eval(t1)));
        prop_assert!(c.deriv(t1) <= 0.0);
        prop_assert_eq!(c.eval(a - 1e-9), 1.0);
        prop_assert_eq!(c.eval(a + w + 1e-9), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    // a constant special-unitary gauge conjugates every residual, so its norm is unchanged
    #[test]
    fn first_residual_norm_is_gauge_invariant(x in coords(3.0), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let grid = Grid3::new(GridSpec::cube([8, 8, 8], 1.0, 0.5, 1.5, 0.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fields: [Vec<Mat2C>; 6] = std::array::from_fn(|_| {
            (0..grid.len()).map(|_| Mat2C::from_su2_coords(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))).collect()
        });
        let psi = Configuration::new(&grid, fields).unwrap();
        let u = SpecialUnitary::exp_su2(x).matrix();
        let moved = apply_gauge(&psi, &vec![u; grid.len()]).unwrap();
        let (a, b) = (residual_first(&psi), residual_first(&moved));
        for n in 0..grid.len() {
            let (na, nb) = (a.v[n].norm(), b.v[n].norm());
            prop_assert!((na - nb).abs() <= 1e-12 * na.max(1.0), "node {n}: {na} vs {nb}");
        }
    }
}
