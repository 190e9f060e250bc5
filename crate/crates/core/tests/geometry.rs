use nalgebra::DVector;
use proptest::prelude::*;
use vmono::comparison::radial_comparison;
use vmono::{Isometry, ModelSpace, Point, TangentVector};

const SPACES: [f64; 3] = [0.0, 1.0, -1.0];

/// `exp_origin(v)` for `v` with components `c` (scaled to stay well inside the injectivity radius).
fn point_at(space: &ModelSpace, c: &[f64]) -> Point {
    let basis = space.origin_tangent_basis();
    let mut v = DVector::zeros(space.ambient_dim());
    for (e, x) in basis.iter().zip(c) {
        v += e * *x;
    }
    let o = space.origin();
    space.exp(&TangentVector { base: o, components: v }).unwrap()
}

/// A tangent vector at `p` built from arbitrary ambient components.
fn tangent_at(space: &ModelSpace, p: &Point, c: &[f64]) -> DVector<f64> {
    let w = DVector::from_iterator(space.ambient_dim(), c.iter().copied().cycle().take(space.ambient_dim()));
    space.project_tangent(p, &w)
}

fn coords3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5..0.5f64, 3)
}

fn coords4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5..0.5f64, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exp_then_log_recovers_the_vector(b in prop::sample::select(SPACES.to_vec()), p in coords3(), w in coords4()) {
        let space = ModelSpace::new(3, b).unwrap();
        let p = point_at(&space, &p);
        let v = tangent_at(&space, &p, &w);
        let q = space.exp(&TangentVector { base: p.clone(), components: v.clone() }).unwrap();
        prop_assert!(space.quadric_residual(q.coords()) <= 1e-13);
        let back = space.log(&p, &q).unwrap();
        let err = (&back.components - &v).amax();
        prop_assert!(err <= 1e-12 * (1.0 + v.amax()), "err {err:e}");
        let d = space.distance(&p, &q).unwrap();
        prop_assert!((d - space.norm(&v)).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn distance_obeys_the_triangle_inequality(
        b in prop::sample::select(SPACES.to_vec()),
        x in coords3(), y in coords3(), z in coords3(),
    ) {
        let space = ModelSpace::new(3, b).unwrap();
        let (x, y, z) = (point_at(&space, &x), point_at(&space, &y), point_at(&space, &z));
        let dxy = space.distance(&x, &y).unwrap();
        let dyz = space.distance(&y, &z).unwrap();
        let dxz = space.distance(&x, &z).unwrap();
        prop_assert!(dxz <= dxy + dyz + 1e-12);
        prop_assert!((dxy - space.distance(&y, &x).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn isometries_preserve_distance_and_the_quadric(
        b in prop::sample::select(SPACES.to_vec()),
        x in coords3(), y in coords3(),
        params in prop::collection::vec(-1.0..1.0f64, 1..8),
    ) {
        let space = ModelSpace::new(3, b).unwrap();
        let (x, y) = (point_at(&space, &x), point_at(&space, &y));
        let iso = Isometry::from_params(&space, &params).unwrap();
        let (ix, iy) = (iso.apply_point(&space, &x).unwrap(), iso.apply_point(&space, &y).unwrap());
        prop_assert!(space.quadric_residual(ix.coords()) <= 1e-12);
        let before = space.distance(&x, &y).unwrap();
        let after = space.distance(&ix, &iy).unwrap();
        prop_assert!((before - after).abs() <= 1e-11 * (1.0 + before), "{before} vs {after}");
    }

    #[test]
    fn div_t_r_grad_r_dominates_the_comparison(
        b in prop::sample::select(SPACES.to_vec()),
        p in coords3(), q in coords3(),
        u in coords4(), v in coords4(),
    ) {
        let space = ModelSpace::new(3, b).unwrap();
        let (p, q) = (point_at(&space, &p), point_at(&space, &q));
        let frame = [tangent_at(&space, &q, &u), tangent_at(&space, &q, &v)];
        let Ok(plane) = space.orthonormalize(&q, &frame) else { return Ok(()) };
        let r = space.distance(&p, &q).unwrap();
        let div = space.div_t_r_grad_r(&p, &q, &plane).unwrap();
        let a = radial_comparison(b, r).unwrap();
        // m a_b <= Div_T(r grad r) <= m for b >= 0; the inequalities flip for b < 0
        let (lo, hi) = if b >= 0.0 { (2.0 * a, 2.0) } else { (2.0, 2.0 * a) };
        prop_assert!(div >= lo - 1e-12 && div <= hi + 1e-12, "{lo} <= {div} <= {hi}");
    }

    #[test]
    fn div_t_r_grad_r_is_the_trace_of_the_hessian(
        b in prop::sample::select(SPACES.to_vec()),
        p in coords3(), q in coords3(),
        u in coords4(), v in coords4(),
    ) {
        let space = ModelSpace::new(3, b).unwrap();
        let (p, q) = (point_at(&space, &p), point_at(&space, &q));
        prop_assume!(space.distance(&p, &q).unwrap() > 1e-2);
        let frame = [tangent_at(&space, &q, &u), tangent_at(&space, &q, &v)];
        let Ok(plane) = space.orthonormalize(&q, &frame) else { return Ok(()) };
        let half_sq = |s: f64, e: &DVector<f64>| {
            let x = space.exp(&TangentVector { base: q.clone(), components: e * s }).unwrap();
            0.5 * space.distance(&p, &x).unwrap().powi(2)
        };
        let h = 1e-4;
        let trace: f64 = plane
            .frame()
            .iter()
            .map(|e| (half_sq(h, e) - 2.0 * half_sq(0.0, e) + half_sq(-h, e)) / (h * h))
            .sum();
        let div = space.div_t_r_grad_r(&p, &q, &plane).unwrap();
        prop_assert!((trace - div).abs() <= 1e-5, "trace {trace} vs {div}");
    }
}

#[test]
fn antipodal_log_is_a_singularity() {
    let space = ModelSpace::new(3, 1.0).unwrap();
    let p = space.origin();
    let q = space.point(-p.coords().clone()).unwrap();
    assert!(space.log(&p, &q).is_err());
    assert!((space.distance(&p, &q).unwrap() - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn off_quadric_points_are_rejected() {
    let space = ModelSpace::new(3, -1.0).unwrap();
    assert!(space.point(DVector::from_vec(vec![1.0, 0.1, 0.0, 0.0])).is_err());
    assert!(space.point(DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0])).is_err());
    assert!(space.point(DVector::from_vec(vec![1.0, 0.0, 0.0])).is_err());
}
