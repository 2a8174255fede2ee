use std::f64::consts::FRAC_PI_2;

use super::*;
use crate::geometry::ChartId;
use crate::models::{serre, Factor, FlatModel, ProductModel, SerreModel, SerreParameters};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn flat() -> Model {
    Arc::new(FlatModel::default())
}

fn serre_model() -> Model {
    Arc::new(SerreModel::new(SerreParameters::default()).unwrap())
}

fn s_point(s: C64, z: C64) -> ChartPoint {
    ChartPoint::new(serre::S_CHART, vec![s, z])
}

/// Grid-plus-refinement minimizer of `δ(x, (0, t))²` over `t`, using
/// shooting from `x` with a finer integrator than production.
fn oracle_foot(model: &dyn ManifoldModel, x: &ChartPoint) -> C64 {
    let cost = |t: C64| {
        let y = s_point(c(0.0, 0.0), t);
        let v = shoot(model, x, &y, 128).unwrap();
        geodesic::speed_sq(model.potential(x.chart).unwrap(), &x.coords, &v)
    };
    let mut centre = x.coords[1];
    let mut width = 0.4;
    for _ in 0..14 {
        let mut best = (f64::INFINITY, centre);
        for i in -3..=3 {
            for j in -3..=3 {
                let t = centre + c(i as f64, j as f64) * (width / 3.0);
                let f = cost(t);
                if f < best.0 {
                    best = (f, t);
                }
            }
        }
        centre = best.1;
        width /= 3.0;
    }
    centre
}

#[test]
fn flat_orthogonal_projection() {
    let m = flat();
    let x = ChartPoint::new(ChartId("z"), vec![c(1.0, 1.0), c(0.3, 0.0)]);
    let r = nearest_point(m.as_ref(), &x).unwrap();
    assert_eq!(r.foot.coords, vec![c(1.0, 1.0), c(0.0, 0.0)]);
    assert!((r.distance - 0.3).abs() < 1e-15);
    let h = squared_distance(&m);
    assert_eq!(h.evaluate(&x).unwrap(), 0.3f64 * 0.3);
}

#[test]
fn torus_distances_wrap_around() {
    let t = Factor::torus(c(0.0, 1.0), 1.0).unwrap();
    let m = ProductModel::new(t, t, 0.45).unwrap();
    let id = m.charts()[0].id;
    let o = ChartPoint::new(id, vec![c(0.0, 0.0); 2]);
    let half = ChartPoint::new(id, vec![c(0.5, 0.0), c(0.0, 0.0)]);
    let wrap = ChartPoint::new(id, vec![c(0.9, 0.0), c(0.0, 0.0)]);
    assert!((geodesic_distance(&m, &o, &half).unwrap() - 0.5).abs() < 1e-15);
    assert!((geodesic_distance(&m, &o, &wrap).unwrap() - 0.1).abs() < 1e-15);
    let x = ChartPoint::new(id, vec![c(0.3, 0.2), c(0.8, 0.0)]);
    let r = nearest_point(&m, &x).unwrap();
    assert_eq!(r.foot.coords, vec![c(0.3, 0.2), c(0.0, 0.0)]);
    assert!((r.distance - 0.2).abs() < 1e-15);
}

#[test]
fn antipodal_distance_on_projective_line() {
    let p1 = Factor::projective_line(1.0).unwrap();
    let m = ProductModel::new(p1, p1, 0.5).unwrap();
    let w = m.charts().iter().find(|ch| ch.id.name() == "w1,w2").unwrap().id;
    let u = m.charts().iter().find(|ch| ch.id.name() == "u1,w2").unwrap().id;
    let zero = ChartPoint::new(w, vec![c(0.0, 0.0); 2]);
    let infinity = ChartPoint::new(u, vec![c(0.0, 0.0); 2]);
    let closed = geodesic_distance(&m, &zero, &infinity).unwrap();
    assert!((closed - FRAC_PI_2).abs() < 1e-15);
    // Oracle: shoot 0 → 1 in the w chart and 1 → ∞ in the u chart.
    let one_w = ChartPoint::new(w, vec![c(1.0, 0.0), c(0.0, 0.0)]);
    let one_u = ChartPoint::new(u, vec![c(1.0, 0.0), c(0.0, 0.0)]);
    let d = shooting_distance(&m, &zero, &one_w, 16).unwrap() + shooting_distance(&m, &one_u, &infinity, 16).unwrap();
    assert!((d - closed).abs() < 1e-8, "{d}");
}

#[test]
fn serre_foot_matches_minimization_oracle() {
    let m = serre_model();
    let x = s_point(c(0.1, 0.0), c(0.2, 0.3));
    let r = nearest_point(m.as_ref(), &x).unwrap();
    assert!(r.residual <= 1e-10);
    assert!(on_v(m.as_ref(), &r.foot));
    let oracle = oracle_foot(m.as_ref(), &x);
    assert!((r.foot.coords[1] - oracle).norm() < 1e-6, "{} vs {oracle}", r.foot.coords[1]);
    let f = stationarity(m.as_ref(), &r).unwrap();
    assert!(f.iter().all(|v| v.abs() <= 1e-10), "{f:?}");
    // distance² equals the metric length of v(x, y) at x.
    let p = match m.tube_chart(&x).unwrap() {
        TubeChart::Candidate(p) => p,
        TubeChart::Outside => unreachable!(),
    };
    let len2 = geodesic::speed_sq(m.potential(p.chart).unwrap(), &p.coords, &r.exp_inverse);
    assert!((len2 - r.distance * r.distance).abs() <= 1e-8 * len2);
    let h = squared_distance(&m).evaluate(&x).unwrap();
    assert!((h - r.distance * r.distance).abs() <= 1e-10);
}

#[test]
fn serre_minimality_symmetry_and_triangle_inequality() {
    let m = serre_model();
    let h = squared_distance(&m);
    let x = s_point(c(0.15, -0.1), c(0.4, 0.6));
    let hx = h.evaluate(&x).unwrap();
    for t in [c(0.4, 0.6), c(0.5, 0.5), c(0.3, 0.7), c(0.45, 0.62)] {
        let q = s_point(c(0.0, 0.0), t);
        let d = geodesic_distance(m.as_ref(), &x, &q).unwrap();
        assert!(hx <= d * d + 1e-9, "{hx} > {}", d * d);
    }
    let pts = [x.clone(), s_point(c(-0.1, 0.05), c(0.5, 0.4)), s_point(c(0.0, 0.2), c(0.3, 0.5))];
    let d = |a: &ChartPoint, b: &ChartPoint| geodesic_distance(m.as_ref(), a, b).unwrap();
    assert!((d(&pts[0], &pts[1]) - d(&pts[1], &pts[0])).abs() < 1e-8);
    assert!(d(&pts[0], &pts[2]) <= d(&pts[0], &pts[1]) + d(&pts[1], &pts[2]) + 1e-8);
}

#[test]
fn foot_is_fixed_and_h_vanishes_on_v() {
    let m = serre_model();
    let x = s_point(c(0.2, 0.1), c(0.1, 0.8));
    let foot = nearest_point(m.as_ref(), &x).unwrap().foot;
    let again = nearest_point(m.as_ref(), &foot).unwrap();
    assert_eq!(again.foot, foot);
    assert_eq!(again.distance, 0.0);
    assert_eq!(squared_distance(&m).evaluate(&foot).unwrap(), 0.0);
}

#[test]
fn outside_tube_is_a_sentinel() {
    let m = serre_model();
    let far = ChartPoint::new(serre::W_CHART, vec![c(0.1, 0.0), c(0.2, 0.3)]);
    assert_eq!(squared_distance(&m).evaluate(&far), Err(Error::OutsideTube));
    assert!(matches!(nearest_point(m.as_ref(), &far), Err(Error::OutsideTube)));
}

#[test]
fn flat_block_structure_and_real_hessian() {
    let m = flat();
    let h: FieldRef = squared_distance(&m);
    let p = ChartPoint::new(ChartId("z"), vec![c(0.3, -0.2), c(0.0, 0.0)]);
    let b = hessian_h_on_v(m.as_ref(), h.clone(), &p, 1e-3).unwrap();
    assert!(b.off_block_max < 1e-6);
    assert!((b.normal_constant - 1.0).abs() < 1e-9);
    let r = real_hessian_h_on_v(m.as_ref(), h, &p, 1e-3).unwrap();
    for s in 0..4 {
        for t in 0..4 {
            let expected = if s == t && s >= 2 { 2.0 } else { 0.0 };
            assert!((r[(s, t)] - expected).abs() < 1e-5);
        }
    }
}

#[test]
fn product_block_structure_and_jacobian() {
    let m: Model = Arc::new(
        ProductModel::new(Factor::projective_line(2.0).unwrap(), Factor::torus(c(0.0, 1.0), 1.0).unwrap(), 0.4).unwrap(),
    );
    let h: FieldRef = squared_distance(&m);
    let p = ChartPoint::new(m.charts()[0].id, vec![c(0.4, 0.3), c(0.0, 0.0)]);
    let b = hessian_h_on_v(m.as_ref(), h, &p, 1e-3).unwrap();
    assert!(b.passes(1e-4, 1e-3), "{b:?}");
    let j = nearest_point_jacobian(m.as_ref(), &p, 1e-4).unwrap();
    assert!(jacobian_deviation(&j) < 1e-6);
}

#[test]
fn flat_jacobian_is_projection() {
    let m = flat();
    let p = ChartPoint::new(ChartId("z"), vec![c(0.3, -0.2), c(0.0, 0.0)]);
    let j = nearest_point_jacobian(m.as_ref(), &p, 1e-4).unwrap();
    assert!(jacobian_deviation(&j) < 1e-12);
}

#[test]
fn serre_block_structure_and_jacobian() {
    let m = serre_model();
    let h: FieldRef = squared_distance(&m);
    let p = s_point(c(0.0, 0.0), c(0.3, 0.4));
    let b = hessian_h_on_v(m.as_ref(), h, &p, 1e-3).unwrap();
    assert!(b.passes(1e-3, 1e-3), "{b:?}");
    let j = nearest_point_jacobian(m.as_ref(), &p, 1e-4).unwrap();
    assert!(jacobian_deviation(&j) < 1e-4, "{j}");
}

#[test]
fn serre_h_is_deck_invariant() {
    let m = serre_model();
    let h = squared_distance(&m);
    let x = s_point(c(0.2, -0.1), c(0.3, 0.2));
    let hx = h.evaluate(&x).unwrap();
    for y in m.identified_points(&x) {
        assert!((h.evaluate(&y).unwrap() - hx).abs() <= 1e-9 * hx.max(1.0));
    }
}
