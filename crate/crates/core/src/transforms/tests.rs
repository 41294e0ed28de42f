use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::*;
use crate::estimate::seeded_rng;
use crate::fields::{apply_j, extremizer_field, standard_extremizer};
use crate::geometry::OrthonormalFrame;
use crate::{AffineMap, IndicatorSet};

fn line(dir: &[f64], through: &[f64]) -> AffinePlane {
    let span = DMatrix::from_column_slice(dir.len(), 1, dir);
    AffinePlane::through(OrthonormalFrame::from_span(&span).unwrap(), &DVector::from_column_slice(through))
}

fn quad() -> QuadConfig {
    QuadConfig { points: 20_000 }
}

#[test]
fn gaussian_xray() {
    let f = Field::standard_gaussian(2);
    let t0 = kplane_transform(&f, &line(&[1.0, 0.0], &[0.0, 0.0]), &quad()).unwrap();
    assert_relative_eq!(t0.value, PI.sqrt(), max_relative = 1e-9);
    let t1 = kplane_transform(&f, &line(&[0.6, 0.8], &[0.8, -0.6]), &quad()).unwrap();
    assert_relative_eq!(t1.value, PI.sqrt() * (-1f64).exp(), max_relative = 1e-9);
    assert!(t1.stderr < 1e-6);
}

#[test]
fn extremizer_xray() {
    let f = standard_extremizer(2, 1).unwrap();
    for s in [0.0, 1.0, 3.0] {
        let t = kplane_transform(&f, &line(&[0.0, 1.0], &[s, 0.0]), &quad()).unwrap();
        assert_relative_eq!(t.value, PI / (1.0 + s * s).sqrt(), max_relative = 1e-9);
    }
}

#[test]
fn linear_with_shared_nodes() {
    let f = Field::standard_gaussian(3);
    let g = Field::gaussian(&[0.5, 0.0, -0.2], 0.7, 2.0).unwrap();
    let h = Field::combination(vec![(2.0, f.clone()), (0.5, g.clone())]).unwrap();
    let mut rng = seeded_rng(3);
    let rule = PlaneRule::new(2, 2000).unwrap();
    let supp = h.support();
    for _ in 0..5 {
        let frame = crate::geometry::sample_grassmannian(3, 2, &mut rng).unwrap();
        let off = frame.project_complement(&DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5));
        let plane = AffinePlane { frame, offset: off };
        let lhs = rule.integrate_with(&h, &plane, &supp).unwrap();
        let rhs = 2.0 * rule.integrate_with(&f, &plane, &supp).unwrap()
            + 0.5 * rule.integrate_with(&g, &plane, &supp).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }
}

#[test]
fn nonintegrable_planes_error() {
    let slow = Field::one(2);
    let err = kplane_transform(&slow, &line(&[1.0, 0.0], &[0.0, 0.0]), &quad()).unwrap_err();
    assert!(matches!(err, Error::NonIntegrable(_)));
}

#[test]
fn sharp_indicator_examples() {
    let f = Field::indicator(IndicatorSet::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
    let q = QuadConfig { points: 200_000 };
    let mp = |a: f64, b: f64| MatrixPlane::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, b)).unwrap();
    assert_relative_eq!(sharp_transform(&f, &mp(0.0, 0.5), &q).unwrap().value, 1.0, epsilon = 1e-4);
    assert_relative_eq!(sharp_transform(&f, &mp(1.0, 0.5), &q).unwrap().value, 0.5, epsilon = 1e-4);
    assert_eq!(sharp_transform(&f, &mp(0.0, 2.0), &q).unwrap().value, 0.0);
}

#[test]
fn swap_first_row_is_an_involution() {
    let mp = MatrixPlane::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), DVector::from_vec(vec![5.0, 6.0]))
        .unwrap();
    let s = mp.swap_first_row();
    assert_eq!(s.a.row(0).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0]);
    assert_eq!(s.b.as_slice(), &[1.0, 2.0]);
    assert_eq!(s.swap_first_row(), mp);
}

#[test]
fn sharp_intertwines_j_with_row_swap() {
    let f = Field::bump(&[1.5, 0.3], 0.4, 1.0).unwrap();
    let jf = apply_j(&f, 1).unwrap();
    let q = QuadConfig { points: 40_000 };
    let tf = f.clone();
    let g: MatrixFunction = Arc::new(move |mp| sharp_transform(&tf, mp, &q).unwrap().value);
    let rg = apply_r_sharp(g);
    let mut rng = seeded_rng(11);
    let mut hits = 0;
    for _ in 0..30 {
        let mp = MatrixPlane::new(
            DMatrix::from_element(1, 1, 1.5 * rng.random::<f64>() - 0.2),
            DVector::from_element(1, rng.random::<f64>() - 0.5),
        )
        .unwrap();
        let lhs = sharp_transform(&jf, &mp, &q).unwrap().value;
        let rhs = rg(&mp);
        assert!((lhs - rhs).abs() < 1e-4 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        hits += (rhs > 0.0) as usize;
    }
    assert!(hits > 3);
}

#[test]
fn extremizer_norm_matches_closed_form() {
    let f = standard_extremizer(2, 1).unwrap();
    let cfg = NormConfig::new(McConfig::new(20_000, 5));
    let est = lq_transform_norm(&f, 1, &cfg).unwrap();
    let truth = (2.0 * PI.powi(3)).cbrt();
    assert!(est.sigma_from(truth) < 3.0, "{est:?} vs {truth}");
    assert!(est.stderr < 0.02 * truth);
}

#[test]
fn norm_is_homogeneous_and_vanishes_on_zero() {
    let f = Field::standard_gaussian(2);
    let cfg = NormConfig::new(McConfig::new(4096, 9));
    let a = lq_transform_norm(&f, 1, &cfg).unwrap();
    let b = lq_transform_norm(&f.scaled(3.0).unwrap(), 1, &cfg).unwrap();
    assert_relative_eq!(b.value, 3.0 * a.value, max_relative = 1e-12);
    assert_eq!(lq_transform_norm(&Field::zero(2), 1, &cfg).unwrap().value, 0.0);
    assert_eq!(lq_sharp_norm(&Field::zero(2), 1, &cfg).unwrap().value, 0.0);
}

#[test]
fn sharp_to_euclidean_ratio_at_the_extremizer() {
    let f = standard_extremizer(2, 1).unwrap();
    let cfg = NormConfig::new(McConfig::new(40_000, 21));
    let r = lq_sharp_norm(&f, 1, &cfg).unwrap().ratio(&lq_transform_norm(&f, 1, &cfg.clone()).unwrap());
    assert!(r.sigma_from(PI.cbrt()) < 3.0, "{r:?}");
}

#[test]
fn lift_of_extremizers() {
    let mut rng = seeded_rng(2);
    for (n, k) in [(2usize, 1usize), (3, 1), (3, 2), (4, 2)] {
        let big_f = elliptic_lift(&standard_extremizer(n, k).unwrap(), k).unwrap();
        for _ in 0..50 {
            let p = HemispherePoint::random(n + 1, &mut rng);
            assert_relative_eq!(big_f.eval_point(&p), 1.0, max_relative = 1e-12);
        }
        let phi = AffineMap::random(n, 0.5, 2.0, 1.0, &mut rng);
        let f = extremizer_field(n, k, phi.clone(), 1.7).unwrap();
        let big_f = elliptic_lift(&f, k).unwrap();
        let mut l = DMatrix::zeros(n + 1, n + 1);
        l.view_mut((0, 0), (n, n)).copy_from(phi.matrix());
        l.view_mut((0, n), (n, 1)).copy_from(phi.offset());
        l[(n, n)] = 1.0;
        for _ in 0..20 {
            let p = HemispherePoint::random(n + 1, &mut rng);
            let expect = 1.7 * (&l * p.vector()).norm().powi(-(k as i32) - 1);
            assert_relative_eq!(big_f.eval_point(&p), expect, max_relative = 1e-12);
        }
    }
    let zero = elliptic_lift(&Field::zero(2), 1).unwrap();
    assert_eq!(zero.eval(&[0.0, 0.6, 0.8]), 0.0);
}

#[test]
fn lift_rejects_the_equator() {
    let f = Field::standard_gaussian(2);
    assert!(matches!(lift_value(&f, 1, &[1.0, 0.0, 0.0]), Err(Error::Boundary(_))));
    assert!(HemispherePoint::new(DVector::from_vec(vec![0.0, 1.0, 0.0])).is_err());
    let p = HemispherePoint::new(DVector::from_vec(vec![0.0, 3.0, -4.0])).unwrap();
    assert_eq!(p.as_slice(), &[0.0, -0.6, 0.8]);
    let x = [0.3, -1.2];
    let back = s_inverse(&s_map(&x));
    assert_relative_eq!(back[0], 0.3, max_relative = 1e-14);
    assert_relative_eq!(back[1], -1.2, max_relative = 1e-14);
}

#[test]
fn elliptic_transform_of_constants() {
    let mut rng = seeded_rng(8);
    let pi = crate::geometry::sample_grassmannian(4, 2, &mut rng).unwrap();
    let c = SphereFunction::constant(4, 2.5);
    let est = elliptic_transform(&c, &pi, &McConfig::new(1000, 1)).unwrap();
    assert_relative_eq!(est.value, 2.5, max_relative = 1e-12);
    assert_relative_eq!(elliptic_transform_quadrature(&c, &pi, 16).unwrap(), 2.5, max_relative = 1e-12);
    let lifted = elliptic_lift(&standard_extremizer(3, 1).unwrap(), 1).unwrap();
    let est = elliptic_transform(&lifted, &pi, &McConfig::new(1000, 1)).unwrap();
    assert_relative_eq!(est.value, 1.0, max_relative = 1e-10);
}

#[test]
fn r_is_an_involution_intertwining_j() {
    let f = Field::gaussian(&[0.4, -0.3], 0.8, 1.0).unwrap();
    let big_f = elliptic_lift(&f, 1).unwrap();
    let rf = apply_r(&big_f);
    let rrf = apply_r(&rf);
    let lift_jf = elliptic_lift(&apply_j(&f, 1).unwrap(), 1).unwrap();
    let mut rng = seeded_rng(13);
    for _ in 0..100 {
        let p = HemispherePoint::random(3, &mut rng);
        assert_relative_eq!(rrf.eval_point(&p), big_f.eval_point(&p), max_relative = 1e-12);
        assert_relative_eq!(lift_jf.eval_point(&p), rf.eval_point(&p), max_relative = 1e-10, epsilon = 1e-300);
    }
    assert_eq!(apply_r(&SphereFunction::constant(3, 1.0)).eval(&[0.6, 0.0, 0.8]), 1.0);
}

#[test]
fn elliptic_check_on_extremizer_and_gaussian() {
    let cfg = EllipticConfig::new(McConfig::new(20_000, 4));
    let ext = elliptic_norm_check(&standard_extremizer(2, 1).unwrap(), 1, &cfg).unwrap();
    assert_relative_eq!(ext.elliptic_norm.value, 1.0, max_relative = 1e-9);
    let c_truth = (2.0 * PI.powi(3)).powf(-1.0 / 3.0);
    assert!(ext.constant.sigma_from(c_truth) < 3.0, "{:?}", ext.constant);
    let gauss = elliptic_norm_check(&Field::standard_gaussian(2), 1, &cfg).unwrap();
    assert!(gauss.norm_ratio.sigma_from(1.0) < 3.0, "{:?}", gauss.norm_ratio);
    assert!(gauss.constant.sigma_distance(&ext.constant) < 3.0, "{:?} vs {:?}", gauss.constant, ext.constant);
}
