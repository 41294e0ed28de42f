use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::*;
use crate::estimate::seeded_rng;

fn cfg(samples: usize) -> McConfig {
    McConfig::new(samples, 11)
}

#[test]
fn extremizer_values() {
    let f = standard_extremizer(2, 1).unwrap();
    assert_eq!(f.eval(&[0.0, 0.0]), 1.0);
    assert_abs_diff_eq!(f.eval(&[0.6, 0.8]), 0.5, epsilon = 1e-15);
    let g = extremizer_field(3, 2, AffineMap::scaling(3, 2.0).unwrap(), 3.0).unwrap();
    assert_abs_diff_eq!(g.eval(&[0.0, 1.0, 0.0]), 3.0 * 5f64.powf(-1.5), epsilon = 1e-12);
    assert_abs_diff_eq!(g.eval(&[0.0, 1.0, 0.0]), 0.2683, epsilon = 1e-4);
}

#[test]
fn norms_of_reference_fields() {
    let disk = Field::indicator(IndicatorSet::centered_ball(2, 1.0).unwrap());
    let e = lp_norm(&disk, 1.5, &cfg(1000)).unwrap();
    assert_abs_diff_eq!(e.value, PI.powf(2.0 / 3.0), epsilon = 1e-12);

    let f = standard_extremizer(2, 1).unwrap();
    let e = lp_norm(&f, 1.5, &cfg(200_000)).unwrap();
    let truth = (2.0 * PI).powf(2.0 / 3.0);
    assert!(e.sigma_from(truth) < 3.0, "{e:?} vs {truth}");
    assert!(e.stderr / truth < 5e-3);

    assert_eq!(lp_norm(&Field::zero(2), 1.5, &cfg(10)).unwrap().value, 0.0);
}

#[test]
fn slow_decay_is_reported() {
    // (1+|x|^2)^{-1/2} is not in L^{3/2}(R^2)
    let f = standard_extremizer(2, 1).unwrap();
    let slow = Field::wrap(2, Repr::Inversion { inner: Field::one(2), k: 1 });
    assert!(matches!(lp_norm(&slow, 1.5, &cfg(100)), Err(Error::NonIntegrable(_))));
    assert!(lp_norm(&f, 1.5, &cfg(100)).is_ok());
    assert!(matches!(lp_norm(&Field::one(2), 1.5, &cfg(100)), Err(Error::NonIntegrable(_))));
}

#[test]
fn slice_radius_closed_form_and_sampling() {
    let f = standard_extremizer(2, 1).unwrap();
    let r = slice_radius(&f, &[0.0], 0.5, &cfg(10)).unwrap();
    assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-12);
    for &(x, s) in &[(0.3, 0.2), (1.0, 0.1), (-0.5, 0.7)] {
        let truth = (1.0f64 / s - 1.0 - x * x).max(0.0).sqrt();
        assert_abs_diff_eq!(slice_radius(&f, &[x], s, &cfg(10)).unwrap().value, truth, epsilon = 1e-12);
    }
    assert_eq!(slice_radius(&f, &[0.0], 2.0, &cfg(10)).unwrap().value, 0.0);
    assert!(matches!(slice_radius(&f, &[0.0], 0.0, &cfg(10)), Err(Error::InfiniteMeasure)));

    // sampled path through a composite node agrees with the closed form
    let wrapped = f.scaled(1.0).unwrap().perturbed(0.0, &Field::zero(2)).unwrap();
    let est = slice_radius(&wrapped, &[0.3], 0.2, &cfg(200_000)).unwrap();
    let truth = (1.0f64 / 0.2 - 1.0 - 0.09).sqrt();
    assert!(est.sigma_from(truth) < 3.5, "{est:?} vs {truth}");
}

#[test]
fn slice_radius_for_sheared_extremizer_matches_sampling() {
    let mut rng = seeded_rng(5);
    let phi = AffineMap::random(3, 0.6, 1.6, 0.5, &mut rng);
    let f = extremizer_field(3, 1, phi, 1.0).unwrap();
    let xp = [0.2];
    let s = 0.3;
    let exact = slice_measure(&f, &xp, s, &cfg(10)).unwrap();
    let wrapped = f.perturbed(0.0, &Field::zero(3)).unwrap();
    let sampled = slice_measure(&wrapped, &xp, s, &cfg(400_000)).unwrap();
    assert!(exact.value > 0.0);
    assert!(sampled.sigma_distance(&exact) < 3.5, "{sampled:?} vs {exact:?}");
}

#[test]
fn rho_is_concave_along_segments() {
    let f = standard_extremizer(3, 1).unwrap();
    let s = 0.3;
    let mut rng = seeded_rng(9);
    let reach = (1.0f64 / s - 1.0).sqrt();
    for _ in 0..200 {
        let a = (rng.random::<f64>() * 2.0 - 1.0) * reach;
        let b = (rng.random::<f64>() * 2.0 - 1.0) * reach;
        let ra = slice_radius(&f, &[a], s, &cfg(1)).unwrap().value;
        let rb = slice_radius(&f, &[b], s, &cfg(1)).unwrap().value;
        let rm = slice_radius(&f, &[(a + b) / 2.0], s, &cfg(1)).unwrap().value;
        assert!(rm + 1e-12 >= 0.5 * (ra + rb));
    }
}

#[test]
fn grid_rearrangement_preserves_values() {
    let g = GridField::new(vec![4], 1.0, vec![-2.0], vec![0.0, 3.0, 1.0, 2.0]).unwrap();
    let r = full_rearrange(&Field::grid(g)).unwrap();
    let rg = r.as_grid().unwrap();
    // cells at -1.5,-0.5,0.5,1.5: the two central cells get the two largest values
    assert_eq!(rg.values(), &[1.0, 3.0, 2.0, 0.0]);
    let mut a = rg.values().to_vec();
    a.sort_by(f64::total_cmp);
    assert_eq!(a, vec![0.0, 1.0, 2.0, 3.0]);
}

#[test]
fn radial_grid_is_a_fixed_point() {
    let f = standard_extremizer(2, 1).unwrap();
    let g = rasterize_centered(&f, 3.0, 0.25).unwrap();
    let r = full_rearrange(&Field::grid(g.clone())).unwrap();
    let rg = r.as_grid().unwrap();
    let diff = g.values().iter().zip(rg.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-15, "{diff}");
    let s = slice_rearrange(&Field::grid(g.clone()), 1).unwrap();
    assert_eq!(s.as_grid().unwrap().values(), g.values());
}

#[test]
fn translated_extremizer_rearranges_to_centred_form() {
    let t = AffineMap::translation(DVector::from_vec(vec![1.0, -0.5]));
    let f = apply_affine_symmetry(&standard_extremizer(2, 1).unwrap(), &t, 1.5).unwrap();
    let r = full_rearrange(&f).unwrap();
    let f0 = standard_extremizer(2, 1).unwrap();
    for x in [[0.0, 0.0], [0.3, 1.2], [2.0, -1.0]] {
        assert_abs_diff_eq!(r.eval(&x), f0.eval(&x), epsilon = 1e-12);
    }
    // and on a grid, up to cell quantisation
    let g = rasterize(&f, vec![80, 80], 0.1, vec![-3.0, -4.5]).unwrap();
    let rg = full_rearrange(&Field::grid(g)).unwrap();
    let mut worst: f64 = 0.0;
    for x in [[0.05, 0.05], [0.55, -0.35], [1.05, 1.05]] {
        worst = worst.max((rg.eval(&x) - f0.eval(&x)).abs());
    }
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn extremizer_slice_rearrangement_is_exact() {
    let mut rng = seeded_rng(3);
    let phi = AffineMap::random(3, 0.5, 2.0, 1.0, &mut rng);
    let f = extremizer_field(3, 1, phi, 1.3).unwrap();
    let fs = slice_rearrange(&f, 1).unwrap();
    for _ in 0..20 {
        let xp = [rng.random::<f64>() * 2.0 - 1.0];
        for &s in &[0.1, 0.4, 0.9] {
            let a = slice_measure(&f, &xp, s, &cfg(1)).unwrap().value;
            let b = slice_measure(&fs, &xp, s, &cfg(1)).unwrap().value;
            assert_abs_diff_eq!(a, b, epsilon = 1e-9 * (1.0 + a));
        }
        // radial and nonincreasing in v
        let v = [rng.random::<f64>(), rng.random::<f64>()];
        let lhs = fs.eval(&[xp[0], v[0], v[1]]);
        let rot = fs.eval(&[xp[0], -v[1], v[0]]);
        assert_abs_diff_eq!(lhs, rot, epsilon = 1e-12);
        assert!(fs.eval(&[xp[0], 0.5 * v[0], 0.5 * v[1]]) >= lhs);
    }
}

#[test]
fn norm_preservation_of_symmetries() {
    let c = cfg(200_000);
    let f = standard_extremizer(2, 1).unwrap();
    let base = lp_norm(&f, 1.5, &c).unwrap();
    let doubled = apply_affine_symmetry(&f, &AffineMap::scaling(2, 2.0).unwrap(), 1.5).unwrap();
    assert_abs_diff_eq!(doubled.eval(&[0.1, 0.2]), 4f64.powf(2.0 / 3.0) * f.eval(&[0.2, 0.4]), epsilon = 1e-12);
    let e2 = lp_norm(&doubled, 1.5, &c.derive(1)).unwrap();
    assert!(e2.sigma_distance(&base) < 3.0);

    let jf = apply_j(&f, 1).unwrap();
    for x in [[0.3, 0.4], [-2.0, 1.0], [5.0, -3.0]] {
        assert_abs_diff_eq!(jf.eval(&x), f.eval(&x), epsilon = 1e-12);
    }
    let e3 = lp_norm(&jf, 1.5, &c.derive(2)).unwrap();
    assert!(e3.sigma_distance(&base) < 3.0, "{e3:?} {base:?}");
}

#[test]
fn j_of_a_box_indicator() {
    let b = Field::indicator(IndicatorSet::cube(&[1.0, 0.0], &[2.0, 1.0]).unwrap());
    let jb = apply_j(&b, 1).unwrap();
    assert_abs_diff_eq!(jb.eval(&[0.75, 0.5]), 0.75f64.powi(-2), epsilon = 1e-12);
    assert_eq!(jb.eval(&[0.75, 0.8]), 0.0);
    assert_eq!(jb.eval(&[0.0, 0.0]), 0.0);
    let e = integral_pow(&jb, 1.5, &cfg(400_000)).unwrap();
    // ∫_{1/2}^{1} s^{-3} · s ds = 1
    assert!(e.sigma_from(1.0) < 3.0, "{e:?}");
    match jb.support() {
        Support::Compact { lo, hi } => {
            assert_abs_diff_eq!(lo[0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(hi[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(hi[1], 1.0, epsilon = 1e-12);
        }
        other => panic!("{other:?}"),
    }
    let back = apply_j(&jb, 1).unwrap();
    assert_eq!(back.kind(), "indicator");
}

#[test]
fn grid_j_is_nearly_an_involution_away_from_the_axis() {
    let f = Field::gaussian(&[1.5, 0.3], 0.4, 1.0).unwrap();
    let g = rasterize(&f, vec![200, 200], 0.02, vec![0.5, -1.5]).unwrap();
    // cells at s in [0.5, 4.5) map into [0.22, 2); use a lattice covering both
    let big = rasterize(&f, vec![300, 300], 0.02, vec![0.1, -3.0]).unwrap();
    let jj = apply_j(&apply_j(&Field::grid(big.clone()), 1).unwrap(), 1).unwrap();
    let x = [1.5, 0.3];
    assert!((jj.eval(&x) - f.eval(&x)).abs() < 0.02);
    assert!(g.max_value() > 0.9);
}

#[test]
fn layer_cake_examples() {
    let big = IndicatorSet::centered_ball(2, 2.0).unwrap();
    let small = IndicatorSet::centered_ball(2, 1.0).unwrap();
    let f = layer_cake_reconstruct(&[(1.0, big.clone()), (1.0, small.clone())]).unwrap();
    assert_eq!(f.eval(&[0.0, 0.0]), 2.0);
    assert_eq!(f.eval(&[1.5, 0.0]), 1.0);
    assert_eq!(f.eval(&[2.5, 0.0]), 0.0);
    let single = layer_cake_reconstruct(&[(1.0, small.clone())]).unwrap();
    assert_eq!(single.eval(&[0.5, 0.0]), 1.0);
    assert!(matches!(
        layer_cake_reconstruct(&[(1.0, small), (1.0, big)]),
        Err(Error::Consistency(_))
    ));
}

#[test]
fn layer_cake_from_dyadic_levels() {
    let f = standard_extremizer(2, 1).unwrap();
    let g = rasterize_centered(&f, 2.0, 0.1).unwrap();
    let thresholds: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
    let layers = superlevel_layers(&g, &thresholds).unwrap();
    let rec = layer_cake_reconstruct(&layers).unwrap();
    let mut c = [0.0; 2];
    for i in (0..g.len()).step_by(37) {
        g.cell_center(i, &mut c);
        assert!((rec.eval(&c) - g.values()[i]).abs() <= 1.0 / 64.0 + 1e-12);
    }
}

#[test]
fn proposals_are_normalised() {
    let mut rng = seeded_rng(8);
    let g = rasterize_centered(&Field::standard_gaussian(2), 2.0, 0.25).unwrap();
    let props = vec![
        Proposal::uniform(vec![0.0, 0.0], vec![1.0, 2.0]),
        Proposal::PowerTail { center: DVector::from_vec(vec![1.0, 1.0]), scale: 0.5 },
        Proposal::grid_mass(&g).unwrap(),
    ];
    for p in props {
        let mut x = [0.0; 2];
        for _ in 0..100 {
            let d = p.sample(&mut rng, &mut x);
            assert_abs_diff_eq!(d, p.density(&x), epsilon = 1e-9 * d);
        }
    }
}

#[test]
fn support_of_transported_boxes() {
    let b = Field::indicator(IndicatorSet::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
    let m = AffineMap::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let f = apply_affine_symmetry(&b, &m, 1.5).unwrap();
    match f.support() {
        Support::Compact { lo, hi } => {
            assert_abs_diff_eq!(lo[0], -0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(hi[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(hi[1], 2.0, epsilon = 1e-12);
        }
        other => panic!("{other:?}"),
    }
    let e = lp_norm(&f, 1.5, &cfg(100_000)).unwrap();
    assert!(e.sigma_from(1.0) < 3.0 || (e.value - 1.0).abs() < 1e-12);
}
