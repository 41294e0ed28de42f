use kplane::estimate::seeded_rng;
use kplane::geometry::{haar_orthogonal, sample_affine_plane, sample_grassmannian};
use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;

const N: usize = 100_000;

#[test]
fn line_directions_in_the_plane_are_uniform() {
    let bins = 36;
    let mut counts = vec![0usize; bins];
    let mut rng = seeded_rng(1);
    for _ in 0..N {
        let f = sample_grassmannian(2, 1, &mut rng).unwrap();
        // direction of a line, as an angle in [0, π)
        let t = f.basis[(1, 0)].atan2(f.basis[(0, 0)]).rem_euclid(PI);
        counts[((t / PI * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = N as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi2 = {chi2}, critical = {critical}");
}

#[test]
fn second_moment_of_directions_is_isotropic() {
    let mut rng = seeded_rng(2);
    let mut acc = DMatrix::<f64>::zeros(3, 3);
    for _ in 0..N {
        let f = sample_grassmannian(3, 1, &mut rng).unwrap();
        let t = f.basis.column(0);
        acc += t * t.transpose();
    }
    acc /= N as f64;
    let defect = (acc - DMatrix::identity(3, 3) / 3.0).amax();
    assert!(defect < 0.01, "{defect}");
}

#[test]
fn offsets_in_the_unit_ball_have_mean_length_one_half() {
    let mut rng = seeded_rng(3);
    let mean: f64 = (0..N).map(|_| sample_affine_plane(2, 1, 1.0, &mut rng).unwrap().0.offset.norm()).sum::<f64>()
        / N as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn rotated_frames_have_the_same_law() {
    let q = haar_orthogonal(3, &mut seeded_rng(99));
    let angle = |m: &DMatrix<f64>| m[(2, 0)].abs().acos();
    let mut rng = seeded_rng(4);
    let plain: Vec<f64> = (0..N).map(|_| angle(&sample_grassmannian(3, 1, &mut rng).unwrap().basis)).collect();
    let mut rng = seeded_rng(5);
    let rotated: Vec<f64> =
        (0..N).map(|_| angle(&(&q * sample_grassmannian(3, 1, &mut rng).unwrap().basis))).collect();
    let d = ks(plain, rotated);
    // 0.1% level: c(α) sqrt(2/N) with c(0.001) = 1.949
    assert!(d < 1.949 * (2.0 / N as f64).sqrt(), "{d}");
}
