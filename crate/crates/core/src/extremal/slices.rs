//! Ellipsoid fits to slice superlevel sets `{v : f(x', v) > s}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::convexity::grow_box;
use crate::error::{Error, Result};
use crate::estimate::{mc_joint, Estimate, McConfig};
use crate::fields::{Field, Support};
use crate::geometry::{unit_ball_volume, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceFit {
    pub xp: Vec<f64>,
    pub level: f64,
    pub center: DVector<f64>,
    /// `Q` with fitted set `{v : (v - c)ᵀ Q^{-1} (v - c) <= 1}`.
    pub shape: DMatrix<f64>,
    pub volume: Estimate,
    /// `|E Δ fit| / |E|`.
    pub fraction: Estimate,
}

impl SliceFit {
    /// Radius of the ball with the fitted volume.
    pub fn alpha(&self) -> f64 {
        let d = self.center.len();
        self.shape.determinant().max(0.0).powf(0.5 / d as f64)
    }

    /// Shape scaled to unit determinant.
    pub fn normalized_shape(&self) -> DMatrix<f64> {
        let d = self.center.len();
        &self.shape / self.shape.determinant().powf(1.0 / d as f64)
    }

    fn contains_fit(&self, q_inv: &DMatrix<f64>, v: &[f64]) -> bool {
        let d = self.center.len();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (v[i] - self.center[i]) * q_inv[(i, j)] * (v[j] - self.center[j]);
            }
        }
        acc <= 1.0
    }
}

fn slice_box(f: &Field, xp: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = f.n();
    let k = xp.len();
    let d = n - k;
    let (center, scale) = match f.support() {
        Support::Empty => return Err(Error::EmptySet),
        Support::Unbounded => return Err(Error::InfiniteMeasure),
        Support::Compact { lo, hi } => {
            let c: Vec<f64> = (k..n).map(|a| (lo[a] + hi[a]) / 2.0).collect();
            let w = (k..n).map(|a| (hi[a] - lo[a]) / 2.0).fold(0.0, f64::max);
            (c, w)
        }
        Support::Decay { center, scale, .. } => (center.as_slice()[k..].to_vec(), scale),
    };
    let member = |v: &[f64]| {
        let mut x = [0.0; MAX_DIM];
        x[..k].copy_from_slice(xp);
        x[k..n].copy_from_slice(v);
        f.eval(&x[..n]) > s
    };
    grow_box(d, &center, scale, &member, 0x511ce)
}

/// Second-moment ellipsoid fit of the slice superlevel set at `(x', s)`,
/// rescaled to the estimated volume, and the relative symmetric difference
/// between the set and the fit.
pub fn ellipsoid_slice_fit(f: &Field, xp: &[f64], s: f64, cfg: &McConfig) -> Result<SliceFit> {
    let n = f.n();
    let k = xp.len();
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!("slice point has {k} coordinates in R^{n}")));
    }
    if !(s > 0.0) {
        return Err(Error::InfiniteMeasure);
    }
    cfg.validate()?;
    let d = n - k;
    let (lo, hi) = slice_box(f, xp, s)?;
    let member = |v: &[f64]| {
        let mut x = [0.0; MAX_DIM];
        x[..k].copy_from_slice(xp);
        x[k..n].copy_from_slice(v);
        f.eval(&x[..n]) > s
    };
    let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    // E[1], E[v 1], E[v vᵀ 1] under the uniform law on the box
    let dim = 1 + d + d * d;
    let m = mc_joint(cfg, dim, |rng, out| {
        let mut v = [0.0; MAX_DIM];
        for a in 0..d {
            v[a] = lo[a] + (hi[a] - lo[a]) * rng.random::<f64>();
        }
        out.fill(0.0);
        if member(&v[..d]) {
            out[0] = 1.0;
            for a in 0..d {
                out[1 + a] = v[a];
                for b in 0..d {
                    out[1 + d + a * d + b] = v[a] * v[b];
                }
            }
        }
    });
    let hits = m.mean[0] * m.count as f64;
    if hits < (10 * (d + 1)) as f64 {
        return Err(Error::EmptySet);
    }
    let volume = m.marginal(0, cfg.seed).scale(box_volume);
    let center = DVector::from_fn(d, |a, _| m.mean[1 + a] / m.mean[0]);
    let cov = DMatrix::from_fn(d, d, |a, b| m.mean[1 + d + a * d + b] / m.mean[0] - center[a] * center[b]);
    let mut shape = cov * (d as f64 + 2.0);
    let det = shape.determinant();
    if !(det > 0.0) {
        return Err(Error::EmptySet);
    }
    let fit_volume = unit_ball_volume(d) * det.sqrt();
    shape *= (volume.value / fit_volume).powf(2.0 / d as f64);
    let q_inv = shape.clone().try_inverse().ok_or(Error::EmptySet)?;
    let mut fit = SliceFit {
        xp: xp.to_vec(),
        level: s,
        center,
        shape,
        volume,
        fraction: Estimate::exact(0.0),
    };
    // symmetric difference on a box covering both the set and the fit
    let (mut lo2, mut hi2) = (lo.clone(), hi.clone());
    for a in 0..d {
        let w = fit.shape[(a, a)].sqrt();
        lo2[a] = lo2[a].min(fit.center[a] - w);
        hi2[a] = hi2[a].max(fit.center[a] + w);
    }
    let cfg2 = cfg.derive(1);
    let sd = mc_joint(&cfg2, 2, |rng, out| {
        let mut v = [0.0; MAX_DIM];
        for a in 0..d {
            v[a] = lo2[a] + (hi2[a] - lo2[a]) * rng.random::<f64>();
        }
        let inside = member(&v[..d]);
        out[0] = if inside { 1.0 } else { 0.0 };
        out[1] = if inside != fit.contains_fit(&q_inv, &v[..d]) { 1.0 } else { 0.0 };
    });
    let (e, x) = (sd.mean[0], sd.mean[1]);
    if !(e > 0.0) {
        return Err(Error::EmptySet);
    }
    fit.fraction = Estimate::with_meta(x / e, sd.delta_stderr(&[-x / (e * e), 1.0 / e]), sd.count, cfg2.seed);
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedGeometryReport {
    pub fits: Vec<SliceFit>,
    /// Largest relative Frobenius deviation of a unit-determinant shape from
    /// their mean.
    pub shape_dispersion: f64,
    /// RMS residual of the least-squares affine fit `x' -> centre`.
    pub affine_residual: f64,
    /// RMS distance of the centres from their mean.
    pub center_spread: f64,
    /// `affine_residual` relative to the typical slice size.
    pub affine_defect: f64,
    pub max_fraction: f64,
}

impl SharedGeometryReport {
    /// True when some defect exceeds `threshold`.
    pub fn exceeds(&self, threshold: f64) -> bool {
        self.shape_dispersion > threshold || self.affine_defect > threshold || self.max_fraction > threshold
    }
}

/// Fits every slice `(x', s)` of the grid and measures how far the fits are
/// from a common shape `𝓔` with centres affine in `x'`.
pub fn shared_geometry_check(f: &Field, points: &[Vec<f64>], levels: &[f64], cfg: &McConfig) -> Result<SharedGeometryReport> {
    if points.is_empty() || levels.is_empty() {
        return Err(Error::Parameter("need slice points and levels".into()));
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::Dimension("slice points differ in length".into()));
    }
    let mut fits = Vec::with_capacity(points.len() * levels.len());
    let mut salt = 0;
    for xp in points {
        for &s in levels {
            fits.push(ellipsoid_slice_fit(f, xp, s, &cfg.derive(salt))?);
            salt += 1;
        }
    }
    let d = fits[0].center.len();
    let shapes: Vec<DMatrix<f64>> = fits.iter().map(SliceFit::normalized_shape).collect();
    let mean_shape = shapes.iter().fold(DMatrix::zeros(d, d), |acc, q| acc + q) / shapes.len() as f64;
    let shape_dispersion = shapes.iter().map(|q| (q - &mean_shape).norm() / mean_shape.norm()).fold(0.0, f64::max);
    // least squares c = A x' + b over all fits
    let m = fits.len();
    let design = DMatrix::from_fn(m, k + 1, |i, j| if j < k { fits[i].xp[j] } else { 1.0 });
    let targets = DMatrix::from_fn(m, d, |i, a| fits[i].center[a]);
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(&targets, 1e-12).map_err(|e| Error::Consistency(e.to_string()))?;
    let resid = &targets - &design * coef;
    let affine_residual = (resid.norm_squared() / m as f64).sqrt();
    let mean_center = targets.row_mean();
    let center_spread =
        ((0..m).map(|i| (targets.row(i) - &mean_center).norm_squared()).sum::<f64>() / m as f64).sqrt();
    let size = fits.iter().map(SliceFit::alpha).sum::<f64>() / m as f64;
    let affine_defect = affine_residual / size.max(f64::MIN_POSITIVE);
    let max_fraction = fits.iter().map(|f| f.fraction.value).fold(0.0, f64::max);
    Ok(SharedGeometryReport { fits, shape_dispersion, affine_residual, center_spread, affine_defect, max_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drury::IndicatorSet;
    use crate::fields::{extremizer_field, slice_radius, standard_extremizer, AffineMap};

    #[test]
    fn extremizer_slices_are_balls() {
        let f = standard_extremizer(3, 1).unwrap();
        let cfg = McConfig::new(100_000, 1);
        for (xp, s) in [(0.0, 0.5), (0.7, 0.3), (-1.2, 0.1)] {
            let fit = ellipsoid_slice_fit(&f, &[xp], s, &cfg).unwrap();
            assert!(fit.fraction.value < 0.02, "{fit:?}");
            let rho = slice_radius(&f, &[xp], s, &cfg).unwrap().value;
            assert!((fit.alpha() - rho).abs() < 0.01 * rho, "{} vs {rho}", fit.alpha());
            assert!(fit.center.norm() < 0.01 * rho);
        }
    }

    #[test]
    fn affine_images_have_elliptic_slices() {
        let lin = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.3, 0.2, 2.0, 0.5, 0.0, -0.6, 0.7]);
        let map = AffineMap::new(lin, DVector::from_vec(vec![0.3, -0.2, 0.5])).unwrap();
        let f = extremizer_field(3, 1, map, 1.0).unwrap();
        let fit = ellipsoid_slice_fit(&f, &[0.2], 0.4, &McConfig::new(100_000, 2)).unwrap();
        assert!(fit.fraction.value < 0.02, "{fit:?}");
    }

    #[test]
    fn square_slices_are_not_ellipses() {
        let f = Field::indicator(IndicatorSet::cube(&[-1.0; 3], &[1.0; 3]).unwrap());
        let fit = ellipsoid_slice_fit(&f, &[0.0], 0.5, &McConfig::new(100_000, 3)).unwrap();
        assert!(fit.fraction.value > 0.05, "{fit:?}");
        assert!(matches!(ellipsoid_slice_fit(&f, &[3.0], 0.5, &McConfig::new(1000, 3)), Err(Error::EmptySet)));
    }

    #[test]
    fn sheared_extremizer_shares_one_shape() {
        let lin = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.8, 1.0, 0.0, -0.5, 0.3, 1.0]);
        let f = extremizer_field(3, 1, AffineMap::linear(lin).unwrap(), 1.0).unwrap();
        let points: Vec<Vec<f64>> = [-1.0, -0.3, 0.4, 1.1].iter().map(|&x| vec![x]).collect();
        let r = shared_geometry_check(&f, &points, &[0.15, 0.3], &McConfig::new(50_000, 4)).unwrap();
        assert!(r.shape_dispersion < 0.05, "{}", r.shape_dispersion);
        assert!(r.affine_residual < 0.05 * r.center_spread, "{} {}", r.affine_residual, r.center_spread);
        assert!(!r.exceeds(0.05));
    }

    #[test]
    fn standard_extremizer_has_centred_slices() {
        let f = standard_extremizer(3, 1).unwrap();
        let points = vec![vec![0.0], vec![0.8]];
        let r = shared_geometry_check(&f, &points, &[0.2, 0.4], &McConfig::new(50_000, 5)).unwrap();
        for fit in &r.fits {
            let rho = slice_radius(&f, &fit.xp, fit.level, &McConfig::new(10, 0)).unwrap().value;
            assert!(fit.center.norm() < 0.02 * rho);
            assert!((fit.alpha() - rho).abs() < 0.01 * rho);
        }
    }

    #[test]
    fn two_bump_mixture_breaks_the_geometry() {
        let a = Field::gaussian(&[0.0, -1.2, 0.0], 0.7, 1.0).unwrap();
        let b = Field::gaussian(&[0.5, 1.2, 0.4], 0.7, 1.0).unwrap();
        let f = Field::combination(vec![(1.0, a), (1.0, b)]).unwrap();
        let points = vec![vec![0.0], vec![0.5]];
        let r = shared_geometry_check(&f, &points, &[0.3, 0.6], &McConfig::new(50_000, 6)).unwrap();
        assert!(r.exceeds(0.05), "{r:?}");
    }
}
