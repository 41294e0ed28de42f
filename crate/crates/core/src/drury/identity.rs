//! Both sides of the sliced Drury identity,
//! `‖T f‖_q^q = C ∫ vol_k^{k-n}(x'_0..x'_k) ∫ ∏_i f(x'_i, Σ_j b_ij v_j) dv dx'`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{mc_joint, Estimate, McConfig};
use crate::fields::{Field, Proposal, Support};
use crate::geometry::{
    check_dims, drury_coefficients, fill_cauchy, fill_unit_vector, signed_volume_slices, unit_sphere_area,
    OrthonormalFrame, MAX_DIM,
};
use crate::transforms::{transform_power_integral, NormConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DruryConfig {
    pub mc: McConfig,
    /// Quadrature points per plane for the transform side.
    pub inner_points: usize,
    /// Anchor simplices with `vol_k < threshold * scale^k` are rejected.
    pub threshold: f64,
}

impl DruryConfig {
    pub fn new(mc: McConfig) -> Self {
        DruryConfig { mc, inner_points: 128, threshold: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DruryReport {
    pub n: usize,
    pub k: usize,
    /// `‖T f‖_{L^{n+1}}^{n+1}`.
    pub transform_side: Estimate,
    /// The sliced multilinear integral.
    pub multilinear_side: Estimate,
    /// `transform_side / multilinear_side`; absent when both sides vanish.
    pub constant: Option<Estimate>,
    pub rejected: u64,
    pub rejection_fraction: f64,
}

/// Estimates both sides of the identity and their ratio.
///
/// Anchors `x_0..x_k` are drawn independently from a proposal fitted to `f`.
/// The remaining points are drawn on the plane through the anchors from a
/// Cauchy law centred at the point nearest the field centre, which puts
/// them on the correct slices `v_i = Σ_j b_ij v_j` automatically; their
/// `x'` density picks up the Jacobian of the projection to the first `k`
/// coordinates.
pub fn drury_identity_check(f: &Field, k: usize, cfg: &DruryConfig) -> Result<DruryReport> {
    let n = f.n();
    check_dims(n, k)?;
    cfg.mc.validate()?;
    if !(cfg.threshold >= 0.0) {
        return Err(Error::Parameter(format!("rejection threshold must be nonnegative, got {}", cfg.threshold)));
    }
    let norm_cfg = NormConfig::new(cfg.mc.derive(1)).with_inner_points(cfg.inner_points);
    let transform_side = transform_power_integral(f, k, &norm_cfg)?;
    let support = f.support();
    if f.is_zero() || support == Support::Empty {
        let zero = Estimate::with_meta(0.0, 0.0, cfg.mc.samples as u64, cfg.mc.seed);
        return Ok(DruryReport {
            n,
            k,
            transform_side,
            multilinear_side: zero,
            constant: None,
            rejected: 0,
            rejection_fraction: 0.0,
        });
    }
    let proposal = Proposal::for_field(f)?;
    let (center, scale) = support.center_scale(n);
    let min_vol = cfg.threshold * scale.powi(k as i32);
    let mc = cfg.mc.derive(2);
    let m = mc_joint(&mc, 2, |rng, out| {
        out[0] = 0.0;
        out[1] = 0.0;
        let mut pts = [[0.0; MAX_DIM]; MAX_DIM + 1];
        let mut w = 1.0;
        for j in 0..=k {
            let q = if j == 0 {
                proposal.sample(rng, &mut pts[0][..n])
            } else {
                // Defensive mixture: half from the proposal, half radially
                // about x_0 with density ~ r^{1-n} near 0, which absorbs the
                // vol_k^{k-n} singularity at coincident anchors.
                let (head, tail) = pts.split_at_mut(j);
                let x = &mut tail[0][..n];
                if rng.random::<bool>() {
                    proposal.sample(rng, x);
                } else {
                    fill_radial(x, scale, rng);
                    for (a, xa) in x.iter_mut().enumerate() {
                        *xa += head[0][a];
                    }
                }
                let r = (0..n).map(|a| (x[a] - head[0][a]).powi(2)).sum::<f64>().sqrt();
                0.5 * proposal.density(x) + 0.5 * radial_density(r, n, scale)
            };
            let v = f.eval(&pts[j][..n]);
            if v == 0.0 || !(q > 0.0) {
                return;
            }
            w *= v / q;
        }
        let heads: Vec<&[f64]> = pts[..=k].iter().map(|p| &p[..k]).collect();
        let vol = signed_volume_slices(&heads).abs();
        if vol < min_vol {
            out[1] = 1.0;
            return;
        }
        let span = DMatrix::from_fn(n, k, |i, j| pts[j + 1][i] - pts[0][i]);
        let Ok(frame) = OrthonormalFrame::from_span(&span) else {
            out[1] = 1.0;
            return;
        };
        let u = &frame.basis;
        let det_head = u.view((0, 0), (k, k)).determinant().abs();
        // point of the plane nearest the field centre
        let x0 = DVector::from_column_slice(&pts[0][..n]);
        let t0 = u.transpose() * (&center - &x0);
        let foot = &x0 + u * &t0;
        let dist = (&center - &foot).norm();
        let sigma = (scale * scale + dist * dist).sqrt();
        let anchors: Vec<DVector<f64>> = pts[..=k].iter().map(|p| DVector::from_column_slice(&p[..k])).collect();
        let mut extras = Vec::with_capacity(n - k);
        let mut t = [0.0; MAX_DIM];
        for _ in k + 1..=n {
            let dens = fill_cauchy(&mut t[..k], rng) / sigma.powi(k as i32);
            let x = &foot + u * DVector::from_column_slice(&t[..k]) * sigma;
            extras.push(x.rows(0, k).into_owned());
            w /= dens / det_head;
        }
        let Ok(b) = drury_coefficients(&anchors, &extras) else {
            out[1] = 1.0;
            return;
        };
        let d = n - k;
        let mut y = [0.0; MAX_DIM];
        for (e, xp) in extras.iter().enumerate() {
            let i = k + 1 + e;
            y[..k].copy_from_slice(xp.as_slice());
            for a in 0..d {
                y[k + a] = (0..=k).map(|j| b.rows[i][j] * pts[j][k + a]).sum();
            }
            let v = f.eval(&y[..n]);
            if v == 0.0 {
                return;
            }
            w *= v;
        }
        out[0] = w * vol.powi(k as i32 - n as i32);
    });
    let multilinear_side = m.marginal(0, mc.seed);
    if !multilinear_side.is_finite() {
        return Err(Error::NonIntegrable("multilinear side is not finite".into()));
    }
    let rejection_fraction = m.mean[1];
    let rejected = (rejection_fraction * m.count as f64).round() as u64;
    let constant = (multilinear_side.value > 0.0).then(|| transform_side.ratio(&multilinear_side));
    Ok(DruryReport { n, k, transform_side, multilinear_side, constant, rejected, rejection_fraction })
}

/// Direction uniform, radius with density `s / (s + r)^2`.
fn fill_radial(out: &mut [f64], s: f64, rng: &mut crate::estimate::Rng) {
    fill_unit_vector(out, rng);
    let u: f64 = rng.random();
    let r = s * u / (1.0 - u).max(1e-300);
    out.iter_mut().for_each(|x| *x *= r);
}

fn radial_density(r: f64, n: usize, s: f64) -> f64 {
    s / ((s + r) * (s + r)) / (unit_sphere_area(n) * r.powi(n as i32 - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::standard_extremizer;
    use crate::IndicatorSet;
    use std::f64::consts::PI;

    #[test]
    fn constant_is_field_independent_at_2_1() {
        let cfg = DruryConfig::new(McConfig::new(60_000, 3));
        let fields = [
            Field::standard_gaussian(2),
            standard_extremizer(2, 1).unwrap(),
            Field::indicator(IndicatorSet::cube(&[-0.5, -1.0], &[1.0, 0.5]).unwrap()),
        ];
        for f in &fields {
            let r = drury_identity_check(f, 1, &cfg).unwrap();
            let c = r.constant.unwrap();
            assert!(c.sigma_from(1.0 / PI) < 3.0, "{} {c:?}", f.kind());
            assert!(r.rejection_fraction < 0.01);
        }
    }

    #[test]
    fn zero_and_scaling() {
        let cfg = DruryConfig::new(McConfig::new(4096, 3));
        let z = drury_identity_check(&Field::zero(2), 1, &cfg).unwrap();
        assert_eq!((z.transform_side.value, z.multilinear_side.value), (0.0, 0.0));
        let f = Field::standard_gaussian(2);
        let a = drury_identity_check(&f, 1, &cfg).unwrap();
        let b = drury_identity_check(&f.scaled(2.0).unwrap(), 1, &cfg).unwrap();
        approx::assert_relative_eq!(b.multilinear_side.value, 8.0 * a.multilinear_side.value, max_relative = 1e-9);
        approx::assert_relative_eq!(b.transform_side.value, 8.0 * a.transform_side.value, max_relative = 1e-9);
    }
}
