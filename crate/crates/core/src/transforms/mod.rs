//! The k-plane transform in its Euclidean, graph-parameterized and elliptic
//! forms, with L^q norm estimators.

mod elliptic;
mod quadrature;
mod sharp;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use elliptic::{
    apply_r, elliptic_lift, elliptic_norm_check, elliptic_transform, elliptic_transform_quadrature, hemisphere_mean,
    lift_value, s_inverse, s_map, EllipticConfig, EllipticReport, HemispherePoint, SphereFunction,
};
pub use quadrature::PlaneRule;
pub use sharp::{apply_r_sharp, lq_sharp_norm, sharp_power_integral, sharp_transform, MatrixFunction, MatrixPlane};

use crate::error::{Error, Result};
use crate::estimate::{mc_joint, mc_mean, CoMoments, Estimate, McConfig, Rng};
use crate::fields::{endpoint_exponents, Field, Support};
use crate::geometry::{
    ball_volume, check_dims, fill_power_tail, fill_uniform_ball, sample_grassmannian, AffinePlane, MAX_DIM,
};

/// Point budget for quadrature along a single plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub points: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { points: 4096 }
    }
}

/// `T f(plane)`. The reported error is the difference from the same rule at
/// half the resolution, which bounds the midpoint error from above for the
/// smooth fields used here.
pub fn kplane_transform(f: &Field, plane: &AffinePlane, quad: &QuadConfig) -> Result<Estimate> {
    if f.n() != plane.n() {
        return Err(Error::Dimension(format!("field on R^{} but plane in R^{}", f.n(), plane.n())));
    }
    let rule = PlaneRule::new(plane.k(), quad.points)?;
    let support = f.support();
    let fine = rule.integrate_with(f, plane, &support)?;
    let coarse = rule.coarse()?.integrate_with(f, plane, &support)?;
    Ok(Estimate::with_meta(fine, (fine - coarse).abs(), quad.points as u64, 0))
}

/// How plane offsets are drawn in the outer Monte Carlo loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OffsetSampling {
    /// Radial power-tail law on the complement, scaled to the field. Unbiased
    /// for every integrable field.
    HeavyTail,
    /// Uniform in a ball of the given radius about the projected centre.
    /// Truncates the integral outside the ball.
    Ball { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub mc: McConfig,
    pub inner_points: usize,
    pub offsets: OffsetSampling,
    /// Length scale of the heavy-tailed offsets; the support's scale when unset.
    pub offset_scale: Option<f64>,
}

impl NormConfig {
    pub fn new(mc: McConfig) -> Self {
        NormConfig { mc, inner_points: 128, offsets: OffsetSampling::HeavyTail, offset_scale: None }
    }

    pub fn with_inner_points(mut self, points: usize) -> Self {
        self.inner_points = points;
        self
    }

    pub fn with_offset_scale(mut self, scale: f64) -> Self {
        self.offset_scale = Some(scale);
        self
    }
}

fn check_support_for_planes(support: &Support, k: usize, what: &str) -> Result<()> {
    match support {
        Support::Unbounded => Err(Error::NonIntegrable(format!("{what} of a field without decay"))),
        Support::Decay { exponent, .. } if *exponent <= k as f64 => Err(Error::NonIntegrable(format!(
            "{what}: decay exponent {exponent} does not exceed k = {k}"
        ))),
        _ => Ok(()),
    }
}

/// Draws affine planes with Haar directions and heavy-tailed (or ball)
/// offsets about a centre; `sample` returns the plane and its density.
struct PlaneSampler {
    n: usize,
    k: usize,
    center: DVector<f64>,
    scale: f64,
    offsets: OffsetSampling,
}

impl PlaneSampler {
    fn new(n: usize, k: usize, support: &Support, cfg: &NormConfig) -> Result<Self> {
        let (center, support_scale) = support.center_scale(n);
        let scale = cfg.offset_scale.unwrap_or(support_scale);
        if !(scale > 0.0) {
            return Err(Error::Parameter(format!("offset scale must be positive, got {scale}")));
        }
        if let OffsetSampling::Ball { radius } = cfg.offsets {
            if !(radius > 0.0) {
                return Err(Error::Parameter(format!("offset ball radius must be positive, got {radius}")));
            }
        }
        Ok(PlaneSampler { n, k, center, scale, offsets: cfg.offsets })
    }

    fn sample(&self, rng: &mut Rng) -> Option<(AffinePlane, f64)> {
        let (n, d) = (self.n, self.n - self.k);
        let frame = sample_grassmannian(n, self.k, rng).ok()?;
        let mut z = [0.0; MAX_DIM];
        let (r, density) = match self.offsets {
            OffsetSampling::HeavyTail => {
                let dens = fill_power_tail(&mut z[..d], rng);
                (self.scale, dens / self.scale.powi(d as i32))
            }
            OffsetSampling::Ball { radius } => {
                fill_uniform_ball(&mut z[..d], rng);
                (radius, 1.0 / ball_volume(d, radius))
            }
        };
        let mut offset = frame.project_complement(&self.center);
        for i in 0..n {
            offset[i] += r * (0..d).map(|j| frame.complement[(i, j)] * z[j]).sum::<f64>();
        }
        Some((AffinePlane { frame, offset }, density))
    }
}

/// Estimate of `∫_G ∫_{θ⊥} |T f|^q` with `q = n + 1`.
pub fn transform_power_integral(f: &Field, k: usize, cfg: &NormConfig) -> Result<Estimate> {
    let n = f.n();
    check_dims(n, k)?;
    cfg.mc.validate()?;
    let support = f.support();
    if f.is_zero() || support == Support::Empty {
        return Ok(Estimate::with_meta(0.0, 0.0, cfg.mc.samples as u64, cfg.mc.seed));
    }
    check_support_for_planes(&support, k, "transform norm")?;
    let rule = PlaneRule::new(k, cfg.inner_points)?;
    let (_, q) = endpoint_exponents(n, k);
    let sampler = PlaneSampler::new(n, k, &support, cfg)?;
    let est = mc_mean(&cfg.mc, |rng| {
        let Some((plane, density)) = sampler.sample(rng) else {
            return f64::NAN;
        };
        match rule.integrate_with(f, &plane, &support) {
            Ok(t) => t.abs().powf(q) / density,
            Err(_) => f64::NAN,
        }
    });
    if !est.is_finite() {
        return Err(Error::NonIntegrable("transform norm estimate is not finite".into()));
    }
    Ok(est)
}

/// `∫ |T f_i|^q` for several fields on common planes, drawn about the
/// combined support of all of them.
pub fn transform_power_joint(fields: &[Field], k: usize, cfg: &NormConfig) -> Result<CoMoments> {
    let first = fields.first().ok_or_else(|| Error::Parameter("no fields given".into()))?;
    let n = first.n();
    check_dims(n, k)?;
    cfg.mc.validate()?;
    let combined = Field::combination(fields.iter().map(|f| (1.0, f.clone())).collect())?.support();
    let supports: Vec<Support> = fields.iter().map(Field::support).collect();
    for s in &supports {
        check_support_for_planes(s, k, "transform norm")?;
    }
    if combined == Support::Empty {
        let mut m = CoMoments::new(fields.len());
        m.push(&vec![0.0; fields.len()]);
        return Ok(m);
    }
    let rule = PlaneRule::new(k, cfg.inner_points)?;
    let (_, q) = endpoint_exponents(n, k);
    let sampler = PlaneSampler::new(n, k, &combined, cfg)?;
    let m = mc_joint(&cfg.mc, fields.len(), |rng, out| {
        let Some((plane, density)) = sampler.sample(rng) else {
            out.fill(f64::NAN);
            return;
        };
        for ((o, f), s) in out.iter_mut().zip(fields).zip(&supports) {
            *o = match s {
                Support::Empty => 0.0,
                _ => rule.integrate_with(f, &plane, s).map_or(f64::NAN, |t| t.abs().powf(q) / density),
            };
        }
    });
    if m.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIntegrable("transform norm estimate is not finite".into()));
    }
    Ok(m)
}

/// `‖T f‖_{L^{n+1}}` over the affine Grassmannian with Haar measure on
/// directions and Lebesgue measure on offsets.
pub fn lq_transform_norm(f: &Field, k: usize, cfg: &NormConfig) -> Result<Estimate> {
    let (_, q) = endpoint_exponents(f.n(), k);
    Ok(transform_power_integral(f, k, cfg)?.powf(1.0 / q))
}

/// Offset of the plane through the origin-normal decomposition: the point of
/// the plane closest to the origin.
pub fn plane_offset(plane: &AffinePlane) -> DVector<f64> {
    plane.frame.project_complement(&plane.offset)
}

#[cfg(test)]
mod tests;
