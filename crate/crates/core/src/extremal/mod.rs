//! The extremal problem for `‖T f‖_q / ‖f‖_p`: the ratio functional,
//! perturbation tests, symmetrization toward radial form, and probes of the
//! slice geometry and convexity of extremizers.

mod convexity;
mod reflection;
mod slices;
mod symmetrize;

use serde::{Deserialize, Serialize};

pub use convexity::{almost_convexity_probe, ConvexityReport, Region, SuperlevelSet};
pub use reflection::{matched_reflection_parameters, scaled_skew_reflection, AffineSection};
pub use slices::{ellipsoid_slice_fit, shared_geometry_check, SharedGeometryReport, SliceFit};
pub use symmetrize::{
    fit_radial_profile, symmetrize_iterate, IterationTrace, ProfileFit, StepKind, SymmetrizeConfig, TraceEntry,
};

use crate::error::{Error, Result};
use crate::estimate::{mc_joint, CoMoments, Estimate, McConfig};
use crate::fields::{endpoint_exponents, lp_norm, Field, Proposal, Support};
use crate::geometry::{check_dims, MAX_DIM};
use crate::transforms::{lq_transform_norm, transform_power_joint, NormConfig};

/// `‖T f‖_q / ‖f‖_p` with both norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub numerator: Estimate,
    pub denominator: Estimate,
    pub ratio: Estimate,
    pub p: f64,
    pub q: f64,
}

/// The ratio functional at the endpoint exponents. The two norms are
/// estimated from independent streams.
pub fn ratio(f: &Field, k: usize, cfg: &NormConfig) -> Result<RatioReport> {
    let n = f.n();
    check_dims(n, k)?;
    if f.is_zero() {
        return Err(Error::ZeroNorm);
    }
    let (p, q) = endpoint_exponents(n, k);
    let denominator = lp_norm(f, p, &cfg.mc.derive(11))?;
    if !(denominator.value > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let numerator = lq_transform_norm(f, k, cfg)?;
    let ratio = numerator.ratio(&denominator);
    Ok(RatioReport { numerator, denominator, ratio, p, q })
}

/// `∫ |f_i|^p` for several fields on common points, drawn from a law covering
/// all supports.
fn integral_pow_joint(fields: &[Field], p: f64, cfg: &McConfig) -> Result<CoMoments> {
    let n = fields[0].n();
    let combined = Field::combination(fields.iter().map(|f| (1.0, f.clone())).collect())?.support();
    if combined == Support::Empty {
        return Err(Error::ZeroNorm);
    }
    let prop = Proposal::for_support(&combined, n)?;
    let m = mc_joint(cfg, fields.len(), |rng, out| {
        let mut x = [0.0; MAX_DIM];
        let dens = prop.sample(rng, &mut x[..n]);
        for (o, f) in out.iter_mut().zip(fields) {
            let v = f.eval(&x[..n]);
            *o = if v == 0.0 { 0.0 } else { v.powf(p) / dens };
        }
    });
    if m.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIntegrable("L^p integral estimate diverged".into()));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEntry {
    pub eps: f64,
    pub perturbed: Estimate,
    /// `ratio(f + eps g) - ratio(f)`, with the common-sample standard error.
    pub difference: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub base: Estimate,
    pub entries: Vec<PerturbationEntry>,
}

impl PerturbationReport {
    /// Largest `difference / stderr` (positive means the ratio went up).
    pub fn max_sigma(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let d = &e.difference;
                if d.stderr > 0.0 {
                    d.value / d.stderr
                } else if d.value > 0.0 {
                    f64::INFINITY
                } else if d.value < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ratio differences `ratio(f + eps g) - ratio(f)` for each `(eps, g)`.
/// Both ratios use the same planes and the same points, so the noise common
/// to both cancels in the difference.
pub fn perturbation_test(f: &Field, family: &[(f64, Field)], k: usize, cfg: &NormConfig) -> Result<PerturbationReport> {
    let n = f.n();
    check_dims(n, k)?;
    if f.is_zero() {
        return Err(Error::ZeroNorm);
    }
    let (p, q) = endpoint_exponents(n, k);
    let mut base = None;
    let mut entries = Vec::with_capacity(family.len());
    for (i, (eps, g)) in family.iter().enumerate() {
        if g.n() != n {
            return Err(Error::Dimension("perturbation lives in a different dimension".into()));
        }
        let fe = f.perturbed(*eps, g)?;
        let pair = [f.clone(), fe];
        let a = transform_power_joint(&pair, k, cfg)?;
        let b = integral_pow_joint(&pair, p, &cfg.mc.derive(11))?;
        let (a1, a2, b1, b2) = (a.mean[0], a.mean[1], b.mean[0], b.mean[1]);
        if !(b1 > 0.0 && b2 > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let r1 = a1.powf(1.0 / q) / b1.powf(1.0 / p);
        let r2 = a2.powf(1.0 / q) / b2.powf(1.0 / p);
        let grad_a = [
            if a1 > 0.0 { -r1 / (q * a1) } else { 0.0 },
            if a2 > 0.0 { r2 / (q * a2) } else { 0.0 },
        ];
        let grad_b = [r1 / (p * b1), -r2 / (p * b2)];
        let se = a.delta_stderr(&grad_a).hypot(b.delta_stderr(&grad_b));
        let seed = cfg.mc.seed;
        let se1 = a.delta_stderr(&[-grad_a[0], 0.0]).hypot(b.delta_stderr(&[grad_b[0], 0.0]));
        let se2 = a.delta_stderr(&[0.0, grad_a[1]]).hypot(b.delta_stderr(&[0.0, grad_b[1]]));
        if i == 0 {
            base = Some(Estimate::with_meta(r1, se1, a.count, seed));
        }
        let perturbed = Estimate::with_meta(r2, se2, a.count, seed);
        let difference = Estimate::with_meta(r2 - r1, se, a.count, seed);
        entries.push(PerturbationEntry { eps: *eps, perturbed, difference });
    }
    let base = match base {
        Some(b) => b,
        None => ratio(f, k, cfg)?.ratio,
    };
    Ok(PerturbationReport { base, entries })
}

/// Smooth bumps of the given radius centred on a ring of `count` points at
/// distance `distance` from `center`, in the plane of the first two axes.
pub fn bump_ring(center: &[f64], distance: f64, radius: f64, count: usize) -> Result<Vec<Field>> {
    let n = center.len();
    if n < 2 {
        return Err(Error::Dimension("a ring needs at least two dimensions".into()));
    }
    (0..count)
        .map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            let mut c = center.to_vec();
            c[0] += distance * t.cos();
            c[1] += distance * t.sin();
            Field::bump(&c, radius, 1.0)
        })
        .collect()
}
