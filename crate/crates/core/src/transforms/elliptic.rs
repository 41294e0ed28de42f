//! The elliptic realization: functions on the northern hemisphere of the
//! unit sphere in R^{n+1}, averaged over great k-spheres.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lq_transform_norm, NormConfig};
use crate::error::{Error, Result};
use crate::estimate::{mc_mean, Estimate, McConfig};
use crate::fields::{endpoint_exponents, lp_norm, Field};
use crate::geometry::{
    check_dims, fill_unit_vector, sample_grassmannian, sphere_rule, unit_sphere_area, OrthonormalFrame, MAX_DIM,
};

/// A unit vector in R^{n+1} with strictly positive last coordinate. Stands
/// for the line through it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HemispherePoint {
    theta: DVector<f64>,
}

impl HemispherePoint {
    /// Normalizes `v` and folds it to the northern hemisphere.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Parameter("cannot normalize a zero or non-finite vector".into()));
        }
        let mut theta = v / norm;
        let last = theta.len() - 1;
        if theta[last] == 0.0 {
            return Err(Error::Boundary("last coordinate vanishes".into()));
        }
        if theta[last] < 0.0 {
            theta.neg_mut();
        }
        Ok(HemispherePoint { theta })
    }

    pub fn as_slice(&self) -> &[f64] {
        self.theta.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Uniform on the hemisphere.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut v = vec![0.0; dim];
        loop {
            fill_unit_vector(&mut v, rng);
            if let Ok(p) = Self::new(DVector::from_column_slice(&v)) {
                return p;
            }
        }
    }
}

/// `S(x) = (x, 1) / sqrt(1 + |x|^2)`.
pub fn s_map(x: &[f64]) -> HemispherePoint {
    let r = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let theta = DVector::from_fn(x.len() + 1, |i, _| if i < x.len() { x[i] / r } else { 1.0 / r });
    HemispherePoint { theta }
}

pub fn s_inverse(p: &HemispherePoint) -> DVector<f64> {
    let n = p.dim() - 1;
    let t = p.theta[n];
    DVector::from_fn(n, |i, _| p.theta[i] / t)
}

/// `F(θ) = θ_{n+1}^{-(k+1)} f(S^{-1} θ)`, failing on the equator.
pub fn lift_value(f: &Field, k: usize, theta: &[f64]) -> Result<f64> {
    let n = f.n();
    if theta.len() != n + 1 {
        return Err(Error::Dimension(format!("point in R^{} but field on R^{n}", theta.len())));
    }
    let t = theta[n];
    if !(t > 0.0) {
        return Err(Error::Boundary(format!("last coordinate {t} is not positive")));
    }
    let mut x = [0.0; MAX_DIM];
    for i in 0..n {
        x[i] = theta[i] / t;
    }
    Ok(t.powi(-(k as i32) - 1) * f.eval(&x[..n]))
}

/// A function on the northern hemisphere of the unit sphere in R^dim.
#[derive(Clone)]
pub struct SphereFunction {
    dim: usize,
    func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for SphereFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereFunction").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl SphereFunction {
    pub fn new(dim: usize, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        SphereFunction { dim, func: Arc::new(func) }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        (self.func)(theta)
    }

    pub fn eval_point(&self, p: &HemispherePoint) -> f64 {
        self.eval(p.as_slice())
    }
}

/// The lift of `f` to the hemisphere; the equator (a null set) maps to 0.
pub fn elliptic_lift(f: &Field, k: usize) -> Result<SphereFunction> {
    check_dims(f.n(), k)?;
    let f = f.clone();
    Ok(SphereFunction::new(f.n() + 1, move |theta| lift_value(&f, k, theta).unwrap_or(0.0)))
}

/// `RF(θ) = F(sgn θ_1 θ_{n+1}, sgn θ_1 θ_2, ..., sgn θ_1 θ_n, |θ_1|)`, zero on
/// `{θ_1 = 0}`.
pub fn apply_r(big_f: &SphereFunction) -> SphereFunction {
    let inner = big_f.clone();
    let dim = big_f.dim;
    SphereFunction::new(dim, move |theta| {
        let t1 = theta[0];
        if t1 == 0.0 {
            return 0.0;
        }
        let s = t1.signum();
        let mut phi = [0.0; MAX_DIM + 1];
        phi[0] = s * theta[dim - 1];
        for i in 1..dim - 1 {
            phi[i] = s * theta[i];
        }
        phi[dim - 1] = t1.abs();
        inner.eval(&phi[..dim])
    })
}

fn check_frame(big_f: &SphereFunction, pi: &OrthonormalFrame) -> Result<()> {
    if pi.n != big_f.dim {
        return Err(Error::Dimension(format!("subspace of R^{} for a function on R^{}", pi.n, big_f.dim)));
    }
    Ok(())
}

fn fold_eval(big_f: &SphereFunction, pi: &OrthonormalFrame, omega: &[f64], u: &mut [f64]) -> f64 {
    let dim = pi.n;
    for i in 0..dim {
        u[i] = (0..pi.k).map(|j| pi.basis[(i, j)] * omega[j]).sum();
    }
    if u[dim - 1] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    big_f.eval(u)
}

/// `T^E F(π)`: the mean of `F` over lines in the subspace `π`, by Monte Carlo.
pub fn elliptic_transform(big_f: &SphereFunction, pi: &OrthonormalFrame, cfg: &McConfig) -> Result<Estimate> {
    check_frame(big_f, pi)?;
    cfg.validate()?;
    Ok(mc_mean(cfg, |rng| {
        let mut omega = [0.0; MAX_DIM + 1];
        let mut u = [0.0; MAX_DIM + 1];
        fill_unit_vector(&mut omega[..pi.k], rng);
        fold_eval(big_f, pi, &omega[..pi.k], &mut u[..pi.n])
    }))
}

/// `T^E F(π)` by a deterministic rule on the unit sphere of `π`.
pub fn elliptic_transform_quadrature(big_f: &SphereFunction, pi: &OrthonormalFrame, per_angle: usize) -> Result<f64> {
    check_frame(big_f, pi)?;
    Ok(elliptic_rule_eval(big_f, pi, &sphere_rule(pi.k, per_angle.max(1))))
}

fn elliptic_rule_eval(big_f: &SphereFunction, pi: &OrthonormalFrame, rule: &[(Vec<f64>, f64)]) -> f64 {
    let mut u = [0.0; MAX_DIM + 1];
    let area: f64 = rule.iter().map(|(_, w)| w).sum();
    rule.iter().map(|(omega, w)| w * fold_eval(big_f, pi, omega, &mut u[..pi.n])).sum::<f64>() / area
}

/// Mean of `g` under the uniform probability on the hemisphere in R^dim.
pub fn hemisphere_mean(dim: usize, cfg: &McConfig, g: impl Fn(&[f64]) -> f64 + Sync + Send) -> Result<Estimate> {
    cfg.validate()?;
    Ok(mc_mean(cfg, |rng| {
        let mut u = [0.0; MAX_DIM + 1];
        fill_unit_vector(&mut u[..dim], rng);
        if u[dim - 1] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        g(&u[..dim])
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticConfig {
    pub mc: McConfig,
    /// Angular resolution of the rule used for `T^E` inside each subspace.
    pub per_angle: usize,
    /// Point budget along planes for the Euclidean norm.
    pub inner_points: usize,
}

impl EllipticConfig {
    pub fn new(mc: McConfig) -> Self {
        EllipticConfig { mc, per_angle: 64, inner_points: 128 }
    }
}

/// Both sides of the elliptic/Euclidean correspondence for one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    pub n: usize,
    pub k: usize,
    /// `‖T^E F‖_{L^{n+1}}` under the probability Haar measure.
    pub elliptic_norm: Estimate,
    /// `‖T f‖_{L^{n+1}}`.
    pub transform_norm: Estimate,
    /// `elliptic_norm / transform_norm`; should not depend on `f`.
    pub constant: Estimate,
    /// `c_n^{1/p} ‖F‖_{L^p}` with `c_n` the hemisphere area.
    pub lift_norm: Estimate,
    /// `‖f‖_{L^p}`.
    pub field_norm: Estimate,
    /// `lift_norm / field_norm`; should be 1.
    pub norm_ratio: Estimate,
}

pub fn elliptic_norm_check(f: &Field, k: usize, cfg: &EllipticConfig) -> Result<EllipticReport> {
    let n = f.n();
    check_dims(n, k)?;
    cfg.mc.validate()?;
    let (p, q) = endpoint_exponents(n, k);
    let big_f = elliptic_lift(f, k)?;
    let dim = n + 1;

    let rule = sphere_rule(k + 1, cfg.per_angle.max(1));
    let outer = cfg.mc.derive(1);
    let elliptic = mc_mean(&outer, |rng| match sample_grassmannian(dim, k + 1, rng) {
        Ok(pi) => elliptic_rule_eval(&big_f, &pi, &rule).abs().powf(q),
        Err(_) => f64::NAN,
    });
    if !elliptic.is_finite() {
        return Err(Error::NonIntegrable("elliptic norm estimate is not finite".into()));
    }
    let elliptic_norm = elliptic.powf(1.0 / q);

    let norm_cfg = NormConfig::new(cfg.mc.derive(2)).with_inner_points(cfg.inner_points);
    let transform_norm = lq_transform_norm(f, k, &norm_cfg)?;

    let c_n = unit_sphere_area(dim) / 2.0;
    let lift_pow = hemisphere_mean(dim, &cfg.mc.derive(3), |theta| big_f.eval(theta).abs().powf(p))?;
    let lift_norm = lift_pow.scale(c_n).powf(1.0 / p);
    let field_norm = lp_norm(f, p, &cfg.mc.derive(4))?;

    Ok(EllipticReport {
        n,
        k,
        constant: elliptic_norm.ratio(&transform_norm),
        norm_ratio: lift_norm.ratio(&field_norm),
        elliptic_norm,
        transform_norm,
        lift_norm,
        field_norm,
    })
}
