//! Nonnegative functions on R^n, their L^p norms, superlevel slices,
//! rearrangements and symmetries.
//!
//! A [`Field`] is either an analytic expression tree or a lattice of cell
//! values. Analytic nodes carry enough structure (centre, scale, decay rate or
//! bounding box) for the integrators to choose a proposal with finite
//! variance, and the extremizer family is kept in closed form so that
//! rearrangements and slice radii of it stay exact.

mod affine;
mod grid;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub use affine::AffineMap;
pub use grid::GridField;

use crate::drury::IndicatorSet;
use crate::error::{Error, Result};
use crate::estimate::{mc_mean, seeded_rng, Estimate, McConfig};
use crate::geometry::{
    check_dims, fill_power_tail, unit_ball_volume, MAX_DIM,
};

/// Where a field lives, as far as integrators need to know.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Empty,
    Compact { lo: Vec<f64>, hi: Vec<f64> },
    /// `f(x) <= M (1 + |x - center| / scale)^{-exponent}`.
    Decay { center: DVector<f64>, scale: f64, exponent: f64 },
    Unbounded,
}

impl Support {
    /// A representative centre and length scale.
    pub fn center_scale(&self, n: usize) -> (DVector<f64>, f64) {
        match self {
            Support::Compact { lo, hi } => {
                let c = DVector::from_fn(n, |i, _| 0.5 * (lo[i] + hi[i]));
                let s = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
                (c, s.max(1e-12))
            }
            Support::Decay { center, scale, .. } => (center.clone(), *scale),
            Support::Empty | Support::Unbounded => (DVector::zeros(n), 1.0),
        }
    }
}

#[derive(Debug)]
enum Repr {
    Zero,
    One,
    Extremizer { k: usize, map: AffineMap, c: f64 },
    Gaussian { center: DVector<f64>, width: f64, amplitude: f64 },
    Indicator { set: IndicatorSet, height: f64 },
    Bump { center: DVector<f64>, radius: f64, amplitude: f64 },
    Affine { inner: Field, map: AffineMap, weight: f64 },
    Inversion { inner: Field, k: usize },
    Combination(Vec<(f64, Field)>),
    Grid(GridField),
}

/// A nonnegative function on R^n. Cheap to clone.
#[derive(Clone, Debug)]
pub struct Field {
    n: usize,
    repr: Arc<Repr>,
}

impl Field {
    fn wrap(n: usize, repr: Repr) -> Self {
        Field { n, repr: Arc::new(repr) }
    }

    pub fn zero(n: usize) -> Self {
        Self::wrap(n, Repr::Zero)
    }

    /// The constant 1 (not integrable; stands for a dropped factor).
    pub fn one(n: usize) -> Self {
        Self::wrap(n, Repr::One)
    }

    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    pub fn gaussian(center: &[f64], width: f64, amplitude: f64) -> Result<Self> {
        if !(width > 0.0) || !(amplitude >= 0.0) {
            return Err(Error::Parameter("gaussian needs positive width and nonnegative amplitude".into()));
        }
        Ok(Self::wrap(
            center.len(),
            Repr::Gaussian { center: DVector::from_column_slice(center), width, amplitude },
        ))
    }

    /// `exp(-|x|^2)` in R^n.
    pub fn standard_gaussian(n: usize) -> Self {
        Self::gaussian(&vec![0.0; n], 1.0, 1.0).expect("valid parameters")
    }

    pub fn indicator(set: IndicatorSet) -> Self {
        Self::indicator_scaled(set, 1.0)
    }

    pub fn indicator_scaled(set: IndicatorSet, height: f64) -> Self {
        let n = set.dim();
        if set.is_full() && height == 1.0 {
            return Self::one(n);
        }
        Self::wrap(n, Repr::Indicator { set, height: height.max(0.0) })
    }

    /// Smooth compactly supported bump `a exp(1 - 1/(1 - |x-c|^2/r^2))`.
    pub fn bump(center: &[f64], radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0) || !(amplitude >= 0.0) {
            return Err(Error::Parameter("bump needs positive radius and nonnegative amplitude".into()));
        }
        Ok(Self::wrap(
            center.len(),
            Repr::Bump { center: DVector::from_column_slice(center), radius, amplitude },
        ))
    }

    pub fn grid(g: GridField) -> Self {
        Self::wrap(g.n(), Repr::Grid(g))
    }

    /// Nonnegative combination `sum c_i f_i`, clamped at zero pointwise.
    pub fn combination(terms: Vec<(f64, Field)>) -> Result<Self> {
        let n = terms.first().map(|(_, f)| f.n).ok_or_else(|| Error::Parameter("empty combination".into()))?;
        if terms.iter().any(|(_, f)| f.n != n) {
            return Err(Error::Dimension("combined fields differ in dimension".into()));
        }
        if terms.iter().any(|(c, _)| !c.is_finite()) {
            return Err(Error::Parameter("non-finite coefficient".into()));
        }
        Ok(Self::wrap(n, Repr::Combination(terms)))
    }

    /// `f + eps g`, clamped at zero.
    pub fn perturbed(&self, eps: f64, g: &Field) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone()), (eps, g.clone())])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.repr, Repr::Zero)
    }

    pub fn as_grid(&self) -> Option<&GridField> {
        match &*self.repr {
            Repr::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_indicator(&self) -> Option<(&IndicatorSet, f64)> {
        match &*self.repr {
            Repr::Indicator { set, height } => Some((set, *height)),
            _ => None,
        }
    }

    /// `(k, phi, c)` when the field is `c (1 + |phi(x)|^2)^{-(k+1)/2}`.
    pub fn extremizer_params(&self) -> Option<(usize, &AffineMap, f64)> {
        match &*self.repr {
            Repr::Extremizer { k, map, c } => Some((*k, map, *c)),
            _ => None,
        }
    }

    /// Short label of the outermost node.
    pub fn kind(&self) -> &'static str {
        match &*self.repr {
            Repr::Zero => "zero",
            Repr::One => "one",
            Repr::Extremizer { .. } => "extremizer",
            Repr::Gaussian { .. } => "gaussian",
            Repr::Indicator { .. } => "indicator",
            Repr::Bump { .. } => "bump",
            Repr::Affine { .. } => "affine",
            Repr::Inversion { .. } => "inversion",
            Repr::Combination(_) => "combination",
            Repr::Grid(_) => "grid",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert!(x.len() >= self.n);
        match &*self.repr {
            Repr::Zero => 0.0,
            Repr::One => 1.0,
            Repr::Extremizer { k, map, c } => {
                let mut y = [0.0; MAX_DIM];
                map.apply(x, &mut y[..self.n]);
                let r2: f64 = y[..self.n].iter().map(|v| v * v).sum();
                c * extremizer_profile(r2, *k)
            }
            Repr::Gaussian { center, width, amplitude } => {
                let r2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
                amplitude * (-r2 / (width * width)).exp()
            }
            Repr::Indicator { set, height } => {
                if set.contains(&x[..self.n]) {
                    *height
                } else {
                    0.0
                }
            }
            Repr::Bump { center, radius, amplitude } => {
                let r2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum::<f64>() / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            Repr::Affine { inner, map, weight } => {
                let mut y = [0.0; MAX_DIM];
                map.apply(x, &mut y[..self.n]);
                weight * inner.eval(&y[..self.n])
            }
            Repr::Inversion { inner, k } => {
                let s = x[0];
                if s == 0.0 {
                    return 0.0;
                }
                let mut y = [0.0; MAX_DIM];
                y[0] = 1.0 / s;
                for i in 1..self.n {
                    y[i] = x[i] / s;
                }
                s.abs().powi(-(*k as i32) - 1) * inner.eval(&y[..self.n])
            }
            Repr::Combination(terms) => terms.iter().map(|(c, f)| c * f.eval(x)).sum::<f64>().max(0.0),
            Repr::Grid(g) => g.eval(x),
        }
    }

    /// Closed-form bound on where the mass of the field sits.
    pub fn support(&self) -> Support {
        let n = self.n;
        match &*self.repr {
            Repr::Zero => Support::Empty,
            Repr::One => Support::Unbounded,
            Repr::Extremizer { k, map, .. } => Support::Decay {
                center: map.apply_inverse_vec(&DVector::zeros(n)),
                scale: map.inverse_stretch(),
                exponent: (*k + 1) as f64,
            },
            Repr::Gaussian { center, width, .. } => {
                Support::Decay { center: center.clone(), scale: *width, exponent: f64::INFINITY }
            }
            Repr::Indicator { set, height } => {
                if *height == 0.0 {
                    return Support::Empty;
                }
                if set.is_full() {
                    return Support::Unbounded;
                }
                match set.bounding_box() {
                    Some((lo, hi)) => Support::Compact { lo, hi },
                    None => Support::Empty,
                }
            }
            Repr::Bump { center, radius, .. } => Support::Compact {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            },
            Repr::Affine { inner, map, .. } => match inner.support() {
                Support::Compact { lo, hi } => {
                    let inv = map.inverse();
                    let mut out_lo = vec![f64::INFINITY; n];
                    let mut out_hi = vec![f64::NEG_INFINITY; n];
                    let mut corner = [0.0; MAX_DIM];
                    let mut img = [0.0; MAX_DIM];
                    for mask in 0..(1usize << n) {
                        for a in 0..n {
                            corner[a] = if (mask >> a) & 1 == 1 { hi[a] } else { lo[a] };
                        }
                        inv.apply(&corner[..n], &mut img[..n]);
                        for a in 0..n {
                            out_lo[a] = out_lo[a].min(img[a]);
                            out_hi[a] = out_hi[a].max(img[a]);
                        }
                    }
                    Support::Compact { lo: out_lo, hi: out_hi }
                }
                Support::Decay { center, scale, exponent } => Support::Decay {
                    center: map.apply_inverse_vec(&center),
                    scale: scale * map.inverse_stretch(),
                    exponent,
                },
                other => other,
            },
            Repr::Inversion { inner, k } => match inner.support() {
                Support::Empty => Support::Empty,
                Support::Compact { lo, hi } if lo[0] > 0.0 || hi[0] < 0.0 => {
                    let (a, b) = if lo[0] > 0.0 { (lo[0], hi[0]) } else { (-hi[0], -lo[0]) };
                    let (s_lo, s_hi) = (1.0 / b, 1.0 / a);
                    let sign = if lo[0] > 0.0 { 1.0 } else { -1.0 };
                    let mut out_lo = vec![0.0; n];
                    let mut out_hi = vec![0.0; n];
                    out_lo[0] = (sign * s_lo).min(sign * s_hi);
                    out_hi[0] = (sign * s_lo).max(sign * s_hi);
                    for i in 1..n {
                        // y = s u with s in [out_lo0, out_hi0], u in [lo_i, hi_i]
                        let prods = [
                            out_lo[0] * lo[i],
                            out_lo[0] * hi[i],
                            out_hi[0] * lo[i],
                            out_hi[0] * hi[i],
                        ];
                        out_lo[i] = prods.iter().copied().fold(f64::INFINITY, f64::min);
                        out_hi[i] = prods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    }
                    Support::Compact { lo: out_lo, hi: out_hi }
                }
                Support::Unbounded => Support::Unbounded,
                other => {
                    let (_, s) = other.center_scale(n);
                    let d = match other {
                        Support::Decay { exponent, .. } => exponent,
                        _ => f64::INFINITY,
                    };
                    Support::Decay {
                        center: DVector::zeros(n),
                        scale: s.max(1.0),
                        exponent: d.min((*k + 1) as f64),
                    }
                }
            },
            Repr::Combination(terms) => combine_supports(n, terms),
            Repr::Grid(g) => Support::Compact { lo: g.lower().to_vec(), hi: g.upper() },
        }
    }

    /// `c f` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::Parameter(format!("scale factor must be finite and nonnegative, got {c}")));
        }
        if c == 0.0 {
            return Ok(Self::zero(self.n));
        }
        Ok(match &*self.repr {
            Repr::Zero => self.clone(),
            Repr::Extremizer { k, map, c: c0 } => {
                Self::wrap(self.n, Repr::Extremizer { k: *k, map: map.clone(), c: c0 * c })
            }
            Repr::Gaussian { center, width, amplitude } => Self::wrap(
                self.n,
                Repr::Gaussian { center: center.clone(), width: *width, amplitude: amplitude * c },
            ),
            Repr::Indicator { set, height } => Self::indicator_scaled(set.clone(), height * c),
            Repr::Grid(g) => Self::grid(g.scaled(c)),
            _ => Self::wrap(self.n, Repr::Combination(vec![(c, self.clone())])),
        })
    }
}

fn combine_supports(n: usize, terms: &[(f64, Field)]) -> Support {
    let mut boxes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut decays: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    for (c, f) in terms {
        if *c == 0.0 {
            continue;
        }
        match f.support() {
            Support::Empty => {}
            Support::Unbounded => return Support::Unbounded,
            Support::Compact { lo, hi } => boxes.push((lo, hi)),
            Support::Decay { center, scale, exponent } => decays.push((center, scale, exponent)),
        }
    }
    if decays.is_empty() {
        return match boxes.into_iter().reduce(|(la, ha), (lb, hb)| {
            (
                la.iter().zip(&lb).map(|(a, b)| a.min(*b)).collect(),
                ha.iter().zip(&hb).map(|(a, b)| a.max(*b)).collect(),
            )
        }) {
            Some((lo, hi)) => Support::Compact { lo, hi },
            None => Support::Empty,
        };
    }
    let exponent = decays.iter().map(|d| d.2).fold(f64::INFINITY, f64::min);
    let center = decays
        .iter()
        .find(|d| d.2 == exponent)
        .map(|d| d.0.clone())
        .unwrap_or_else(|| DVector::zeros(n));
    let mut scale: f64 = 0.0;
    for (c, s, _) in &decays {
        scale = scale.max(s + (c - &center).norm());
    }
    for (lo, hi) in &boxes {
        let far: f64 = (0..n)
            .map(|i| (lo[i] - center[i]).abs().max((hi[i] - center[i]).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        scale = scale.max(far);
    }
    Support::Decay { center, scale: scale.max(1e-12), exponent }
}

/// `(1 + r^2)^{-(k+1)/2}`.
#[inline]
pub fn extremizer_profile(r2: f64, k: usize) -> f64 {
    let b = 1.0 + r2;
    match k {
        1 => 1.0 / b,
        3 => 1.0 / (b * b),
        _ => b.powf(-((k + 1) as f64) / 2.0),
    }
}

/// The Lebesgue exponents `(p, q) = ((n+1)/(k+1), n+1)`.
pub fn endpoint_exponents(n: usize, k: usize) -> (f64, f64) {
    ((n + 1) as f64 / (k + 1) as f64, (n + 1) as f64)
}

/// `c (1 + |phi(x)|^2)^{-(k+1)/2}`.
pub fn extremizer_field(n: usize, k: usize, phi: AffineMap, c: f64) -> Result<Field> {
    check_dims(n, k)?;
    if phi.n() != n {
        return Err(Error::Dimension(format!("map acts on R^{} but field lives on R^{n}", phi.n())));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("extremizer amplitude must be positive, got {c}")));
    }
    Ok(Field::wrap(n, Repr::Extremizer { k, map: phi, c }))
}

/// `(1 + |x|^2)^{-(k+1)/2}`.
pub fn standard_extremizer(n: usize, k: usize) -> Result<Field> {
    extremizer_field(n, k, AffineMap::identity(n), 1.0)
}

/// Sampling law used to integrate a field (or a power of it).
#[derive(Clone, Debug)]
pub enum Proposal {
    Uniform { lo: Vec<f64>, hi: Vec<f64>, volume: f64 },
    /// `(1 + |x-c|/s)^{-d-1} / (|B^d| s^d)`.
    PowerTail { center: DVector<f64>, scale: f64 },
    Set(IndicatorSet),
    /// Cells drawn proportionally to their value.
    GridMass { grid: GridField, cumulative: Vec<f64> },
}

impl Proposal {
    /// A proposal whose tails dominate the field's declared decay.
    pub fn for_field(f: &Field) -> Result<Self> {
        match &*f.repr {
            Repr::Indicator { set, .. } if !set.is_full() && set.volume() > 0.0 => return Ok(Proposal::Set(set.clone())),
            Repr::Grid(g) => return Self::grid_mass(g),
            _ => {}
        }
        Self::for_support(&f.support(), f.n)
    }

    pub fn for_support(s: &Support, n: usize) -> Result<Self> {
        match s {
            Support::Empty => Err(Error::ZeroNorm),
            Support::Unbounded => Err(Error::NonIntegrable("field has no decay bound".into())),
            Support::Compact { lo, hi } => Ok(Self::uniform(lo.clone(), hi.clone())),
            Support::Decay { center, scale, .. } => {
                let _ = n;
                Ok(Proposal::PowerTail { center: center.clone(), scale: *scale })
            }
        }
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let volume = lo.iter().zip(&hi).map(|(a, b)| (b - a).max(0.0)).product();
        Proposal::Uniform { lo, hi, volume }
    }

    pub fn grid_mass(g: &GridField) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = g
            .values()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Proposal::GridMass { grid: g.clone(), cumulative })
    }

    /// Draws into `out` and returns the density there.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> f64 {
        match self {
            Proposal::Uniform { lo, hi, volume } => {
                for (o, (a, b)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
                1.0 / volume
            }
            Proposal::PowerTail { center, scale } => {
                let d = center.len();
                let dens = fill_power_tail(&mut out[..d], rng);
                for (o, c) in out.iter_mut().zip(center.iter()) {
                    *o = c + scale * *o;
                }
                dens / scale.powi(d as i32)
            }
            Proposal::Set(s) => {
                s.sample_uniform(rng, out).expect("finite positive volume checked at construction");
                1.0 / s.volume()
            }
            Proposal::GridMass { grid, cumulative } => {
                let total = *cumulative.last().expect("nonempty");
                let t = rng.random::<f64>() * total;
                let cell = cumulative.partition_point(|&c| c <= t).min(cumulative.len() - 1);
                grid.cell_center(cell, out);
                let h = grid.h();
                for o in out.iter_mut().take(grid.n()) {
                    *o += h * (rng.random::<f64>() - 0.5);
                }
                grid.values()[cell] / (total * grid.cell_volume())
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            Proposal::Uniform { lo, hi, volume } => {
                if x.iter().zip(lo.iter().zip(hi)).all(|(xi, (a, b))| xi >= a && xi <= b) {
                    1.0 / volume
                } else {
                    0.0
                }
            }
            Proposal::PowerTail { center, scale } => {
                let d = center.len();
                let r = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum::<f64>().sqrt() / scale;
                crate::geometry::power_tail_density(r, d) / scale.powi(d as i32)
            }
            Proposal::Set(s) => {
                if s.contains(x) {
                    1.0 / s.volume()
                } else {
                    0.0
                }
            }
            Proposal::GridMass { grid, cumulative } => {
                grid.eval(x) / (cumulative.last().expect("nonempty") * grid.cell_volume())
            }
        }
    }
}

fn check_integrable(f: &Field, p: f64) -> Result<()> {
    match f.support() {
        Support::Unbounded => Err(Error::NonIntegrable(format!("{} field has no decay bound", f.kind()))),
        Support::Decay { exponent, .. } if exponent * p <= f.n as f64 => Err(Error::NonIntegrable(format!(
            "decay exponent {exponent} is too slow for L^{p} in dimension {}",
            f.n
        ))),
        _ => Ok(()),
    }
}

/// Estimate of `∫ |f|^p`.
pub fn integral_pow(f: &Field, p: f64, cfg: &McConfig) -> Result<Estimate> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("exponent must satisfy p >= 1, got {p}")));
    }
    cfg.validate()?;
    match &*f.repr {
        Repr::Zero => return Ok(Estimate::with_meta(0.0, 0.0, 0, cfg.seed)),
        Repr::Grid(g) => return Ok(Estimate::with_meta(g.integral_pow(p), 0.0, g.len() as u64, cfg.seed)),
        Repr::Indicator { set, height } => {
            if set.is_full() {
                return Err(Error::InfiniteMeasure);
            }
            return Ok(Estimate::with_meta(height.powf(p) * set.volume(), 0.0, 0, cfg.seed));
        }
        _ => {}
    }
    check_integrable(f, p)?;
    let prop = match Proposal::for_field(f) {
        Ok(p) => p,
        Err(Error::ZeroNorm) => return Ok(Estimate::with_meta(0.0, 0.0, 0, cfg.seed)),
        Err(e) => return Err(e),
    };
    let n = f.n;
    let est = mc_mean(cfg, |rng| {
        let mut x = [0.0; MAX_DIM];
        let q = prop.sample(rng, &mut x[..n]);
        let v = f.eval(&x[..n]);
        if v == 0.0 {
            0.0
        } else {
            v.powf(p) / q
        }
    });
    if !est.is_finite() {
        return Err(Error::NonIntegrable("L^p integral estimate diverged".into()));
    }
    Ok(est)
}

/// `(∫ |f|^p)^{1/p}` with standard error.
pub fn lp_norm(f: &Field, p: f64, cfg: &McConfig) -> Result<Estimate> {
    Ok(integral_pow(f, p, cfg)?.powf(1.0 / p))
}

fn split_point(n: usize, xp: &[f64], v: &[f64], out: &mut [f64]) {
    let k = xp.len();
    out[..k].copy_from_slice(xp);
    out[k..n].copy_from_slice(v);
}

/// Measure of `{v : f(x', v) > s}` in R^{n-k}, `k = x'.len()`.
pub fn slice_measure(f: &Field, xp: &[f64], s: f64, cfg: &McConfig) -> Result<Estimate> {
    let n = f.n;
    let k = xp.len();
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!("slice point has {k} coordinates in R^{n}")));
    }
    let d = n - k;
    if let Some(r) = closed_form_slice_radius(f, xp, s)? {
        return Ok(Estimate::exact(unit_ball_volume(d) * r.powi(d as i32)));
    }
    let support = f.support();
    let prop = match &support {
        Support::Empty => return Ok(Estimate::exact(0.0)),
        Support::Unbounded => return Err(Error::InfiniteMeasure),
        Support::Compact { lo, hi } => Proposal::uniform(lo[k..].to_vec(), hi[k..].to_vec()),
        Support::Decay { center, scale, .. } => Proposal::PowerTail {
            center: DVector::from_column_slice(&center.as_slice()[k..]),
            scale: *scale,
        },
    };
    let est = mc_mean(cfg, |rng| {
        let mut v = [0.0; MAX_DIM];
        let mut x = [0.0; MAX_DIM];
        let q = prop.sample(rng, &mut v[..d]);
        split_point(n, xp, &v[..d], &mut x);
        if f.eval(&x[..n]) > s {
            1.0 / q
        } else {
            0.0
        }
    });
    Ok(est)
}

/// Closed-form slice radius for the extremizer and Gaussian families.
fn closed_form_slice_radius(f: &Field, xp: &[f64], s: f64) -> Result<Option<f64>> {
    if !(s > 0.0) {
        return Err(Error::InfiniteMeasure);
    }
    let n = f.n;
    let k = xp.len();
    let d = n - k;
    match &*f.repr {
        Repr::Zero => Ok(Some(0.0)),
        Repr::Extremizer { k: kf, map, c } => {
            let r2 = (c / s).powf(2.0 / (*kf + 1) as f64) - 1.0;
            if r2 <= 0.0 {
                return Ok(Some(0.0));
            }
            let m = map.matrix();
            let m1 = m.columns(0, k);
            let m2 = m.columns(k, d);
            let w = m1 * DVector::from_column_slice(xp) + map.offset();
            let g = m2.transpose() * m2;
            let chol = g.clone().cholesky().ok_or_else(|| Error::Parameter("degenerate slice metric".into()))?;
            let v0 = -chol.solve(&(m2.transpose() * &w));
            let w_perp = &w + m2 * &v0;
            let r_eff2 = r2 - w_perp.norm_squared();
            if r_eff2 <= 0.0 {
                return Ok(Some(0.0));
            }
            let det = g.determinant();
            Ok(Some(r_eff2.sqrt() / det.powf(1.0 / (2.0 * d as f64))))
        }
        Repr::Gaussian { center, width, amplitude } => {
            if s >= *amplitude {
                return Ok(Some(0.0));
            }
            let off: f64 = (0..k).map(|i| (xp[i] - center[i]).powi(2)).sum();
            let r2 = width * width * (amplitude / s).ln() - off;
            Ok(Some(r2.max(0.0).sqrt()))
        }
        _ => Ok(None),
    }
}

/// Radius of the (n-k)-ball with the measure of the slice superlevel set.
pub fn slice_radius(f: &Field, xp: &[f64], s: f64, cfg: &McConfig) -> Result<Estimate> {
    let d = f.n.checked_sub(xp.len()).filter(|&d| d > 0).ok_or_else(|| Error::Dimension("slice point too long".into()))?;
    let m = slice_measure(f, xp, s, cfg)?;
    if m.value <= 0.0 {
        return Ok(Estimate { value: 0.0, stderr: m.stderr / unit_ball_volume(d), ..m });
    }
    Ok(m.scale(1.0 / unit_ball_volume(d)).powf(1.0 / d as f64))
}

/// `(x', s) -> rho(x', s)` for a fixed field and split.
#[derive(Clone, Debug)]
pub struct SliceRadiusFunction {
    pub field: Field,
    pub k: usize,
    pub cfg: McConfig,
}

impl SliceRadiusFunction {
    pub fn new(field: Field, k: usize, cfg: McConfig) -> Result<Self> {
        check_dims(field.n, k)?;
        Ok(SliceRadiusFunction { field, k, cfg })
    }

    pub fn eval(&self, xp: &[f64], s: f64) -> Result<Estimate> {
        if xp.len() != self.k {
            return Err(Error::Dimension(format!("expected {} slice coordinates", self.k)));
        }
        slice_radius(&self.field, xp, s, &self.cfg)
    }
}

/// Cell order by distance from the centre of a centred box, ties by index.
fn radial_order(dims: &[usize], h: f64) -> Vec<usize> {
    let count: usize = dims.iter().product();
    let mut keyed: Vec<(f64, usize)> = (0..count)
        .map(|flat| {
            let mut r = flat;
            let mut d2 = 0.0;
            for a in (0..dims.len()).rev() {
                let i = r % dims[a];
                r /= dims[a];
                let c = (i as f64 + 0.5 - dims[a] as f64 / 2.0) * h;
                d2 += c * c;
            }
            (d2, flat)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn sorted_desc(vals: &mut Vec<(f64, usize)>) {
    vals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
}

fn rearrange_grid_axes(g: &GridField, k: usize) -> Result<GridField> {
    let n = g.n();
    let dims = g.dims();
    let slice_dims = &dims[k..];
    let slice_len: usize = slice_dims.iter().product();
    let order = radial_order(slice_dims, g.h());
    let outer: usize = dims[..k].iter().product();
    let mut values = vec![0.0; g.len()];
    let src = g.values();
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(slice_len);
    for o in 0..outer {
        let base = o * slice_len;
        buf.clear();
        buf.extend((0..slice_len).map(|j| (src[base + j], j)));
        sorted_desc(&mut buf);
        for (rank, (v, _)) in buf.iter().enumerate() {
            values[base + order[rank]] = *v;
        }
    }
    let mut lower = g.lower().to_vec();
    for a in k..n {
        lower[a] = -(dims[a] as f64) * g.h() / 2.0;
    }
    GridField::new(dims.to_vec(), g.h(), lower, values)
}

/// Symmetric nonincreasing rearrangement in the last `n-k` coordinates, slice
/// by slice.
pub fn slice_rearrange(f: &Field, k: usize) -> Result<Field> {
    let n = f.n;
    check_dims(n, k)?;
    let d = n - k;
    match &*f.repr {
        Repr::Zero => Ok(f.clone()),
        Repr::Grid(g) => Ok(Field::grid(rearrange_grid_axes(g, k)?)),
        Repr::Extremizer { k: kf, map, c } => {
            let m = map.matrix();
            let m2 = m.columns(k, d).into_owned();
            let g = m2.transpose() * &m2;
            let gscale = g.determinant().powf(1.0 / (2.0 * d as f64));
            // orthonormal basis of range(M2)^perp
            let full = crate::geometry::OrthonormalFrame::from_span(&m2)
                .map_err(|_| Error::Parameter("degenerate extremizer map".into()))?;
            let u = full.complement;
            let top = u.transpose() * m.columns(0, k);
            let mut lin = DMatrix::zeros(n, n);
            lin.view_mut((0, 0), (k, k)).copy_from(&top);
            for i in 0..d {
                lin[(k + i, k + i)] = gscale;
            }
            let mut t = DVector::zeros(n);
            t.rows_mut(0, k).copy_from(&(u.transpose() * map.offset()));
            extremizer_field(n, *kf, AffineMap::new(lin, t)?, *c)
        }
        Repr::Gaussian { center, width, amplitude } => {
            let mut c = center.clone();
            c.rows_mut(k, d).fill(0.0);
            Field::gaussian(c.as_slice(), *width, *amplitude)
        }
        Repr::Indicator { set: IndicatorSet::Ball { center, radius }, height } => {
            let mut c = center.clone();
            c.rows_mut(k, d).fill(0.0);
            Ok(Field::indicator_scaled(IndicatorSet::ball(c.as_slice(), *radius)?, *height))
        }
        _ => Err(Error::Parameter(format!(
            "slice rearrangement of a {} field needs rasterizing first",
            f.kind()
        ))),
    }
}

/// Symmetric nonincreasing rearrangement `f*`.
pub fn full_rearrange(f: &Field) -> Result<Field> {
    let n = f.n;
    match &*f.repr {
        Repr::Zero => Ok(f.clone()),
        Repr::Grid(g) => Ok(Field::grid(rearrange_grid_axes(g, 0)?)),
        Repr::Extremizer { k, map, c } => {
            let lam = map.jacobian().powf(1.0 / n as f64);
            extremizer_field(n, *k, AffineMap::scaling(n, lam)?, *c)
        }
        Repr::Gaussian { width, amplitude, .. } => Field::gaussian(&vec![0.0; n], *width, *amplitude),
        Repr::Indicator { set, height } => Ok(Field::indicator_scaled(set.star(), *height)),
        _ => Err(Error::Parameter(format!("rearrangement of a {} field needs rasterizing first", f.kind()))),
    }
}

/// `|J_phi|^{1/p} f(phi(x))`.
pub fn apply_affine_symmetry(f: &Field, phi: &AffineMap, p: f64) -> Result<Field> {
    let n = f.n;
    if phi.n() != n {
        return Err(Error::Dimension("map and field dimensions differ".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("exponent must satisfy p >= 1, got {p}")));
    }
    let w = phi.jacobian().powf(1.0 / p);
    Ok(match &*f.repr {
        Repr::Zero => f.clone(),
        Repr::Extremizer { k, map, c } => extremizer_field(n, *k, map.compose(phi)?, c * w)?,
        Repr::Affine { inner, map, weight } => Field::wrap(
            n,
            Repr::Affine { inner: inner.clone(), map: map.compose(phi)?, weight: weight * w },
        ),
        _ => Field::wrap(n, Repr::Affine { inner: f.clone(), map: phi.clone(), weight: w }),
    })
}

/// `Jf(s, y) = |s|^{-k-1} f(1/s, y/s)`, with `s` the first coordinate.
pub fn apply_j(f: &Field, k: usize) -> Result<Field> {
    let n = f.n;
    check_dims(n, k)?;
    match &*f.repr {
        Repr::Zero => Ok(f.clone()),
        Repr::Inversion { inner, k: ki } if *ki == k => Ok(inner.clone()),
        Repr::Grid(g) => Ok(Field::grid(j_resample(g, k)?)),
        _ => Ok(Field::wrap(n, Repr::Inversion { inner: f.clone(), k })),
    }
}

/// J on a lattice: resample at the mapped cell centres with the weight
/// `|s|^{-k-1}`; cells meeting `{s = 0}` are set to zero.
fn j_resample(g: &GridField, k: usize) -> Result<GridField> {
    let n = g.n();
    let h = g.h();
    let mut values = vec![0.0; g.len()];
    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    for (i, v) in values.iter_mut().enumerate() {
        g.cell_center(i, &mut x[..n]);
        let s = x[0];
        if s.abs() < h / 2.0 {
            continue;
        }
        y[0] = 1.0 / s;
        for a in 1..n {
            y[a] = x[a] / s;
        }
        *v = s.abs().powi(-(k as i32) - 1) * g.interpolate(&y[..n]);
    }
    g.with_values(values)
}

/// `f = sum_i h_i 1_{E_i}` for nested sets listed from the outermost inwards.
pub fn layer_cake_reconstruct(layers: &[(f64, IndicatorSet)]) -> Result<Field> {
    let first = layers.first().ok_or_else(|| Error::Parameter("no layers given".into()))?;
    let n = first.1.dim();
    if layers.iter().any(|(h, s)| s.dim() != n || !(*h >= 0.0) || !h.is_finite()) {
        return Err(Error::Parameter("layers need a common dimension and finite nonnegative heights".into()));
    }
    let mut rng = seeded_rng(0x1a7e_cace);
    let mut x = vec![0.0; n];
    for w in layers.windows(2) {
        let (outer, inner) = (&w[0].1, &w[1].1);
        if inner.volume() > outer.volume() * (1.0 + 1e-12) {
            return Err(Error::Consistency("layer sets are not nested (volume increases)".into()));
        }
        if inner.volume() > 0.0 && !outer.is_full() {
            for _ in 0..512 {
                inner.sample_uniform(&mut rng, &mut x)?;
                if !outer.contains(&x) {
                    return Err(Error::Consistency("layer sets are not nested".into()));
                }
            }
        }
    }
    if layers.len() == 1 {
        return Ok(Field::indicator_scaled(first.1.clone(), first.0));
    }
    Field::combination(layers.iter().map(|(h, s)| (*h, Field::indicator(s.clone()))).collect())
}

/// Superlevel layers `{g > t_i}` with heights `t_{i+1} - t_i` (the last
/// height reaching the maximum of `g`); `thresholds` must start at 0 and
/// increase.
pub fn superlevel_layers(g: &GridField, thresholds: &[f64]) -> Result<Vec<(f64, IndicatorSet)>> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("thresholds must increase".into()));
    }
    let top = g.max_value();
    let mut out = Vec::new();
    for (i, &t) in thresholds.iter().enumerate() {
        if t >= top {
            break;
        }
        let next = thresholds.get(i + 1).copied().unwrap_or(top).min(top);
        let mask = g.with_values(g.values().iter().map(|&v| if v > t { 1.0 } else { 0.0 }).collect())?;
        out.push((next - t, IndicatorSet::mask(mask)));
    }
    Ok(out)
}

/// Samples `f` at the cell centres of a lattice.
pub fn rasterize(f: &Field, dims: Vec<usize>, h: f64, lower: Vec<f64>) -> Result<GridField> {
    if dims.len() != f.n {
        return Err(Error::Dimension("grid and field dimensions differ".into()));
    }
    GridField::from_fn(dims, h, lower, |x| f.eval(x))
}

/// Lattice of side `2 * half_width` centred at the origin.
pub fn rasterize_centered(f: &Field, half_width: f64, h: f64) -> Result<GridField> {
    let cells = (2.0 * half_width / h).round().max(1.0) as usize;
    let dims = vec![cells; f.n];
    let lower = vec![-(cells as f64) * h / 2.0; f.n];
    rasterize(f, dims, h, lower)
}

#[cfg(test)]
mod tests;
