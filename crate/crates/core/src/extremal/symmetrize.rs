//! Alternating rearrangement and inversion on a lattice, with the distance to
//! the nearest member of the extremizer family after an affine
//! normalization.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ratio;
use crate::error::{Error, Result};
use crate::estimate::{Estimate, McConfig};
use crate::fields::{
    apply_affine_symmetry, apply_j, endpoint_exponents, extremizer_profile, full_rearrange, rasterize,
    rasterize_centered, AffineMap, Field, GridField,
};
use crate::geometry::{check_dims, MAX_DIM};
use crate::transforms::NormConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    Rearrange,
    J,
    AffineNormalize,
}

impl StepKind {
    pub fn tag(&self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Rearrange => "rearrange",
            StepKind::J => "J",
            StepKind::AffineNormalize => "affine-normalize",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rearrange" => Ok(StepKind::Rearrange),
            "J" | "j" => Ok(StepKind::J),
            "affine-normalize" | "affine" => Ok(StepKind::AffineNormalize),
            _ => Err(Error::Parameter(format!("unknown symmetrization step '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub tag: StepKind,
    pub ratio: Estimate,
    /// `L^p` distance to the fitted extremizer profile.
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    entries: Vec<TraceEntry>,
}

impl IterationTrace {
    pub fn push(&mut self, entry: TraceEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.step <= last.step {
                return Err(Error::Consistency(format!("trace step {} after {}", entry.step, last.step)));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,tag,ratio,stderr,distance\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{},{}", e.step, e.tag.tag(), e.ratio.value, e.ratio.stderr, e.distance);
        }
        s
    }

    /// Rearrangement steps whose ratio fell by more than `sigmas` combined
    /// standard errors.
    pub fn rearrangement_drops(&self, sigmas: f64) -> Vec<usize> {
        self.entries
            .windows(2)
            .filter(|w| w[1].tag == StepKind::Rearrange)
            .filter(|w| w[0].ratio.value - w[1].ratio.value > sigmas * w[0].ratio.stderr.hypot(w[1].ratio.stderr))
            .map(|w| w[1].step)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizeConfig {
    pub k: usize,
    pub steps: usize,
    pub schedule: Vec<StepKind>,
    /// The lattice is `[-half_width, half_width]^n` with spacing `h`.
    pub half_width: f64,
    pub h: f64,
    /// Ratio estimator; the same seed is reused at every step.
    pub norm: NormConfig,
}

impl SymmetrizeConfig {
    pub fn new(k: usize, steps: usize, mc: McConfig) -> Self {
        SymmetrizeConfig {
            k,
            steps,
            schedule: vec![StepKind::Rearrange, StepKind::J],
            half_width: 10.0,
            h: 0.05,
            norm: NormConfig::new(mc).with_inner_points(512).with_offset_scale(2.0),
        }
    }
}

const MAX_CELLS: usize = 1 << 24;

/// Applies `cfg.schedule` cyclically for `cfg.steps` steps on a lattice,
/// renormalizing to `‖·‖_p = 1` after each, and records the ratio and the
/// distance to the extremizer family at every step.
pub fn symmetrize_iterate(f0: &Field, cfg: &SymmetrizeConfig) -> Result<(IterationTrace, Field)> {
    let n = f0.n();
    let k = cfg.k;
    check_dims(n, k)?;
    if cfg.schedule.is_empty() || cfg.schedule.contains(&StepKind::Initial) {
        return Err(Error::Parameter("schedule must be a nonempty list of steps".into()));
    }
    if !(cfg.h > 0.0 && cfg.half_width > cfg.h) {
        return Err(Error::Parameter("lattice needs 0 < h < half_width".into()));
    }
    let (p, _) = endpoint_exponents(n, k);
    let mut trace = IterationTrace::default();
    if cfg.steps == 0 {
        let r = ratio(f0, k, &cfg.norm)?;
        let g = lattice(f0, cfg)?;
        let distance = fit_radial_profile(&g, k)?.distance;
        trace.push(TraceEntry { step: 0, tag: StepKind::Initial, ratio: r.ratio, distance })?;
        return Ok((trace, f0.clone()));
    }
    let mut g = normalized(lattice(f0, cfg)?, p, 0)?;
    let record = |g: &GridField, step: usize, tag: StepKind, trace: &mut IterationTrace| -> Result<ProfileFit> {
        let r = ratio(&Field::grid(g.clone()), k, &cfg.norm)?;
        let fit = fit_radial_profile(g, k)?;
        trace.push(TraceEntry { step, tag, ratio: r.ratio, distance: fit.distance })?;
        Ok(fit)
    };
    let mut fit = record(&g, 0, StepKind::Initial, &mut trace)?;
    for step in 1..=cfg.steps {
        let op = cfg.schedule[(step - 1) % cfg.schedule.len()];
        let field = Field::grid(g.clone());
        let next = match op {
            StepKind::Rearrange => full_rearrange(&field)?,
            StepKind::J => apply_j(&field, k)?,
            StepKind::AffineNormalize => {
                let moved = apply_affine_symmetry(&field, &fit.normalizing_map()?, p)?;
                Field::grid(rasterize(&moved, g.dims().to_vec(), g.h(), g.lower().to_vec())?)
            }
            StepKind::Initial => unreachable!(),
        };
        let grid = next.as_grid().cloned().ok_or_else(|| Error::Consistency("step left the lattice".into()))?;
        g = normalized(grid, p, step)?;
        fit = record(&g, step, op, &mut trace)?;
    }
    Ok((trace, Field::grid(g)))
}

fn lattice(f: &Field, cfg: &SymmetrizeConfig) -> Result<GridField> {
    if let Some(g) = f.as_grid() {
        return Ok(g.clone());
    }
    let cells = (2.0 * cfg.half_width / cfg.h).round() as usize;
    if (cells as f64).powi(f.n() as i32) > MAX_CELLS as f64 {
        return Err(Error::Parameter(format!("lattice of {cells}^{} cells is too large; raise h", f.n())));
    }
    rasterize_centered(f, cfg.half_width, cfg.h)
}

fn normalized(g: GridField, p: f64, step: usize) -> Result<GridField> {
    let norm = g.lp_norm(p);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Collapse(step));
    }
    Ok(g.scaled(1.0 / norm))
}

/// Best fit of `λ (1 + a² |W (x - c)|²)^{-(k+1)/2}` to a lattice field, both
/// normalized to unit `L^p` norm on the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    /// Centroid of the superlevel set at half the peak, weighted by the field.
    pub center: DVector<f64>,
    /// Inverse square root of the (field-weighted) covariance of the same
    /// superlevel set.
    pub whitening: DMatrix<f64>,
    pub a: f64,
    /// `‖f/‖f‖_p - profile‖_p` on the lattice.
    pub distance: f64,
}

impl ProfileFit {
    /// `y -> c + W^{-1} y / a`, which carries the profile to the standard
    /// radial one.
    pub fn normalizing_map(&self) -> Result<AffineMap> {
        let w_inv = self
            .whitening
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Parameter("singular whitening".into()))?;
        AffineMap::new(w_inv / self.a, self.center.clone())
    }
}

pub fn fit_radial_profile(g: &GridField, k: usize) -> Result<ProfileFit> {
    let n = g.n();
    check_dims(n, k)?;
    let (p, _) = endpoint_exponents(n, k);
    let norm = g.lp_norm(p);
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let vals: Vec<f64> = g.values().iter().map(|v| v / norm).collect();
    let cv = g.cell_volume();
    let mut x = [0.0; MAX_DIM];
    // superlevel set at half the peak height: its centroid and covariance
    // are those of an ellipse for every member of the family
    let level = vals.iter().copied().fold(0.0, f64::max) / 2.0;
    let mut count = 0.0;
    let mut mean = DVector::zeros(n);
    let mut second = DMatrix::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        if v >= level {
            g.cell_center(i, &mut x[..n]);
            let xv = DVector::from_column_slice(&x[..n]);
            count += v;
            mean += &xv * v;
            second += &xv * xv.transpose() * v;
        }
    }
    mean /= count;
    let center = mean.clone();
    let cov = second / count - &mean * mean.transpose() + DMatrix::identity(n, n) * (g.h() * g.h() / 12.0);
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Consistency("degenerate superlevel set".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let whitening = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let r2: Vec<f64> = (0..vals.len())
        .map(|i| {
            g.cell_center(i, &mut x[..n]);
            let y = &whitening * (DVector::from_column_slice(&x[..n]) - &center);
            y.norm_squared()
        })
        .collect();
    let objective = |t: f64| {
        let a2 = (2.0 * t).exp();
        let mass: f64 = r2.iter().map(|r| extremizer_profile(a2 * r, k).powf(p)).sum::<f64>() * cv;
        let lambda = mass.powf(-1.0 / p);
        vals.iter().zip(&r2).map(|(v, r)| (v - lambda * extremizer_profile(a2 * r, k)).abs().powf(p)).sum::<f64>() * cv
    };
    let (mut lo, mut hi) = ((0.02f64).ln(), (50.0f64).ln());
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..50 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = objective(d);
        }
    }
    let t = (lo + hi) / 2.0;
    Ok(ProfileFit { center, whitening, a: t.exp(), distance: objective(t).powf(1.0 / p) })
}
