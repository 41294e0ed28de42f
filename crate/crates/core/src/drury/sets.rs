//! Measurable sets with exact membership, volume and uniform sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GridField;
use crate::geometry::{ball_radius, fill_uniform_ball, unit_ball_volume};

/// A subset of R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IndicatorSet {
    Empty { dim: usize },
    /// All of R^d (infinite measure; only valid where a factor is dropped).
    Full { dim: usize },
    Ball { center: DVector<f64>, radius: f64 },
    /// `{x : (x-c)^T Q^{-1} (x-c) < 1}`.
    Ellipsoid(Ellipsoid),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Pairwise disjoint pieces.
    Union(Vec<IndicatorSet>),
    /// Cells with positive value.
    Mask(Mask),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    inverse: DMatrix<f64>,
    /// Lower Cholesky factor of the shape matrix.
    factor: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if shape.shape() != (d, d) {
            return Err(Error::Dimension("shape matrix does not match centre".into()));
        }
        let asym = (&shape - shape.transpose()).amax();
        if asym > 1e-10 * shape.amax().max(1.0) {
            return Err(Error::Parameter("shape matrix is not symmetric".into()));
        }
        let sym = (&shape + shape.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Parameter("shape matrix is not positive definite".into()))?;
        Ok(Ellipsoid { center, inverse: chol.inverse(), factor: chol.l(), shape: sym })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        let det: f64 = self.factor.diagonal().iter().product();
        unit_ball_volume(self.dim()) * det.abs()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.dim();
        let mut q = 0.0;
        for i in 0..d {
            let di = x[i] - self.center[i];
            for j in 0..d {
                q += di * self.inverse[(i, j)] * (x[j] - self.center[j]);
            }
        }
        q < 1.0
    }

    /// Semi-axis lengths (square roots of the shape eigenvalues).
    pub fn semi_axes(&self) -> Vec<f64> {
        self.shape.clone().symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    grid: GridField,
    active: Vec<usize>,
}

impl IndicatorSet {
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Parameter(format!("ball radius must be finite and nonnegative, got {radius}")));
        }
        if radius == 0.0 {
            return Ok(IndicatorSet::Empty { dim: center.len() });
        }
        Ok(IndicatorSet::Ball { center: DVector::from_column_slice(center), radius })
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(&vec![0.0; dim], radius)
    }

    pub fn ellipsoid(center: &[f64], shape: DMatrix<f64>) -> Result<Self> {
        Ok(IndicatorSet::Ellipsoid(Ellipsoid::new(DVector::from_column_slice(center), shape)?))
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension("box corners differ in length".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Parameter("box needs lo < hi on every axis".into()));
        }
        Ok(IndicatorSet::Box { lo: lo.to_vec(), hi: hi.to_vec() })
    }

    /// Interval `[a, b]` in R^1.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::cube(&[a], &[b])
    }

    /// Union of pieces assumed pairwise disjoint.
    pub fn union(pieces: Vec<IndicatorSet>) -> Result<Self> {
        let dim = pieces.first().map(|p| p.dim()).ok_or(Error::EmptySet)?;
        if pieces.iter().any(|p| p.dim() != dim) {
            return Err(Error::Dimension("union pieces differ in dimension".into()));
        }
        if pieces.iter().any(|p| matches!(p, IndicatorSet::Full { .. })) {
            return Err(Error::Parameter("union with the full space".into()));
        }
        Ok(IndicatorSet::Union(pieces))
    }

    pub fn mask(grid: GridField) -> Self {
        let active = (0..grid.len()).filter(|&i| grid.values()[i] > 0.0).collect();
        IndicatorSet::Mask(Mask { grid, active })
    }

    pub fn dim(&self) -> usize {
        match self {
            IndicatorSet::Empty { dim } | IndicatorSet::Full { dim } => *dim,
            IndicatorSet::Ball { center, .. } => center.len(),
            IndicatorSet::Ellipsoid(e) => e.dim(),
            IndicatorSet::Box { lo, .. } => lo.len(),
            IndicatorSet::Union(p) => p[0].dim(),
            IndicatorSet::Mask(m) => m.grid.n(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, IndicatorSet::Full { .. })
    }

    pub fn is_empty(&self) -> bool {
        self.volume() == 0.0
    }

    pub fn volume(&self) -> f64 {
        match self {
            IndicatorSet::Empty { .. } => 0.0,
            IndicatorSet::Full { .. } => f64::INFINITY,
            IndicatorSet::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
            IndicatorSet::Ellipsoid(e) => e.volume(),
            IndicatorSet::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            IndicatorSet::Union(p) => p.iter().map(|s| s.volume()).sum(),
            IndicatorSet::Mask(m) => m.active.len() as f64 * m.grid.cell_volume(),
        }
    }

    /// Radius of the centred ball with the same volume.
    pub fn star_radius(&self) -> f64 {
        ball_radius(self.dim(), self.volume())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            IndicatorSet::Empty { .. } => false,
            IndicatorSet::Full { .. } => true,
            IndicatorSet::Ball { center, radius } => {
                center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum::<f64>() < radius * radius
            }
            IndicatorSet::Ellipsoid(e) => e.contains(x),
            IndicatorSet::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(xi, (a, b))| *xi >= *a && *xi <= *b),
            IndicatorSet::Union(p) => p.iter().any(|s| s.contains(x)),
            IndicatorSet::Mask(m) => m.grid.eval(x) > 0.0,
        }
    }

    /// Axis-aligned bounding box; `None` for the empty and full sets.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            IndicatorSet::Empty { .. } | IndicatorSet::Full { .. } => None,
            IndicatorSet::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            IndicatorSet::Ellipsoid(e) => {
                let half: Vec<f64> = (0..e.dim()).map(|i| e.shape[(i, i)].sqrt()).collect();
                Some((
                    e.center.iter().zip(&half).map(|(c, h)| c - h).collect(),
                    e.center.iter().zip(&half).map(|(c, h)| c + h).collect(),
                ))
            }
            IndicatorSet::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            IndicatorSet::Union(p) => p.iter().filter_map(|s| s.bounding_box()).reduce(|(la, ha), (lb, hb)| {
                (
                    la.iter().zip(&lb).map(|(a, b)| a.min(*b)).collect(),
                    ha.iter().zip(&hb).map(|(a, b)| a.max(*b)).collect(),
                )
            }),
            IndicatorSet::Mask(m) => {
                if m.active.is_empty() {
                    return None;
                }
                let n = m.grid.n();
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                let mut c = vec![0.0; n];
                let h = m.grid.h() / 2.0;
                for &i in &m.active {
                    m.grid.cell_center(i, &mut c);
                    for a in 0..n {
                        lo[a] = lo[a].min(c[a] - h);
                        hi[a] = hi[a].max(c[a] + h);
                    }
                }
                Some((lo, hi))
            }
        }
    }

    /// Centre of mass.
    pub fn centroid(&self) -> Option<DVector<f64>> {
        match self {
            IndicatorSet::Ball { center, .. } => Some(center.clone()),
            IndicatorSet::Ellipsoid(e) => Some(e.center.clone()),
            IndicatorSet::Box { lo, hi } => Some(DVector::from_fn(lo.len(), |i, _| 0.5 * (lo[i] + hi[i]))),
            IndicatorSet::Union(p) => {
                let total = self.volume();
                if total == 0.0 {
                    return None;
                }
                let mut acc = DVector::zeros(self.dim());
                for s in p {
                    if let Some(c) = s.centroid() {
                        acc += c * s.volume();
                    }
                }
                Some(acc / total)
            }
            IndicatorSet::Mask(m) => {
                if m.active.is_empty() {
                    return None;
                }
                let mut acc = DVector::zeros(m.grid.n());
                let mut c = vec![0.0; m.grid.n()];
                for &i in &m.active {
                    m.grid.cell_center(i, &mut c);
                    acc += DVector::from_column_slice(&c);
                }
                Some(acc / m.active.len() as f64)
            }
            IndicatorSet::Empty { .. } | IndicatorSet::Full { .. } => None,
        }
    }

    /// Uniform point of the set. Fails on empty or infinite sets.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            IndicatorSet::Empty { .. } => Err(Error::EmptySet),
            IndicatorSet::Full { .. } => Err(Error::InfiniteMeasure),
            IndicatorSet::Ball { center, radius } => {
                fill_uniform_ball(out, rng);
                for (o, c) in out.iter_mut().zip(center.iter()) {
                    *o = c + radius * *o;
                }
                Ok(())
            }
            IndicatorSet::Ellipsoid(e) => {
                let d = e.dim();
                let mut u = [0.0; crate::geometry::MAX_DIM];
                fill_uniform_ball(&mut u[..d], rng);
                for i in 0..d {
                    let mut s = e.center[i];
                    for j in 0..=i {
                        s += e.factor[(i, j)] * u[j];
                    }
                    out[i] = s;
                }
                Ok(())
            }
            IndicatorSet::Box { lo, hi } => {
                for (o, (a, b)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
                Ok(())
            }
            IndicatorSet::Union(p) => {
                let total = self.volume();
                if !(total > 0.0) {
                    return Err(Error::EmptySet);
                }
                let mut t = rng.random::<f64>() * total;
                for s in p {
                    let v = s.volume();
                    if t < v {
                        return s.sample_uniform(rng, out);
                    }
                    t -= v;
                }
                p.iter().rev().find(|s| s.volume() > 0.0).ok_or(Error::EmptySet)?.sample_uniform(rng, out)
            }
            IndicatorSet::Mask(m) => {
                if m.active.is_empty() {
                    return Err(Error::EmptySet);
                }
                let cell = m.active[rng.random_range(0..m.active.len())];
                m.grid.cell_center(cell, out);
                let h = m.grid.h();
                for o in out.iter_mut() {
                    *o += h * (rng.random::<f64>() - 0.5);
                }
                Ok(())
            }
        }
    }

    /// The centred ball of equal volume (the symmetric rearrangement).
    pub fn star(&self) -> Self {
        let d = self.dim();
        match self {
            IndicatorSet::Empty { .. } | IndicatorSet::Full { .. } => self.clone(),
            _ => IndicatorSet::Ball { center: DVector::zeros(d), radius: self.star_radius() },
        }
    }

    /// `{a x + t : x in E}` for a scalar `a != 0`.
    pub fn affine_image(&self, a: f64, t: &[f64]) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Parameter("set dilation must be a nonzero finite scalar".into()));
        }
        let tv = DVector::from_column_slice(t);
        Ok(match self {
            IndicatorSet::Empty { .. } | IndicatorSet::Full { .. } => self.clone(),
            IndicatorSet::Ball { center, radius } => IndicatorSet::Ball { center: center * a + tv, radius: radius * a.abs() },
            IndicatorSet::Ellipsoid(e) => IndicatorSet::Ellipsoid(Ellipsoid::new(&e.center * a + tv, &e.shape * (a * a))?),
            IndicatorSet::Box { lo, hi } => {
                let (mut l, mut h): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
                for i in 0..lo.len() {
                    let (x, y) = (a * lo[i] + t[i], a * hi[i] + t[i]);
                    l.push(x.min(y));
                    h.push(x.max(y));
                }
                IndicatorSet::Box { lo: l, hi: h }
            }
            IndicatorSet::Union(p) => IndicatorSet::Union(p.iter().map(|s| s.affine_image(a, t)).collect::<Result<_>>()?),
            IndicatorSet::Mask(_) => return Err(Error::Parameter("masks cannot be dilated".into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::seeded_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn volumes() {
        assert_abs_diff_eq!(IndicatorSet::centered_ball(2, 1.0).unwrap().volume(), std::f64::consts::PI, epsilon = 1e-14);
        let e = IndicatorSet::ellipsoid(&[0.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_abs_diff_eq!(e.volume(), 2.0 * std::f64::consts::PI, epsilon = 1e-14);
        assert_eq!(IndicatorSet::cube(&[0.0, 0.0], &[2.0, 3.0]).unwrap().volume(), 6.0);
        assert_abs_diff_eq!(e.star().volume(), e.volume(), epsilon = 1e-12);
    }

    #[test]
    fn samples_land_inside() {
        let mut rng = seeded_rng(1);
        let sets = vec![
            IndicatorSet::ball(&[1.0, -1.0], 0.5).unwrap(),
            IndicatorSet::ellipsoid(&[0.0, 2.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
            IndicatorSet::cube(&[0.0, 0.0], &[1.0, 2.0]).unwrap(),
            IndicatorSet::union(vec![
                IndicatorSet::ball(&[0.0, 0.0], 1.0).unwrap(),
                IndicatorSet::ball(&[3.0, 0.0], 1.0).unwrap(),
            ])
            .unwrap(),
        ];
        let mut x = [0.0; 2];
        for s in &sets {
            for _ in 0..1000 {
                s.sample_uniform(&mut rng, &mut x).unwrap();
                assert!(s.contains(&x) || s.contains(&[x[0] * (1.0 - 1e-12), x[1] * (1.0 - 1e-12)]));
            }
        }
    }

    #[test]
    fn ellipsoid_sampling_fills_volume() {
        // fraction of bounding box samples inside matches volume / box volume
        let e = IndicatorSet::ellipsoid(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0])).unwrap();
        let (lo, hi) = e.bounding_box().unwrap();
        let mut rng = seeded_rng(2);
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            let x = [lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(), lo[1] + (hi[1] - lo[1]) * rng.random::<f64>()];
            if e.contains(&x) {
                hits += 1;
            }
        }
        let box_vol = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        assert_abs_diff_eq!(hits as f64 / n as f64 * box_vol, e.volume(), epsilon = 0.02);
    }

    #[test]
    fn affine_images() {
        let b = IndicatorSet::interval(-0.5, 0.5).unwrap();
        let c = b.affine_image(-2.0, &[1.0]).unwrap();
        assert_eq!(c, IndicatorSet::Box { lo: vec![0.0], hi: vec![2.0] });
        assert!(IndicatorSet::cube(&[0.0], &[0.0]).is_err());
    }
}
