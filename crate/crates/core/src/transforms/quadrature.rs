//! Deterministic quadrature of a field over an affine k-plane.
//!
//! Decaying fields use polar coordinates about the point of the plane nearest
//! the field centre, with the radius mapped through `r = sigma tan(u)` so the
//! whole plane is covered without truncation. For the standard extremizer the
//! mapped radial integrand is constant when `k = 1`, so the rule is exact
//! there. Compactly supported fields use a tensor midpoint rule over the
//! square circumscribing the slice of the support's bounding ball.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::fields::{Field, Support};
use crate::geometry::{sphere_rule, AffinePlane, MAX_DIM};

/// Node layout for one plane dimension `k` and point budget.
#[derive(Clone, Debug)]
pub struct PlaneRule {
    k: usize,
    points: usize,
    radial: Vec<(f64, f64)>,
    directions: Vec<(Vec<f64>, f64)>,
    per_axis: usize,
}

impl PlaneRule {
    pub fn new(k: usize, points: usize) -> Result<Self> {
        if k == 0 || k >= MAX_DIM {
            return Err(Error::Dimension(format!("plane dimension {k} unsupported")));
        }
        if points < 2 {
            return Err(Error::Parameter("quadrature needs at least 2 points".into()));
        }
        let (n_r, per_angle) = match k {
            1 => (points / 2, 1),
            _ => {
                let m = ((points as f64 / 2.0).powf(1.0 / k as f64)).floor().max(2.0) as usize;
                (m, m)
            }
        };
        let n_r = n_r.max(1);
        let hu = FRAC_PI_2 / n_r as f64;
        let radial = (0..n_r)
            .map(|i| {
                let u = (i as f64 + 0.5) * hu;
                (u.tan(), hu / (u.cos() * u.cos()))
            })
            .collect();
        let per_axis = ((points as f64).powf(1.0 / k as f64)).floor().max(1.0) as usize;
        Ok(PlaneRule { k, points, radial, directions: sphere_rule(k, per_angle), per_axis })
    }

    /// The same layout at roughly half the resolution per axis.
    pub fn coarse(&self) -> Result<Self> {
        Self::new(self.k, (self.points >> self.k).max(2))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// `∫_plane f dλ` using the field's declared support.
    pub fn integrate(&self, f: &Field, plane: &AffinePlane) -> Result<f64> {
        self.integrate_with(f, plane, &f.support())
    }

    pub fn integrate_with(&self, f: &Field, plane: &AffinePlane, support: &Support) -> Result<f64> {
        let n = plane.n();
        let k = plane.k();
        if k != self.k || f.n() != n {
            return Err(Error::Dimension("plane, rule and field dimensions disagree".into()));
        }
        match support {
            Support::Empty => Ok(0.0),
            Support::Unbounded => Err(Error::NonIntegrable(format!("{} field has no decay bound", f.kind()))),
            Support::Decay { center, scale, exponent } => {
                if *exponent <= k as f64 {
                    return Err(Error::NonIntegrable(format!(
                        "decay exponent {exponent} does not make the field integrable on {k}-planes"
                    )));
                }
                Ok(self.polar(f, plane, center.as_slice(), *scale))
            }
            Support::Compact { lo, hi } => {
                let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let rad = lo.iter().zip(hi).map(|(a, b)| 0.25 * (b - a) * (b - a)).sum::<f64>().sqrt();
                Ok(self.tensor(f, plane, &c, rad))
            }
        }
    }

    /// Foot of the perpendicular from `c` in plane coordinates, the base point,
    /// and the distance.
    fn foot(plane: &AffinePlane, c: &[f64]) -> ([f64; MAX_DIM], [f64; MAX_DIM], f64) {
        let n = plane.n();
        let k = plane.k();
        let u = &plane.frame.basis;
        let mut tc = [0.0; MAX_DIM];
        for j in 0..k {
            let mut s = 0.0;
            for i in 0..n {
                s += u[(i, j)] * (c[i] - plane.offset[i]);
            }
            tc[j] = s;
        }
        let mut p = [0.0; MAX_DIM];
        plane.point(&tc[..k], &mut p[..n]);
        let dist = (0..n).map(|i| (c[i] - p[i]).powi(2)).sum::<f64>().sqrt();
        (tc, p, dist)
    }

    fn polar(&self, f: &Field, plane: &AffinePlane, c: &[f64], scale: f64) -> f64 {
        let n = plane.n();
        let k = self.k;
        let (_, p, dist) = Self::foot(plane, c);
        let sigma = (scale * scale + dist * dist).sqrt();
        let u = &plane.frame.basis;
        let mut x = [0.0; MAX_DIM];
        let mut dir = [0.0; MAX_DIM];
        let mut total = 0.0;
        for (omega, w_dir) in &self.directions {
            for i in 0..n {
                dir[i] = (0..k).map(|j| u[(i, j)] * omega[j]).sum();
            }
            let mut line = 0.0;
            for &(t, w) in &self.radial {
                let r = sigma * t;
                for i in 0..n {
                    x[i] = p[i] + r * dir[i];
                }
                let v = f.eval(&x[..n]);
                if v != 0.0 {
                    line += v * w * sigma * r.powi(k as i32 - 1);
                }
            }
            total += w_dir * line;
        }
        total
    }

    fn tensor(&self, f: &Field, plane: &AffinePlane, c: &[f64], rad: f64) -> f64 {
        let n = plane.n();
        let k = self.k;
        let (_, p, dist) = Self::foot(plane, c);
        if dist >= rad {
            return 0.0;
        }
        let half = (rad * rad - dist * dist).sqrt();
        let m = self.per_axis;
        let h = 2.0 * half / m as f64;
        let u = &plane.frame.basis;
        let total_nodes = m.pow(k as u32);
        let mut x = [0.0; MAX_DIM];
        let mut t = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for flat in 0..total_nodes {
            let mut r = flat;
            for tj in t.iter_mut().take(k) {
                *tj = -half + ((r % m) as f64 + 0.5) * h;
                r /= m;
            }
            for i in 0..n {
                let mut s = p[i];
                for j in 0..k {
                    s += u[(i, j)] * t[j];
                }
                x[i] = s;
            }
            acc += f.eval(&x[..n]);
        }
        acc * h.powi(k as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrthonormalFrame;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn gaussian_on_planes_of_each_dimension() {
        let pi = std::f64::consts::PI;
        for (n, k) in [(2usize, 1usize), (3, 1), (3, 2), (4, 2), (4, 3)] {
            let f = Field::standard_gaussian(n);
            let frame = OrthonormalFrame::coordinate(n, k).unwrap();
            let mut off = DVector::zeros(n);
            off[n - 1] = 0.7;
            let plane = AffinePlane::new(frame, off).unwrap();
            let rule = PlaneRule::new(k, 40_000).unwrap();
            let got = rule.integrate(&f, &plane).unwrap();
            let truth = pi.powf(k as f64 / 2.0) * (-0.49f64).exp();
            assert_abs_diff_eq!(got, truth, epsilon = 1e-4 * truth);
        }
    }

    #[test]
    fn compact_rule_measures_chords() {
        let f = Field::indicator(crate::IndicatorSet::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        let span = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let frame = OrthonormalFrame::from_span(&span).unwrap();
        let plane = AffinePlane::through(frame, &DVector::from_vec(vec![0.0, 0.0]));
        let got = PlaneRule::new(1, 100_000).unwrap().integrate(&f, &plane).unwrap();
        assert_abs_diff_eq!(got, 2f64.sqrt(), epsilon = 1e-4);
    }
}
