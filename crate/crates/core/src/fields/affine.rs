use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gaussian_vector, haar_orthogonal};

/// `x -> M x + t` with `M` invertible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
    inverse: DMatrix<f64>,
    jacobian: f64,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let n = linear.nrows();
        if linear.ncols() != n || translation.len() != n {
            return Err(Error::Dimension(format!(
                "affine map needs a square matrix and matching translation, got {}x{} and {}",
                n,
                linear.ncols(),
                translation.len()
            )));
        }
        let det = linear.determinant();
        let scale = linear.amax().max(f64::MIN_POSITIVE).powi(n as i32);
        if !(det.abs() > 1e-14 * scale) || !det.is_finite() {
            return Err(Error::Parameter(format!("affine map is not invertible (det = {det:e})")));
        }
        let inverse = linear
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Parameter("affine map is not invertible".into()))?;
        Ok(AffineMap { linear, translation, inverse, jacobian: det.abs() })
    }

    pub fn linear(linear: DMatrix<f64>) -> Result<Self> {
        let n = linear.nrows();
        Self::new(linear, DVector::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n)).expect("identity is invertible")
    }

    pub fn scaling(n: usize, s: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * s, DVector::zeros(n))
    }

    pub fn translation(t: DVector<f64>) -> Self {
        let n = t.len();
        Self::new(DMatrix::identity(n, n), t).expect("translation is invertible")
    }

    /// Random map with singular values in `[lo, hi]` and a Gaussian translation
    /// of the given size.
    pub fn random<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, shift: f64, rng: &mut R) -> Self {
        let u = haar_orthogonal(n, rng);
        let v = haar_orthogonal(n, rng);
        let s = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| lo + (hi - lo) * rng.random::<f64>()));
        let t = gaussian_vector(n, rng) * shift;
        Self::new(u * s * v.transpose(), t).expect("well-conditioned by construction")
    }

    pub fn n(&self) -> usize {
        self.translation.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `|det M|`.
    pub fn jacobian(&self) -> f64 {
        self.jacobian
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.translation[i];
            for j in 0..n {
                s += self.linear[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.translation
    }

    pub fn apply_inverse_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (y - &self.translation)
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &AffineMap) -> Result<Self> {
        if self.n() != other.n() {
            return Err(Error::Dimension("composing maps of different dimension".into()));
        }
        Self::new(&self.linear * &other.linear, &self.linear * &other.translation + &self.translation)
    }

    pub fn inverse(&self) -> Self {
        let t = -(&self.inverse * &self.translation);
        AffineMap {
            linear: self.inverse.clone(),
            translation: t,
            inverse: self.linear.clone(),
            jacobian: 1.0 / self.jacobian,
        }
    }

    /// Largest singular value of the inverse, i.e. how far the map stretches
    /// the unit ball when pulled back.
    pub fn inverse_stretch(&self) -> f64 {
        self.inverse.clone().singular_values().max()
    }

    pub fn max_deviation(&self, other: &AffineMap) -> f64 {
        (&self.linear - &other.linear).amax().max((&self.translation - &other.translation).amax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::seeded_rng;

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = seeded_rng(4);
        for n in 2..5 {
            let a = AffineMap::random(n, 0.5, 2.0, 1.0, &mut rng);
            let id = a.compose(&a.inverse()).unwrap();
            assert!(id.max_deviation(&AffineMap::identity(n)) < 1e-12);
            assert!((a.jacobian() * a.inverse().jacobian() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_maps_are_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(AffineMap::linear(m).is_err());
    }
}
