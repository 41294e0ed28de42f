use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{AffineMap, Field};

/// Affine map `x' -> A x' + b` from R^k to R^{n-k}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSection {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineSection {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if linear.nrows() != offset.len() {
            return Err(Error::Dimension("section matrix and offset disagree".into()));
        }
        Ok(AffineSection { linear, offset })
    }

    pub fn zero(k: usize, d: usize) -> Self {
        AffineSection { linear: DMatrix::zeros(d, k), offset: DVector::zeros(d) }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }
}

/// `φ^{-1} ψ^{-1} 𝓛^{-1} R 𝓛 ψ φ` with `ψ(x', v) = (x', v + γ(x'))`,
/// `𝓛(x', v) = (x', L v)` and `R` negating the last coordinate.
pub fn scaled_skew_reflection(phi: &DMatrix<f64>, gamma: &AffineSection, l: &DMatrix<f64>) -> Result<AffineMap> {
    let n = phi.nrows();
    let d = l.nrows();
    if phi.ncols() != n || l.ncols() != d || d == 0 || d >= n {
        return Err(Error::Dimension(format!("need square φ on R^n and L on R^d with 0 < d < n, got n = {n}, d = {d}")));
    }
    let k = n - d;
    if gamma.linear.shape() != (d, k) {
        return Err(Error::Dimension(format!("γ must map R^{k} to R^{d}")));
    }
    let defect = (phi.transpose() * phi - DMatrix::identity(n, n)).amax();
    if defect > 1e-9 {
        return Err(Error::Parameter(format!("φ is not orthogonal (defect {defect:e})")));
    }
    let det = l.determinant();
    if !(det.abs() > 1e-12 * l.amax().max(f64::MIN_POSITIVE).powi(d as i32)) {
        return Err(Error::Parameter(format!("L is singular (det = {det:e})")));
    }
    let mut psi = DMatrix::identity(n, n);
    psi.view_mut((k, 0), (d, k)).copy_from(&gamma.linear);
    let mut psi_t = DVector::zeros(n);
    psi_t.rows_mut(k, d).copy_from(&gamma.offset);
    let mut scale = DMatrix::identity(n, n);
    scale.view_mut((k, k), (d, d)).copy_from(l);
    let conj = AffineMap::linear(scale)?
        .compose(&AffineMap::new(psi, psi_t)?)?
        .compose(&AffineMap::linear(phi.clone())?)?;
    let mut r = DMatrix::identity(n, n);
    r[(n - 1, n - 1)] = -1.0;
    conj.inverse().compose(&AffineMap::linear(r)?)?.compose(&conj)
}

/// `(γ, L)` for which the scaled skew reflection built from `φ` fixes the
/// extremizer `f`: after `φ`, `ψ` moves each slice centre to the origin and
/// `𝓛` turns the slice ellipsoids into balls.
pub fn matched_reflection_parameters(f: &Field, phi: &DMatrix<f64>, k: usize) -> Result<(AffineSection, DMatrix<f64>)> {
    let (_, map, _) = f
        .extremizer_params()
        .ok_or_else(|| Error::Parameter(format!("matched parameters need an extremizer, got a {} field", f.kind())))?;
    let n = f.n();
    if phi.shape() != (n, n) || k == 0 || k >= n {
        return Err(Error::Dimension("φ and the split must fit the field".into()));
    }
    let d = n - k;
    // f ∘ φ^{-1} = c (1 + |N y + t|^2)^{..} with N = M φ^T
    let nm = map.matrix() * phi.transpose();
    let n1 = nm.columns(0, k);
    let n2 = nm.columns(k, d);
    let g = n2.transpose() * n2;
    let chol = g.clone().cholesky().ok_or_else(|| Error::Parameter("degenerate slice metric".into()))?;
    // slice centre v0(x') = -G^{-1} N2^T (N1 x' + t); γ = -v0
    let linear = chol.solve(&(n2.transpose() * n1));
    let offset = chol.solve(&(n2.transpose() * map.offset()));
    let l = chol.l().transpose();
    Ok((AffineSection { linear, offset }, l))
}
