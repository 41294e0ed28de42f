//! The transform over graphs `x' -> (x', Aᵀx' + b)` of affine maps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_support_for_planes, NormConfig, PlaneRule, QuadConfig};
use crate::error::{Error, Result};
use crate::estimate::{mc_mean, Estimate};
use crate::fields::{endpoint_exponents, Field, Support};
use crate::geometry::{check_dims, fill_cauchy, AffinePlane, OrthonormalFrame, MAX_DIM};

/// A k-plane written as the graph of `x' -> Aᵀ x' + b` over the first k
/// coordinates. `a` is k x (n-k); its i-th row is the image of `e_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixPlane {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl MatrixPlane {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != b.len() || a.nrows() == 0 || b.is_empty() {
            return Err(Error::Dimension(format!(
                "matrix plane needs A of shape k x (n-k) and b of length n-k, got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(MatrixPlane { a, b })
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.nrows() + self.a.ncols()
    }

    /// `(A_b, a_1)`: the first row of `A` traded with `b`.
    pub fn swap_first_row(&self) -> Self {
        let mut a = self.a.clone();
        let first = self.a.row(0).transpose();
        a.row_mut(0).copy_from(&self.b.transpose());
        MatrixPlane { a, b: first }
    }

    /// The same plane as an [`AffinePlane`], together with the area factor
    /// `sqrt(det(I + A Aᵀ))` relating `dx'` to the plane's Lebesgue measure.
    pub fn to_affine_plane(&self) -> Result<(AffinePlane, f64)> {
        let k = self.k();
        let n = self.n();
        let mut span = DMatrix::zeros(n, k);
        span.view_mut((0, 0), (k, k)).fill_with_identity();
        span.view_mut((k, 0), (n - k, k)).copy_from(&self.a.transpose());
        let gram = DMatrix::<f64>::identity(k, k) + &self.a * self.a.transpose();
        let jac = gram.determinant().sqrt();
        let frame = OrthonormalFrame::from_span(&span)?;
        let mut base = DVector::zeros(n);
        base.rows_mut(k, n - k).copy_from(&self.b);
        Ok((AffinePlane::through(frame, &base), jac))
    }
}

/// `T♯ f(A, b) = ∫_{R^k} f(x', Aᵀx' + b) dx'`.
pub fn sharp_transform(f: &Field, mp: &MatrixPlane, quad: &QuadConfig) -> Result<Estimate> {
    let (plane, jac) = mp.to_affine_plane()?;
    Ok(super::kplane_transform(f, &plane, quad)?.scale(1.0 / jac))
}

/// Estimate of `∫∫ |T♯ f(A, b)|^q dA db` with `q = n + 1`.
///
/// `A` is drawn from a standard Cauchy law on its `k(n-k)` entries and `b`
/// from a Cauchy law centred on graphs through the field centre, with width
/// growing like `sqrt(1 + |A|^2)` to follow the spread of offsets that still
/// meet the field.
pub fn sharp_power_integral(f: &Field, k: usize, cfg: &NormConfig) -> Result<Estimate> {
    let n = f.n();
    check_dims(n, k)?;
    cfg.mc.validate()?;
    let support = f.support();
    if f.is_zero() || support == Support::Empty {
        return Ok(Estimate::with_meta(0.0, 0.0, cfg.mc.samples as u64, cfg.mc.seed));
    }
    check_support_for_planes(&support, k, "sharp norm")?;
    let rule = PlaneRule::new(k, cfg.inner_points)?;
    let (_, q) = endpoint_exponents(n, k);
    let (center, scale) = support.center_scale(n);
    let d = n - k;
    let est = mc_mean(&cfg.mc, |rng| {
        let mut av = [0.0; MAX_DIM * MAX_DIM];
        let dens_a = fill_cauchy(&mut av[..k * d], rng);
        let a = DMatrix::from_row_slice(k, d, &av[..k * d]);
        let mut z = [0.0; MAX_DIM];
        let dens_z = fill_cauchy(&mut z[..d], rng);
        let width = scale * (1.0 + a.norm_squared()).sqrt();
        let c_head = center.rows(0, k).into_owned();
        let shift = a.transpose() * c_head;
        let b = DVector::from_fn(d, |j, _| center[k + j] - shift[j] + width * z[j]);
        let density = dens_a * dens_z / width.powi(d as i32);
        let mp = MatrixPlane { a, b };
        let value = mp
            .to_affine_plane()
            .and_then(|(plane, jac)| Ok(rule.integrate_with(f, &plane, &support)? / jac));
        match value {
            Ok(t) => t.abs().powf(q) / density,
            Err(_) => f64::NAN,
        }
    });
    if !est.is_finite() {
        return Err(Error::NonIntegrable("sharp norm estimate is not finite".into()));
    }
    Ok(est)
}

/// `‖T♯ f‖_{L^{n+1}}` over `(A, b)` with Lebesgue measure.
pub fn lq_sharp_norm(f: &Field, k: usize, cfg: &NormConfig) -> Result<Estimate> {
    let (_, q) = endpoint_exponents(f.n(), k);
    Ok(sharp_power_integral(f, k, cfg)?.powf(1.0 / q))
}

/// A function of matrix planes.
pub type MatrixFunction = Arc<dyn Fn(&MatrixPlane) -> f64 + Send + Sync>;

/// `R♯ G(A, b) = G(A_b, a_1)`.
pub fn apply_r_sharp(g: MatrixFunction) -> MatrixFunction {
    Arc::new(move |mp: &MatrixPlane| g(&mp.swap_first_row()))
}
