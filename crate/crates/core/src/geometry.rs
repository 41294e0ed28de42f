//! Grassmannians, affine k-planes, simplex volumes and the barycentric
//! coefficients that turn a k-plane through `k+1` anchor points into an
//! affine interpolation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ambient dimension supported by the stack-buffered evaluators.
pub const MAX_DIM: usize = 8;

/// Orthonormal tolerance for frames.
pub const FRAME_TOL: f64 = 1e-12;

/// Relative threshold below which an anchor simplex counts as degenerate.
pub const SINGULAR_TOL: f64 = 1e-12;

pub fn check_dims(n: usize, k: usize) -> Result<()> {
    if n < 2 || n > MAX_DIM {
        return Err(Error::Dimension(format!("ambient dimension n={n} must lie in [2, {MAX_DIM}]")));
    }
    if k < 1 || k >= n {
        return Err(Error::Dimension(format!("need 1 <= k <= n-1, got n={n}, k={k}")));
    }
    Ok(())
}

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

pub fn ball_volume(d: usize, radius: f64) -> f64 {
    unit_ball_volume(d) * radius.powi(d as i32)
}

/// Radius of the d-ball with the given volume.
pub fn ball_radius(d: usize, volume: f64) -> f64 {
    (volume / unit_ball_volume(d)).powf(1.0 / d as f64)
}

pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

pub fn fill_gaussian<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    for x in out {
        *x = StandardNormal.sample(rng);
    }
}

/// Uniform point in the unit ball of R^d, written into `out`.
pub fn fill_uniform_ball<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    let d = out.len();
    loop {
        fill_gaussian(out, rng);
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            out.iter_mut().for_each(|x| *x *= r / norm);
            return;
        }
    }
}

/// Uniform unit vector in R^d.
pub fn fill_unit_vector<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        fill_gaussian(out, rng);
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            out.iter_mut().for_each(|x| *x /= norm);
            return;
        }
    }
}

/// Multivariate Cauchy draw (Student t, one degree of freedom) in R^d.
/// Returns the density at the drawn point.
pub fn fill_cauchy<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) -> f64 {
    let d = out.len();
    fill_gaussian(out, rng);
    let g: f64 = loop {
        let g: f64 = StandardNormal.sample(rng);
        if g != 0.0 {
            break g.abs();
        }
    };
    out.iter_mut().for_each(|x| *x /= g);
    cauchy_density(out.iter().map(|x| x * x).sum(), d)
}

/// Density of the standard multivariate Cauchy law in R^d at squared radius r2.
pub fn cauchy_density(r2: f64, d: usize) -> f64 {
    2.0 / unit_sphere_area(d + 1) * (1.0 + r2).powf(-((d + 1) as f64) / 2.0)
}

/// Radial heavy-tailed law with density `(1+|x|)^{-d-1} / |B^d|` on R^d.
/// Returns the density at the drawn point.
pub fn fill_power_tail<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) -> f64 {
    let d = out.len();
    fill_unit_vector(out, rng);
    // CDF of the radius is (r / (1 + r))^d.
    let w = rng.random::<f64>().powf(1.0 / d as f64);
    let r = w / (1.0 - w).max(1e-300);
    out.iter_mut().for_each(|x| *x *= r);
    power_tail_density(r, d)
}

pub fn power_tail_density(r: f64, d: usize) -> f64 {
    (1.0 + r).powf(-(d as f64) - 1.0) / unit_ball_volume(d)
}

/// An element of the Grassmannian G_{k,n} together with a basis of its
/// orthogonal complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalFrame {
    pub n: usize,
    pub k: usize,
    /// n x k, orthonormal columns spanning the plane.
    pub basis: DMatrix<f64>,
    /// n x (n-k), orthonormal columns spanning the complement.
    pub complement: DMatrix<f64>,
}

impl OrthonormalFrame {
    /// Frame spanned by the columns of `span` (n x k, full column rank),
    /// completed to an orthonormal basis of R^n.
    pub fn from_span(span: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = span.shape();
        if k == 0 || k >= n {
            return Err(Error::Dimension(format!("span of {k} vectors in R^{n}")));
        }
        let mut ext = DMatrix::zeros(n, k + n);
        ext.view_mut((0, 0), (n, k)).copy_from(span);
        ext.view_mut((0, k), (n, n)).copy_from(&DMatrix::identity(n, n));
        let qr = ext.qr();
        let r = qr.r();
        let scale = span.norm().max(1.0);
        for i in 0..k {
            if r[(i, i)].abs() < 1e-12 * scale {
                return Err(Error::Dimension("spanning vectors are linearly dependent".into()));
            }
        }
        let q = qr.q();
        Ok(OrthonormalFrame {
            n,
            k,
            basis: q.columns(0, k).into_owned(),
            complement: q.columns(k, n - k).into_owned(),
        })
    }

    /// Frame from an n x n orthogonal matrix: first k columns span the plane.
    pub fn from_orthogonal(q: &DMatrix<f64>, k: usize) -> Self {
        let n = q.nrows();
        OrthonormalFrame {
            n,
            k,
            basis: q.columns(0, k).into_owned(),
            complement: q.columns(k, n - k).into_owned(),
        }
    }

    /// Coordinate plane spanned by the first k standard basis vectors.
    pub fn coordinate(n: usize, k: usize) -> Result<Self> {
        check_dims(n, k)?;
        Ok(Self::from_orthogonal(&DMatrix::identity(n, n), k))
    }

    /// Largest deviation of [basis | complement] from an orthogonal matrix.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut full = DMatrix::zeros(self.n, self.n);
        full.view_mut((0, 0), (self.n, self.k)).copy_from(&self.basis);
        full.view_mut((0, self.k), (self.n, self.n - self.k)).copy_from(&self.complement);
        let g = full.transpose() * &full - DMatrix::<f64>::identity(self.n, self.n);
        g.amax()
    }

    /// Orthogonal projection of `x` onto the complement, in ambient coordinates.
    pub fn project_complement(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.complement * (self.complement.transpose() * x)
    }
}

/// Haar-uniform random orthogonal n x n matrix (QR of a Gaussian matrix with
/// the sign of R's diagonal absorbed).
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-distributed k-plane through the origin.
pub fn sample_grassmannian<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<OrthonormalFrame> {
    if k < 1 || k >= n {
        return Err(Error::Dimension(format!("need 1 <= k <= n-1, got n={n}, k={k}")));
    }
    Ok(OrthonormalFrame::from_orthogonal(&haar_orthogonal(n, rng), k))
}

/// The affine k-plane `frame + offset`, offset orthogonal to the frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePlane {
    pub frame: OrthonormalFrame,
    pub offset: DVector<f64>,
}

impl AffinePlane {
    pub fn new(frame: OrthonormalFrame, offset: DVector<f64>) -> Result<Self> {
        let off_scale = offset.norm().max(1.0);
        let leak = (frame.basis.transpose() * &offset).amax();
        if leak > FRAME_TOL * off_scale {
            return Err(Error::Parameter(format!("offset not orthogonal to plane (leak {leak:e})")));
        }
        Ok(AffinePlane { frame, offset })
    }

    /// The plane through `point` parallel to `frame` (offset = projection of
    /// the point onto the complement).
    pub fn through(frame: OrthonormalFrame, point: &DVector<f64>) -> Self {
        let offset = frame.project_complement(point);
        AffinePlane { frame, offset }
    }

    pub fn n(&self) -> usize {
        self.frame.n
    }

    pub fn k(&self) -> usize {
        self.frame.k
    }

    /// Ambient point at in-plane coordinates `t`.
    pub fn point(&self, t: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.offset[i];
            for (j, tj) in t.iter().enumerate() {
                s += self.frame.basis[(i, j)] * tj;
            }
            out[i] = s;
        }
    }

    /// In-plane coordinates of the orthogonal projection of `x`.
    pub fn coordinates_of(&self, x: &DVector<f64>) -> DVector<f64> {
        self.frame.basis.transpose() * x
    }
}

/// Draws a Haar plane and an offset uniform in the radius-`radius` ball of the
/// complement, centred at the projection of `center`. The second value is the
/// importance weight (the ball volume).
pub fn sample_affine_plane_around<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    radius: f64,
    center: &DVector<f64>,
    rng: &mut R,
) -> Result<(AffinePlane, f64)> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Parameter(format!("offset radius must be positive, got {radius}")));
    }
    let frame = sample_grassmannian(n, k, rng)?;
    let d = n - k;
    let mut z = vec![0.0; d];
    fill_uniform_ball(&mut z, rng);
    let z = DVector::from_vec(z) * radius;
    let offset = frame.project_complement(center) + &frame.complement * z;
    Ok((AffinePlane { frame, offset }, ball_volume(d, radius)))
}

pub fn sample_affine_plane<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    radius: f64,
    rng: &mut R,
) -> Result<(AffinePlane, f64)> {
    sample_affine_plane_around(n, k, radius, &DVector::zeros(n), rng)
}

/// Vertex list of a simplex (all vertices of the same dimension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    pub vertices: Vec<DVector<f64>>,
}

impl Simplex {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Dimension("simplex needs at least one vertex".into()));
        }
        let m = vertices[0].len();
        if vertices.iter().any(|v| v.len() != m) {
            return Err(Error::Dimension("vertices of differing dimension".into()));
        }
        Ok(Simplex { vertices })
    }

    pub fn from_slices(vertices: &[&[f64]]) -> Result<Self> {
        Self::new(vertices.iter().map(|v| DVector::from_column_slice(v)).collect())
    }

    /// Simplex dimension (vertex count minus one).
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].len()
    }

    fn edges(&self) -> DMatrix<f64> {
        let k = self.dim();
        let v0 = &self.vertices[0];
        DMatrix::from_fn(self.ambient_dim(), k, |i, j| self.vertices[j + 1][i] - v0[i])
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// k-dimensional volume of a simplex. The signed variant (determinant of the
/// edge matrix over k!) needs ambient dimension equal to the simplex
/// dimension; the unsigned one uses the Gram determinant otherwise.
pub fn simplex_volume(s: &Simplex, signed: bool) -> Result<f64> {
    let k = s.dim();
    let m = s.ambient_dim();
    if k == 0 {
        return Ok(1.0);
    }
    if k > m {
        return Ok(0.0);
    }
    let e = s.edges();
    if k == m {
        let det = e.determinant() / factorial(k);
        return Ok(if signed { det } else { det.abs() });
    }
    if signed {
        return Err(Error::Dimension(format!(
            "signed volume of a {k}-simplex in R^{m} is undefined"
        )));
    }
    let gram = e.transpose() * &e;
    Ok(gram.determinant().max(0.0).sqrt() / factorial(k))
}

/// Signed volume of the simplex with vertices given as slices of length k.
pub fn signed_volume_slices(vertices: &[&[f64]]) -> f64 {
    let k = vertices.len() - 1;
    let m = DMatrix::from_fn(k, k, |i, j| vertices[j + 1][i] - vertices[0][i]);
    m.determinant() / factorial(k)
}

/// The b_{i,j} of the sliced Drury identity: row i holds the affine
/// (barycentric) coordinates of the i-th base point with respect to the
/// anchor simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    pub k: usize,
    pub n: usize,
    /// (n+1) rows of (k+1) entries.
    pub rows: Vec<Vec<f64>>,
    /// The x'_0, ..., x'_n that generated the rows.
    pub base_points: Vec<DVector<f64>>,
}

impl CoefficientMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// Build directly from the extra rows (i in k+1..=n), e.g. from user input.
    /// Rows 0..=k are the Kronecker rows.
    pub fn from_extra_rows(k: usize, extra: Vec<Vec<f64>>) -> Result<Self> {
        if extra.iter().any(|r| r.len() != k + 1) {
            return Err(Error::Dimension(format!("coefficient rows need {} entries", k + 1)));
        }
        let mut rows: Vec<Vec<f64>> = (0..=k)
            .map(|i| (0..=k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let n = k + extra.len();
        rows.extend(extra);
        Ok(CoefficientMatrix { k, n, rows, base_points: Vec::new() })
    }

    /// `sum_j b[i][j] v_j` for slice vectors `vs[j]` (each of length d).
    pub fn combine(&self, i: usize, vs: &[&[f64]], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (j, v) in vs.iter().enumerate() {
            let b = self.rows[i][j];
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += b * x;
            }
        }
    }

    pub fn max_row_sum_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Barycentric coefficients of `extras` with respect to the anchor simplex,
/// as signed-volume (Cramer) ratios.
pub fn drury_coefficients(anchors: &[DVector<f64>], extras: &[DVector<f64>]) -> Result<CoefficientMatrix> {
    let k = anchors.len().saturating_sub(1);
    if k == 0 {
        return Err(Error::Dimension("need k+1 >= 2 anchors".into()));
    }
    if anchors.iter().chain(extras).any(|p| p.len() != k) {
        return Err(Error::Dimension(format!("anchors and extras must lie in R^{k}")));
    }
    let slices: Vec<&[f64]> = anchors.iter().map(|a| a.as_slice()).collect();
    let vol = signed_volume_slices(&slices);
    let scale = anchors
        .iter()
        .map(|a| (a - &anchors[0]).norm())
        .fold(0.0, f64::max);
    let threshold = SINGULAR_TOL * scale.powi(k as i32).max(f64::MIN_POSITIVE);
    if !(vol.abs() > threshold) {
        return Err(Error::Singular { volume: vol.abs(), threshold });
    }
    let mut rows: Vec<Vec<f64>> = (0..=k)
        .map(|i| (0..=k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for x in extras {
        let mut row = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let mut verts = slices.clone();
            verts[j] = x.as_slice();
            row.push(signed_volume_slices(&verts) / vol);
        }
        rows.push(row);
    }
    let mut base_points = anchors.to_vec();
    base_points.extend_from_slice(extras);
    Ok(CoefficientMatrix { k, n: k + extras.len(), rows, base_points })
}

/// Vertices of a regular k-simplex inscribed in the unit sphere of R^k: k+1
/// unit vectors whose omitted-vertex sub-simplices (with the origin) all have
/// the same volume.
pub fn regular_simplex_directions(k: usize) -> Result<Vec<DVector<f64>>> {
    if k == 0 {
        return Err(Error::Dimension("k must be at least 1".into()));
    }
    let m = k + 1;
    let centred: Vec<DVector<f64>> = (0..m)
        .map(|i| DVector::from_fn(m, |j, _| if i == j { 1.0 } else { 0.0 } - 1.0 / m as f64))
        .collect();
    // Gram-Schmidt basis of the hyperplane sum(x) = 0.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for v in centred.iter().take(k) {
        let mut w = v.clone();
        for b in &basis {
            w -= b * b.dot(v);
        }
        basis.push(w.normalize());
    }
    Ok(centred
        .iter()
        .map(|p| DVector::from_fn(k, |i, _| basis[i].dot(p)).normalize())
        .collect())
}

/// Midpoint rule on the unit sphere S^{m-1} in hyperspherical angles with
/// `per_angle` nodes per polar angle (twice that for the azimuth). Returns
/// (direction, weight) pairs; weights sum to the sphere area.
pub fn sphere_rule(m: usize, per_angle: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    assert!(m >= 1 && per_angle >= 1);
    if m == 1 {
        return vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)];
    }
    let polar = m - 2;
    let az = 2 * per_angle;
    let total = per_angle.pow(polar as u32) * az;
    let hp = PI / per_angle as f64;
    let ha = 2.0 * PI / az as f64;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; polar];
    for flat in 0..total {
        let mut r = flat;
        for slot in idx.iter_mut() {
            *slot = r % per_angle;
            r /= per_angle;
        }
        let phi_az = (r as f64 + 0.5) * ha;
        let mut dir = vec![0.0; m];
        let mut w = ha;
        let mut sin_prod = 1.0;
        for (j, &i) in idx.iter().enumerate() {
            let a = (i as f64 + 0.5) * hp;
            dir[j] = sin_prod * a.cos();
            sin_prod *= a.sin();
            w *= hp * a.sin().powi((m - 2 - j) as i32);
        }
        dir[m - 2] = sin_prod * phi_az.cos();
        dir[m - 1] = sin_prod * phi_az.sin();
        out.push((dir, w));
    }
    // renormalise so the weights integrate constants exactly
    let s: f64 = out.iter().map(|(_, w)| w).sum();
    let area = unit_sphere_area(m);
    out.iter_mut().for_each(|(_, w)| *w *= area / s);
    out
}
