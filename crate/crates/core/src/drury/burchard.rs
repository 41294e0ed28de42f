use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::admissibility::{permissibility, PermissibilityReport, RadiusFamily};
use super::forms::paired_tx;
use super::IndicatorSet;
use crate::error::{Error, Result};
use crate::estimate::{Estimate, McConfig};
use crate::fields::Field;
use crate::geometry::CoefficientMatrix;

/// A family for which `Tx(E) = Tx(E*)`: with `b_i = b_{k+1,i}`,
///
/// * `b_i E_i = β_i + α_i 𝓔` for `i ≤ k`,
/// * `E_{k+1} = Σ β_i + α_{k+1} 𝓔`,
/// * `E_i` for `i > k+1` a ball large enough never to constrain the form,
///   before or after rearrangement.
///
/// `shape` is the matrix `Q` of `𝓔 = {x : xᵀ Q^{-1} x ≤ 1}`.
pub fn burchard_family(
    b: &CoefficientMatrix,
    shape: &DMatrix<f64>,
    alphas: &[f64],
    betas: &[DVector<f64>],
) -> Result<Vec<IndicatorSet>> {
    let k = b.k;
    let d = shape.nrows();
    if alphas.len() != k + 2 || betas.len() != k + 1 || betas.iter().any(|c| c.len() != d) {
        return Err(Error::Dimension(format!("need {} dilations and {} centres in R^{d}", k + 2, k + 1)));
    }
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Parameter("dilations must be positive".into()));
    }
    let mut sets = Vec::with_capacity(b.n + 1);
    for i in 0..=k {
        let bi = b.rows[k + 1][i];
        if bi == 0.0 {
            return Err(Error::Parameter(format!("coefficient b[{}][{i}] vanishes", k + 1)));
        }
        let center = &betas[i] / bi;
        let q = shape * (alphas[i] / bi).powi(2);
        sets.push(IndicatorSet::ellipsoid(center.as_slice(), q)?);
    }
    let sum: DVector<f64> = betas.iter().fold(DVector::zeros(d), |acc, c| acc + c);
    sets.push(IndicatorSet::ellipsoid(sum.as_slice(), shape * alphas[k + 1].powi(2))?);
    let reach: Vec<f64> = sets[..=k]
        .iter()
        .map(|s| match s {
            IndicatorSet::Ellipsoid(e) => e.semi_axes().into_iter().fold(0.0, f64::max),
            _ => unreachable!(),
        })
        .collect();
    let centers: Vec<DVector<f64>> = (0..=k).map(|i| &betas[i] / b.rows[k + 1][i]).collect();
    for i in k + 2..=b.n {
        let row = &b.rows[i];
        let c = (0..=k).fold(DVector::zeros(d), |acc, j| acc + &centers[j] * row[j]);
        let r: f64 = (0..=k).map(|j| row[j].abs() * reach[j]).sum::<f64>() * 1.01;
        sets.push(IndicatorSet::ball(c.as_slice(), r.max(1e-9))?);
    }
    Ok(sets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurchardReport {
    pub tx_sets: Estimate,
    pub tx_stars: Estimate,
    /// `(Tx(E*) - Tx(E)) / Tx(E*)`.
    pub normalized_gap: Estimate,
    pub permissibility: PermissibilityReport,
}

/// Normalized rearrangement gap of `Tx` on sets, on common random numbers.
pub fn burchard_equality_probe(sets: &[IndicatorSet], b: &CoefficientMatrix, cfg: &McConfig) -> Result<BurchardReport> {
    let stars: Vec<IndicatorSet> = sets.iter().map(|s| s.star()).collect();
    let permissibility = permissibility(&RadiusFamily::of_sets(&stars)?.with_coefficients(b.clone())?)?;
    let f: Vec<Field> = sets.iter().cloned().map(Field::indicator).collect();
    let fs: Vec<Field> = stars.into_iter().map(Field::indicator).collect();
    let m = paired_tx(&f, &fs, b, cfg)?;
    let (a, s) = (m.mean[0], m.mean[1]);
    if !(s > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let gap = Estimate::with_meta(1.0 - a / s, m.delta_stderr(&[-1.0 / s, a / (s * s)]), m.count, cfg.seed);
    Ok(BurchardReport {
        tx_sets: m.marginal(0, cfg.seed),
        tx_stars: m.marginal(1, cfg.seed),
        normalized_gap: gap,
        permissibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5])
    }

    #[test]
    fn compatible_ellipses_give_no_gap() {
        let b = CoefficientMatrix::from_extra_rows(1, vec![vec![0.4, 0.6]]).unwrap();
        let betas = [DVector::from_vec(vec![0.3, -0.2]), DVector::from_vec(vec![-1.0, 0.5])];
        let sets = burchard_family(&b, &shape(), &[0.8, 1.0, 1.1], &betas).unwrap();
        let r = burchard_equality_probe(&sets, &b, &McConfig::new(100_000, 7)).unwrap();
        assert!(r.normalized_gap.value.abs() < 3.0 * r.normalized_gap.stderr + 1e-12, "{r:?}");
    }

    #[test]
    fn square_substitution_opens_a_gap() {
        let b = CoefficientMatrix::from_extra_rows(1, vec![vec![0.4, 0.6]]).unwrap();
        let betas = [DVector::zeros(2), DVector::zeros(2)];
        let mut sets = burchard_family(&b, &shape(), &[0.8, 1.0, 1.1], &betas).unwrap();
        let side = sets[0].volume().sqrt();
        sets[0] = IndicatorSet::cube(&[-side / 2.0; 2], &[side / 2.0; 2]).unwrap();
        let r = burchard_equality_probe(&sets, &b, &McConfig::new(100_000, 7)).unwrap();
        assert!(r.normalized_gap.value > 3.0 * r.normalized_gap.stderr, "{r:?}");
    }

    #[test]
    fn centred_balls_are_their_own_rearrangement() {
        let b = CoefficientMatrix::from_extra_rows(1, vec![vec![0.5, 0.5]]).unwrap();
        let sets: Vec<_> = [1.0, 1.2, 0.9].iter().map(|&r| IndicatorSet::centered_ball(2, r).unwrap()).collect();
        let r = burchard_equality_probe(&sets, &b, &McConfig::new(10_000, 1)).unwrap();
        assert_eq!(r.normalized_gap.value, 0.0);
    }
}
