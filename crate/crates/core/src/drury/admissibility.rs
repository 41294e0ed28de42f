use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::forms::TxPlan;
use super::IndicatorSet;
use crate::error::{Error, Result};
use crate::estimate::{mc_joint, Estimate, McConfig, Rng};
use crate::fields::Field;
use crate::geometry::CoefficientMatrix;

/// Radii `ρ_0..ρ_m`, optionally with the coefficients they are tested
/// against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusFamily {
    radii: Vec<f64>,
    coefficients: Option<CoefficientMatrix>,
}

impl RadiusFamily {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Parameter(format!("radii must be positive and finite, got {radii:?}")));
        }
        Ok(RadiusFamily { radii, coefficients: None })
    }

    pub fn with_coefficients(mut self, b: CoefficientMatrix) -> Result<Self> {
        if b.rows.len() != self.radii.len() {
            return Err(Error::Dimension(format!(
                "{} radii for {} coefficient rows",
                self.radii.len(),
                b.rows.len()
            )));
        }
        self.coefficients = Some(b);
        Ok(self)
    }

    /// Star radii of a family of sets.
    pub fn of_sets(sets: &[IndicatorSet]) -> Result<Self> {
        Self::new(sets.iter().map(|s| s.star_radius()).collect())
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn coefficients(&self) -> Option<&CoefficientMatrix> {
        self.coefficients.as_ref()
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let mut out = Self::new(self.radii.iter().map(|r| r * lambda).collect())?;
        out.coefficients = self.coefficients.clone();
        Ok(out)
    }
}

/// `Σ_{j≠i} ρ_j > ρ_i` for every `i`.
pub fn strict_admissibility(rho: &RadiusFamily) -> bool {
    let r = &rho.radii;
    (0..r.len()).all(|i| r.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum::<f64>() > r[i])
}

/// Verdict of the two permissibility clauses, index by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermissibilityReport {
    pub permissible: bool,
    /// Clause A for `i = 0..=k+1`.
    pub clause_a: Vec<bool>,
    /// Clause B for `i = k+2..=n`.
    pub clause_b: Vec<bool>,
    /// Indices (into `0..=n`) where a clause fails.
    pub failing: Vec<usize>,
}

/// Clause A: the weighted radii `|b_{k+1,i}| ρ_i` (with `b_{k+1,k+1} = 1`),
/// `i ≤ k+1`, are strictly admissible. Clause B: for `i ≥ k+2`,
/// `Σ_{j≤k} |b_ij| ρ_j < ρ_i`.
pub fn permissibility(rho: &RadiusFamily) -> Result<PermissibilityReport> {
    let b = rho
        .coefficients
        .as_ref()
        .ok_or_else(|| Error::Parameter("permissibility needs coefficients".into()))?;
    let k = b.k;
    let n = b.n;
    let r = &rho.radii;
    if r.len() != n + 1 || n < k + 1 {
        return Err(Error::Dimension(format!("need n+1 = {} radii with n > k, got {}", n + 1, r.len())));
    }
    let weight = |i: usize| if i == k + 1 { 1.0 } else { b.rows[k + 1][i].abs() };
    let clause_a: Vec<bool> = (0..=k + 1)
        .map(|i| {
            let others: f64 = (0..=k + 1).filter(|&j| j != i).map(|j| weight(j) * r[j]).sum();
            others > weight(i) * r[i]
        })
        .collect();
    let clause_b: Vec<bool> = (k + 2..=n)
        .map(|i| (0..=k).map(|j| b.rows[i][j].abs() * r[j]).sum::<f64>() < r[i])
        .collect();
    let failing: Vec<usize> = clause_a
        .iter()
        .chain(&clause_b)
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i)
        .collect();
    Ok(PermissibilityReport { permissible: failing.is_empty(), clause_a, clause_b, failing })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    /// `Tx(E_0*, ..., E_n*)`.
    pub full: Estimate,
    /// `Tx(E_0*, ..., E_{k+1}*, R^d, ..., R^d)`.
    pub truncated: Estimate,
    /// `truncated - full` (nonnegative; zero when the trailing sets are redundant).
    pub difference: Estimate,
    pub permissibility: PermissibilityReport,
    /// `difference` is within three standard errors of zero.
    pub redundant: bool,
}

/// Compares `Tx` on the rearranged sets with the form that drops every factor
/// past `k+1`, on common samples.
pub fn redundancy_check(sets: &[IndicatorSet], b: &CoefficientMatrix, cfg: &McConfig) -> Result<RedundancyReport> {
    cfg.validate()?;
    let k = b.k;
    let stars: Vec<IndicatorSet> = sets.iter().map(|s| s.star()).collect();
    let fields: Vec<Field> = stars.iter().cloned().map(Field::indicator).collect();
    let plan = TxPlan::new(&fields, b)?;
    let permissibility = if stars.iter().any(|s| s.is_empty()) {
        PermissibilityReport { permissible: false, clause_a: vec![], clause_b: vec![], failing: vec![] }
    } else {
        permissibility(&RadiusFamily::of_sets(&stars)?.with_coefficients(b.clone())?)?
    };
    let m = mc_joint(cfg, 2, |rng, out| {
        let seed: u64 = rng.random();
        let mut r1 = Rng::seed_from_u64(seed);
        let mut r2 = r1.clone();
        out[0] = plan.as_ref().map_or(0.0, |p| p.sample(&mut r1, usize::MAX));
        out[1] = plan.as_ref().map_or(0.0, |p| p.sample(&mut r2, k + 2));
    });
    let full = m.marginal(0, cfg.seed);
    let truncated = m.marginal(1, cfg.seed);
    let difference = Estimate::with_meta(m.mean[1] - m.mean[0], m.delta_stderr(&[-1.0, 1.0]), m.count, cfg.seed);
    let redundant = difference.value.abs() <= 3.0 * difference.stderr;
    Ok(RedundancyReport { full, truncated, difference, permissibility, redundant })
}
