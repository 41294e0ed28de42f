//! The multilinear forms `Tx` and `I` and the rearrangement gap.

use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};
use crate::estimate::{mc_joint, mc_mean, Estimate, McConfig, Rng};
use crate::fields::{full_rearrange, Field, Proposal};
use crate::geometry::{CoefficientMatrix, MAX_DIM};

use super::IndicatorSet;

/// Validated inputs of one `Tx` evaluation.
pub(crate) struct TxPlan<'a> {
    pub fields: &'a [Field],
    pub b: &'a CoefficientMatrix,
    pub proposals: Vec<Proposal>,
    pub d: usize,
}

impl<'a> TxPlan<'a> {
    /// `None` when some factor vanishes identically, so the form is 0.
    pub fn new(fields: &'a [Field], b: &'a CoefficientMatrix) -> Result<Option<Self>> {
        let k = b.k;
        if fields.len() != b.rows.len() {
            return Err(Error::Dimension(format!(
                "{} slice functions for {} coefficient rows",
                fields.len(),
                b.rows.len()
            )));
        }
        let d = fields.first().map(|f| f.n()).unwrap_or(0);
        if d == 0 || fields.iter().any(|f| f.n() != d) {
            return Err(Error::Dimension("slice functions must share one dimension".into()));
        }
        if b.rows.iter().any(|r| r.len() != k + 1) {
            return Err(Error::Dimension("coefficient rows have the wrong length".into()));
        }
        if fields.iter().any(|f| f.is_zero()) {
            return Ok(None);
        }
        let mut proposals = Vec::with_capacity(k + 1);
        for f in &fields[..=k] {
            match Proposal::for_field(f) {
                Ok(p) => proposals.push(p),
                Err(Error::ZeroNorm) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(TxPlan { fields, b, proposals, d }))
    }

    /// One importance-weighted sample. `skip_from` drops the factors with
    /// index `>= skip_from` (used to compare against truncated forms).
    pub fn sample(&self, rng: &mut Rng, skip_from: usize) -> f64 {
        let k = self.b.k;
        let d = self.d;
        let mut vs = [[0.0; MAX_DIM]; MAX_DIM];
        let mut w = 1.0;
        for j in 0..=k {
            let q = self.proposals[j].sample(rng, &mut vs[j][..d]);
            let fv = self.fields[j].eval(&vs[j][..d]);
            if fv == 0.0 || !(q > 0.0) {
                return 0.0;
            }
            w *= fv / q;
        }
        w * self.trailing(&vs, skip_from)
    }

    /// Product of the factors `k+1..skip_from` at the anchors `vs`.
    fn trailing(&self, vs: &[[f64; MAX_DIM]; MAX_DIM], skip_from: usize) -> f64 {
        let k = self.b.k;
        let d = self.d;
        let mut w = 1.0;
        let mut x = [0.0; MAX_DIM];
        for i in k + 1..self.fields.len().min(skip_from) {
            let row = &self.b.rows[i];
            for (a, xa) in x.iter_mut().enumerate().take(d) {
                *xa = (0..=k).map(|j| row[j] * vs[j][a]).sum();
            }
            let fv = self.fields[i].eval(&x[..d]);
            if fv == 0.0 {
                return 0.0;
            }
            w *= fv;
        }
        w
    }
}

/// `Tx(F_0, ..., F_n) = ∫ ∏_i F_i(Σ_j b_ij v_j) dv_0 ... dv_k`.
///
/// The anchor variables are drawn from proposals fitted to `F_0..F_k`, so the
/// estimator is exact for sets when `n = k` and has bounded weights whenever
/// the anchor factors are bounded with compact support.
pub fn multilinear_form_tx(fields: &[Field], b: &CoefficientMatrix, cfg: &McConfig) -> Result<Estimate> {
    cfg.validate()?;
    let Some(plan) = TxPlan::new(fields, b)? else {
        return Ok(Estimate::with_meta(0.0, 0.0, cfg.samples as u64, cfg.seed));
    };
    let est = mc_mean(cfg, |rng| plan.sample(rng, usize::MAX));
    if !est.is_finite() {
        return Err(Error::NonIntegrable("multilinear form estimate is not finite".into()));
    }
    Ok(est)
}

pub fn multilinear_form_tx_sets(sets: &[IndicatorSet], b: &CoefficientMatrix, cfg: &McConfig) -> Result<Estimate> {
    let fields: Vec<Field> = sets.iter().cloned().map(Field::indicator).collect();
    multilinear_form_tx(&fields, b, cfg)
}

/// Joint estimate of `(Tx(first), Tx(second))` with common random numbers:
/// each sample reseeds two identical streams, one per form.
pub(crate) fn paired_tx(
    first: &[Field],
    second: &[Field],
    b: &CoefficientMatrix,
    cfg: &McConfig,
) -> Result<crate::estimate::CoMoments> {
    cfg.validate()?;
    let p1 = TxPlan::new(first, b)?;
    let p2 = TxPlan::new(second, b)?;
    let m = mc_joint(cfg, 2, |rng, out| {
        let seed: u64 = rng.random();
        let mut r1 = Rng::seed_from_u64(seed);
        let mut r2 = r1.clone();
        out[0] = p1.as_ref().map_or(0.0, |p| p.sample(&mut r1, usize::MAX));
        out[1] = p2.as_ref().map_or(0.0, |p| p.sample(&mut r2, usize::MAX));
    });
    if m.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIntegrable("multilinear form estimate is not finite".into()));
    }
    Ok(m)
}

/// `Tx(F_0*, ..., F_n*) - Tx(F_0, ..., F_n)`, with common random numbers.
pub fn bll_gap(fields: &[Field], b: &CoefficientMatrix, cfg: &McConfig) -> Result<Estimate> {
    let stars = fields.iter().map(full_rearrange).collect::<Result<Vec<_>>>()?;
    let m = paired_tx(fields, &stars, b, cfg)?;
    Ok(Estimate::with_meta(m.mean[1] - m.mean[0], m.delta_stderr(&[-1.0, 1.0]), m.count, cfg.seed))
}

/// The `Tx` instance equal to `I(E_0, ..., E_m)`: anchors `x_1..x_m` and a
/// single extra row `(1, ..., 1)` carrying `E_0`.
pub fn indicator_form_coefficients(m: usize) -> Result<CoefficientMatrix> {
    if m < 2 {
        return Err(Error::Parameter(format!("I needs at least three sets, got {}", m + 1)));
    }
    let row = vec![1.0; m];
    CoefficientMatrix::from_extra_rows(m - 1, vec![row])
}

/// `I(E_0, ..., E_m) = ∫ ∏_{i≥1} 1_{E_i}(x_i) 1_{E_0}(Σ_{i≥1} x_i) dx`, the
/// form whose equality cases have centres with `Σ_{i≥1} c_i = c_0`.
pub fn indicator_form_i(sets: &[IndicatorSet], cfg: &McConfig) -> Result<Estimate> {
    let m = sets.len().saturating_sub(1);
    let b = indicator_form_coefficients(m)?;
    let mut reordered: Vec<IndicatorSet> = sets[1..].to_vec();
    reordered.push(sets[0].clone());
    multilinear_form_tx_sets(&reordered, &b, cfg)
}

/// Exact `Tx` for `k = 1` on the line with every factor the indicator of an
/// interval `[lo, hi]`.
///
/// For fixed `v_0` the admissible `v_1` form an interval whose end points are
/// piecewise linear in `v_0`; integrating between all pairwise crossings of
/// those lines is exact.
pub fn tx_intervals_exact(intervals: &[(f64, f64)], b: &CoefficientMatrix) -> Result<f64> {
    if b.k != 1 || intervals.len() != b.rows.len() {
        return Err(Error::Dimension("exact oracle needs k = 1 and one interval per row".into()));
    }
    if intervals.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::Parameter("interval with lo > hi".into()));
    }
    // Constraints lo <= c0 v0 + c1 v1 <= hi, for rows with c1 != 0, become
    // bounds on v1 that are linear in v0; rows with c1 = 0 gate v0 directly.
    let mut lower: Vec<(f64, f64)> = vec![(intervals[1].0, 0.0)];
    let mut upper: Vec<(f64, f64)> = vec![(intervals[1].1, 0.0)];
    let (mut v0_lo, mut v0_hi) = intervals[0];
    let mut cuts = Vec::new();
    for (i, &(lo, hi)) in intervals.iter().enumerate().skip(2) {
        let (c0, c1) = (b.rows[i][0], b.rows[i][1]);
        if c1 == 0.0 {
            if c0 == 0.0 {
                if !(lo <= 0.0 && 0.0 <= hi) {
                    return Ok(0.0);
                }
                continue;
            }
            let (a, z) = if c0 > 0.0 { (lo / c0, hi / c0) } else { (hi / c0, lo / c0) };
            v0_lo = v0_lo.max(a);
            v0_hi = v0_hi.min(z);
            continue;
        }
        // v1 in [(lo - c0 v0)/c1, (hi - c0 v0)/c1], flipped when c1 < 0.
        let l1 = (lo / c1, -c0 / c1);
        let h1 = (hi / c1, -c0 / c1);
        if c1 > 0.0 {
            lower.push(l1);
            upper.push(h1);
        } else {
            lower.push(h1);
            upper.push(l1);
        }
    }
    if v0_hi <= v0_lo {
        return Ok(0.0);
    }
    let lines: Vec<(f64, f64)> = lower.iter().chain(&upper).copied().collect();
    cuts.push(v0_lo);
    cuts.push(v0_hi);
    for a in 0..lines.len() {
        for c in a + 1..lines.len() {
            let ds = lines[a].1 - lines[c].1;
            if ds != 0.0 {
                let t = (lines[c].0 - lines[a].0) / ds;
                if t > v0_lo && t < v0_hi {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    let len_at = |v0: f64| -> f64 {
        let lo = lower.iter().map(|(a, s)| a + s * v0).fold(f64::NEG_INFINITY, f64::max);
        let hi = upper.iter().map(|(a, s)| a + s * v0).fold(f64::INFINITY, f64::min);
        (hi - lo).max(0.0)
    };
    Ok(cuts.windows(2).map(|w| (w[1] - w[0]) * len_at(0.5 * (w[0] + w[1]))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::seeded_rng;
    use approx::assert_abs_diff_eq;

    fn unit() -> IndicatorSet {
        IndicatorSet::interval(-0.5, 0.5).unwrap()
    }

    fn row(b: &[f64]) -> CoefficientMatrix {
        CoefficientMatrix::from_extra_rows(1, vec![b.to_vec()]).unwrap()
    }

    #[test]
    fn tx_on_unit_intervals() {
        let cfg = McConfig::new(200_000, 1);
        let sets = vec![unit(), unit(), unit()];
        let mid = multilinear_form_tx_sets(&sets, &row(&[0.5, 0.5]), &cfg).unwrap();
        assert_eq!(mid.value, 1.0);
        let diff = multilinear_form_tx_sets(&sets, &row(&[1.0, -1.0]), &cfg).unwrap();
        assert!(diff.sigma_from(0.75) < 3.0, "{diff:?}");
        let z = vec![Field::indicator(unit()), Field::zero(1), Field::indicator(unit())];
        assert_eq!(multilinear_form_tx(&z, &row(&[1.0, -1.0]), &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn exact_oracle_values() {
        let iv = [(-0.5, 0.5); 3];
        assert_abs_diff_eq!(tx_intervals_exact(&iv, &row(&[0.5, 0.5])).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(tx_intervals_exact(&iv, &row(&[1.0, -1.0])).unwrap(), 0.75, epsilon = 1e-14);
        // huge third set: product of lengths
        let wide = [(0.0, 2.0), (-1.0, 0.5), (-100.0, 100.0)];
        assert_abs_diff_eq!(tx_intervals_exact(&wide, &row(&[1.0, -1.0])).unwrap(), 3.0, epsilon = 1e-12);
        // the row with c1 = 0 gates v0 only
        let gate = [(0.0, 2.0), (0.0, 1.0), (0.0, 1.0)];
        assert_abs_diff_eq!(tx_intervals_exact(&gate, &row(&[1.0, 0.0])).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_oracle_matches_mc_on_random_instances() {
        let mut rng = seeded_rng(6);
        for s in 0..10 {
            let iv: Vec<(f64, f64)> = (0..4)
                .map(|_| {
                    let c = rng.random::<f64>() - 0.5;
                    let w = 0.3 + rng.random::<f64>();
                    (c - w, c + w)
                })
                .collect();
            let b = CoefficientMatrix::from_extra_rows(
                1,
                vec![vec![rng.random::<f64>() * 2.0 - 1.0, 0.7], vec![0.3, rng.random::<f64>() * 2.0 - 1.0]],
            )
            .unwrap();
            let exact = tx_intervals_exact(&iv, &b).unwrap();
            let sets: Vec<_> = iv.iter().map(|&(a, z)| IndicatorSet::interval(a, z).unwrap()).collect();
            let mc = multilinear_form_tx_sets(&sets, &b, &McConfig::new(100_000, s)).unwrap();
            assert!((mc.value - exact).abs() <= 4.0 * mc.stderr + 1e-12, "{mc:?} vs {exact}");
        }
    }

    #[test]
    fn indicator_form_examples() {
        let cfg = McConfig::new(100_000, 3);
        let i = indicator_form_i(&[unit(), unit(), unit()], &cfg).unwrap();
        assert!(i.sigma_from(0.75) < 3.0);
        let big = IndicatorSet::interval(-50.0, 50.0).unwrap();
        let e1 = IndicatorSet::interval(0.0, 2.0).unwrap();
        let e2 = IndicatorSet::interval(1.0, 1.5).unwrap();
        assert_eq!(indicator_form_i(&[big, e1, e2], &cfg).unwrap().value, 1.0);
        let empty = IndicatorSet::Empty { dim: 1 };
        assert_eq!(indicator_form_i(&[unit(), empty, unit()], &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn bll_gap_signs() {
        let cfg = McConfig::new(50_000, 5);
        let b = row(&[1.0, -1.0]);
        let centred: Vec<Field> = (0..3).map(|_| Field::indicator(unit())).collect();
        let g0 = bll_gap(&centred, &b, &cfg).unwrap();
        assert!(g0.value.abs() <= 3.0 * g0.stderr + 1e-12, "{g0:?}");
        let shifted: Vec<Field> = [0.0, 0.4, -0.3]
            .iter()
            .map(|&c| Field::indicator(IndicatorSet::interval(c - 0.5, c + 0.5).unwrap()))
            .collect();
        let g = bll_gap(&shifted, &b, &cfg).unwrap();
        let exact = 0.75 - tx_intervals_exact(&[(-0.5, 0.5), (-0.1, 0.9), (-0.8, 0.2)], &b).unwrap();
        assert!(exact > 0.0);
        assert!(g.value > 3.0 * g.stderr && g.sigma_from(exact) < 3.0, "{g:?} vs {exact}");
    }
}
