use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::drury::IndicatorSet;
use crate::error::{Error, Result};
use crate::estimate::{mc_mean, seeded_rng, McConfig, Rng};
use crate::fields::{Field, Support};
use crate::geometry::MAX_DIM;

/// A measurable set that can be tested for membership and sampled uniformly.
pub trait Region: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    fn sample(&self, rng: &mut Rng, out: &mut [f64]) -> Result<()>;
}

impl Region for IndicatorSet {
    fn dim(&self) -> usize {
        IndicatorSet::dim(self)
    }

    fn contains(&self, x: &[f64]) -> bool {
        IndicatorSet::contains(self, x)
    }

    fn sample(&self, rng: &mut Rng, out: &mut [f64]) -> Result<()> {
        self.sample_uniform(rng, out)
    }
}

/// `{x : f(x) > level}`, sampled by rejection from a bounding box.
#[derive(Clone, Debug)]
pub struct SuperlevelSet {
    field: Field,
    level: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

const REJECTION_TRIES: usize = 1 << 20;

impl SuperlevelSet {
    pub fn new(field: Field, level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return Err(Error::InfiniteMeasure);
        }
        let n = field.n();
        let (lo, hi) = match field.support() {
            Support::Empty => return Err(Error::EmptySet),
            Support::Unbounded => return Err(Error::InfiniteMeasure),
            Support::Compact { lo, hi } => (lo, hi),
            Support::Decay { center, scale, .. } => {
                let member = |x: &[f64]| field.eval(x) > level;
                let (lo, hi) = grow_box(n, center.as_slice(), scale, &member, 0x5e7)?;
                (lo, hi)
            }
        };
        let set = SuperlevelSet { field, level, lo, hi };
        let mut rng = seeded_rng(0x5e7_5a3);
        let mut x = vec![0.0; n];
        set.sample(&mut rng, &mut x)?;
        Ok(set)
    }

    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }
}

impl Region for SuperlevelSet {
    fn dim(&self) -> usize {
        self.field.n()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.field.eval(x) > self.level
    }

    fn sample(&self, rng: &mut Rng, out: &mut [f64]) -> Result<()> {
        for _ in 0..REJECTION_TRIES {
            for (o, (a, b)) in out.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
                *o = a + (b - a) * rng.random::<f64>();
            }
            if self.contains(out) {
                return Ok(());
            }
        }
        Err(Error::EmptySet)
    }
}

/// Box about `center` that contains every sampled member of a set, found by
/// doubling from `scale` until the outer shell is empty and then shrinking to
/// the members' bounding box with a 10% margin.
pub(super) fn grow_box(
    n: usize,
    center: &[f64],
    scale: f64,
    member: &dyn Fn(&[f64]) -> bool,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = seeded_rng(seed);
    let mut half = scale.max(1e-12);
    let mut x = [0.0; MAX_DIM];
    for _ in 0..60 {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut touches = false;
        for _ in 0..8192 {
            for a in 0..n {
                x[a] = center[a] + half * (2.0 * rng.random::<f64>() - 1.0);
            }
            if member(&x[..n]) {
                for a in 0..n {
                    lo[a] = lo[a].min(x[a]);
                    hi[a] = hi[a].max(x[a]);
                    touches |= (x[a] - center[a]).abs() > 0.9 * half;
                }
            }
        }
        if touches {
            half *= 2.0;
            continue;
        }
        if lo[0].is_finite() {
            for a in 0..n {
                let (m, w) = ((lo[a] + hi[a]) / 2.0, (hi[a] - lo[a]) / 2.0 * 1.1 + 1e-3 * half);
                lo[a] = (m - w).max(center[a] - half);
                hi[a] = (m + w).min(center[a] + half);
            }
            return Ok((lo, hi));
        }
        half /= 4.0;
    }
    Err(Error::EmptySet)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Fraction of pairs whose segments stay in the set.
    pub fraction: f64,
    pub stderr: f64,
    pub pairs: usize,
    pub segment_points: usize,
    pub delta: f64,
    pub seed: u64,
}

/// Fraction of member pairs `(x, y)` for which at least `1 - delta` of
/// `segment_points` random points of `[x, y]` are members too.
pub fn almost_convexity_probe<R: Region>(
    region: &R,
    pairs: usize,
    segment_points: usize,
    delta: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    if segment_points == 0 || !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter("need segment points and 0 <= delta < 1".into()));
    }
    let n = region.dim();
    let cfg = McConfig::new(pairs, seed);
    cfg.validate()?;
    let allowed = (delta * segment_points as f64).floor() as usize;
    let est = mc_mean(&cfg, |rng| {
        let mut x = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        let mut z = [0.0; MAX_DIM];
        if region.sample(rng, &mut x[..n]).is_err() || region.sample(rng, &mut y[..n]).is_err() {
            return f64::NAN;
        }
        let mut misses = 0;
        for _ in 0..segment_points {
            let t: f64 = rng.random();
            for a in 0..n {
                z[a] = x[a] + t * (y[a] - x[a]);
            }
            if !region.contains(&z[..n]) {
                misses += 1;
            }
        }
        if misses <= allowed {
            1.0
        } else {
            0.0
        }
    });
    if !est.is_finite() {
        return Err(Error::EmptySet);
    }
    Ok(ConvexityReport { fraction: est.value, stderr: est.stderr, pairs, segment_points, delta, seed })
}
