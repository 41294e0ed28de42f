use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use kplane::drury::{
    bll_gap, burchard_equality_probe, burchard_family, drury_identity_check, permissibility, strict_admissibility,
    DruryConfig,
};
use kplane::estimate::seeded_rng;
use kplane::extremal::{
    almost_convexity_probe, bump_ring, ellipsoid_slice_fit, perturbation_test, ratio, shared_geometry_check,
    symmetrize_iterate, StepKind, SuperlevelSet, SymmetrizeConfig,
};
use kplane::fields::{endpoint_exponents, full_rearrange, rasterize_centered, slice_rearrange};
use kplane::geometry::OrthonormalFrame;
use kplane::transforms::{
    elliptic_norm_check, kplane_transform, lq_sharp_norm, lq_transform_norm, EllipticConfig, NormConfig,
    OffsetSampling, QuadConfig,
};
use kplane::{AffinePlane, CoefficientMatrix, Field, GridField, IndicatorSet, McConfig, RadiusFamily};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::spec::{parse_field, parse_list, parse_set};
use crate::{CliError, Command, Mode, Output, PlaneArgs, RunConfig};

type Res<T> = Result<T, CliError>;

fn to_map<T: Serialize>(t: &T) -> Map<String, Value> {
    match serde_json::to_value(t) {
        Ok(Value::Object(m)) => m,
        Ok(other) => Map::from_iter([("result".to_string(), other)]),
        Err(e) => Map::from_iter([("serialization_error".to_string(), Value::String(e.to_string()))]),
    }
}

fn value_of<T: Serialize + ?Sized>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn mc(run: &RunConfig) -> McConfig {
    let c = McConfig::new(run.samples, run.seed);
    match run.workers {
        Some(w) => c.with_workers(w),
        None => c,
    }
}

fn positive(name: &str, v: f64) -> Res<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("--{name} must be positive, got {v}")))
    }
}

fn norm_config(run: &RunConfig, planes: &PlaneArgs) -> Res<NormConfig> {
    let mut c = NormConfig::new(mc(run));
    if let Some(p) = planes.inner_points {
        c = c.with_inner_points(p);
    }
    if let Some(s) = planes.offset_scale {
        c = c.with_offset_scale(positive("offset-scale", s)?);
    }
    if let Some(r) = planes.truncation {
        c.offsets = OffsetSampling::Ball { radius: positive("truncation", r)? };
    }
    Ok(c)
}

/// Rows `k+1..=n` of a coefficient matrix from a flat list.
fn coefficients(flat: &[f64], n: usize, k: usize) -> Res<CoefficientMatrix> {
    if flat.len() != (n - k) * (k + 1) {
        return Err(CliError::config(format!(
            "need (n-k)(k+1) = {} coefficients for n = {n}, k = {k}, got {}",
            (n - k) * (k + 1),
            flat.len()
        )));
    }
    Ok(CoefficientMatrix::from_extra_rows(k, flat.chunks(k + 1).map(<[f64]>::to_vec).collect())?)
}

fn write_grid(path: &Path, g: &GridField) -> Res<()> {
    let file = File::create(path).map_err(|e| CliError::config(format!("cannot create {}: {e}", path.display())))?;
    g.write_binary(BufWriter::new(file))?;
    Ok(())
}

fn json_out(value: Option<(f64, f64)>, details: Map<String, Value>, resolved: Option<Value>) -> Res<Output> {
    Ok(Output::Json { value, details, resolved })
}

#[derive(Deserialize)]
struct PermissibleInput {
    radii: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

pub(crate) fn dispatch(run: &RunConfig, cmd: &Command) -> Res<Output> {
    let (n, k) = (run.n, run.k);
    match cmd {
        Command::Transform { field, dir, through } => {
            let f = parse_field(field, n, k)?;
            let frame = match dir {
                Some(d) => {
                    let v = parse_list(d)?;
                    if v.len() != n * k {
                        return Err(CliError::config(format!("--dir needs n*k = {} numbers", n * k)));
                    }
                    OrthonormalFrame::from_span(&DMatrix::from_column_slice(n, k, &v))?
                }
                None => OrthonormalFrame::coordinate(n, k)?,
            };
            let point = match through {
                Some(t) => parse_list(t)?,
                None => vec![0.0; n],
            };
            if point.len() != n {
                return Err(CliError::config(format!("--through needs {n} numbers")));
            }
            let plane = AffinePlane::through(frame, &DVector::from_vec(point));
            let quad = QuadConfig { points: run.samples };
            let t = kplane_transform(&f, &plane, &quad)?;
            let details = Map::from_iter([("plane".to_string(), value_of(&plane))]);
            json_out(Some((t.value, t.stderr)), details, Some(value_of(&quad)))
        }
        Command::Norm { field, planes } | Command::SharpNorm { field, planes } => {
            let f = parse_field(field, n, k)?;
            let cfg = norm_config(run, planes)?;
            let est = match cmd {
                Command::Norm { .. } => lq_transform_norm(&f, k, &cfg)?,
                _ => lq_sharp_norm(&f, k, &cfg)?,
            };
            let (_, q) = endpoint_exponents(n, k);
            json_out(Some((est.value, est.stderr)), Map::from_iter([("q".into(), json!(q))]), Some(value_of(&cfg)))
        }
        Command::EllipticCheck { field, per_angle, inner_points } => {
            let f = parse_field(field, n, k)?;
            let mut cfg = EllipticConfig::new(mc(run));
            cfg.per_angle = per_angle.unwrap_or(cfg.per_angle);
            cfg.inner_points = inner_points.unwrap_or(cfg.inner_points);
            let r = elliptic_norm_check(&f, k, &cfg)?;
            json_out(Some((r.constant.value, r.constant.stderr)), to_map(&r), Some(value_of(&cfg)))
        }
        Command::DruryCheck { field, inner_points, threshold } => {
            let f = parse_field(field, n, k)?;
            let mut cfg = DruryConfig::new(mc(run));
            cfg.inner_points = inner_points.unwrap_or(cfg.inner_points);
            if let Some(t) = threshold {
                cfg.threshold = positive("threshold", *t)?;
            }
            let r = drury_identity_check(&f, k, &cfg)?;
            let value = r.constant.map(|c| (c.value, c.stderr));
            json_out(value, to_map(&r), Some(value_of(&cfg)))
        }
        Command::BllGap { fields, coeffs } => {
            let b = coefficients(&parse_list(coeffs)?, n, k)?;
            if fields.len() != n + 1 {
                return Err(CliError::config(format!("need n+1 = {} fields, got {}", n + 1, fields.len())));
            }
            let fs: Vec<Field> = fields.iter().map(|s| parse_field(s, n - k, k)).collect::<Res<_>>()?;
            let g = bll_gap(&fs, &b, &mc(run))?;
            json_out(Some((g.value, g.stderr)), Map::new(), Some(value_of(&b)))
        }
        Command::BurchardProbe { sets, coeffs, shape, alphas, betas, square } => {
            let d = n - k;
            let b = coefficients(&parse_list(coeffs)?, n, k)?;
            let mut family = if sets.is_empty() {
                let q = match shape {
                    Some(s) => {
                        let v = parse_list(s)?;
                        if v.len() != d * d {
                            return Err(CliError::config(format!("--shape needs {} numbers", d * d)));
                        }
                        DMatrix::from_row_slice(d, d, &v)
                    }
                    None => DMatrix::identity(d, d),
                };
                let a = match alphas {
                    Some(s) => parse_list(s)?,
                    None => vec![1.0; k + 2],
                };
                let c = match betas {
                    Some(s) => parse_list(s)?,
                    None => vec![0.0; (k + 1) * d],
                };
                if c.len() != (k + 1) * d {
                    return Err(CliError::config(format!("--betas needs {} numbers", (k + 1) * d)));
                }
                let c: Vec<DVector<f64>> = c.chunks(d).map(DVector::from_column_slice).collect();
                burchard_family(&b, &q, &a, &c)?
            } else {
                if sets.len() != n + 1 {
                    return Err(CliError::config(format!("need n+1 = {} sets, got {}", n + 1, sets.len())));
                }
                sets.iter().map(|s| parse_set(s, d)).collect::<Res<_>>()?
            };
            if let Some(i) = *square {
                let set = family
                    .get(i)
                    .ok_or_else(|| CliError::config(format!("--square {i} is out of range 0..={n}")))?;
                let side = set.volume().powf(1.0 / d as f64);
                let c = set.centroid().unwrap_or_else(|| DVector::zeros(d));
                let lo: Vec<f64> = c.iter().map(|x| x - side / 2.0).collect();
                let hi: Vec<f64> = c.iter().map(|x| x + side / 2.0).collect();
                family[i] = IndicatorSet::cube(&lo, &hi)?;
            }
            let r = burchard_equality_probe(&family, &b, &mc(run))?;
            let mut details = to_map(&r);
            details.insert("sets".into(), value_of(&family));
            json_out(Some((r.normalized_gap.value, r.normalized_gap.stderr)), details, Some(value_of(&b)))
        }
        Command::Permissible { radii, coeffs, input } => {
            let (radii, rows) = match (input, radii, coeffs) {
                (Some(path), None, None) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                    let p: PermissibleInput =
                        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                    (p.radii, p.coeffs)
                }
                (None, Some(r), Some(c)) => {
                    let flat = parse_list(c)?;
                    if flat.len() % (k + 1) != 0 {
                        return Err(CliError::config(format!("--coeffs needs a multiple of k+1 = {} numbers", k + 1)));
                    }
                    (parse_list(r)?, flat.chunks(k + 1).map(<[f64]>::to_vec).collect())
                }
                _ => return Err(CliError::config("give either --input or both --radii and --coeffs")),
            };
            let b = CoefficientMatrix::from_extra_rows(k, rows)?;
            let family = RadiusFamily::new(radii)?.with_coefficients(b)?;
            let r = permissibility(&family)?;
            let mut details = to_map(&r);
            details.insert("strictly_admissible".into(), json!(strict_admissibility(&family)));
            json_out(None, details, Some(value_of(&family)))
        }
        Command::Ratio { field, planes } => {
            let f = parse_field(field, n, k)?;
            let cfg = norm_config(run, planes)?;
            let r = ratio(&f, k, &cfg)?;
            let mut details = to_map(&r);
            details.remove("ratio");
            json_out(Some((r.ratio.value, r.ratio.stderr)), details, Some(value_of(&cfg)))
        }
        Command::Perturb { field, perturbations, eps, bumps, distance, radius, planes } => {
            let f = parse_field(field, n, k)?;
            let cfg = norm_config(run, planes)?;
            let family: Vec<Field> = if perturbations.is_empty() {
                bump_ring(&vec![0.0; n], *distance, *radius, *bumps)?
            } else {
                perturbations.iter().map(|s| parse_field(s, n, k)).collect::<Res<_>>()?
            };
            let family: Vec<(f64, Field)> = family.into_iter().map(|g| (*eps, g)).collect();
            let r = perturbation_test(&f, &family, k, &cfg)?;
            // headline: the entry furthest above zero in standard errors
            let best = r
                .entries
                .iter()
                .max_by(|a, b| {
                    let s = |e: &kplane::extremal::PerturbationEntry| e.difference.value / e.difference.stderr;
                    s(a).total_cmp(&s(b))
                })
                .map(|e| (e.difference.value, e.difference.stderr));
            let mut details = to_map(&r);
            details.insert("max_sigma".into(), json!(r.max_sigma()));
            json_out(best, details, Some(value_of(&cfg)))
        }
        Command::Symmetrize { field, steps, schedule, h, half_width, json, grid_out } => {
            let f = parse_field(field, n, k)?;
            let mut cfg = SymmetrizeConfig::new(k, *steps, mc(run));
            if let Some(s) = schedule {
                cfg.schedule = s.split(',').map(|t| StepKind::parse(t.trim())).collect::<Result<_, _>>()?;
            }
            if let Some(h) = h {
                cfg.h = positive("h", *h)?;
            }
            if let Some(w) = half_width {
                cfg.half_width = positive("half-width", *w)?;
            }
            let (trace, last) = symmetrize_iterate(&f, &cfg)?;
            if let (Some(path), Some(g)) = (grid_out, last.as_grid()) {
                write_grid(path, g)?;
            }
            let e = trace.entries();
            let finite = e.iter().all(|t| t.ratio.is_finite() && t.distance.is_finite());
            if *json {
                let tail = e.last().expect("trace has an initial entry");
                let details = Map::from_iter([
                    ("initial_distance".to_string(), json!(e[0].distance)),
                    ("final_distance".to_string(), json!(tail.distance)),
                    ("rearrangement_drops".to_string(), json!(trace.rearrangement_drops(3.0))),
                    ("trace".to_string(), value_of(e)),
                ]);
                json_out(Some((tail.ratio.value, tail.ratio.stderr)), details, Some(value_of(&cfg)))
            } else {
                Ok(Output::Csv { body: trace.to_csv(), finite, resolved: value_of(&cfg) })
            }
        }
        Command::SliceFit { field, xp, levels, slices } => {
            let f = parse_field(field, n, k)?;
            let levels = parse_list(levels)?;
            let cfg = mc(run);
            let points: Vec<Vec<f64>> = match (slices, xp) {
                (Some(m), None) => {
                    let mut rng = seeded_rng(cfg.derive(101).seed);
                    (0..*m).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
                }
                (None, Some(x)) => vec![parse_list(x)?],
                (None, None) => vec![vec![0.0; k]],
                (Some(_), Some(_)) => return Err(CliError::config("give --xp or --slices, not both")),
            };
            if points.iter().any(|p| p.len() != k) {
                return Err(CliError::config(format!("--xp needs k = {k} numbers")));
            }
            if points.len() == 1 && levels.len() == 1 {
                let fit = ellipsoid_slice_fit(&f, &points[0], levels[0], &cfg)?;
                let mut details = to_map(&fit);
                details.insert("alpha".into(), json!(fit.alpha()));
                json_out(Some((fit.fraction.value, fit.fraction.stderr)), details, None)
            } else {
                let r = shared_geometry_check(&f, &points, &levels, &cfg)?;
                let worst = r
                    .fits
                    .iter()
                    .max_by(|a, b| a.fraction.value.total_cmp(&b.fraction.value))
                    .map(|fit| (fit.fraction.value, fit.fraction.stderr));
                json_out(worst, to_map(&r), None)
            }
        }
        Command::ConvexityProbe { field, level, set, segment_points, delta } => {
            let r = match set {
                Some(s) => {
                    let region = parse_set(s, n)?;
                    almost_convexity_probe(&region, run.samples, *segment_points, *delta, run.seed)?
                }
                None => {
                    let region = SuperlevelSet::new(parse_field(field, n, k)?, *level)?;
                    almost_convexity_probe(&region, run.samples, *segment_points, *delta, run.seed)?
                }
            };
            json_out(Some((r.fraction, r.stderr)), to_map(&r), None)
        }
        Command::Rearrange { field, mode, half_width, h, p, grid_out } => {
            let f = parse_field(field, n, k)?;
            let g = match f.as_grid() {
                Some(g) => g.clone(),
                None => rasterize_centered(&f, positive("half-width", *half_width)?, positive("h", *h)?)?,
            };
            let p = p.unwrap_or(endpoint_exponents(n, k).0);
            positive("p", p)?;
            let grid = Field::grid(g.clone());
            let out = match mode {
                Mode::Full => full_rearrange(&grid)?,
                Mode::Slice => slice_rearrange(&grid, k)?,
            };
            let r = out.as_grid().expect("rearranging a grid gives a grid");
            let mut before = g.values().to_vec();
            let mut after = r.values().to_vec();
            before.sort_by(f64::total_cmp);
            after.sort_by(f64::total_cmp);
            if let Some(path) = grid_out {
                write_grid(path, r)?;
            }
            let (nb, na) = (g.lp_norm(p), r.lp_norm(p));
            let details = Map::from_iter([
                ("p".to_string(), json!(p)),
                ("norm_before".to_string(), json!(nb)),
                ("norm_after".to_string(), json!(na)),
                ("multiset_preserved".to_string(), json!(before == after)),
                ("dims".to_string(), json!(r.dims())),
                ("max_value".to_string(), json!(r.max_value())),
            ]);
            json_out(Some((na, (na - nb).abs())), details, None)
        }
    }
}
