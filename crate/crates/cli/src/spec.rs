//! Parsing of field specifications and numeric lists given on the command line.
//!
//! ```text
//! builtin:extremizer[:c=1][:cx=0,0][:scale=1]
//! builtin:gaussian[:cx=..][:width=1][:amp=1]
//! builtin:bump[:cx=..][:r=1][:amp=1]
//! builtin:indicator:box:lo=..:hi=..
//! builtin:indicator:ball[:cx=..]:r=..
//! builtin:indicator:ellipsoid[:cx=..]:shape=q11,q12,..   (row-major)
//! builtin:zero
//! file:<path>                                             (binary grid, text if *.txt)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use kplane::fields::extremizer_field;
use kplane::{AffineMap, Field, GridField, IndicatorSet};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

/// Parses a comma-separated list of reals. Accepts scientific notation.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::config(format!("not a number: {t:?}"))))
        .collect()
}

/// A positive count, given either as an integer or in scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return if v > 0 { Ok(v) } else { Err("must be positive".into()) };
    }
    let v: f64 = s.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("not a positive integer: {s:?}"))
    }
}

/// Splits `key=value` options; a bare token is stored with an empty value.
fn options<'a>(parts: &[&'a str]) -> Result<BTreeMap<&'a str, &'a str>, CliError> {
    let mut out = BTreeMap::new();
    for p in parts {
        let (k, v) = p.split_once('=').unwrap_or((p, ""));
        if out.insert(k, v).is_some() {
            return Err(CliError::config(format!("option {k:?} given twice")));
        }
    }
    Ok(out)
}

struct Opts<'a> {
    map: BTreeMap<&'a str, &'a str>,
    dim: usize,
    spec: &'a str,
}

impl<'a> Opts<'a> {
    fn new(parts: &[&'a str], dim: usize, spec: &'a str, allowed: &[&str]) -> Result<Self, CliError> {
        let map = options(parts)?;
        if let Some(bad) = map.keys().find(|k| !allowed.contains(k)) {
            return Err(CliError::config(format!("unknown option {bad:?} in field spec {spec:?}")));
        }
        Ok(Opts { map, dim, spec })
    }

    fn scalar(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        match self.map.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::config(format!("{key}={v:?} is not a number in {:?}", self.spec))),
            None => default.ok_or_else(|| CliError::config(format!("field spec {:?} needs {key}=", self.spec))),
        }
    }

    fn vector(&self, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        let v = match self.map.get(key) {
            Some(v) => parse_list(v)?,
            None => default.ok_or_else(|| CliError::config(format!("field spec {:?} needs {key}=", self.spec)))?,
        };
        if v.len() != self.dim {
            return Err(CliError::config(format!(
                "{key} has {} entries in {:?}, expected {}",
                v.len(),
                self.spec,
                self.dim
            )));
        }
        Ok(v)
    }

    fn center(&self) -> Result<Vec<f64>, CliError> {
        self.vector("cx", Some(vec![0.0; self.dim]))
    }
}

/// Builds the field described by `spec` in R^`dim`. `k` fixes the exponent of
/// the extremizer profile.
pub fn parse_field(spec: &str, dim: usize, k: usize) -> Result<Field, CliError> {
    if let Some(path) = spec.strip_prefix("file:") {
        return read_grid(Path::new(path), dim).map(Field::grid);
    }
    let Some(rest) = spec.strip_prefix("builtin:") else {
        return read_grid(Path::new(spec), dim).map(Field::grid);
    };
    let parts: Vec<&str> = rest.split(':').collect();
    match parts[0] {
        "extremizer" => {
            let o = Opts::new(&parts[1..], dim, spec, &["c", "cx", "scale"])?;
            let c = o.scalar("c", Some(1.0))?;
            let s = o.scalar("scale", Some(1.0))?;
            if !(s > 0.0) {
                return Err(CliError::config("scale must be positive"));
            }
            let cx = DVector::from_vec(o.center()?);
            // phi(x) = (x - cx) / scale
            let phi = AffineMap::new(DMatrix::identity(dim, dim) / s, -cx / s)?;
            Ok(extremizer_field(dim, k, phi, c)?)
        }
        "gaussian" => {
            let o = Opts::new(&parts[1..], dim, spec, &["cx", "width", "amp"])?;
            Ok(Field::gaussian(&o.center()?, o.scalar("width", Some(1.0))?, o.scalar("amp", Some(1.0))?)?)
        }
        "bump" => {
            let o = Opts::new(&parts[1..], dim, spec, &["cx", "r", "amp"])?;
            Ok(Field::bump(&o.center()?, o.scalar("r", Some(1.0))?, o.scalar("amp", Some(1.0))?)?)
        }
        "indicator" => Ok(Field::indicator(parse_set_parts(&parts[1..], dim, spec)?)),
        "zero" => {
            Opts::new(&parts[1..], dim, spec, &[])?;
            Ok(Field::zero(dim))
        }
        other => Err(CliError::config(format!("unknown builtin field {other:?}"))),
    }
}

/// Parses `builtin:indicator:<shape>:..` (the `builtin:indicator:` prefix may be omitted).
pub fn parse_set(spec: &str, dim: usize) -> Result<IndicatorSet, CliError> {
    let rest = spec.strip_prefix("builtin:").unwrap_or(spec);
    let rest = rest.strip_prefix("indicator:").unwrap_or(rest);
    let parts: Vec<&str> = rest.split(':').collect();
    parse_set_parts(&parts, dim, spec)
}

fn parse_set_parts(parts: &[&str], dim: usize, spec: &str) -> Result<IndicatorSet, CliError> {
    let Some(shape) = parts.first() else {
        return Err(CliError::config(format!("indicator spec {spec:?} needs a shape")));
    };
    match *shape {
        "box" => {
            let o = Opts::new(&parts[1..], dim, spec, &["lo", "hi"])?;
            Ok(IndicatorSet::cube(&o.vector("lo", None)?, &o.vector("hi", None)?)?)
        }
        "ball" => {
            let o = Opts::new(&parts[1..], dim, spec, &["cx", "r"])?;
            Ok(IndicatorSet::ball(&o.center()?, o.scalar("r", None)?)?)
        }
        "ellipsoid" => {
            let o = Opts::new(&parts[1..], dim, spec, &["cx", "shape"])?;
            let q = parse_list(o.map.get("shape").ok_or_else(|| CliError::config("ellipsoid needs shape="))?)?;
            if q.len() != dim * dim {
                return Err(CliError::config(format!("shape needs {} entries", dim * dim)));
            }
            Ok(IndicatorSet::ellipsoid(&o.center()?, DMatrix::from_row_slice(dim, dim, &q))?)
        }
        other => Err(CliError::config(format!("unknown indicator shape {other:?}"))),
    }
}

fn read_grid(path: &Path, dim: usize) -> Result<GridField, CliError> {
    let file = File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let g = if path.extension().is_some_and(|e| e == "txt") {
        GridField::read_text(reader)?
    } else {
        GridField::read_binary(reader)?
    };
    if g.n() != dim {
        return Err(CliError::config(format!("grid in {} lives in R^{}, expected R^{dim}", path.display(), g.n())));
    }
    Ok(g)
}
