//! Lattice-sampled fields on an axis-aligned box with isotropic cell size.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;

/// Nonnegative values on a box of `dims[0] x ... x dims[n-1]` cells of side
/// `h`, stored row-major (last axis fastest). The value of a cell is the
/// value of the field everywhere inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    dims: Vec<usize>,
    h: f64,
    lower: Vec<f64>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(dims: Vec<usize>, h: f64, lower: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = dims.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Dimension(format!("grid dimension {n} outside [1, {MAX_DIM}]")));
        }
        if lower.len() != n {
            return Err(Error::Dimension("lower corner length differs from dims".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!("cell size must be positive, got {h}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension("grid axes must have at least one cell".into()));
        }
        let count: usize = dims.iter().product();
        if values.len() != count {
            return Err(Error::Format(format!("expected {count} values, got {}", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Parameter(format!("grid values must be finite and nonnegative, found {bad}")));
        }
        Ok(GridField { dims, h, lower, values })
    }

    pub fn zeros(dims: Vec<usize>, h: f64, lower: Vec<f64>) -> Result<Self> {
        let count = dims.iter().product();
        Self::new(dims, h, lower, vec![0.0; count])
    }

    /// Grid centred at the origin.
    pub fn centered(dims: Vec<usize>, h: f64) -> Result<Self> {
        let lower = dims.iter().map(|&d| -(d as f64) * h / 2.0).collect();
        Self::zeros(dims, h, lower)
    }

    /// Samples `f` at the cell centres (negative values are clamped to 0).
    pub fn from_fn<F: Fn(&[f64]) -> f64>(dims: Vec<usize>, h: f64, lower: Vec<f64>, f: F) -> Result<Self> {
        let mut g = Self::zeros(dims, h, lower)?;
        let mut x = [0.0; MAX_DIM];
        for i in 0..g.values.len() {
            g.cell_center(i, &mut x[..g.n()]);
            g.values[i] = f(&x[..g.n()]).max(0.0);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.dims).map(|(l, &d)| l + d as f64 * self.h).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n() as i32)
    }

    /// Same lattice, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dims.clone(), self.h, self.lower.clone(), values)
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in (0..self.n()).rev() {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn cell_center(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.unravel(flat, &mut idx[..self.n()]);
        for a in 0..self.n() {
            out[a] = self.lower[a] + (idx[a] as f64 + 0.5) * self.h;
        }
    }

    /// Flat index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..self.n() {
            let t = (x[a] - self.lower[a]) / self.h;
            if !(t >= 0.0) {
                return None;
            }
            let i = t as usize;
            if i >= self.dims[a] {
                return None;
            }
            flat = flat * self.dims[a] + i;
        }
        Some(flat)
    }

    /// Piecewise-constant evaluation; zero outside the box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.locate(x).map_or(0.0, |i| self.values[i])
    }

    /// Multilinear interpolation between cell centres, with zero padding
    /// outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut base = [0isize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..n {
            let t = (x[a] - self.lower[a]) / self.h - 0.5;
            if !(t > -1.0 && t < self.dims[a] as f64) {
                return 0.0;
            }
            let f = t.floor();
            base[a] = f as isize;
            frac[a] = t - f;
        }
        let mut acc = 0.0;
        'corner: for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..n {
                let bit = (corner >> a) & 1;
                let i = base[a] + bit as isize;
                if i < 0 || i >= self.dims[a] as isize {
                    continue 'corner;
                }
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.dims[a] + i as usize;
            }
            acc += w * self.values[flat];
        }
        acc
    }

    /// `sum h^n v^p`, the exact integral of the piecewise-constant field.
    pub fn integral_pow(&self, p: f64) -> f64 {
        let s: f64 = if p == 1.0 {
            self.values.iter().sum()
        } else {
            self.values.iter().map(|v| v.powf(p)).sum()
        };
        s * self.cell_volume()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.integral_pow(p).powf(1.0 / p)
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridField { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Flat binary layout, all little-endian: `u64 n`, `n x u64 dims`,
    /// `f64 h`, `n x f64 lower`, `n x f64 upper`, then the values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.h.to_le_bytes())?;
        for l in &self.lower {
            w.write_all(&l.to_le_bytes())?;
        }
        for u in self.upper() {
            w.write_all(&u.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated grid file: {e}")))?;
            Ok(buf)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        if n == 0 || n > MAX_DIM {
            return Err(Error::Format(format!("grid header declares dimension {n}")));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(u64::from_le_bytes(next(&mut r)?) as usize);
        }
        let h = f64::from_le_bytes(next(&mut r)?);
        let mut lower = Vec::with_capacity(n);
        for _ in 0..n {
            lower.push(f64::from_le_bytes(next(&mut r)?));
        }
        for a in 0..n {
            let upper = f64::from_le_bytes(next(&mut r)?);
            let expect = lower[a] + dims[a] as f64 * h;
            if (upper - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                return Err(Error::Format(format!("upper bound {upper} inconsistent with dims and h on axis {a}")));
            }
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("grid too large".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Self::new(dims, h, lower, values)
    }

    /// Whitespace-separated text form:
    /// `grid <n>` / `dims ...` / `h <h>` / `lower ...` / then one value per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "grid {}", self.n())?;
        writeln!(w, "dims {}", join(&self.dims))?;
        writeln!(w, "h {:e}", self.h)?;
        writeln!(w, "lower {}", join_f(&self.lower))?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::parse_text(&s)
    }

    pub fn parse_text(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing `{name}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(Error::Format(format!("expected `{name}` line, got `{line}`")));
            }
            Ok(parts.map(String::from).collect())
        };
        let n: usize = parse_one(&field("grid")?)?;
        let dims: Vec<usize> = parse_all(&field("dims")?)?;
        let h: f64 = parse_one(&field("h")?)?;
        let lower: Vec<f64> = parse_all(&field("lower")?)?;
        if dims.len() != n || lower.len() != n {
            return Err(Error::Format("header lengths disagree with declared dimension".into()));
        }
        let values: Vec<f64> = lines
            .flat_map(|l| l.split_whitespace())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("bad value `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        Self::new(dims, h, lower, values)
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_f(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_all<T: std::str::FromStr>(parts: &[String]) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    parts
        .iter()
        .map(|t| t.parse::<T>().map_err(|e| Error::Format(format!("bad token `{t}`: {e}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(parts: &[String]) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match parts {
        [one] => one.parse::<T>().map_err(|e| Error::Format(format!("bad token `{one}`: {e}"))),
        _ => Err(Error::Format(format!("expected one token, got {}", parts.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridField {
        GridField::new(vec![2, 3], 0.5, vec![-0.5, -0.75], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
    }

    #[test]
    fn indexing_round_trips() {
        let g = sample();
        let mut idx = [0usize; 2];
        for flat in 0..g.len() {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
            let mut c = [0.0; 2];
            g.cell_center(flat, &mut c);
            assert_eq!(g.locate(&c), Some(flat));
        }
        assert_eq!(g.eval(&[10.0, 0.0]), 0.0);
        assert_eq!(g.eval(&[-0.25, 0.5]), 2.0);
    }

    #[test]
    fn interpolation_hits_cell_centres() {
        let g = sample();
        let mut c = [0.0; 2];
        for flat in 0..g.len() {
            g.cell_center(flat, &mut c);
            assert!((g.interpolate(&c) - g.values()[flat]).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_and_text_round_trip() {
        let g = sample();
        let mut bytes = Vec::new();
        g.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 * (1 + 2 + 1 + 2 + 2 + 6));
        assert_eq!(GridField::read_binary(bytes.as_slice()).unwrap(), g);
        let mut text = Vec::new();
        g.write_text(&mut text).unwrap();
        assert_eq!(GridField::read_text(text.as_slice()).unwrap(), g);
        assert!(GridField::read_binary(&bytes[..20]).is_err());
    }

    #[test]
    fn rejects_negative_values() {
        assert!(GridField::new(vec![1], 1.0, vec![0.0], vec![-1.0]).is_err());
        assert!(GridField::new(vec![2], 1.0, vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn integral_is_cell_sum() {
        let g = sample();
        assert!((g.integral_pow(1.0) - 15.0 * 0.25).abs() < 1e-12);
    }
}
