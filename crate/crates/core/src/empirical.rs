//! One-dimensional push-forward machinery.
//!
//! The law of `‖x − X‖^r` on the half line carries everything the distance to a
//! measure depends on. This module holds its empirical version (sorted powered
//! distances), tabulated quantile functions, the 1-d Wasserstein distance and
//! the `J₁` functional `∫ √(F(1−F))`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// `‖x − y‖^r`, computed through the squared distance.
#[inline]
pub fn powered_distance(x: &[f64], y: &[f64], r: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    powered_from_squared(sq, r)
}

#[inline]
pub(crate) fn powered_from_squared(sq: f64, r: f64) -> f64 {
    if r == 2.0 {
        sq
    } else if r == 1.0 {
        sq.sqrt()
    } else {
        sq.sqrt().powf(r)
    }
}

pub(crate) fn check_power(r: f64) -> Result<()> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::OutOfRange(format!(
            "power r = {r} must be a finite real >= 1"
        )));
    }
    Ok(())
}

/// Sorted powered distances from an observation point to every sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct PushForwardSample {
    values: Vec<f64>,
    r: f64,
    x: Vec<f64>,
}

impl PushForwardSample {
    /// Wraps already-computed nonnegative values; sorts them.
    pub fn from_values(mut values: Vec<f64>, x: Vec<f64>, r: f64) -> Result<Self> {
        check_power(r)?;
        if values.is_empty() {
            return Err(Error::InvalidCloud(
                "push-forward sample needs at least one value".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::OutOfRange(
                "push-forward values must be finite and >= 0".into(),
            ));
        }
        values.sort_by(f64::total_cmp);
        Ok(PushForwardSample { values, r, x })
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

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Right-continuous empirical step quantile on the grid `j/n`.
    pub fn quantile_table(&self) -> TabulatedQuantile {
        let n = self.values.len();
        let mut grid = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        grid.push(0.0);
        values.push(self.values[0]);
        for (j, v) in self.values.iter().enumerate() {
            grid.push(frac(j + 1, n));
            values.push(*v);
        }
        TabulatedQuantile {
            grid,
            values,
            interp: Interp::Step,
            meta: Some(QuantileMeta {
                x: self.x.clone(),
                r: self.r,
            }),
        }
    }
}

#[inline]
pub(crate) fn frac(j: usize, n: usize) -> f64 {
    j as f64 / n as f64
}

/// Sorted `‖x − Xᵢ‖^r` over the cloud.
pub fn push_forward(cloud: &PointCloud, x: &[f64], r: f64) -> Result<PushForwardSample> {
    cloud.check_point(x)?;
    check_power(r)?;
    let mut values: Vec<f64> = cloud.points().map(|p| powered_distance(x, p, r)).collect();
    values.sort_by(f64::total_cmp);
    Ok(PushForwardSample {
        values,
        r,
        x: x.to_vec(),
    })
}

/// `#{values <= t} / n`.
pub fn ecdf_eval(sample: &PushForwardSample, t: f64) -> f64 {
    let count = sample.values.partition_point(|v| *v <= t);
    frac(count, sample.len())
}

/// Index `j` (1-based) with `u ∈ ((j−1)/n, j/n]`, using the same `j/n` arithmetic as [`frac`].
pub(crate) fn quantile_index(u: f64, n: usize) -> usize {
    if u <= 0.0 {
        return 1;
    }
    let mut j = ((u * n as f64).ceil() as usize).clamp(1, n);
    while j > 1 && frac(j - 1, n) >= u {
        j -= 1;
    }
    while j < n && frac(j, n) < u {
        j += 1;
    }
    j
}

/// `inf{t : F_n(t) >= u}`, with `F_n⁻¹(0)` the smallest value.
pub fn quantile_eval(sample: &PushForwardSample, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::OutOfRange(format!(
            "probability u = {u} outside [0,1]"
        )));
    }
    Ok(sample.values[quantile_index(u, sample.len()) - 1])
}

/// `∫₀¹ |F_a⁻¹ − F_b⁻¹|`, exact for the two step quantiles.
pub fn wasserstein1_1d(a: &PushForwardSample, b: &PushForwardSample) -> f64 {
    let (va, vb) = (&a.values, &b.values);
    let (na, nb) = (va.len(), vb.len());
    // Breakpoints i/na and j/nb compared exactly through i*nb vs j*na.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let next_a = (i + 1) * nb;
        let next_b = (j + 1) * na;
        let (next, adv_a, adv_b) = match next_a.cmp(&next_b) {
            std::cmp::Ordering::Less => (frac(i + 1, na), true, false),
            std::cmp::Ordering::Greater => (frac(j + 1, nb), false, true),
            std::cmp::Ordering::Equal => (frac(i + 1, na), true, true),
        };
        total += (va[i] - vb[j]).abs() * (next - prev);
        prev = next;
        if adv_a {
            i += 1;
        }
        if adv_b {
            j += 1;
        }
    }
    total
}

/// Interpolation rule between tabulated nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// `F⁻¹(u) = values[i]` for `u ∈ (grid[i−1], grid[i]]`.
    Step,
    /// Linear between nodes.
    Linear,
}

/// Observation point and power a quantile refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMeta {
    pub x: Vec<f64>,
    pub r: f64,
}

/// A quantile function on `[0,1]` that can be integrated exactly from 0.
pub trait Quantile {
    fn eval(&self, u: f64) -> f64;
    /// `∫₀^m F⁻¹(u) du`.
    fn integral(&self, m: f64) -> f64;
    fn meta(&self) -> Option<&QuantileMeta> {
        None
    }
}

/// Monotone grid representation of a quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedQuantile {
    grid: Vec<f64>,
    values: Vec<f64>,
    interp: Interp,
    meta: Option<QuantileMeta>,
}

impl TabulatedQuantile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidTabulation(
                "grid and values need equal length >= 2".into(),
            ));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::InvalidTabulation("grid must run from 0 to 1".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidTabulation(
                "grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTabulation("values must be finite".into()));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidTabulation(format!(
                "values decrease at node {}",
                i + 1
            )));
        }
        Ok(TabulatedQuantile {
            grid,
            values,
            interp,
            meta: None,
        })
    }

    /// Tabulates a closed-form quantile at the given nodes.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64, interp: Interp) -> Result<Self> {
        let values = grid.iter().map(|u| f(*u)).collect();
        TabulatedQuantile::new(grid, values, interp)
    }

    pub fn with_meta(mut self, x: Vec<f64>, r: f64) -> Self {
        self.meta = Some(QuantileMeta { x, r });
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn at_zero(&self) -> f64 {
        self.values[0]
    }

    pub fn at_one(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Index `i >= 1` with `u ∈ (grid[i−1], grid[i]]`.
    fn segment(&self, u: f64) -> usize {
        self.grid
            .partition_point(|g| *g < u)
            .clamp(1, self.grid.len() - 1)
    }

    /// Distribution function `F(t) = sup{u : F⁻¹(u) ≤ t}` of the tabulated law.
    pub fn cdf(&self, t: f64) -> f64 {
        let count = self.values.partition_point(|v| *v <= t);
        if count == 0 {
            return 0.0;
        }
        let j = count - 1;
        if j + 1 == self.values.len() {
            return 1.0;
        }
        match self.interp {
            Interp::Step => self.grid[j],
            Interp::Linear => {
                let (v0, v1) = (self.values[j], self.values[j + 1]);
                let (u0, u1) = (self.grid[j], self.grid[j + 1]);
                u0 + (t - v0) / (v1 - v0) * (u1 - u0)
            }
        }
    }

    /// Largest increment between consecutive nodes.
    pub fn max_jump(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Writes `u,value` rows, with optional `#` comment lines first.
    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut out = String::with_capacity(self.grid.len() * 48);
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(
            out,
            "# interp={}",
            match self.interp {
                Interp::Step => "step",
                Interp::Linear => "linear",
            }
        );
        if let Some(m) = &self.meta {
            let xs: Vec<String> = m.x.iter().map(|c| format!("{c:.16e}")).collect();
            let _ = writeln!(out, "# x={} r={:.16e}", xs.join(";"), m.r);
        }
        out.push_str("u,value\n");
        for (u, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{u:.16e},{v:.16e}");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<(Self, Vec<String>)> {
        let mut comments = Vec::new();
        let mut interp = Interp::Linear;
        let mut meta = None;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            let row = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(rest) = c.strip_prefix("interp=") {
                    interp = match rest {
                        "step" => Interp::Step,
                        "linear" => Interp::Linear,
                        other => {
                            return Err(Error::Parse {
                                row,
                                message: format!("unknown interpolation {other:?}"),
                            })
                        }
                    };
                } else if let Some(rest) = c.strip_prefix("x=") {
                    meta = Some(parse_meta(rest, row)?);
                } else {
                    comments.push(c.to_string());
                }
                continue;
            }
            if !header_seen {
                if line != "u,value" {
                    return Err(Error::Parse {
                        row,
                        message: format!("expected header \"u,value\", found {line:?}"),
                    });
                }
                header_seen = true;
                continue;
            }
            let mut it = line.split(',');
            let (u, v) = match (it.next(), it.next(), it.next()) {
                (Some(u), Some(v), None) => (u.trim(), v.trim()),
                _ => {
                    return Err(Error::Parse {
                        row,
                        message: "expected two fields".into(),
                    })
                }
            };
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("non-numeric field {s:?}"),
                })
            };
            grid.push(parse(u)?);
            values.push(parse(v)?);
        }
        if !header_seen {
            return Err(Error::Parse {
                row: 1,
                message: "missing \"u,value\" header".into(),
            });
        }
        let mut q = TabulatedQuantile::new(grid, values, interp)?;
        q.meta = meta;
        Ok((q, comments))
    }

    pub fn save(&self, path: &Path, comments: &[String]) -> Result<()> {
        fs::write(path, self.to_csv_string(comments)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TabulatedQuantile::parse_csv(&text)
    }
}

fn parse_meta(rest: &str, row: usize) -> Result<QuantileMeta> {
    let bad = |m: &str| Error::Parse {
        row,
        message: m.to_string(),
    };
    let (xs, r) = rest
        .split_once(" r=")
        .ok_or_else(|| bad("metadata line needs x=... r=..."))?;
    let x = xs
        .split(';')
        .map(|s| s.parse::<f64>().map_err(|_| bad("bad metadata coordinate")))
        .collect::<Result<Vec<_>>>()?;
    let r = r
        .trim()
        .parse::<f64>()
        .map_err(|_| bad("bad metadata power"))?;
    Ok(QuantileMeta { x, r })
}

impl Quantile for TabulatedQuantile {
    fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= 1.0 {
            return self.at_one();
        }
        let i = self.segment(u);
        match self.interp {
            Interp::Step => self.values[i],
            Interp::Linear => {
                let (u0, u1) = (self.grid[i - 1], self.grid[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                v0 + (v1 - v0) * (u - u0) / (u1 - u0)
            }
        }
    }

    fn integral(&self, m: f64) -> f64 {
        let m = m.clamp(0.0, 1.0);
        let mut total = 0.0;
        for i in 1..self.grid.len() {
            let (u0, u1) = (self.grid[i - 1], self.grid[i]);
            if u0 >= m {
                break;
            }
            let hi = u1.min(m);
            total += match self.interp {
                Interp::Step => self.values[i] * (hi - u0),
                Interp::Linear => {
                    let v0 = self.values[i - 1];
                    let vhi = if hi == u1 {
                        self.values[i]
                    } else {
                        v0 + (self.values[i] - v0) * (hi - u0) / (u1 - u0)
                    };
                    0.5 * (v0 + vhi) * (hi - u0)
                }
            };
        }
        total
    }

    fn meta(&self) -> Option<&QuantileMeta> {
        self.meta.as_ref()
    }
}

/// `F⁻¹(u) = offset + scale · u^exponent`, integrated in closed form.
///
/// The uniform law on `[0, L]` seen from the endpoint `0` with power `r` is
/// `offset = 0, scale = L^r, exponent = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawQuantile {
    pub offset: f64,
    pub scale: f64,
    pub exponent: f64,
    pub meta: Option<QuantileMeta>,
}

impl PowerLawQuantile {
    pub fn new(offset: f64, scale: f64, exponent: f64) -> Self {
        PowerLawQuantile {
            offset,
            scale,
            exponent,
            meta: None,
        }
    }

    /// Uniform law on `[0,1]` seen from `x = 0` with power `r`.
    pub fn uniform_unit_from_origin(r: f64) -> Self {
        PowerLawQuantile {
            offset: 0.0,
            scale: 1.0,
            exponent: r,
            meta: Some(QuantileMeta { x: vec![0.0], r }),
        }
    }

    pub fn tabulate(&self, grid: Vec<f64>) -> Result<TabulatedQuantile> {
        let mut q = TabulatedQuantile::from_fn(grid, |u| self.eval(u), Interp::Linear)?;
        q.meta = self.meta.clone();
        Ok(q)
    }
}

impl Quantile for PowerLawQuantile {
    fn eval(&self, u: f64) -> f64 {
        self.offset + self.scale * u.clamp(0.0, 1.0).powf(self.exponent)
    }

    fn integral(&self, m: f64) -> f64 {
        let m = m.clamp(0.0, 1.0);
        self.offset * m + self.scale * m.powf(self.exponent + 1.0) / (self.exponent + 1.0)
    }

    fn meta(&self) -> Option<&QuantileMeta> {
        self.meta.as_ref()
    }
}

/// `J₁` estimate with a step-halving error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct J1Estimate {
    pub value: f64,
    pub error: f64,
}

fn midpoint_j1(cdf: &dyn Fn(f64) -> f64, upper: f64, steps: usize) -> Result<f64> {
    let h = upper / steps as f64;
    let mut total = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..steps {
        let t = (i as f64 + 0.5) * h;
        let f = cdf(t);
        if f < prev - 1e-12 || !(-1e-12..=1.0 + 1e-12).contains(&f) {
            return Err(Error::NonMonotone { at: t });
        }
        prev = f;
        let f = f.clamp(0.0, 1.0);
        total += (f * (1.0 - f)).sqrt();
    }
    Ok(total * h)
}

/// `∫₀^upper √(F(t)(1 − F(t))) dt` by the composite midpoint rule.
///
/// The error estimate is the Richardson difference `|I_h − I_2h| / 3`.
pub fn j1_functional(cdf: &dyn Fn(f64) -> f64, upper: f64, steps: usize) -> Result<J1Estimate> {
    if !(upper > 0.0) || steps < 2 {
        return Err(Error::OutOfRange(
            "j1 needs upper > 0 and at least 2 steps".into(),
        ));
    }
    let fine = midpoint_j1(cdf, upper, steps)?;
    let coarse = midpoint_j1(cdf, upper, steps / 2)?;
    Ok(J1Estimate {
        value: fine,
        error: (fine - coarse).abs() / 3.0,
    })
}
