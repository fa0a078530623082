//! Regularity of quantile functions: modulus of continuity, its concave
//! majorant, the rate functionals `Ψ`, `Ψ̃`, and the bounds available for
//! `(a,b)`-standard measures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::empirical::{Interp, Quantile, TabulatedQuantile};
use crate::error::{Error, Result};

/// Slope added before inversion so that plateaus become invertible.
const INVERSE_TILT: f64 = 1e-12;

/// A nondecreasing function `ω` on `[0,1]`, tabulated on a grid and
/// interpolated linearly, with `ω(0) = zero_plus`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    zero_plus: f64,
}

impl ModulusFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, zero_plus: f64) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidTabulation(
                "modulus grid and values must be nonempty and of equal length".into(),
            ));
        }
        if !(zero_plus >= 0.0 && zero_plus.is_finite()) {
            return Err(Error::InvalidTabulation(format!("zero_plus = {zero_plus}")));
        }
        let mut prev_v = 0.0;
        let mut prev_w = zero_plus;
        for (&v, &w) in grid.iter().zip(&values) {
            if !(v > prev_v && v <= 1.0) {
                return Err(Error::InvalidTabulation(format!(
                    "modulus grid must increase within (0,1], got {v}"
                )));
            }
            if !(w >= prev_w && w.is_finite()) {
                return Err(Error::InvalidTabulation(format!(
                    "modulus values must be finite and nondecreasing from zero_plus, got {w} at v = {v}"
                )));
            }
            prev_v = v;
            prev_w = w;
        }
        Ok(ModulusFunction {
            grid,
            values,
            zero_plus,
        })
    }

    /// Tabulates an analytic modulus.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64, zero_plus: f64) -> Result<Self> {
        let values = grid.iter().map(|&v| f(v)).collect();
        Self::new(grid, values, zero_plus)
    }

    /// `ω(v) = v` on a uniform grid of `points` nodes.
    pub fn identity(points: usize) -> Self {
        let grid = uniform_grid(points);
        Self::new(grid.clone(), grid, 0.0).expect("identity modulus is valid")
    }

    /// Pointwise maximum of several moduli sharing a grid.
    pub fn pointwise_max(parts: &[ModulusFunction]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTabulation("no moduli to combine".into()))?;
        let mut values = first.values.clone();
        let mut zero_plus = first.zero_plus;
        for p in &parts[1..] {
            if p.grid != first.grid {
                return Err(Error::InvalidTabulation("moduli must share a grid".into()));
            }
            for (a, b) in values.iter_mut().zip(&p.values) {
                *a = a.max(*b);
            }
            zero_plus = zero_plus.max(p.zero_plus);
        }
        Self::new(first.grid.clone(), values, zero_plus)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zero_plus(&self) -> f64 {
        self.zero_plus
    }

    /// `ω(1)`, or the last tabulated value when the grid stops short of 1.
    pub fn at_one(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn eval(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return self.zero_plus;
        }
        let i = self.grid.partition_point(|g| *g < v);
        if i == self.grid.len() {
            return self.at_one();
        }
        let (v0, w0) = if i == 0 {
            (0.0, self.zero_plus)
        } else {
            (self.grid[i - 1], self.values[i - 1])
        };
        let (v1, w1) = (self.grid[i], self.values[i]);
        w0 + (w1 - w0) * (v - v0) / (v1 - v0)
    }

    /// `ω⁻¹(t)`: 0 on `[0, ω(0)]`, 1 from `ω(1)` on, and in between the
    /// exact inverse of the interpolant tilted by `10⁻¹²·v`.
    pub fn inverse(&self, t: f64) -> f64 {
        if t <= self.zero_plus {
            return 0.0;
        }
        if t >= self.at_one() {
            return 1.0;
        }
        let tilted = |i: usize| self.values[i] + INVERSE_TILT * self.grid[i];
        let mut lo = 0;
        let mut hi = self.grid.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if tilted(mid) < t {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == self.grid.len() {
            // between the tabulated end and ω(1) only when the grid ends before 1
            return *self.grid.last().unwrap();
        }
        let (v0, w0) = if lo == 0 {
            (0.0, self.zero_plus)
        } else {
            (self.grid[lo - 1], tilted(lo - 1))
        };
        let (v1, w1) = (self.grid[lo], tilted(lo));
        if w1 <= w0 {
            return v1;
        }
        (v0 + (v1 - v0) * (t - w0) / (w1 - w0)).clamp(v0, v1)
    }

    /// True when `ω(v)/v` does not increase along the grid.
    pub fn has_nonincreasing_ratio(&self) -> bool {
        let ratios: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(v, w)| w / v)
            .collect();
        ratios
            .windows(2)
            .all(|r| r[1] <= r[0] * (1.0 + 1e-12) + 1e-15)
    }

    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "# zero_plus={:.16e}", self.zero_plus);
        out.push_str("v,omega\n");
        for (v, w) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{v:.16e},{w:.16e}");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut zero_plus = None;
        let mut header = false;
        let (mut grid, mut values) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(z) = c.trim().strip_prefix("zero_plus=") {
                    zero_plus = Some(z.trim().parse::<f64>().map_err(|e| Error::Parse {
                        row,
                        message: format!("zero_plus: {e}"),
                    })?);
                }
                continue;
            }
            if !header {
                if line != "v,omega" {
                    return Err(Error::Parse {
                        row,
                        message: format!("expected header `v,omega`, found `{line}`"),
                    });
                }
                header = true;
                continue;
            }
            let mut it = line.split(',');
            let mut field = |name: &str| -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Parse {
                        row,
                        message: format!("missing {name}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        row,
                        message: format!("{name}: {e}"),
                    })
            };
            grid.push(field("v")?);
            values.push(field("omega")?);
        }
        Self::new(grid, values, zero_plus.unwrap_or(0.0))
    }

    pub fn save(&self, path: &Path, comments: &[String]) -> Result<()> {
        fs::write(path, self.to_csv_string(comments)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// `j/(points)` for `j = 1..=points`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|j| j as f64 / points as f64).collect()
}

/// `ω̃(v) = sup_{|u−u′| ≤ v} |F⁻¹(u) − F⁻¹(u′)|` for each `v` in `v_grid`.
///
/// `ω(0⁺)` is taken as the largest jump between consecutive tabulated values,
/// and the returned values are floored at it so the result stays monotone.
pub fn modulus_of_continuity(q: &TabulatedQuantile, v_grid: &[f64]) -> Result<ModulusFunction> {
    let zero_plus = q.max_jump();
    let nodes = q.grid();
    let mut values = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "modulus window v = {v} outside (0,1]"
            )));
        }
        values.push(window_sup(q, nodes, v).max(zero_plus));
    }
    // guard against rounding in the candidate evaluation
    for i in 1..values.len() {
        values[i] = values[i].max(values[i - 1]);
    }
    ModulusFunction::new(v_grid.to_vec(), values, zero_plus)
}

/// `sup_{u ∈ [0, 1−v]} F⁻¹(u+v) − F⁻¹(u)`.
///
/// The difference is piecewise linear (or constant) in `u` with breakpoints at
/// the nodes and the nodes shifted by `−v`, so the supremum sits at one of them.
fn window_sup(q: &TabulatedQuantile, nodes: &[f64], v: f64) -> f64 {
    let top = (1.0 - v).max(0.0);
    let diff = |u: f64| q.eval((u + v).min(1.0)) - q.eval(u);
    let shifted = nodes
        .iter()
        .map(|g| g - v)
        .filter(|_| q.interp() == Interp::Linear);
    [0.0, top]
        .into_iter()
        .chain(nodes.iter().copied())
        .chain(shifted)
        .filter(|u| (0.0..=top).contains(u))
        .map(diff)
        .fold(0.0, f64::max)
}

/// Smallest concave majorant of `m` through `(0, ω(0⁺))`, evaluated on the
/// same grid.
pub fn least_concave_majorant(m: &ModulusFunction) -> ModulusFunction {
    let pts: Vec<(f64, f64)> = std::iter::once((0.0, m.zero_plus))
        .chain(m.grid.iter().copied().zip(m.values.iter().copied()))
        .collect();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b when it lies on or below the chord from a to p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut values = Vec::with_capacity(m.grid.len());
    let mut seg = 0;
    for (&v, &w) in m.grid.iter().zip(&m.values) {
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 < v {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        let h = if b.0 > a.0 {
            a.1 + (b.1 - a.1) * (v - a.0) / (b.0 - a.0)
        } else {
            a.1
        };
        values.push(h.max(w));
    }
    for i in 1..values.len() {
        values[i] = values[i].max(values[i - 1]);
    }
    ModulusFunction {
        grid: m.grid.clone(),
        values,
        zero_plus: m.zero_plus,
    }
}

fn check_mass(mass: f64) -> Result<()> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::OutOfRange(format!("mass {mass} outside (0,1]")));
    }
    Ok(())
}

/// `Ψ(m) = ω(m)/√m`.
pub fn psi(m: &ModulusFunction, mass: f64) -> Result<f64> {
    check_mass(mass)?;
    Ok(m.eval(mass) / mass.sqrt())
}

/// `Ψ̃(m) = (F⁻¹(m) − F⁻¹(0))/√m`.
pub fn psi_tilde<Q: Quantile + ?Sized>(q: &Q, mass: f64) -> Result<f64> {
    check_mass(mass)?;
    Ok((q.eval(mass) - q.eval(0.0)) / mass.sqrt())
}

/// Parameters of a measure that is `(a,b)`-standard on its support `K`, seen
/// from a point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbStandardParams {
    pub a: f64,
    pub b: f64,
    /// distance from `x` to `K`
    pub dist: f64,
    /// Hausdorff distance between `{x}` and `K`
    pub haus: f64,
}

impl AbStandardParams {
    pub fn new(a: f64, b: f64, dist: f64, haus: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::OutOfRange(format!(
                "need a > 0 and b > 0, got a = {a}, b = {b}"
            )));
        }
        if !(dist >= 0.0 && haus >= dist) {
            return Err(Error::OutOfRange(format!(
                "need 0 ≤ dist ≤ haus, got dist = {dist}, haus = {haus}"
            )));
        }
        Ok(AbStandardParams { a, b, dist, haus })
    }
}

/// Upper bound on `F⁻¹(u) − F⁻¹(0)`: `r (u/a)^{1/b} [(u/a)^{1/b} + dist]^{r−1}`.
pub fn ab_quantile_bound(p: &AbStandardParams, r: f64, u: f64) -> f64 {
    let s = (u.max(0.0) / p.a).powf(1.0 / p.b);
    r * s * (s + p.dist).powf(r - 1.0)
}

/// Upper bound on the modulus for a connected support: `r (h/a)^{1/b} haus^{r−1}`.
pub fn ab_modulus_bound(p: &AbStandardParams, r: f64, h: f64) -> f64 {
    r * (h.max(0.0) / p.a).powf(1.0 / p.b) * p.haus.powf(r - 1.0)
}
