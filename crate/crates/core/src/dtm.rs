//! Distance to a measure (DTM), distance to the empirical measure (DTEM), and
//! their difference.
//!
//! Everything is expressed through the push-forward quantile `F⁻¹` of
//! `‖x − X‖^r`: `d^r(m) = (1/m) ∫₀^m F⁻¹`. For the empirical measure at
//! `m = k/n` this is the mean of the `k` smallest powered distances.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::empirical::{
    check_power, frac, powered_distance, powered_from_squared, push_forward, quantile_index,
    Quantile,
};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kdtree::{brute_k_smallest_squared, KdTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtmValue {
    /// `d^r_{P,m,r}(x)`
    pub powered: f64,
    /// `d_{P,m,r}(x)`
    pub root: f64,
    pub m: f64,
    pub r: f64,
}

impl DtmValue {
    fn new(powered: f64, m: f64, r: f64) -> Self {
        let powered = powered.max(0.0);
        DtmValue {
            powered,
            root: powered.powf(1.0 / r),
            m,
            r,
        }
    }
}

/// Empirical minus true DTM at `m = k/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaValue {
    /// difference of powered DTMs
    pub delta: f64,
    /// difference of the `1/r` roots
    pub delta_tilde: f64,
    pub k: usize,
    pub n: usize,
}

fn check_mass(m: f64) -> Result<()> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::OutOfRange(format!("mass m = {m} must lie in (0,1]")));
    }
    Ok(())
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::OutOfRange(format!("k = {k} must lie in 1..={n}")));
    }
    Ok(())
}

fn k_smallest_powered(cloud: &PointCloud, x: &[f64], k: usize, r: f64) -> Vec<f64> {
    let mut d: Vec<f64> = cloud.points().map(|p| powered_distance(x, p, r)).collect();
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d.truncate(k);
    d.sort_by(f64::total_cmp);
    d
}

/// DTEM at `m = k/n`: average of the `k` smallest powered distances.
pub fn dtem(cloud: &PointCloud, x: &[f64], k: usize, r: f64) -> Result<DtmValue> {
    cloud.check_point(x)?;
    check_power(r)?;
    let n = cloud.len();
    check_k(k, n)?;
    let smallest = k_smallest_powered(cloud, x, k, r);
    let sum: f64 = smallest.iter().sum();
    Ok(DtmValue::new(sum / k as f64, frac(k, n), r))
}

/// `(1/m)∫₀^m F_n⁻¹` for the sorted smallest powered distances.
fn step_mass_average(sorted: &[f64], n: usize, m: f64) -> f64 {
    let mut total = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        let lo = frac(j, n);
        if lo >= m {
            break;
        }
        total += v * (frac(j + 1, n).min(m) - lo);
    }
    total / m
}

/// DTEM at an arbitrary mass `m ∈ (0,1]`.
pub fn dtem_mass(cloud: &PointCloud, x: &[f64], m: f64, r: f64) -> Result<DtmValue> {
    cloud.check_point(x)?;
    check_power(r)?;
    check_mass(m)?;
    let n = cloud.len();
    let k = quantile_index(m, n);
    let smallest = k_smallest_powered(cloud, x, k, r);
    Ok(DtmValue::new(step_mass_average(&smallest, n, m), m, r))
}

/// `(1/m)∫₀^m F⁻¹(u) du` for any exactly integrable quantile.
pub fn dtm_from_quantile<Q: Quantile + ?Sized>(q: &Q, m: f64, r: f64) -> Result<DtmValue> {
    check_mass(m)?;
    check_power(r)?;
    Ok(DtmValue::new(q.integral(m) / m, m, r))
}

fn check_reference<Q: Quantile + ?Sized>(reference: &Q, x: &[f64], r: f64) -> Result<()> {
    if let Some(meta) = reference.meta() {
        if meta.x.as_slice() != x {
            return Err(Error::ReferenceMismatch(format!(
                "reference built at x = {:?}, evaluated at {:?}",
                meta.x, x
            )));
        }
        if meta.r != r {
            return Err(Error::ReferenceMismatch(format!(
                "reference built with r = {}, evaluated with r = {r}",
                meta.r
            )));
        }
    }
    Ok(())
}

/// `Δ = d^r_{P_n,k/n}(x) − d^r_{P,k/n}(x)` and its root-scale counterpart.
pub fn delta<Q: Quantile + ?Sized>(
    cloud: &PointCloud,
    reference: &Q,
    x: &[f64],
    k: usize,
    r: f64,
) -> Result<DeltaValue> {
    check_reference(reference, x, r)?;
    let emp = dtem(cloud, x, k, r)?;
    let truth = dtm_from_quantile(reference, emp.m, r)?;
    Ok(DeltaValue {
        delta: emp.powered - truth.powered,
        delta_tilde: emp.root - truth.root,
        k,
        n: cloud.len(),
    })
}

/// `Δ` through the horizontal form
/// `(n/k) ∫ {F(t) ∧ k/n − F_n(t) ∧ k/n} dt`.
///
/// `cdf` must be linear on each open interval between consecutive breakpoints,
/// where the breakpoints are `knots` together with the sample's powered
/// distances; it is then integrated exactly. `cdf` must vanish below
/// `knots[0]` and reach `k/n` by the last knot.
pub fn delta_by_decomposition(
    cloud: &PointCloud,
    cdf: &dyn Fn(f64) -> f64,
    knots: &[f64],
    x: &[f64],
    k: usize,
    r: f64,
) -> Result<f64> {
    let sample = push_forward(cloud, x, r)?;
    let n = sample.len();
    check_k(k, n)?;
    if knots.is_empty() || knots.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Precondition(
            "knots must be nonempty and sorted".into(),
        ));
    }
    let cap = frac(k, n);
    let s = sample.values();
    let lo = knots[0].min(s[0]);
    let hi = knots.last().unwrap().max(s[k - 1]);
    if cdf(hi) < cap - 1e-12 {
        return Err(Error::Precondition(format!(
            "reference cdf reaches only {} < k/n = {cap} on the knot range",
            cdf(hi)
        )));
    }

    let mut breaks: Vec<f64> = knots
        .iter()
        .copied()
        .chain(s[..k].iter().copied())
        .filter(|t| (lo..=hi).contains(t))
        .collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut total = 0.0;
    let mut last_f = 0.0_f64;
    for w in breaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        let width = q - p;
        if width <= 0.0 {
            continue;
        }
        let (t1, t2) = (p + 0.25 * width, p + 0.75 * width);
        let (f1, f2) = (cdf(t1), cdf(t2));
        if f1 < last_f - 1e-12 || f2 < f1 - 1e-12 {
            return Err(Error::NonMonotone { at: t1 });
        }
        last_f = f2;
        let slope = (f2 - f1) / (t2 - t1);
        let fp = f1 - slope * (t1 - p);
        let fq = f2 + slope * (q - t2);
        let upper = integrate_capped_line(p, q, fp, fq, cap);
        let emp = (frac(s.partition_point(|v| *v <= 0.5 * (p + q)), n)).min(cap);
        total += upper - emp * width;
    }
    Ok(total / cap)
}

/// `∫_p^q min(L(t), cap) dt` for the line through `(p, fp)` and `(q, fq)`.
fn integrate_capped_line(p: f64, q: f64, fp: f64, fq: f64, cap: f64) -> f64 {
    let width = q - p;
    match (fp <= cap, fq <= cap) {
        (true, true) => 0.5 * (fp + fq) * width,
        (false, false) => cap * width,
        _ => {
            let s = (cap - fp) / (fq - fp);
            let cross = p + s * width;
            if fp <= cap {
                0.5 * (fp + cap) * (cross - p) + cap * (q - cross)
            } else {
                cap * (cross - p) + 0.5 * (cap + fq) * (q - cross)
            }
        }
    }
}

/// Clouds at least this large, with few neighbours requested, use the k-d tree.
const KD_MIN_POINTS: usize = 512;

/// DTEM at mass `m` for every point of `grid`, in grid order.
pub fn dtm_field(cloud: &PointCloud, grid: &PointCloud, m: f64, r: f64) -> Result<Vec<DtmValue>> {
    check_mass(m)?;
    check_power(r)?;
    if grid.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: grid.dim(),
        });
    }
    let n = cloud.len();
    let k = quantile_index(m, n);
    let tree = (n >= KD_MIN_POINTS && k * 8 <= n).then(|| KdTree::build(cloud));
    let pts: Vec<&[f64]> = grid.points().collect();
    Ok(pts
        .par_iter()
        .map(|x| {
            let sq = match &tree {
                Some(t) => t.k_smallest_squared(x, k),
                None => brute_k_smallest_squared(cloud, x, k),
            };
            let powered: Vec<f64> = sq.into_iter().map(|d| powered_from_squared(d, r)).collect();
            DtmValue::new(step_mass_average(&powered, n, m), m, r)
        })
        .collect())
}

/// Brute-force version of [`dtm_field`], used to check the index.
pub fn dtm_field_brute(
    cloud: &PointCloud,
    grid: &PointCloud,
    m: f64,
    r: f64,
) -> Result<Vec<DtmValue>> {
    grid.points().map(|x| dtem_mass(cloud, x, m, r)).collect()
}

/// True DTM at every grid point, given the push-forward quantile at each point.
pub fn dtm_field_reference<Q, F>(
    quantile_at: F,
    grid: &PointCloud,
    m: f64,
    r: f64,
) -> Result<Vec<DtmValue>>
where
    Q: Quantile,
    F: Fn(&[f64]) -> Result<Q> + Sync,
{
    let pts: Vec<&[f64]> = grid.points().collect();
    pts.par_iter()
        .map(|x| dtm_from_quantile(&quantile_at(x)?, m, r))
        .collect()
}

/// CSV with header `x1,…,xd,m,powered,root`.
pub fn field_csv(grid: &PointCloud, values: &[DtmValue]) -> String {
    let mut out = String::new();
    let cols: Vec<String> = (1..=grid.dim()).map(|i| format!("x{i}")).collect();
    let _ = writeln!(out, "{},m,powered,root", cols.join(","));
    for (p, v) in grid.points().zip(values) {
        for c in p {
            let _ = write!(out, "{c:.16e},");
        }
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", v.m, v.powered, v.root);
    }
    out
}

pub fn write_field_csv(path: &Path, grid: &PointCloud, values: &[DtmValue]) -> Result<()> {
    fs::write(path, field_csv(grid, values)).map_err(|e| Error::io(path, e))
}
