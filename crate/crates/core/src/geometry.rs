//! Benchmark shapes, uniform samplers, noise models and point-cloud files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// A finite sample of `len()` points in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCloud("dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::InvalidCloud(
                "a cloud needs at least one point".into(),
            ));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidCloud(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| Error::InvalidCloud("a cloud needs at least one point".into()))?;
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        PointCloud::new(dim, coords)
    }

    /// One-dimensional cloud from scalar values.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        PointCloud::new(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Writes one point per row, comma separated, 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.coords.len() * 24);
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|c| format!("{c:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidShape(
                "box corners must share a positive dimension".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidShape(
                "box needs finite lo <= hi on every axis".into(),
            ));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (l, h))| *l <= *c && *c <= *h)
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.dim() == other.dim() && self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Extends every side by `fraction` of the extent along that axis.
    pub fn inflate(&self, fraction: f64) -> AxisBox {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let pad = fraction * (h - l);
                (l - pad, h + pad)
            })
            .unzip();
        AxisBox { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        for (l, h) in self.lo.iter().zip(&self.hi) {
            let u: f64 = rng.random();
            out.push(l + (h - l) * u);
        }
    }
}

/// Support sets used by the benchmark experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Segment {
        a: f64,
        b: f64,
    },
    /// Closed simple polygon; the closing edge is implicit.
    Polygon2D {
        vertices: Vec<[f64; 2]>,
    },
    /// Empirical support: uniform choice among stored points.
    PointCloudSupport {
        cloud: PointCloud,
    },
    /// Solid `{ p in R^3 : sum_i (p_i^4 - 5 p_i^2) + level <= 0 }`.
    TangleCube {
        level: f64,
    },
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Segment { a, b } => write!(f, "segment[{a},{b}]"),
            Shape::Polygon2D { vertices } => write!(f, "polygon({} vertices)", vertices.len()),
            Shape::PointCloudSupport { cloud } => write!(f, "cloud({} points)", cloud.len()),
            Shape::TangleCube { level } => write!(f, "tangle-cube({level})"),
        }
    }
}

pub const TANGLE_CUBE_LEVEL: f64 = 10.0;

pub fn tangle_value(p: &[f64], level: f64) -> f64 {
    p.iter().map(|x| x * x * x * x - 5.0 * x * x).sum::<f64>() + level
}

impl Shape {
    pub fn segment(a: f64, b: f64) -> Result<Self> {
        let s = Shape::Segment { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let s = Shape::Polygon2D { vertices };
        s.validate()?;
        Ok(s)
    }

    pub fn tangle_cube() -> Self {
        Shape::TangleCube {
            level: TANGLE_CUBE_LEVEL,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Segment { .. } => 1,
            Shape::Polygon2D { .. } => 2,
            Shape::PointCloudSupport { cloud } => cloud.dim(),
            Shape::TangleCube { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Segment { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidShape(format!(
                        "segment needs finite a < b, got [{a}, {b}]"
                    )));
                }
            }
            Shape::Polygon2D { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidShape(
                        "polygon needs at least 3 vertices".into(),
                    ));
                }
                if vertices.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidShape("non-finite polygon vertex".into()));
                }
                if polygon_area(vertices).abs() == 0.0 {
                    return Err(Error::InvalidShape("polygon has zero area".into()));
                }
                if let Some((i, j)) = first_self_intersection(vertices) {
                    return Err(Error::InvalidShape(format!(
                        "polygon is not simple: edges {i} and {j} intersect"
                    )));
                }
            }
            Shape::PointCloudSupport { .. } => {}
            Shape::TangleCube { level } => {
                if !level.is_finite() {
                    return Err(Error::InvalidShape(
                        "tangle-cube level must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (p, q) = (v[i], v[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b)
}

fn first_self_intersection(v: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

fn polygon_contains(v: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if on_segment(a, b, p) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Membership in the closed shape.
pub fn contains(shape: &Shape, p: &[f64]) -> Result<bool> {
    if p.len() != shape.dim() {
        return Err(Error::DimensionMismatch {
            expected: shape.dim(),
            got: p.len(),
        });
    }
    Ok(match shape {
        Shape::Segment { a, b } => *a <= p[0] && p[0] <= *b,
        Shape::Polygon2D { vertices } => polygon_contains(vertices, [p[0], p[1]]),
        Shape::PointCloudSupport { cloud } => cloud.points().any(|q| q == p),
        Shape::TangleCube { level } => tangle_value(p, *level) <= 0.0,
    })
}

/// Axis-aligned box containing the shape.
pub fn bounding_box(shape: &Shape) -> Result<AxisBox> {
    match shape {
        Shape::Segment { a, b } => AxisBox::new(vec![*a], vec![*b]),
        Shape::Polygon2D { vertices } => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for v in vertices {
                for k in 0..2 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            AxisBox::new(lo.to_vec(), hi.to_vec())
        }
        Shape::PointCloudSupport { cloud } => {
            let d = cloud.dim();
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for p in cloud.points() {
                for k in 0..d {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            AxisBox::new(lo, hi)
        }
        Shape::TangleCube { level } => {
            // Each axis term is >= -6.25, so the other two contribute at least
            // -12.5 and a single axis needs x^4 - 5x^2 <= 12.5 - level.
            let slack = 12.5 - level;
            let disc = 25.0 + 4.0 * slack;
            if disc < 0.0 {
                return Err(Error::InvalidShape(format!(
                    "tangle cube with level {level} is empty"
                )));
            }
            let x2 = (5.0 + disc.sqrt()) / 2.0;
            let half = (x2.sqrt() * 10.0).ceil() / 10.0;
            AxisBox::new(vec![-half; 3], vec![half; 3])
        }
    }
}

/// Default clutter box: the bounding box extended by half its extent on every side.
pub fn default_clutter_box(shape: &Shape) -> Result<AxisBox> {
    Ok(bounding_box(shape)?.inflate(0.5))
}

const REJECTION_MIN_RATE: f64 = 1e-6;
const REJECTION_PATIENCE: u64 = 10_000_000;

fn rejection_sample<R: Rng + ?Sized>(
    shape: &Shape,
    bbox: &AxisBox,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = shape.dim();
    let mut coords = Vec::with_capacity(n * d);
    let mut cand = Vec::with_capacity(d);
    let (mut attempts, mut accepted) = (0u64, 0u64);
    while (accepted as usize) < n {
        cand.clear();
        bbox.sample(rng, &mut cand);
        attempts += 1;
        if contains(shape, &cand)? {
            coords.extend_from_slice(&cand);
            accepted += 1;
        } else if attempts >= REJECTION_PATIENCE
            && (accepted as f64) < REJECTION_MIN_RATE * attempts as f64
        {
            return Err(Error::SamplerFailure { accepted, attempts });
        }
    }
    Ok(coords)
}

/// `n` i.i.d. points from the uniform law on `shape`.
pub fn sample_uniform(shape: &Shape, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::OutOfRange("sample size must be at least 1".into()));
    }
    shape.validate()?;
    let mut rng = seed::rng(seed);
    let coords = match shape {
        Shape::Segment { a, b } => (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect(),
        Shape::PointCloudSupport { cloud } => {
            let mut coords = Vec::with_capacity(n * cloud.dim());
            for _ in 0..n {
                let i = rng.random_range(0..cloud.len());
                coords.extend_from_slice(cloud.point(i));
            }
            coords
        }
        Shape::Polygon2D { .. } | Shape::TangleCube { .. } => {
            let bbox = bounding_box(shape)?;
            rejection_sample(shape, &bbox, n, &mut rng)?
        }
    };
    PointCloud::new(shape.dim(), coords)
}

/// Contamination applied on top of a uniform sample.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Noiseless,
    Clutter { pi: f64, region: AxisBox },
    Gaussian { sigma: f64 },
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Noiseless => write!(f, "noiseless"),
            NoiseModel::Clutter { pi, region } => {
                write!(f, "clutter(pi={pi}, box={:?}..{:?})", region.lo, region.hi)
            }
            NoiseModel::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
        }
    }
}

impl NoiseModel {
    pub fn validate_for(&self, shape: &Shape) -> Result<()> {
        match self {
            NoiseModel::Noiseless => Ok(()),
            NoiseModel::Clutter { pi, region } => {
                if !(*pi > 0.0 && *pi < 1.0) {
                    return Err(Error::InvalidNoise(format!(
                        "clutter proportion {pi} not in (0,1)"
                    )));
                }
                if !region.contains_box(&bounding_box(shape)?) {
                    return Err(Error::InvalidNoise(
                        "clutter box does not contain the shape".into(),
                    ));
                }
                Ok(())
            }
            NoiseModel::Gaussian { sigma } => {
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidNoise(format!(
                        "gaussian sigma {sigma} must be positive"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidNoise(format!(
            "clutter proportion {pi} not in (0,1)"
        )));
    }
    Ok(())
}

/// Clutter mixture; also returns which points were replaced by box draws.
pub fn apply_clutter_labeled(
    base: &PointCloud,
    pi: f64,
    region: &AxisBox,
    seed: u64,
) -> Result<(PointCloud, Vec<bool>)> {
    check_pi(pi)?;
    if region.dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: region.dim(),
        });
    }
    if let Some(i) = base.points().position(|p| !region.contains(p)) {
        return Err(Error::InvalidNoise(format!(
            "clutter box does not contain base point {i}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut coords = Vec::with_capacity(base.coords().len());
    let mut labels = Vec::with_capacity(base.len());
    for p in base.points() {
        let clutter = rng.random::<f64>() < pi;
        if clutter {
            region.sample(&mut rng, &mut coords);
        } else {
            coords.extend_from_slice(p);
        }
        labels.push(clutter);
    }
    Ok((PointCloud::new(base.dim(), coords)?, labels))
}

/// Each point is replaced, with probability `pi`, by a uniform draw on `region`.
pub fn apply_clutter(
    base: &PointCloud,
    pi: f64,
    region: &AxisBox,
    seed: u64,
) -> Result<PointCloud> {
    apply_clutter_labeled(base, pi, region, seed).map(|(c, _)| c)
}

/// Adds centered isotropic Gaussian noise with per-coordinate standard deviation `sigma`.
pub fn apply_gaussian(base: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidNoise(format!(
            "gaussian sigma {sigma} must be positive"
        )));
    }
    let mut rng = seed::rng(seed);
    let coords = base
        .coords()
        .iter()
        .map(|c| {
            let z: f64 = rng.sample(StandardNormal);
            c + sigma * z
        })
        .collect();
    PointCloud::new(base.dim(), coords)
}

/// Uniform sample on `shape` followed by the contamination `noise`.
pub fn sample_model(shape: &Shape, noise: &NoiseModel, n: usize, seed: u64) -> Result<PointCloud> {
    noise.validate_for(shape)?;
    let base = sample_uniform(shape, n, seed::derive(seed, seed::streams::NOISE, 0))?;
    let noise_seed = seed::derive(seed, seed::streams::NOISE, 1);
    match noise {
        NoiseModel::Noiseless => Ok(base),
        NoiseModel::Clutter { pi, region } => apply_clutter(&base, *pi, region, noise_seed),
        NoiseModel::Gaussian { sigma } => apply_gaussian(&base, *sigma, noise_seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    /// Comma separated; lines starting with `#` are headers.
    Csv,
    /// Whitespace separated.
    Xyz,
}

impl PointFormat {
    pub fn from_path(path: &Path) -> PointFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("txt") => {
                PointFormat::Xyz
            }
            _ => PointFormat::Csv,
        }
    }
}

pub fn parse_point_cloud(text: &str, format: PointFormat) -> Result<PointCloud> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            PointFormat::Csv => line.split(',').map(str::trim).collect(),
            PointFormat::Xyz => line.split_whitespace().collect(),
        };
        let expected = *dim.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Parse {
                row,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric field {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("non-finite field {f:?}"),
                });
            }
            coords.push(v);
        }
    }
    match dim {
        None => Err(Error::Parse {
            row: 1,
            message: "empty point cloud file".into(),
        }),
        Some(d) => PointCloud::new(d, coords),
    }
}

pub fn load_point_cloud(path: &Path, format: PointFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_point_cloud(&text, format)
}

pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in cloud.points() {
        let row: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
        writeln!(w, "{}", row.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Shape {
        Shape::polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn cloud_invariants() {
        assert!(PointCloud::new(2, vec![]).is_err());
        assert!(PointCloud::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointCloud::new(1, vec![f64::NAN]).is_err());
        let c = PointCloud::from_points(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.point(1), &[2.0, 3.0]);
    }

    #[test]
    fn segment_samples_stay_inside() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        let c = sample_uniform(&s, 3, 11).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.points().all(|p| (0.0..=1.0).contains(&p[0])));
        assert!(Shape::segment(1.0, 1.0).is_err());
    }

    #[test]
    fn tangle_cube_polynomial() {
        assert!((tangle_value(&[1.5, 1.5, 0.0], 10.0) - (-2.375)).abs() < 1e-12);
        assert_eq!(tangle_value(&[0.0, 0.0, 0.0], 10.0), 10.0);
        let t = Shape::tangle_cube();
        assert!(contains(&t, &[1.5, 1.5, 0.0]).unwrap());
        assert!(!contains(&t, &[0.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn contains_basic() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        assert!(contains(&s, &[0.5]).unwrap());
        assert!(contains(&unit_square(), &[0.5, 0.5]).unwrap());
        assert!(!contains(&unit_square(), &[2.0, 2.0]).unwrap());
        assert!(contains(&unit_square(), &[1.0, 0.5]).unwrap());
        assert!(matches!(
            contains(&unit_square(), &[0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nonconvex_polygon_even_odd() {
        // U shape: the notch (1.5, 2) is outside
        let u = Shape::polygon(vec![
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 3.0],
            [2.0, 3.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 3.0],
            [0.0, 3.0],
        ])
        .unwrap();
        assert!(!contains(&u, &[1.5, 2.0]).unwrap());
        assert!(contains(&u, &[0.5, 2.0]).unwrap());
        assert!(contains(&u, &[1.5, 0.5]).unwrap());
    }

    #[test]
    fn rejects_bow_tie() {
        let bow = Shape::polygon(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bow, Err(Error::InvalidShape(_))));
        assert!(Shape::polygon(vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn bounding_boxes() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        assert_eq!(
            bounding_box(&s).unwrap(),
            AxisBox::new(vec![0.0], vec![1.0]).unwrap()
        );
        let b = bounding_box(&Shape::tangle_cube()).unwrap();
        assert_eq!(b.lo, vec![-2.4; 3]);
        assert_eq!(b.hi, vec![2.4; 3]);
        let p = bounding_box(&unit_square()).unwrap();
        assert_eq!((p.lo, p.hi), (vec![0.0, 0.0], vec![1.0, 1.0]));
    }

    #[test]
    fn tangle_box_faces_are_outside() {
        // Grid scan of the box boundary at step 0.1: the polynomial is positive everywhere.
        let h = 2.4;
        let steps = 48;
        for i in 0..=steps {
            for j in 0..=steps {
                let a = -h + 0.1 * i as f64;
                let b = -h + 0.1 * j as f64;
                for face in [
                    [h, a, b],
                    [-h, a, b],
                    [a, h, b],
                    [a, -h, b],
                    [a, b, h],
                    [a, b, -h],
                ] {
                    assert!(tangle_value(&face, 10.0) > 0.0, "{face:?}");
                }
            }
        }
    }

    #[test]
    fn tangle_samples_satisfy_polynomial() {
        let c = sample_uniform(&Shape::tangle_cube(), 500, 3).unwrap();
        assert!(c.points().all(|p| tangle_value(p, 10.0) <= 0.0));
    }

    #[test]
    fn polygon_samples_inside() {
        let c = sample_uniform(&unit_square(), 1000, 5).unwrap();
        assert!(c.points().all(|p| contains(&unit_square(), p).unwrap()));
    }

    #[test]
    fn empty_tangle_is_degenerate() {
        let t = Shape::TangleCube { level: 100.0 };
        assert!(bounding_box(&t).is_err());
    }

    #[test]
    fn degenerate_rejection_reports_failure() {
        // Thin sliver: area ~1e-9 of its box.
        let sliver = Shape::polygon(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 1.0 + 1e-9]]).unwrap();
        let r = sample_uniform(&sliver, 10, 1);
        assert!(matches!(r, Err(Error::SamplerFailure { .. })), "{r:?}");
    }

    #[test]
    fn cloud_support_frequencies() {
        let base = PointCloud::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let m = base.len();
        let n = m * 10_000;
        let shape = Shape::PointCloudSupport { cloud: base };
        let c = sample_uniform(&shape, n, 9).unwrap();
        let mut counts = vec![0usize; m];
        for p in c.points() {
            counts[p[0] as usize] += 1;
        }
        let p = 1.0 / m as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for k in counts {
            assert!((k as f64 - n as f64 * p).abs() < 3.0 * sd, "{k}");
        }
    }

    #[test]
    fn clutter_outside_fraction() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        let n = 10_000;
        let base = sample_uniform(&s, n, 1).unwrap();
        let region = AxisBox::new(vec![-1.0], vec![2.0]).unwrap();
        let c = apply_clutter(&base, 0.5, &region, 2).unwrap();
        let outside = c.points().filter(|p| p[0] < 0.0 || p[0] > 1.0).count();
        let p = 0.5 * (2.0 / 3.0);
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (outside as f64 - n as f64 * p).abs() < 3.0 * sd,
            "{outside}"
        );
    }

    #[test]
    fn clutter_label_fraction() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        let base = sample_uniform(&s, 10_000, 4).unwrap();
        let region = default_clutter_box(&s).unwrap();
        let (_, labels) = apply_clutter_labeled(&base, 0.1, &region, 5).unwrap();
        let frac = labels.iter().filter(|l| **l).count() as f64 / labels.len() as f64;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
    }

    #[test]
    fn clutter_small_pi_keeps_base() {
        let s = Shape::segment(0.0, 1.0).unwrap();
        let base = sample_uniform(&s, 1000, 4).unwrap();
        let region = default_clutter_box(&s).unwrap();
        let c = apply_clutter(&base, 1e-12, &region, 5).unwrap();
        assert_eq!(c, base);
    }

    #[test]
    fn clutter_errors() {
        let base = PointCloud::from_scalars(&[0.5, 3.0]).unwrap();
        let region = AxisBox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(apply_clutter(&base, 0.5, &region, 1).is_err());
        assert!(apply_clutter(&base, 0.0, &region, 1).is_err());
        let s = Shape::segment(0.0, 1.0).unwrap();
        let bad = NoiseModel::Clutter {
            pi: 0.1,
            region: AxisBox::new(vec![0.2], vec![1.0]).unwrap(),
        };
        assert!(bad.validate_for(&s).is_err());
    }

    #[test]
    fn gaussian_moments_and_determinism() {
        let n = 100_000;
        let base = PointCloud::from_scalars(&vec![0.0; n]).unwrap();
        let g = apply_gaussian(&base, 1.0, 17).unwrap();
        let mean = g.coords().iter().sum::<f64>() / n as f64;
        let var = g.coords().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // sd(mean) = 1/sqrt(n); sd(var) ~ sqrt(2/n)
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{var}");
        assert_eq!(g, apply_gaussian(&base, 1.0, 17).unwrap());
        assert!(apply_gaussian(&base, 0.0, 17).is_err());
    }

    #[test]
    fn parse_csv_and_xyz() {
        let c = parse_point_cloud("0,0\n1,0\n", PointFormat::Csv).unwrap();
        assert_eq!((c.len(), c.dim()), (2, 2));
        let c = parse_point_cloud("# x,y\n0,0\n\n1,0\n", PointFormat::Csv).unwrap();
        assert_eq!(c.len(), 2);
        let c = parse_point_cloud("0 0 1\n1\t0  2\n", PointFormat::Xyz).unwrap();
        assert_eq!((c.len(), c.dim()), (2, 3));
    }

    #[test]
    fn parse_errors_carry_rows() {
        match parse_point_cloud("0,0\n1\n", PointFormat::Csv) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        match parse_point_cloud("0,0\n1,x\n", PointFormat::Csv) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_point_cloud("", PointFormat::Csv),
            Err(Error::Parse { .. })
        ));
    }
}
