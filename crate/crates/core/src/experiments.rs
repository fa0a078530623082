//! Monte-Carlo error curves for the DTEM.
//!
//! A reference quantile is estimated once from a large sample of the
//! generative model; each trial then draws an `n`-sample, and the error
//! `Δ = d^r_{P_n,k/n}(x) − d^r_{P,k/n}(x)` is averaged over trials for every
//! mass on the grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{parse_reals, KeyValues};
use crate::empirical::{
    check_power, frac, push_forward, quantile_index, Interp, Quantile, TabulatedQuantile,
};
use crate::error::{Error, Result};
use crate::geometry::{
    default_clutter_box, load_point_cloud, sample_model, AxisBox, NoiseModel, PointFormat, Shape,
};
use crate::regularity::psi_tilde;
use crate::seed::{self, streams};

/// Reference sample size per unit of `n` when none is given.
pub const REFERENCE_FACTOR: usize = 100;
pub const MIN_REFERENCE_SIZE: usize = 10_000;
/// Relative DTM change tolerated when the reference sample is doubled.
pub const REFERENCE_TOLERANCE: f64 = 1e-3;

/// 40 geometric masses from 0.005 to 0.5, then 10 linear up to 1.
pub fn default_m_grid() -> Vec<f64> {
    let (lo, hi) = (0.005f64, 0.5f64);
    let ratio = (hi / lo).ln() / 39.0;
    let mut grid: Vec<f64> = (0..40).map(|i| lo * (ratio * i as f64).exp()).collect();
    grid[39] = hi;
    grid.extend((1..=10).map(|i| 0.5 + 0.05 * i as f64));
    grid[49] = 1.0;
    grid
}

/// Default observation points: outside and inside a segment. Other shapes
/// have no natural default.
pub fn default_observation_points(shape: &Shape) -> Result<Vec<Vec<f64>>> {
    match shape {
        Shape::Segment { a, b } => {
            let len = b - a;
            Ok(vec![vec![a - 0.5 * len], vec![a + 0.5 * len]])
        }
        other => Err(Error::Config(format!(
            "no default observation point for {other}; give `x` explicitly"
        ))),
    }
}

/// Closed curve `ρ(θ) = 1 + 0.3 cos 3θ` approximated by a 96-gon; non-convex.
pub fn builtin_polygon() -> Shape {
    let vertices = (0..96)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 96.0;
            let rho = 1.0 + 0.3 * (3.0 * t).cos();
            [rho * t.cos(), rho * t.sin()]
        })
        .collect();
    Shape::Polygon2D { vertices }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub shape: Shape,
    pub noise: NoiseModel,
    pub x: Vec<f64>,
    pub r: f64,
    pub n: usize,
    pub trials: usize,
    pub m_grid: Vec<f64>,
    pub n_ref: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Config keys understood by [`ExperimentConfig::from_key_values`].
    pub const KEYS: [&'static str; 9] = [
        "shape", "noise", "x", "r", "n", "trials", "m_grid", "n_ref", "seed",
    ];

    /// Default mass grid and reference size.
    pub fn new(
        shape: Shape,
        noise: NoiseModel,
        x: Vec<f64>,
        r: f64,
        n: usize,
        trials: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let cfg = ExperimentConfig {
            shape,
            noise,
            x,
            r,
            n,
            trials,
            m_grid: default_m_grid(),
            n_ref: (REFERENCE_FACTOR * n).max(MIN_REFERENCE_SIZE),
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.noise.validate_for(&self.shape)?;
        check_power(self.r)?;
        if self.x.len() != self.shape.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.shape.dim(),
                got: self.x.len(),
            });
        }
        if self.x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("observation point must be finite".into()));
        }
        if self.n == 0 || self.trials == 0 {
            return Err(Error::Config("n and trials must be >= 1".into()));
        }
        if self.m_grid.is_empty() || self.m_grid.iter().any(|m| !(*m > 0.0 && *m <= 1.0)) {
            return Err(Error::Config(
                "m_grid must be a nonempty subset of (0,1]".into(),
            ));
        }
        if self.n_ref < MIN_REFERENCE_SIZE {
            return Err(Error::Precondition(format!(
                "reference sample size {} below {MIN_REFERENCE_SIZE}",
                self.n_ref
            )));
        }
        Ok(())
    }

    /// Key-value text that parses back to this config (except for cloud
    /// supports, which are recorded by content digest only).
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "shape = {}", shape_text(&self.shape));
        let _ = writeln!(out, "noise = {}", noise_text(&self.noise));
        let _ = writeln!(out, "x = {}", join_reals(&self.x));
        let _ = writeln!(out, "r = {}", self.r);
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "trials = {}", self.trials);
        let _ = writeln!(out, "m_grid = {}", join_reals(&self.m_grid));
        let _ = writeln!(out, "n_ref = {}", self.n_ref);
        let _ = writeln!(out, "seed = {}", self.master_seed);
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex_sha256(self.canonical_text().as_bytes())
    }

    /// Builds a config from parsed key-value pairs. Relative cloud paths are
    /// resolved against `base_dir`.
    pub fn from_key_values(kv: &KeyValues, base_dir: Option<&Path>) -> Result<Self> {
        kv.check_keys(&Self::KEYS)?;
        let need = |key: &str| {
            kv.get(key)
                .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };
        let row_err = |key: &str, message: String| Error::Parse {
            row: kv.row(key),
            message,
        };
        let shape = parse_shape(need("shape")?, base_dir).map_err(|e| match e {
            Error::Config(m) => row_err("shape", m),
            other => other,
        })?;
        let noise = match kv.get("noise") {
            None => NoiseModel::Noiseless,
            Some(t) => parse_noise(t, &shape).map_err(|e| match e {
                Error::Config(m) => row_err("noise", m),
                other => other,
            })?,
        };
        let x = match kv.get("x") {
            Some(t) => parse_reals(t).map_err(|m| row_err("x", m))?,
            None => {
                let mut pts = default_observation_points(&shape)?;
                pts.swap_remove(1)
            }
        };
        let r = kv.parse_value::<f64>("r")?.unwrap_or(1.0);
        let n = kv
            .parse_value::<usize>("n")?
            .ok_or_else(|| Error::Config("missing required key `n`".into()))?;
        let trials = kv.parse_value::<usize>("trials")?.unwrap_or(100);
        let master_seed = kv.parse_value::<u64>("seed")?.unwrap_or(0);
        let mut cfg = ExperimentConfig {
            shape,
            noise,
            x,
            r,
            n,
            trials,
            m_grid: default_m_grid(),
            n_ref: (REFERENCE_FACTOR * n).max(MIN_REFERENCE_SIZE),
            master_seed,
        };
        if let Some(t) = kv.get("m_grid") {
            if t != "default" {
                cfg.m_grid = parse_reals(t).map_err(|m| row_err("m_grid", m))?;
            }
        }
        if let Some(v) = kv.parse_value::<usize>("n_ref")? {
            cfg.n_ref = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join_reals(v: &[f64]) -> String {
    v.iter()
        .map(|c| format!("{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Config-file spelling of a shape.
pub fn shape_text(shape: &Shape) -> String {
    match shape {
        Shape::Segment { a, b } => format!("segment {a} {b}"),
        Shape::Polygon2D { vertices } => {
            let coords: Vec<String> = vertices.iter().map(|[a, b]| format!("{a},{b}")).collect();
            format!("polygon {}", coords.join(" "))
        }
        Shape::TangleCube { level } => format!("tangle-cube {level}"),
        Shape::PointCloudSupport { cloud } => {
            let bytes: Vec<u8> = cloud
                .coords()
                .iter()
                .flat_map(|c| c.to_le_bytes())
                .collect();
            format!(
                "cloud points={} dim={} sha256={}",
                cloud.len(),
                cloud.dim(),
                hex_sha256(&bytes)
            )
        }
    }
}

/// Parses `segment A B`, `polygon x,y x,y ...`, `2d-shape`, `tangle-cube [level]`
/// or `cloud PATH`.
pub fn parse_shape(text: &str, base_dir: Option<&Path>) -> Result<Shape> {
    let mut parts = text.split_whitespace();
    let kind = parts
        .next()
        .ok_or_else(|| Error::Config("empty shape".into()))?;
    let rest: Vec<&str> = parts.collect();
    let reals = || parse_reals(&rest.join(" ")).map_err(Error::Config);
    match kind {
        "segment" => {
            let v = reals()?;
            if v.len() != 2 {
                return Err(Error::Config("segment needs two endpoints".into()));
            }
            Shape::segment(v[0], v[1])
        }
        "polygon" => {
            let v = reals()?;
            if v.len() % 2 != 0 {
                return Err(Error::Config(
                    "polygon needs an even number of coordinates".into(),
                ));
            }
            Shape::polygon(v.chunks(2).map(|c| [c[0], c[1]]).collect())
        }
        "2d-shape" => Ok(builtin_polygon()),
        "tangle-cube" => {
            let v = reals()?;
            let shape = match v.as_slice() {
                [] => Shape::tangle_cube(),
                [level] => Shape::TangleCube { level: *level },
                _ => return Err(Error::Config("tangle-cube takes at most a level".into())),
            };
            shape.validate()?;
            Ok(shape)
        }
        "cloud" => {
            let [path] = rest.as_slice() else {
                return Err(Error::Config("cloud needs exactly one path".into()));
            };
            let path = match base_dir {
                Some(dir) if Path::new(path).is_relative() => dir.join(path),
                _ => Path::new(path).to_path_buf(),
            };
            let cloud = load_point_cloud(&path, PointFormat::from_path(&path))?;
            Ok(Shape::PointCloudSupport { cloud })
        }
        other => Err(Error::Config(format!("unknown shape kind {other:?}"))),
    }
}

/// Config-file spelling of a noise model.
pub fn noise_text(noise: &NoiseModel) -> String {
    match noise {
        NoiseModel::Noiseless => "noiseless".into(),
        NoiseModel::Clutter { pi, region } => {
            format!(
                "clutter {pi} box {} {}",
                join_reals(&region.lo),
                join_reals(&region.hi)
            )
        }
        NoiseModel::Gaussian { sigma } => format!("gaussian {sigma}"),
    }
}

/// Parses `noiseless`, `gaussian SIGMA`, `clutter PI` (default box) or
/// `clutter PI box LO HI` with comma-separated corners.
pub fn parse_noise(text: &str, shape: &Shape) -> Result<NoiseModel> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("not a number: {s:?}")))
    };
    let noise = match parts.as_slice() {
        ["noiseless"] => NoiseModel::Noiseless,
        ["gaussian", s] => NoiseModel::Gaussian { sigma: real(s)? },
        ["clutter", p] => NoiseModel::Clutter {
            pi: real(p)?,
            region: default_clutter_box(shape)?,
        },
        ["clutter", p, "box", lo, hi] => NoiseModel::Clutter {
            pi: real(p)?,
            region: AxisBox::new(
                parse_reals(lo).map_err(Error::Config)?,
                parse_reals(hi).map_err(Error::Config)?,
            )?,
        },
        _ => return Err(Error::Config(format!("unrecognised noise model {text:?}"))),
    };
    noise.validate_for(shape)?;
    Ok(noise)
}

/// Nodes for a reference tabulation: 200 geometric points from `1/n_ref` to
/// 0.1, then steps of 0.001 up to 1.
pub fn reference_grid(n_ref: usize) -> Vec<f64> {
    let lo = 1.0 / n_ref as f64;
    let hi = 0.1f64;
    let mut grid = vec![0.0];
    if lo < hi {
        let ratio = (hi / lo).ln() / 199.0;
        grid.extend((0..199).map(|i| lo * (ratio * i as f64).exp()));
    }
    grid.extend((100..=1000).map(|i| i as f64 / 1000.0));
    grid
}

fn reference_sample(cfg: &ExperimentConfig, n_ref: usize, index: u64) -> Result<TabulatedQuantile> {
    let cloud = sample_model(
        &cfg.shape,
        &cfg.noise,
        n_ref,
        seed::derive(cfg.master_seed, streams::REFERENCE, index),
    )?;
    let pf = push_forward(&cloud, &cfg.x, cfg.r)?;
    let values = pf.values();
    let grid = reference_grid(n_ref);
    let tab: Vec<f64> = grid
        .iter()
        .map(|u| values[quantile_index(*u, values.len()) - 1])
        .collect();
    Ok(TabulatedQuantile::new(grid, tab, Interp::Linear)?.with_meta(cfg.x.clone(), cfg.r))
}

/// Empirical quantile of an `n_ref`-sample from the model, linearly
/// interpolated between order statistics on [`reference_grid`].
pub fn estimate_reference_quantile(cfg: &ExperimentConfig) -> Result<TabulatedQuantile> {
    cfg.validate()?;
    reference_sample(cfg, cfg.n_ref, 0)
}

/// Largest relative change of the reference DTM over `m_grid` when the
/// reference sample is doubled. Logs a warning above [`REFERENCE_TOLERANCE`].
pub fn reference_convergence(cfg: &ExperimentConfig, reference: &TabulatedQuantile) -> Result<f64> {
    let doubled = reference_sample(cfg, 2 * cfg.n_ref, 1)?;
    let mut worst = 0.0f64;
    for &m in &cfg.m_grid {
        let a = reference.integral(m) / m;
        let b = doubled.integral(m) / m;
        let scale = b.abs().max(f64::MIN_POSITIVE);
        if a != b {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    if worst > REFERENCE_TOLERANCE {
        warn!(
            "reference DTM moved by {:.3}% when doubling n_ref = {}; consider a larger reference sample",
            100.0 * worst,
            cfg.n_ref
        );
    }
    Ok(worst)
}

/// Location and size of the largest absolute second difference of `q` on a
/// uniform grid of `points` intervals over `[lo, hi]`.
pub fn curvature_spike(q: &dyn Quantile, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) || points < 2 {
        return Err(Error::OutOfRange(
            "need 0 <= lo < hi <= 1 and points >= 2".into(),
        ));
    }
    let h = (hi - lo) / points as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 1..points {
        let u = lo + h * i as f64;
        let d2 = (q.eval(u + h) - 2.0 * q.eval(u) + q.eval(u - h)).abs();
        if d2 > best.1 {
            best = (u, d2);
        }
    }
    Ok(best)
}

/// Sum by recursive halving; deterministic for a fixed input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub m: f64,
    pub k: usize,
    pub mean_abs_delta: f64,
    pub mean_signed_delta: f64,
    pub std_error: f64,
    pub psi_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub rows: Vec<CurveRow>,
    pub config_digest: String,
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    pub seed: u64,
}

const CURVE_HEADER: &str = "m,k,mean_abs_delta,mean_signed_delta,std_error,psi_tilde";

/// `(m, k = round(m·n))` for each grid mass, dropping `k = 0` with a warning.
pub fn curve_masses(m_grid: &[f64], n: usize) -> Vec<(f64, usize)> {
    let mut out = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let k = ((m * n as f64).round() as usize).min(n);
        if k == 0 {
            warn!("m = {m} rounds to k = 0 at n = {n}; row skipped");
            continue;
        }
        out.push((m, k));
    }
    out
}

fn check_reference_meta(cfg: &ExperimentConfig, reference: &dyn Quantile) -> Result<()> {
    if let Some(meta) = reference.meta() {
        if meta.x != cfg.x || meta.r != cfg.r {
            return Err(Error::ReferenceMismatch(format!(
                "reference built at x = {:?}, r = {}; config has x = {:?}, r = {}",
                meta.x, meta.r, cfg.x, cfg.r
            )));
        }
    }
    Ok(())
}

/// Signed `Δ_{n,k/n,r}(x)` for every trial (outer index) and every `k` in
/// `ks` (inner index). Trial `t` samples with seed `derive(master, TRIAL, t)`.
pub fn trial_deltas(
    cfg: &ExperimentConfig,
    reference: &(dyn Quantile + Sync),
    ks: &[usize],
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_reference_meta(cfg, reference)?;
    let n = cfg.n;
    if let Some(k) = ks.iter().find(|k| **k == 0 || **k > n) {
        return Err(Error::OutOfRange(format!("k = {k} must lie in 1..={n}")));
    }
    let targets: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let mk = frac(k, n);
            reference.integral(mk) / mk
        })
        .collect();
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let cloud = sample_model(
                &cfg.shape,
                &cfg.noise,
                n,
                seed::derive(cfg.master_seed, streams::TRIAL, t),
            )?;
            let pf = push_forward(&cloud, &cfg.x, cfg.r)?;
            // running sums in ascending order, the same additions `dtem` performs
            let mut prefix = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            prefix.push(0.0);
            for v in pf.values() {
                acc += v;
                prefix.push(acc);
            }
            Ok(ks
                .iter()
                .zip(&targets)
                .map(|(&k, target)| prefix[k] / k as f64 - target)
                .collect())
        })
        .collect()
}

/// Monte-Carlo mean of `|Δ_{n,k/n,r}(x)|` on the config's mass grid.
pub fn error_curve(
    cfg: &ExperimentConfig,
    reference: &(dyn Quantile + Sync),
) -> Result<ErrorCurve> {
    cfg.validate()?;
    check_reference_meta(cfg, reference)?;
    let n = cfg.n;
    let masses = curve_masses(&cfg.m_grid, n);
    let ks: Vec<usize> = masses.iter().map(|m| m.1).collect();
    let per_trial = trial_deltas(cfg, reference, &ks)?;

    let trials = cfg.trials as f64;
    let mut rows = Vec::with_capacity(masses.len());
    for (j, &(m, k)) in masses.iter().enumerate() {
        let signed: Vec<f64> = per_trial.iter().map(|d| d[j]).collect();
        let abs: Vec<f64> = signed.iter().map(|d| d.abs()).collect();
        let mean_abs = pairwise_sum(&abs) / trials;
        let mean_signed = pairwise_sum(&signed) / trials;
        let std_error = if cfg.trials > 1 {
            let sq: Vec<f64> = abs
                .iter()
                .map(|a| (a - mean_abs) * (a - mean_abs))
                .collect();
            (pairwise_sum(&sq) / (trials - 1.0)).sqrt() / trials.sqrt()
        } else {
            0.0
        };
        rows.push(CurveRow {
            m,
            k,
            mean_abs_delta: mean_abs,
            mean_signed_delta: mean_signed,
            std_error,
            psi_tilde: psi_tilde(reference, frac(k, n))?,
        });
    }
    Ok(ErrorCurve {
        rows,
        config_digest: cfg.digest(),
        n,
        r: cfg.r,
        trials: cfg.trials,
        seed: cfg.master_seed,
    })
}

impl ErrorCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 2));
        let _ = writeln!(
            out,
            "# config: {} n={} r={} trials={} seed={}",
            self.config_digest, self.n, self.r, self.trials, self.seed
        );
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                row.m,
                row.k,
                row.mean_abs_delta,
                row.mean_signed_delta,
                row.std_error,
                row.psi_tilde
            );
        }
        out
    }

    /// Parses curve CSV. A digest different from `expected_digest` is logged,
    /// not rejected.
    pub fn parse_csv(text: &str, expected_digest: Option<&str>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |row: usize, message: String| Error::Parse { row, message };
        let (_, first) = lines
            .next()
            .ok_or_else(|| bad(1, "empty curve file".into()))?;
        let meta = first
            .strip_prefix("# config: ")
            .ok_or_else(|| bad(1, "missing `# config:` header".into()))?;
        let mut fields = meta.split_whitespace();
        let digest = fields
            .next()
            .ok_or_else(|| bad(1, "missing digest".into()))?
            .to_string();
        let (mut n, mut r, mut trials, mut seed) = (None, None, None, None);
        for f in fields {
            let (key, value) = f
                .split_once('=')
                .ok_or_else(|| bad(1, format!("bad header field {f:?}")))?;
            let err = || bad(1, format!("bad header value {f:?}"));
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|_| err())?),
                "r" => r = Some(value.parse::<f64>().map_err(|_| err())?),
                "trials" => trials = Some(value.parse::<usize>().map_err(|_| err())?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| err())?),
                _ => return Err(bad(1, format!("unknown header field {key:?}"))),
            }
        }
        let missing = |name: &str| bad(1, format!("header lacks {name}"));
        let curve_n = n.ok_or_else(|| missing("n"))?;
        let curve_r = r.ok_or_else(|| missing("r"))?;
        let curve_trials = trials.ok_or_else(|| missing("trials"))?;
        let curve_seed = seed.ok_or_else(|| missing("seed"))?;
        if let Some(expected) = expected_digest {
            if expected != digest {
                warn!("curve was produced by config {digest}, expected {expected}");
            }
        }
        match lines.next() {
            Some((_, h)) if h.trim() == CURVE_HEADER => {}
            _ => return Err(bad(2, format!("expected column header `{CURVE_HEADER}`"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 6 {
                return Err(bad(row, format!("expected 6 columns, got {}", cols.len())));
            }
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(row, format!("not a number: {s:?}")))
            };
            rows.push(CurveRow {
                m: real(cols[0])?,
                k: cols[1]
                    .parse::<usize>()
                    .map_err(|_| bad(row, format!("bad k: {:?}", cols[1])))?,
                mean_abs_delta: real(cols[2])?,
                mean_signed_delta: real(cols[3])?,
                std_error: real(cols[4])?,
                psi_tilde: real(cols[5])?,
            });
        }
        Ok(ErrorCurve {
            rows,
            config_digest: digest,
            n: curve_n,
            r: curve_r,
            trials: curve_trials,
            seed: curve_seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_digest: Option<&str>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ErrorCurve::parse_csv(&text, expected_digest)
    }
}

/// Saves a reference quantile with the config digest in its header.
pub fn save_reference(q: &TabulatedQuantile, digest: &str, path: &Path) -> Result<()> {
    q.save(path, &[format!("config: {digest}")])
}

/// Loads a reference quantile; a different recorded digest is logged.
pub fn load_reference(path: &Path, expected_digest: Option<&str>) -> Result<TabulatedQuantile> {
    let (q, comments) = TabulatedQuantile::load(path)?;
    if let Some(expected) = expected_digest {
        let recorded = comments.iter().find_map(|c| c.strip_prefix("config: "));
        if recorded != Some(expected) {
            warn!(
                "reference {} was produced by config {}, expected {expected}",
                path.display(),
                recorded.unwrap_or("<none>")
            );
        }
    }
    Ok(q)
}

/// `Ψ̃` on a mass grid.
pub fn psi_curve(reference: &dyn Quantile, m_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    m_grid
        .iter()
        .map(|&m| Ok((m, psi_tilde(reference, m)?)))
        .collect()
}

pub fn psi_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("m,psi_tilde\n");
    for (m, p) in points {
        let _ = writeln!(out, "{m:.16e},{p:.16e}");
    }
    out
}

/// Fraction of consecutive rows where the error curve and `Ψ̃` move in the
/// same direction. Error changes smaller than twice their combined standard
/// error count as agreement.
pub fn monotonicity_agreement(curve: &ErrorCurve) -> Result<f64> {
    if curve.rows.len() < 3 {
        return Err(Error::Precondition(format!(
            "monotonicity needs >= 3 rows, got {}",
            curve.rows.len()
        )));
    }
    let pairs = curve.rows.len() - 1;
    let agree = curve
        .rows
        .windows(2)
        .filter(|w| {
            let de = w[1].mean_abs_delta - w[0].mean_abs_delta;
            let se = w[0].std_error.hypot(w[1].std_error);
            if de.abs() < 2.0 * se {
                return true;
            }
            let dp = w[1].psi_tilde - w[0].psi_tilde;
            (de > 0.0 && dp > 0.0) || (de < 0.0 && dp < 0.0)
        })
        .count();
    Ok(agree as f64 / pairs as f64)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Precondition("regression needs >= 2 points".into()));
    }
    for (x, y) in points {
        if !(*x > 0.0) || !(*y > 0.0) {
            return Err(Error::OutOfRange(format!(
                "log undefined for point ({x}, {y}); values must be positive"
            )));
        }
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition(
            "regression needs distinct x values".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Slope of `log mean_abs_delta` against `log n` at a common mass.
pub fn rate_regression(curves: &[ErrorCurve], m_fixed: f64) -> Result<f64> {
    let mut ns: Vec<usize> = curves.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 {
        return Err(Error::Precondition(format!(
            "rate regression needs >= 4 distinct n, got {}",
            ns.len()
        )));
    }
    let mut points = Vec::with_capacity(curves.len());
    for c in curves {
        let row = c
            .rows
            .iter()
            .find(|row| (row.m - m_fixed).abs() <= 1e-12 * m_fixed.max(1.0))
            .ok_or_else(|| {
                Error::Precondition(format!("curve n = {} has no row at m = {m_fixed}", c.n))
            })?;
        if !(row.mean_abs_delta > 0.0) {
            return Err(Error::OutOfRange(format!(
                "mean |delta| = {} at n = {} is not positive; log undefined",
                row.mean_abs_delta, c.n
            )));
        }
        points.push((c.n as f64, row.mean_abs_delta));
    }
    log_log_slope(&points)
}

/// Reference, error curve and `Ψ̃` curve for one config.
#[derive(Debug, Clone)]
pub struct CurveRun {
    pub reference: TabulatedQuantile,
    pub curve: ErrorCurve,
    pub psi: Vec<(f64, f64)>,
}

pub fn run_curve(cfg: &ExperimentConfig, check_reference: bool) -> Result<CurveRun> {
    let reference = estimate_reference_quantile(cfg)?;
    if check_reference {
        reference_convergence(cfg, &reference)?;
    }
    let curve = error_curve(cfg, &reference)?;
    let psi = psi_curve(&reference, &cfg.m_grid)?;
    Ok(CurveRun {
        reference,
        curve,
        psi,
    })
}

pub const BUILTIN_EXPERIMENTS: [&str; 3] = ["segment", "2d-shape", "tangle-cube"];

/// One labelled config of a built-in experiment.
#[derive(Debug, Clone)]
pub struct BuiltinRun {
    pub label: String,
    pub config: ExperimentConfig,
}

/// Built-in experiments under the noiseless, clutter (π = 0.1) and Gaussian
/// (σ = 0.5) models. `n` defaults to 500 (segment, 2d-shape) or 2000
/// (tangle-cube).
pub fn builtin_experiment(
    name: &str,
    n: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<Vec<BuiltinRun>> {
    let (shape, points, powers, default_n): (Shape, Vec<Vec<f64>>, &[f64], usize) = match name {
        "segment" => {
            let s = Shape::segment(0.0, 1.0)?;
            let pts = default_observation_points(&s)?;
            (s, pts, &[1.0, 2.0], 500)
        }
        "2d-shape" => (builtin_polygon(), vec![vec![1.6, 0.0]], &[1.0, 2.0], 500),
        "tangle-cube" => (
            Shape::tangle_cube(),
            vec![vec![0.0, 0.0, 0.0]],
            &[1.0, 2.0, 3.0],
            2000,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown experiment {other:?} (known: {})",
                BUILTIN_EXPERIMENTS.join(", ")
            )))
        }
    };
    let n = n.unwrap_or(default_n);
    let noises = [
        ("noiseless", NoiseModel::Noiseless),
        (
            "clutter",
            NoiseModel::Clutter {
                pi: 0.1,
                region: default_clutter_box(&shape)?,
            },
        ),
        ("gaussian", NoiseModel::Gaussian { sigma: 0.5 }),
    ];
    let mut runs = Vec::new();
    for (noise_name, noise) in &noises {
        for x in &points {
            for &r in powers {
                let xs: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
                runs.push(BuiltinRun {
                    label: format!("{name}_{noise_name}_x{}_r{r}", xs.join("_")),
                    config: ExperimentConfig::new(
                        shape.clone(),
                        noise.clone(),
                        x.clone(),
                        r,
                        n,
                        trials,
                        seed,
                    )?,
                });
            }
        }
    }
    Ok(runs)
}
