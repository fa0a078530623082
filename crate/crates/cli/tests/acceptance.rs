//! Acceptance suite: one PASS/FAIL line per criterion and a summary line.
//! Set DTEM_ACCEPTANCE_STRICT to exit non-zero when any criterion fails.
//!
//! Runs without the libtest harness so every line is printed regardless of
//! output capture.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtem::bounds::{
    deviation_bound_bounded, expectation_bound_bounded, lecam_lower_bound, lecam_pair, BoundInputs,
};
use dtem::dtm::{delta, delta_by_decomposition, dtem, dtm_from_quantile};
use dtem::empirical::{j1_functional, push_forward, PowerLawQuantile};
use dtem::experiments::{
    builtin_experiment, error_curve, monotonicity_agreement, rate_regression, run_curve,
    trial_deltas, CurveRow, ExperimentConfig,
};
use dtem::geometry::{NoiseModel, PointCloud, Shape};
use dtem::process::{
    beta_law_check, phi, phi_tilde, verify_process, TailEstimate, VerificationPlan,
};
use dtem::regularity::{
    least_concave_majorant, modulus_of_continuity, uniform_grid, ModulusFunction,
};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, half_width: f64) -> PointCloud {
    let coords = (0..n * d)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect();
    PointCloud::new(d, coords).unwrap()
}

fn segment_config(n: usize, trials: usize, m_grid: Vec<f64>, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        Shape::segment(0.0, 1.0).unwrap(),
        NoiseModel::Noiseless,
        vec![0.0],
        1.0,
        n,
        trials,
        seed,
    )
    .unwrap();
    cfg.m_grid = m_grid;
    cfg
}

fn dtem_quantile_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=3);
        let r = [1.0, 2.0, 3.0][rng.random_range(0..3)];
        let cloud = random_cloud(&mut rng, n, d, 1.0);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let table = push_forward(&cloud, &x, r).unwrap().quantile_table();
        for k in 1..=n {
            let a = dtem(&cloud, &x, k, r).unwrap().powered;
            let b = dtm_from_quantile(&table, k as f64 / n as f64, r)
                .unwrap()
                .powered;
            let rel = if a == b {
                0.0
            } else {
                (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
            };
            worst = worst.max(rel);
            checks += 1;
        }
    }
    let t = start.elapsed();
    Outcome {
        pass: worst <= 1e-12 && within(t, 10),
        detail: format!(
            "{checks} (cloud, k) pairs, max relative gap {worst:.2e} (<= 1e-12), {:.2}s (< 10s)",
            t.as_secs_f64()
        ),
    }
}

fn horizontal_form_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let reference = PowerLawQuantile::new(0.0, 1.0, 1.0);
    let cdf = |t: f64| t.clamp(0.0, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=3);
        let r = [1.0, 2.0, 3.0][rng.random_range(0..3)];
        let cloud = random_cloud(&mut rng, n, d, 0.6);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.6..0.6)).collect();
        let k = rng.random_range(1..=n);
        let direct = delta(&cloud, &reference, &x, k, r).unwrap().delta;
        let horizontal = delta_by_decomposition(&cloud, &cdf, &[0.0, 1.0], &x, k, r).unwrap();
        worst = worst.max((direct - horizontal).abs());
    }
    let t = start.elapsed();
    Outcome {
        pass: worst <= 1e-9 && within(t, 30),
        detail: format!(
            "1000 instances, max |gap| {worst:.2e} (<= 1e-9), {:.2}s (< 30s)",
            t.as_secs_f64()
        ),
    }
}

fn closed_forms() -> Outcome {
    let q1 = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let q2 = PowerLawQuantile::uniform_unit_from_origin(2.0);
    let mut worst = 0.0f64;
    for i in 1..=1000 {
        let m = i as f64 / 1000.0;
        let a = dtm_from_quantile(&q1, m, 1.0).unwrap().powered;
        let b = dtm_from_quantile(&q2, m, 2.0).unwrap().powered;
        worst = worst.max((a - m / 2.0).abs()).max((b - m * m / 3.0).abs());
    }
    let j1 = j1_functional(&|t: f64| t.clamp(0.0, 1.0), 1.0, 200_000)
        .unwrap()
        .value;
    let j1_gap = (j1 - std::f64::consts::PI / 8.0).abs();
    Outcome {
        pass: worst <= 1e-12 && j1_gap <= 1e-4,
        detail: format!(
            "max DTM gap {worst:.2e} (<= 1e-12), J1 = {j1:.6} vs pi/8, gap {j1_gap:.2e} (<= 1e-4)"
        ),
    }
}

fn parametric_rate() -> Outcome {
    let start = Instant::now();
    let reference = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let curves: Vec<_> = [250, 500, 1000, 2000, 4000]
        .iter()
        .map(|&n| error_curve(&segment_config(n, 200, vec![0.1], SEED + 4), &reference).unwrap())
        .collect();
    let slope = rate_regression(&curves, 0.1).unwrap();
    let t = start.elapsed();
    let means: Vec<String> = curves
        .iter()
        .map(|c| format!("n={}:{:.3e}", c.n, c.rows[0].mean_abs_delta))
        .collect();
    Outcome {
        pass: (-0.65..=-0.35).contains(&slope) && within(t, 120),
        detail: format!(
            "slope {slope:.4} (in [-0.65, -0.35]); {}; {:.1}s (< 120s)",
            means.join(" "),
            t.as_secs_f64()
        ),
    }
}

fn holder_scaling() -> Outcome {
    let start = Instant::now();
    let n = 2000usize;
    let ks = [5usize, 20, 80, 320];
    let grid = ks.iter().map(|k| *k as f64 / n as f64).collect();
    let reference = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let curve = error_curve(&segment_config(n, 200, grid, SEED + 5), &reference).unwrap();
    let ratios: Vec<f64> = curve
        .rows
        .iter()
        .map(|row| row.mean_abs_delta / ((row.k as f64 / n as f64).sqrt() / (n as f64).sqrt()))
        .collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let t = start.elapsed();
    let ks_seen: Vec<usize> = curve.rows.iter().map(|r| r.k).collect();
    Outcome {
        pass: ks_seen == ks && hi / lo <= 8.0 && within(t, 120),
        detail: format!(
            "ratios {:?} at k = {ks_seen:?}, spread {:.2} (<= 8), {:.1}s (< 120s)",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            hi / lo,
            t.as_secs_f64()
        ),
    }
}

/// Consecutive pairs whose error change exceeds twice the combined standard
/// error, and how many of those move with psi-tilde.
fn decisive_pairs(rows: &[CurveRow]) -> (usize, usize) {
    let mut decisive = 0;
    let mut agree = 0;
    for w in rows.windows(2) {
        let de = w[1].mean_abs_delta - w[0].mean_abs_delta;
        if de.abs() >= 2.0 * w[0].std_error.hypot(w[1].std_error) {
            decisive += 1;
            let dp = w[1].psi_tilde - w[0].psi_tilde;
            if (de > 0.0 && dp > 0.0) || (de < 0.0 && dp < 0.0) {
                agree += 1;
            }
        }
    }
    (decisive, agree)
}

fn monotonicity() -> Outcome {
    let start = Instant::now();
    let runs = builtin_experiment("segment", Some(500), 100, SEED + 6).unwrap();
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    let (mut decisive_full, mut decisive_thin, mut agree_thin) = (0, 0, 0);
    for run in &runs {
        let out = run_curve(&run.config, false).unwrap();
        let a = monotonicity_agreement(&out.curve).unwrap();
        worst = worst.min(a);
        let (dec_full, _) = decisive_pairs(&out.curve.rows);
        let thinned: Vec<CurveRow> = out.curve.rows.iter().step_by(7).cloned().collect();
        let (dec, agree) = decisive_pairs(&thinned);
        decisive_full += dec_full;
        decisive_thin += dec;
        agree_thin += agree;
        parts.push(format!("{}={a:.2}", run.label));
    }
    let t = start.elapsed();
    Outcome {
        pass: worst >= 0.8 && within(t, 300),
        detail: format!(
            "{} configurations, min agreement {worst:.3} (>= 0.8), {:.1}s (< 300s); {}; \
             supplementary: {decisive_full} pairs outside the 2-SE band on the full grid, \
             {agree_thin} of {decisive_thin} such pairs agree on every 7th mass",
            runs.len(),
            t.as_secs_f64(),
            parts.join(" ")
        ),
    }
}

fn deviation_bound_validity() -> Outcome {
    let start = Instant::now();
    let reference = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let omega = ModulusFunction::identity(1000);
    let lambdas: Vec<f64> = (0..20)
        .map(|i| 1e-3 * 1000f64.powf(i as f64 / 19.0))
        .collect();
    let mut violations = Vec::new();
    let mut strict_violations = 0usize;
    let mut cells = 0usize;
    for (i, &(n, k)) in [(100usize, 5usize), (100, 25), (1000, 50)]
        .iter()
        .enumerate()
    {
        let cfg = segment_config(n, 10_000, vec![k as f64 / n as f64], SEED + 70 + i as u64);
        let deltas = trial_deltas(&cfg, &reference, &[k]).unwrap();
        let abs: Vec<f64> = deltas.iter().map(|d| d[0].abs()).collect();
        let inputs = BoundInputs {
            n,
            k,
            r: 1.0,
            omega: &omega,
            quantile: &reference,
            c_abs: 1.0,
        };
        for &lambda in &lambdas {
            let bound = deviation_bound_bounded(&inputs, lambda).unwrap();
            let hits = abs.iter().filter(|d| **d >= lambda).count();
            let est = TailEstimate::from_counts(hits, abs.len());
            cells += 1;
            if est.probability > bound {
                violations.push(format!(
                    "(n={n},k={k},lambda={lambda:.3e}: p={:.3e} > {bound:.3e})",
                    est.probability
                ));
            }
            if est.upper() > bound {
                strict_violations += 1;
            }
        }
    }
    let t = start.elapsed();
    Outcome {
        pass: violations.is_empty() && within(t, 180),
        detail: format!(
            "{cells} cells, {} tail estimates above the bound, {strict_violations} with estimate + half-width above; {:.1}s (< 180s) {}",
            violations.len(),
            t.as_secs_f64(),
            violations.join(" ")
        ),
    }
}

fn process_verification() -> Outcome {
    let start = Instant::now();
    let rows = verify_process(&VerificationPlan::standard(10_000, SEED + 8)).unwrap();
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    let significant = rows
        .iter()
        .filter(|r| r.estimate - r.half_width > r.bound)
        .count();
    let mut phi_ok = true;
    for i in 1..=200_000 {
        let l = i as f64 * 5e-3;
        phi_ok &= phi(l) >= 1.0 / (1.0 + l / 3.0) - 1e-12;
        phi_ok &= phi_tilde(l) >= 1.0 / (1.0 + 2.0 * l / 3.0) - 1e-12;
    }
    let t = start.elapsed();
    let failures: Vec<String> = failed
        .iter()
        .map(|r| {
            format!(
                "({} n={} param={} lambda={}: bound {:.3e} < {:.3e} + {:.3e})",
                r.kind, r.n, r.param, r.lambda, r.bound, r.estimate, r.half_width
            )
        })
        .collect();
    Outcome {
        pass: failed.is_empty() && phi_ok && within(t, 300),
        detail: format!(
            "{} rows, {} below estimate + half-width, {significant} below estimate - half-width; Phi lower bounds {}; {:.1}s (< 300s) {}",
            rows.len(),
            failed.len(),
            if phi_ok { "hold" } else { "violated" },
            t.as_secs_f64(),
            failures.join(" ")
        ),
    }
}

fn beta_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(n, k)) in [(50usize, 5usize), (200, 20)].iter().enumerate() {
        let c = beta_law_check(n, k, 10_000, SEED + 90 + i as u64).unwrap();
        pass &= c.ks < 0.02 && c.mean_error < 0.005;
        parts.push(format!(
            "(n={n},k={k}): KS {:.4} (< 0.02), mean error {:.5} (< 0.005)",
            c.ks, c.mean_error
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn lecam_construction() -> Outcome {
    let base = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let mut tv_gap = 0.0f64;
    for n in 4..=128 {
        let pair = lecam_pair(&base, n, 4).unwrap();
        tv_gap = tv_gap.max((pair.total_variation() - 2.0 / n as f64).abs());
    }
    let grid: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
    let table = base.tabulate(grid).unwrap();
    let omega =
        least_concave_majorant(&modulus_of_continuity(&table, &uniform_grid(2000)).unwrap());
    let mut max_ratio = 0.0f64;
    let mut small_k_min = f64::INFINITY;
    for n in [100usize, 500, 2000] {
        for k in 1..=n / 10 {
            let inputs = BoundInputs {
                n,
                k,
                r: 1.0,
                omega: &omega,
                quantile: &base,
                c_abs: 1.0,
            };
            let upper = expectation_bound_bounded(&inputs).unwrap().final_bound;
            let lower = lecam_lower_bound(&omega, 1.0, k, n).unwrap().raw;
            let ratio = lower / upper;
            max_ratio = max_ratio.max(ratio);
            if (2..=4).contains(&k) {
                small_k_min = small_k_min.min(ratio);
            }
        }
    }
    Outcome {
        pass: tv_gap <= 1e-12 && max_ratio <= 1.0 && small_k_min >= 0.1,
        detail: format!(
            "max |TV - 2/n| {tv_gap:.2e} (<= 1e-12) over n = 4..128; lower/upper ratio over k <= n/10: max {max_ratio:.3} (<= 1), min over 2 <= k <= 4: {small_k_min:.3} (>= 0.1)"
        ),
    }
}

fn stability_blow_up() -> Outcome {
    let n = 2000usize;
    let masses = vec![0.2, 0.1, 0.05, 0.02, 0.01];
    let reference = PowerLawQuantile::uniform_unit_from_origin(1.0);
    let curve = error_curve(&segment_config(n, 200, masses, SEED + 11), &reference).unwrap();
    let j1 = j1_functional(&|t: f64| t.clamp(0.0, 1.0), 1.0, 200_000)
        .unwrap()
        .value;
    let ratios: Vec<f64> = curve
        .rows
        .iter()
        .map(|row| (n as f64 / row.k as f64) * j1 / (n as f64).sqrt() / row.mean_abs_delta)
        .collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    Outcome {
        pass: increasing && ratios.len() == 5,
        detail: format!(
            "stability-bound / error at m = 0.2..0.01: {:?} (strictly increasing)",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    }
}

fn dtem_bin() -> &'static str {
    env!("CARGO_BIN_EXE_dtem")
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(dtem_bin())
        .args(args)
        .env("RUST_LOG", "error")
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

/// Output files listed in a manifest, keyed by file name.
fn manifest_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap_or_default();
    let mut out = BTreeMap::new();
    for line in text.lines() {
        if let Some(list) = line.strip_prefix("outputs = ") {
            for p in list.split(',').filter(|p| !p.is_empty()) {
                let path = PathBuf::from(p);
                let name = path.file_name().unwrap().to_string_lossy().to_string();
                out.insert(name, fs::read(&path).unwrap_or_default());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| tmp.path().join(name).display().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "sample",
            vec![
                "sample".into(),
                "--shape".into(),
                "tangle-cube".into(),
                "--noise".into(),
                "gaussian 0.5".into(),
                "--n".into(),
                "2000".into(),
            ],
        ),
        (
            "reproduce",
            vec![
                "reproduce".into(),
                "segment".into(),
                "--n".into(),
                "200".into(),
                "--trials".into(),
                "30".into(),
            ],
        ),
        (
            "curve",
            vec![
                "curve".into(),
                "--shape".into(),
                "2d-shape".into(),
                "--noise".into(),
                "clutter 0.1".into(),
                "--x".into(),
                "1.6,0".into(),
                "--n".into(),
                "300".into(),
                "--trials".into(),
                "40".into(),
            ],
        ),
        (
            "verify-process",
            vec![
                "verify-process".into(),
                "--n".into(),
                "100".into(),
                "--trials".into(),
                "2000".into(),
            ],
        ),
        (
            "bounds",
            vec![
                "bounds".into(),
                "--n".into(),
                "500".into(),
                "--m-bar".into(),
                "0.3".into(),
            ],
        ),
    ];
    let mut problems = Vec::new();
    let mut files = 0usize;
    for (name, args) in &commands {
        let first = dir(&format!("{name}-1"));
        let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
        // no --seed: the run draws one and records it in the manifest
        argv.extend(["--threads", "1", "--out-dir", first.as_str()]);
        if !run_cli(&argv) {
            problems.push(format!("{name}: first run failed"));
            continue;
        }
        let manifest = format!("{first}/manifest.txt");
        let again = dir(&format!("{name}-n"));
        if !run_cli(&["replay", &manifest, "--threads", "4", "--out-dir", &again]) {
            problems.push(format!("{name}: replay failed"));
            continue;
        }
        let a = manifest_outputs(Path::new(&first));
        let b = manifest_outputs(Path::new(&again));
        if a.is_empty() || a.keys().ne(b.keys()) {
            problems.push(format!("{name}: output lists differ"));
            continue;
        }
        for (file, bytes) in &a {
            files += 1;
            if bytes.is_empty() || b[file] != *bytes {
                problems.push(format!("{name}: {file} differs"));
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!(
            "{} commands replayed from their manifests at 1 and 4 threads, {files} output files compared; {}",
            commands.len(),
            if problems.is_empty() { "all byte-identical".to_string() } else { problems.join(", ") }
        ),
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        (
            "DTEM equals the DTM of the empirical quantile",
            dtem_quantile_identity,
        ),
        ("horizontal-form oracle for delta", horizontal_form_oracle),
        ("closed-form DTM and J1 on the unit segment", closed_forms),
        ("1/sqrt(n) rate at fixed mass", parametric_rate),
        ("sqrt(k/n)/sqrt(n) scaling in k", holder_scaling),
        ("error curve follows psi-tilde monotonicity", monotonicity),
        (
            "deviation bound dominates simulated tails",
            deviation_bound_validity,
        ),
        (
            "empirical-process inequalities dominate simulated tails",
            process_verification,
        ),
        ("order statistics follow the Beta law", beta_law),
        ("two-point lower bound construction", lecam_construction),
        ("stability bound blows up as m decreases", stability_blow_up),
        ("byte-identical reruns from manifests", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{tag}] {name}: {}", i + 1, outcome.detail);
        if !outcome.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!(
            "acceptance: {} of {} criteria passed, failed {failed:?}",
            criteria.len() - failed.len(),
            criteria.len()
        );
        // Failures are reported above; a non-zero exit is opt-in so that a
        // workspace test run still reaches the remaining targets.
        if std::env::var_os("DTEM_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
