use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use log::{info, warn};

use dtem::bounds::{
    deviation_bound_bounded, deviation_bound_unbounded, expectation_bound_bounded,
    expectation_bound_unbounded, lecam_lower_bound, supnorm_expectation_bound, BoundInputs,
    CoveringParams, UnboundedInputs,
};
use dtem::config::{parse_reals, KeyValues};
use dtem::dtm::{dtem_mass, dtm_field, write_field_csv};
use dtem::empirical::{j1_functional, PowerLawQuantile, TabulatedQuantile};
use dtem::experiments::{
    builtin_experiment, monotonicity_agreement, parse_noise, parse_shape, psi_csv, run_curve,
    save_reference, ExperimentConfig,
};
use dtem::geometry::{load_point_cloud, sample_model, write_xyz, NoiseModel, PointFormat};
use dtem::process::{report_csv, verify_process, VerificationPlan};
use dtem::regularity::{least_concave_majorant, modulus_of_continuity, uniform_grid};

use crate::args::{
    BoundsArgs, Cli, Command, CurveArgs, DtmArgs, ReproduceArgs, SampleArgs, VerifyArgs,
};
use crate::manifest::{self, Manifest};
use crate::CliError;

/// Runs one command line; `args` is the argument list recorded in the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    if let Command::Replay(replay) = &cli.command {
        let (recorded, seed) = manifest::read_invocation(&replay.manifest)?;
        let argv = std::iter::once("dtem".to_string()).chain(recorded.iter().cloned());
        let mut inner = Cli::try_parse_from(argv)
            .map_err(|e| CliError::UsageMessage(format!("recorded arguments do not parse: {e}")))?;
        if matches!(inner.command, Command::Replay(_)) {
            return Err(CliError::UsageMessage(
                "a manifest cannot record a replay".into(),
            ));
        }
        inner.seed = Some(seed);
        inner.out_dir = cli.out_dir.clone();
        inner.threads = cli.threads.or(inner.threads);
        return execute(inner, recorded);
    }
    execute(cli, args)
}

fn entropy_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos()),
    );
    h.write_u32(std::process::id());
    h.finish()
}

struct Ctx {
    out_dir: PathBuf,
    seed: u64,
    kv: KeyValues,
    /// directory of the config file, for relative paths read from it
    base_dir: Option<PathBuf>,
    outputs: Vec<PathBuf>,
    settings: Vec<(String, String)>,
}

impl Ctx {
    fn output_path(&mut self, name: &str) -> PathBuf {
        let path = self.out_dir.join(name);
        self.outputs.push(path.clone());
        path
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.output_path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    fn set_flag<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.kv.set(key, v.to_string());
        }
    }

    fn allow(&self, keys: &[&str]) -> Result<(), CliError> {
        let mut all = keys.to_vec();
        all.push("seed");
        self.kv.check_keys(&all).map_err(CliError::Usage)
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.kv.get(key).ok_or_else(|| {
            CliError::UsageMessage(format!(
                "missing `--{}` (or `{key}` in the config)",
                key.replace('_', "-")
            ))
        })
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.kv.parse_value(key).map_err(CliError::Usage)
    }

    /// Path value; relative paths that came from the config file are resolved
    /// against its directory.
    fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        let raw = PathBuf::from(self.required(key)?);
        match &self.base_dir {
            Some(dir) if raw.is_relative() && self.kv.row(key) > 0 => Ok(dir.join(raw)),
            _ => Ok(raw),
        }
    }

    fn reals(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.kv
            .get(key)
            .map(|t| parse_reals(t).map_err(|m| CliError::UsageMessage(format!("`{key}`: {m}"))))
            .transpose()
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }
}

fn execute(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let kv = match &cli.config {
        Some(path) => KeyValues::load(path).map_err(CliError::Usage)?,
        None => KeyValues::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => match kv.parse_value::<u64>("seed").map_err(CliError::Usage)? {
            Some(s) => s,
            None => {
                let s = entropy_seed();
                info!("no seed given; using {s}");
                s
            }
        },
    };
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let threads = cli
        .threads
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Message(format!("cannot start worker pool: {e}")))?;
    let mut ctx = Ctx {
        out_dir: cli.out_dir.clone(),
        seed,
        kv,
        base_dir: cli
            .config
            .as_ref()
            .and_then(|p| p.parent().map(Path::to_path_buf)),
        outputs: Vec::new(),
        settings: Vec::new(),
    };
    ctx.kv.set("seed", seed.to_string());
    let name = pool.install(|| -> Result<&'static str, CliError> {
        match &cli.command {
            Command::Sample(a) => sample(&mut ctx, a).map(|_| "sample"),
            Command::Dtm(a) => dtm(&mut ctx, a).map(|_| "dtm"),
            Command::Curve(a) => curve(&mut ctx, a).map(|_| "curve"),
            Command::Bounds(a) => bounds(&mut ctx, a).map(|_| "bounds"),
            Command::VerifyProcess(a) => verify(&mut ctx, a).map(|_| "verify-process"),
            Command::Reproduce(a) => reproduce(&mut ctx, a).map(|_| "reproduce"),
            Command::Replay(_) => unreachable!("replay is resolved before execution"),
        }
    })?;
    let m = Manifest {
        command: name.to_string(),
        args,
        seed,
        threads,
        settings: ctx.settings,
        outputs: ctx.outputs,
        wall_time: start.elapsed().as_secs_f64(),
    };
    m.write(&cli.out_dir)?;
    Ok(())
}

fn usage(e: dtem::Error) -> CliError {
    CliError::Usage(e)
}

fn sample(ctx: &mut Ctx, a: &SampleArgs) -> Result<(), CliError> {
    ctx.set_flag("shape", &a.shape);
    ctx.set_flag("noise", &a.noise);
    ctx.set_flag("n", &a.n);
    ctx.set_flag("format", &a.format);
    ctx.allow(&["shape", "noise", "n", "format"])?;
    let base = ctx.base_dir.clone();
    let shape = parse_shape(ctx.required("shape")?, base.as_deref()).map_err(usage)?;
    let noise = match ctx.kv.get("noise") {
        Some(t) => parse_noise(t, &shape).map_err(usage)?,
        None => NoiseModel::Noiseless,
    };
    let n: usize = ctx
        .value("n")?
        .ok_or_else(|| CliError::UsageMessage("missing `--n`".into()))?;
    let format = ctx.kv.get("format").unwrap_or("csv").to_string();
    let cloud = sample_model(&shape, &noise, n, ctx.seed)?;
    match format.as_str() {
        "csv" => {
            let path = ctx.output_path("sample.csv");
            cloud.write_csv(&path)?;
        }
        "xyz" => {
            let path = ctx.output_path("sample.xyz");
            write_xyz(&cloud, &path)?;
        }
        other => {
            return Err(CliError::UsageMessage(format!(
                "unknown format {other:?} (csv or xyz)"
            )))
        }
    }
    ctx.note("shape", dtem::experiments::shape_text(&shape));
    ctx.note("noise", dtem::experiments::noise_text(&noise));
    ctx.note("n", n);
    Ok(())
}

fn dtm(ctx: &mut Ctx, a: &DtmArgs) -> Result<(), CliError> {
    ctx.set_flag("cloud", &a.cloud.as_ref().map(|p| p.display().to_string()));
    ctx.set_flag("x", &a.x);
    ctx.set_flag("m", &a.m);
    ctx.set_flag("r", &a.r);
    ctx.set_flag("grid", &a.grid.as_ref().map(|p| p.display().to_string()));
    ctx.allow(&["cloud", "x", "m", "r", "grid"])?;
    let cloud_path = ctx.path("cloud")?;
    let cloud = load_point_cloud(&cloud_path, PointFormat::from_path(&cloud_path))?;
    let m: f64 = ctx
        .value("m")?
        .ok_or_else(|| CliError::UsageMessage("missing `--m`".into()))?;
    let r: f64 = ctx.value("r")?.unwrap_or(1.0);
    ctx.note("cloud", cloud_path.display());
    ctx.note("m", m);
    ctx.note("r", r);
    if ctx.kv.get("grid").is_some() {
        let grid_path = ctx.path("grid")?;
        let grid = load_point_cloud(&grid_path, PointFormat::from_path(&grid_path))?;
        let values = dtm_field(&cloud, &grid, m, r)?;
        let out = ctx.output_path("field.csv");
        write_field_csv(&out, &grid, &values)?;
        ctx.note("grid", grid_path.display());
    } else {
        let x = ctx
            .reals("x")?
            .ok_or_else(|| CliError::UsageMessage("missing `--x` (or `--grid`)".into()))?;
        let v = dtem_mass(&cloud, &x, m, r)?;
        println!("{},{}", v.powered, v.root);
        ctx.note("x", a.x.clone().unwrap_or_default());
    }
    Ok(())
}

fn write_curve_outputs(
    ctx: &mut Ctx,
    prefix: &str,
    cfg: &ExperimentConfig,
    check_reference: bool,
) -> Result<f64, CliError> {
    let digest = cfg.digest();
    ctx.write(&format!("{prefix}config.txt"), &cfg.canonical_text())?;
    let run = run_curve(cfg, check_reference)?;
    let path = ctx.output_path(&format!("{prefix}reference.csv"));
    save_reference(&run.reference, &digest, &path)?;
    let path = ctx.output_path(&format!("{prefix}curve.csv"));
    run.curve.save(&path)?;
    ctx.write(&format!("{prefix}psi.csv"), &psi_csv(&run.psi))?;
    let agreement = if run.curve.rows.len() >= 3 {
        monotonicity_agreement(&run.curve)?
    } else {
        f64::NAN
    };
    Ok(agreement)
}

fn curve(ctx: &mut Ctx, a: &CurveArgs) -> Result<(), CliError> {
    ctx.set_flag("shape", &a.shape);
    ctx.set_flag("noise", &a.noise);
    ctx.set_flag("x", &a.x);
    ctx.set_flag("r", &a.r);
    ctx.set_flag("n", &a.n);
    ctx.set_flag("trials", &a.trials);
    ctx.set_flag("m_grid", &a.m_grid);
    ctx.set_flag("n_ref", &a.n_ref);
    let cfg = ExperimentConfig::from_key_values(&ctx.kv, ctx.base_dir.as_deref()).map_err(usage)?;
    let agreement = write_curve_outputs(ctx, "", &cfg, !a.no_reference_check)?;
    ctx.note("config_digest", cfg.digest());
    ctx.note("monotonicity_agreement", agreement);
    Ok(())
}

fn reproduce(ctx: &mut Ctx, a: &ReproduceArgs) -> Result<(), CliError> {
    ctx.set_flag("n", &a.n);
    ctx.set_flag("trials", &a.trials);
    ctx.set_flag("m_grid", &a.m_grid);
    ctx.set_flag("n_ref", &a.n_ref);
    ctx.allow(&["n", "trials", "m_grid", "n_ref"])?;
    let n: Option<usize> = ctx.value("n")?;
    let trials: usize = ctx.value("trials")?.unwrap_or(100);
    let m_grid = match ctx.kv.get("m_grid") {
        None | Some("default") => None,
        Some(_) => ctx.reals("m_grid")?,
    };
    let n_ref: Option<usize> = ctx.value("n_ref")?;
    let runs = builtin_experiment(&a.name, n, trials, ctx.seed).map_err(usage)?;
    let mut summary = String::from("label,config_digest,monotonicity_agreement\n");
    for mut run in runs {
        if let Some(g) = &m_grid {
            run.config.m_grid = g.clone();
        }
        if let Some(v) = n_ref {
            run.config.n_ref = v;
        }
        run.config.validate().map_err(usage)?;
        info!("running {}", run.label);
        let agreement = write_curve_outputs(
            ctx,
            &format!("{}.", run.label),
            &run.config,
            !a.no_reference_check,
        )?;
        let _ = writeln!(summary, "{},{},{agreement}", run.label, run.config.digest());
    }
    ctx.write("summary.csv", &summary)?;
    ctx.note("experiment", &a.name);
    ctx.note("trials", trials);
    Ok(())
}

fn verify(ctx: &mut Ctx, a: &VerifyArgs) -> Result<(), CliError> {
    ctx.set_flag("n", &a.n);
    ctx.set_flag("params", &a.params);
    ctx.set_flag("lambdas", &a.lambdas);
    ctx.set_flag("trials", &a.trials);
    ctx.allow(&["n", "params", "lambdas", "trials"])?;
    let mut plan = VerificationPlan::standard(ctx.value("trials")?.unwrap_or(10_000), ctx.seed);
    if let Some(ns) = ctx.reals("n")? {
        plan.ns = ns
            .iter()
            .map(|v| {
                if *v >= 1.0 && v.fract() == 0.0 {
                    Ok(*v as usize)
                } else {
                    Err(CliError::UsageMessage(format!(
                        "sample size {v} is not a positive integer"
                    )))
                }
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(p) = ctx.reals("params")? {
        plan.params = p;
    }
    if let Some(l) = ctx.reals("lambdas")? {
        plan.lambdas = l;
    }
    if plan.trials < 100 {
        return Err(CliError::UsageMessage(
            "verify-process needs at least 100 trials".into(),
        ));
    }
    let rows = verify_process(&plan)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    for r in rows.iter().filter(|r| !r.pass) {
        warn!(
            "{} n={} param={} lambda={}: bound {:.3e} below estimate {:.3e} + {:.3e}",
            r.kind, r.n, r.param, r.lambda, r.bound, r.estimate, r.half_width
        );
    }
    eprintln!("{} rows, {failed} failed", rows.len());
    ctx.write("process_report.csv", &report_csv(&rows))?;
    ctx.note("trials", plan.trials);
    ctx.note("rows", rows.len());
    ctx.note("failed", failed);
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn bounds(ctx: &mut Ctx, a: &BoundsArgs) -> Result<(), CliError> {
    ctx.set_flag("quantile", &a.quantile);
    ctx.set_flag("r", &a.r);
    ctx.set_flag("n", &a.n);
    ctx.set_flag("k", &a.k);
    ctx.set_flag("c", &a.c);
    ctx.set_flag("lambdas", &a.lambdas);
    ctx.set_flag("m_bar", &a.m_bar);
    ctx.set_flag("c_xrm", &a.c_xrm);
    ctx.set_flag("covering", &a.covering);
    ctx.allow(&[
        "quantile", "r", "n", "k", "c", "lambdas", "m_bar", "c_xrm", "covering",
    ])?;

    let source = ctx.kv.get("quantile").unwrap_or("uniform").to_string();
    let r_flag: Option<f64> = ctx.value("r")?;
    let quantile = if source == "uniform" {
        let r = r_flag.unwrap_or(1.0);
        let grid: Vec<f64> = (0..=4096).map(|i| i as f64 / 4096.0).collect();
        PowerLawQuantile::uniform_unit_from_origin(r).tabulate(grid)?
    } else {
        let path = ctx.path("quantile")?;
        TabulatedQuantile::load(&path)?.0
    };
    let r = r_flag
        .or_else(|| dtem::empirical::Quantile::meta(&quantile).map(|m| m.r))
        .unwrap_or(1.0);
    let n: usize = ctx
        .value("n")?
        .ok_or_else(|| CliError::UsageMessage("missing `--n`".into()))?;
    if n < 2 {
        return Err(CliError::UsageMessage("bounds need n >= 2".into()));
    }
    let ks: Vec<usize> = match ctx.reals("k")? {
        Some(v) => v
            .iter()
            .map(|k| {
                if *k >= 1.0 && k.fract() == 0.0 && *k as usize <= n {
                    Ok(*k as usize)
                } else {
                    Err(CliError::UsageMessage(format!(
                        "k = {k} must be an integer in 1..={n}"
                    )))
                }
            })
            .collect::<Result<_, _>>()?,
        None => std::iter::successors(Some(1usize), |k| Some(k * 2))
            .take_while(|k| 2 * k < n)
            .collect(),
    };
    let c: f64 = ctx.value("c")?.unwrap_or(1.0);
    let lambdas = ctx.reals("lambdas")?.unwrap_or_else(|| {
        (0..20)
            .map(|i| 1e-3 * 1000f64.powf(i as f64 / 19.0))
            .collect()
    });
    let m_bar: Option<f64> = ctx.value("m_bar")?;
    let c_xrm: f64 = ctx.value("c_xrm")?.unwrap_or(1.0);
    let covering = match ctx.reals("covering")? {
        None => None,
        Some(v) if v.len() == 2 => Some((v[0], v[1])),
        Some(_) => {
            return Err(CliError::UsageMessage(
                "`covering` takes two numbers: c nu".into(),
            ))
        }
    };

    let omega = least_concave_majorant(&modulus_of_continuity(&quantile, &uniform_grid(1000))?);
    let upper = quantile.at_one();
    let j1 = if upper > 0.0 {
        j1_functional(&|t| quantile.cdf(t), upper, 20_000)?.value
    } else {
        0.0
    };
    let cdf = |t: f64| quantile.cdf(t);
    let cov = covering
        .map(|(cc, nu)| CoveringParams::new(cc, nu, nu.ceil() as usize, omega.clone()))
        .transpose()?;

    let mut dev = String::from("k,lambda,bounded,unbounded\n");
    let mut exp = String::from(
        "k,m,initial,final,stability,lecam_lower,unbounded,supnorm_intermediate,supnorm_final\n",
    );
    for &k in &ks {
        let inputs = BoundInputs {
            n,
            k,
            r,
            omega: &omega,
            quantile: &quantile,
            c_abs: c,
        };
        let unbounded = m_bar
            .map(|mb| UnboundedInputs {
                base: inputs,
                m_bar: mb,
                tail_cdf: &cdf,
                c_xrm,
            })
            .filter(|_| (k as f64) < n as f64 * m_bar.unwrap_or(0.0).min(0.5));
        for &lambda in &lambdas {
            let b = deviation_bound_bounded(&inputs, lambda)?;
            let u = unbounded
                .as_ref()
                .map(|u| deviation_bound_unbounded(u, lambda))
                .transpose()?;
            let _ = writeln!(dev, "{k},{lambda:.16e},{b:.16e},{}", cell(u));
        }
        let e = expectation_bound_bounded(&inputs)?;
        let m = k as f64 / n as f64;
        let stability = j1 / (m * (n as f64).sqrt());
        let lecam = lecam_lower_bound(&omega, c, k, n)?.value;
        let u = unbounded
            .as_ref()
            .map(expectation_bound_unbounded)
            .transpose()?;
        let sup = match &cov {
            Some(cv) if 2 * k <= n => Some(supnorm_expectation_bound(&inputs, cv)?),
            _ => None,
        };
        let _ = writeln!(
            exp,
            "{k},{m:.16e},{:.16e},{:.16e},{stability:.16e},{lecam:.16e},{},{},{}",
            e.initial,
            e.final_bound,
            cell(u),
            cell(sup.map(|s| s.intermediate)),
            cell(sup.map(|s| s.final_bound)),
        );
    }
    ctx.write("bounds_deviation.csv", &dev)?;
    ctx.write("bounds_expectation.csv", &exp)?;
    ctx.note("quantile", &source);
    ctx.note("r", r);
    ctx.note("n", n);
    ctx.note("c", c);
    ctx.note("j1", j1);
    if let Some(mb) = m_bar {
        ctx.note("m_bar", mb);
    }
    Ok(())
}
