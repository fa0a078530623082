//! Concentration of the uniform empirical and quantile processes, the Beta law
//! of uniform order statistics, and Monte-Carlo verification of each bound.
//!
//! `λ` always refers to the `√n`-scaled process: the DKW event is
//! `sup_t √n |𝔾ₙ(t) − t| ≥ λ`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::empirical::quantile_index;
use crate::error::{Error, Result};
use crate::seed::{derive, derived_rng, streams};

/// Bennett rate `2[(1+λ)(log(1+λ) − 1) + 1]/λ²`, with `Φ(0) = 1` and `+∞` for `λ ≤ −1`.
pub fn phi(lambda: f64) -> f64 {
    if lambda <= -1.0 {
        return f64::INFINITY;
    }
    if lambda.abs() < 1e-2 {
        // 2 Σ_{j≥2} (−λ)^{j−2} / (j(j−1))
        let mut sum = 0.0;
        let mut pow = 1.0;
        for j in 2..12 {
            let j = j as f64;
            sum += pow / (j * (j - 1.0));
            pow *= -lambda;
        }
        return 2.0 * sum;
    }
    let h = (1.0 + lambda) * lambda.ln_1p() - lambda;
    2.0 * h / (lambda * lambda)
}

/// `Φ̃(λ) = Φ(−λ/(1+λ))/(1+λ)` for `λ ≥ 0`.
pub fn phi_tilde(lambda: f64) -> f64 {
    phi(-lambda / (1.0 + lambda)) / (1.0 + lambda)
}

/// `min(1, 2e^{−2λ²})`.
pub fn dkw_bound(_n: usize, lambda: f64) -> f64 {
    (2.0 * (-2.0 * lambda * lambda).exp()).min(1.0)
}

/// A Bennett-type bound and the Bernstein bound derived from it, each clamped to `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettBernstein {
    pub bennett: f64,
    pub bernstein: f64,
}

impl BennettBernstein {
    pub fn best(&self) -> f64 {
        self.bennett.min(self.bernstein)
    }
}

fn two_exp(exponent: f64) -> f64 {
    (2.0 * (-exponent).exp()).clamp(0.0, 1.0)
}

fn check_unit(name: &str, v: f64, upper: f64, inclusive: bool) -> Result<()> {
    let ok = v > 0.0 && if inclusive { v <= upper } else { v < upper };
    if !ok {
        let close = if inclusive { ']' } else { ')' };
        return Err(Error::OutOfRange(format!(
            "{name} = {v} must lie in (0, {upper}{close}"
        )));
    }
    Ok(())
}

fn empirical_forms(n: usize, t0: f64, lambda: f64) -> BennettBernstein {
    let s = t0 * (n as f64).sqrt();
    let base = lambda * lambda / (2.0 * t0);
    BennettBernstein {
        bennett: two_exp(base * phi(lambda / s)),
        bernstein: two_exp(base / (1.0 + lambda / (3.0 * s))),
    }
}

fn quantile_forms(n: usize, u0: f64, lambda: f64) -> BennettBernstein {
    let s = u0 * (n as f64).sqrt();
    let base = lambda * lambda / (2.0 * u0);
    BennettBernstein {
        bennett: two_exp(base * phi_tilde(lambda / s)),
        bernstein: two_exp(base / (1.0 + 2.0 * lambda / (3.0 * s))),
    }
}

/// Bound on `P(√n|𝔾ₙ(t) − t| ≥ λ)` for every `t ≤ t0 ≤ 1/2`.
pub fn empirical_pointwise_bound(n: usize, t0: f64, lambda: f64) -> Result<BennettBernstein> {
    check_unit("t0", t0, 0.5, true)?;
    Ok(empirical_forms(n, t0, lambda))
}

/// Bound on `P(sup_{[0,t0]} √n|(𝔾ₙ(t) − t)/(1 − t)| ≥ λ/(1 − t0))`, `t0 < 1/2`.
pub fn empirical_local_sup_bound(n: usize, t0: f64, lambda: f64) -> Result<BennettBernstein> {
    check_unit("t0", t0, 0.5, false)?;
    Ok(empirical_forms(n, t0, lambda))
}

/// Bound on `P(√n|𝔾ₙ⁻¹(u) − u| ≥ λ)` for every `u ≤ u0 < 1`.
pub fn quantile_pointwise_bound(n: usize, u0: f64, lambda: f64) -> Result<BennettBernstein> {
    check_unit("u0", u0, 1.0, false)?;
    Ok(quantile_forms(n, u0, lambda))
}

/// Bound on `P(sup_{[0,u0]} √n|𝔾ₙ⁻¹(u) − u|/(1 − u) ≥ λ/(1 − u0))`, valid only
/// for `λ ≤ √n(1/2 − u0)`.
pub fn quantile_local_sup_bound(n: usize, u0: f64, lambda: f64) -> Result<BennettBernstein> {
    check_unit("u0", u0, 0.5, false)?;
    let limit = (n as f64).sqrt() * (0.5 - u0);
    if lambda > limit {
        return Err(Error::OutOfDomain { lambda, limit });
    }
    Ok(quantile_forms(n, u0, lambda))
}

/// Monte-Carlo tail probability with its 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub probability: f64,
    pub trials: usize,
    pub half_width: f64,
}

impl TailEstimate {
    pub fn from_counts(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        TailEstimate {
            probability: p,
            trials,
            half_width: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// Upper end of the confidence interval, capped at 1.
    pub fn upper(&self) -> f64 {
        (self.probability + self.half_width).min(1.0)
    }
}

/// Which functional of the uniform process is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    /// `√n|𝔾ₙ(t0) − t0|`
    EcdfPointwise,
    /// `(1 − t0)·sup_{[0,t0]} √n|(𝔾ₙ(t) − t)/(1 − t)|`
    EcdfLocalSup,
    /// `√n|𝔾ₙ⁻¹(u0) − u0|`
    QuantilePointwise,
    /// `(1 − u0)·sup_{[0,u0]} √n|𝔾ₙ⁻¹(u) − u|/(1 − u)`
    QuantileLocalSup,
    /// `sup_t √n|𝔾ₙ(t) − t|`
    GlobalSup,
}

impl ProcessKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::EcdfPointwise => "ecdf_pointwise",
            ProcessKind::EcdfLocalSup => "ecdf_local_sup",
            ProcessKind::QuantilePointwise => "quantile_pointwise",
            ProcessKind::QuantileLocalSup => "quantile_local_sup",
            ProcessKind::GlobalSup => "global_sup",
        }
    }
}

/// `sup_t |𝔾ₙ(t) − t|` over sorted uniforms.
pub fn global_sup(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// `sup_{t ∈ [0,t0]} |(𝔾ₙ(t) − t)/(1 − t)|`.
///
/// On each constant piece of `𝔾ₙ` the ratio is monotone, so the supremum is
/// attained at (or approached at) a piece endpoint.
pub fn ecdf_local_sup(sorted: &[f64], t0: f64) -> f64 {
    let n = sorted.len();
    let ratio = |c: f64, t: f64| ((c - t) / (1.0 - t)).abs();
    let mut best: f64 = 0.0;
    let mut left = 0.0;
    for i in 0..=n {
        if left > t0 {
            break;
        }
        let c = i as f64 / n as f64;
        let right = sorted.get(i).copied().unwrap_or(1.0).min(t0);
        best = best.max(ratio(c, left)).max(ratio(c, right));
        left = match sorted.get(i) {
            Some(u) => *u,
            None => break,
        };
    }
    best
}

/// `sup_{u ∈ [0,u0]} |𝔾ₙ⁻¹(u) − u|/(1 − u)` with `𝔾ₙ⁻¹(0) = U₍₁₎`.
pub fn quantile_local_sup(sorted: &[f64], u0: f64) -> f64 {
    let n = sorted.len();
    let ratio = |v: f64, u: f64| ((v - u) / (1.0 - u)).abs();
    let mut best = sorted[0];
    let last = quantile_index(u0, n).max(1);
    for j in 1..=last {
        let v = sorted[j - 1];
        let left = (j - 1) as f64 / n as f64;
        let right = (j as f64 / n as f64).min(u0);
        best = best.max(ratio(v, left)).max(ratio(v, right));
    }
    best
}

fn sorted_uniforms<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    u
}

fn statistic(kind: ProcessKind, sorted: &[f64], param: f64) -> f64 {
    let n = sorted.len();
    let root_n = (n as f64).sqrt();
    match kind {
        ProcessKind::EcdfPointwise => {
            let g = sorted.partition_point(|u| *u <= param) as f64 / n as f64;
            root_n * (g - param).abs()
        }
        ProcessKind::EcdfLocalSup => (1.0 - param) * root_n * ecdf_local_sup(sorted, param),
        ProcessKind::QuantilePointwise => {
            let v = sorted[quantile_index(param, n).max(1) - 1];
            root_n * (v - param).abs()
        }
        ProcessKind::QuantileLocalSup => (1.0 - param) * root_n * quantile_local_sup(sorted, param),
        ProcessKind::GlobalSup => root_n * global_sup(sorted),
    }
}

/// One statistic per trial, in trial order; the tail event for threshold `λ`
/// is `statistic ≥ λ`. `param` is `t0` or `u0` (ignored for the global sup).
pub fn simulate_statistics(
    kind: ProcessKind,
    n: usize,
    param: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 || trials == 0 {
        return Err(Error::OutOfRange("need n ≥ 1 and trials ≥ 1".into()));
    }
    if kind != ProcessKind::GlobalSup {
        check_unit("t0/u0", param, 1.0, false)?;
    }
    let master = derive(seed, streams::PROCESS, n as u64);
    Ok((0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(master, streams::PROCESS, t as u64);
            statistic(kind, &sorted_uniforms(&mut rng, n), param)
        })
        .collect())
}

pub fn tail_from_statistics(stats: &[f64], lambda: f64) -> TailEstimate {
    TailEstimate::from_counts(stats.iter().filter(|s| **s >= lambda).count(), stats.len())
}

pub fn simulate_process_tail(
    kind: ProcessKind,
    n: usize,
    param: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<TailEstimate> {
    if trials < 100 {
        return Err(Error::OutOfRange(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    Ok(tail_from_statistics(
        &simulate_statistics(kind, n, param, trials, seed)?,
        lambda,
    ))
}

/// `P(Beta(a, b) ≤ x)`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

/// One-sample Kolmogorov–Smirnov distance of `samples` to `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let t = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            ((i as f64 + 1.0) / t - f).max(f - i as f64 / t)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaLawCheck {
    pub ks: f64,
    pub mean_error: f64,
}

/// Compares simulated `𝔾ₙ⁻¹(k/n) = U₍ₖ₎` with `Beta(k, n − k + 1)`.
pub fn beta_law_check(n: usize, k: usize, trials: usize, seed: u64) -> Result<BetaLawCheck> {
    if k == 0 || k > n || trials == 0 {
        return Err(Error::OutOfRange(format!(
            "need 1 ≤ k ≤ n and trials ≥ 1, got k = {k}, n = {n}"
        )));
    }
    let master = derive(seed, streams::BETA, n as u64);
    let mut draws: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(master, streams::BETA, t as u64);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            *u.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / trials as f64;
    let (a, b) = (k as f64, (n - k + 1) as f64);
    let ks = ks_statistic(&mut draws, |x| beta_cdf(a, b, x));
    Ok(BetaLawCheck {
        ks,
        mean_error: (mean - a / (n as f64 + 1.0)).abs(),
    })
}

/// Sup-deviation `√n sup|Fₙ − F|` for exponential samples, one per trial;
/// by the probability integral transform it has the law of the uniform
/// global supremum.
pub fn simulate_exponential_sup(n: usize, trials: usize, seed: u64) -> Vec<f64> {
    let law = Exp::new(1.0).expect("unit rate");
    let master = derive(seed, streams::PROCESS, u64::MAX - n as u64);
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(master, streams::PROCESS, t as u64);
            let mut x: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            x.sort_by(f64::total_cmp);
            let nf = n as f64;
            let d = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let f = -(-v).exp_m1();
                    ((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf)
                })
                .fold(0.0, f64::max);
            nf.sqrt() * d
        })
        .collect()
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRow {
    pub kind: String,
    pub n: usize,
    pub param: f64,
    pub lambda: f64,
    pub bound: f64,
    pub estimate: f64,
    pub half_width: f64,
    pub pass: bool,
}

impl VerificationRow {
    fn new(kind: String, n: usize, param: f64, lambda: f64, bound: f64, est: TailEstimate) -> Self {
        VerificationRow {
            kind,
            n,
            param,
            lambda,
            bound,
            estimate: est.probability,
            half_width: est.half_width,
            pass: bound >= est.upper(),
        }
    }
}

/// Grid of the verification sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationPlan {
    pub ns: Vec<usize>,
    pub params: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl VerificationPlan {
    pub fn standard(trials: usize, seed: u64) -> Self {
        VerificationPlan {
            ns: vec![100, 500],
            params: vec![0.05, 0.2, 0.4],
            lambdas: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0],
            trials,
            seed,
        }
    }
}

/// Every inequality against its simulated tail. Quantile local-sup cells
/// outside `λ ≤ √n(1/2 − u0)` are left out.
pub fn verify_process(plan: &VerificationPlan) -> Result<Vec<VerificationRow>> {
    let mut rows = Vec::new();
    for &n in &plan.ns {
        let stats = simulate_statistics(ProcessKind::GlobalSup, n, 0.5, plan.trials, plan.seed)?;
        for &lambda in &plan.lambdas {
            let est = tail_from_statistics(&stats, lambda);
            rows.push(VerificationRow::new(
                "dkw".into(),
                n,
                f64::NAN,
                lambda,
                dkw_bound(n, lambda),
                est,
            ));
        }
        for &param in &plan.params {
            for kind in [
                ProcessKind::EcdfPointwise,
                ProcessKind::EcdfLocalSup,
                ProcessKind::QuantilePointwise,
                ProcessKind::QuantileLocalSup,
            ] {
                let stats = simulate_statistics(kind, n, param, plan.trials, plan.seed)?;
                for &lambda in &plan.lambdas {
                    let bound = match kind {
                        ProcessKind::EcdfPointwise => empirical_pointwise_bound(n, param, lambda),
                        ProcessKind::EcdfLocalSup => empirical_local_sup_bound(n, param, lambda),
                        ProcessKind::QuantilePointwise => {
                            quantile_pointwise_bound(n, param, lambda)
                        }
                        ProcessKind::QuantileLocalSup => quantile_local_sup_bound(n, param, lambda),
                        ProcessKind::GlobalSup => unreachable!(),
                    };
                    let bound = match bound {
                        Ok(b) => b,
                        Err(Error::OutOfDomain { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    let est = tail_from_statistics(&stats, lambda);
                    for (form, value) in
                        [("bennett", bound.bennett), ("bernstein", bound.bernstein)]
                    {
                        rows.push(VerificationRow::new(
                            format!("{}_{form}", kind.name()),
                            n,
                            param,
                            lambda,
                            value,
                            est,
                        ));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Header `kind,n,param,lambda,bound,estimate,half_width,pass`.
pub fn report_csv(rows: &[VerificationRow]) -> String {
    let mut out = String::from("kind,n,param,lambda,bound,estimate,half_width,pass\n");
    for r in rows {
        let param = if r.param.is_nan() {
            String::new()
        } else {
            format!("{}", r.param)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{}",
            r.kind,
            r.n,
            param,
            r.lambda,
            r.bound,
            r.estimate,
            r.half_width,
            if r.pass { "pass" } else { "fail" }
        );
    }
    out
}
