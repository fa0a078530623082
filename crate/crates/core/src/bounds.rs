//! Closed-form bounds on `Δ`: deviation and expectation bounds for bounded and
//! unbounded supports, the sup-norm expectation bound, the two-point (Le Cam)
//! lower bound, and the Wasserstein stability bounds.
//!
//! Probability bounds are summed first and clamped to `[0,1]` afterwards.

use std::fmt::Write as _;

use statrs::function::factorial::ln_binomial;

use crate::empirical::{frac, Interp, Quantile, TabulatedQuantile};
use crate::error::{Error, Result};
use crate::regularity::ModulusFunction;

/// Inputs shared by the pointwise bounds.
#[derive(Clone, Copy)]
pub struct BoundInputs<'a> {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    /// increasing upper bound on the modulus of continuity of `F⁻¹`
    pub omega: &'a ModulusFunction,
    /// the push-forward quantile `F⁻¹`
    pub quantile: &'a (dyn Quantile + Sync),
    /// the unspecified absolute constant of the expectation bounds
    pub c_abs: f64,
}

impl BoundInputs<'_> {
    fn check(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::OutOfRange(format!(
                "k = {} must lie in 1..={}",
                self.k, self.n
            )));
        }
        if !(self.c_abs > 0.0) {
            return Err(Error::OutOfRange(format!(
                "constant C = {} must be positive",
                self.c_abs
            )));
        }
        Ok(())
    }

    fn mass(&self) -> f64 {
        frac(self.k, self.n)
    }

    /// `F⁻¹(k/n) − F⁻¹(0)`.
    fn increment(&self) -> f64 {
        (self.quantile.eval(self.mass()) - self.quantile.eval(0.0)).max(0.0)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfRange(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    Ok(())
}

/// `exp(exponent)` for a nonpositive exponent, flushed to 0 below double range.
fn exp_neg(exponent: f64) -> f64 {
    if exponent < -745.0 {
        0.0
    } else {
        exponent.exp()
    }
}

/// `exp(−a/b)` with `b = 0` read as an infinitely negative exponent.
fn exp_ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        exp_neg(-a / b)
    } else {
        0.0
    }
}

/// The six terms of `□(λ)` (`k < n/2`) or the three terms of the `k ≥ n/2`
/// branch, before doubling.
pub fn deviation_terms_bounded(inputs: &BoundInputs, lambda: f64) -> Result<Vec<f64>> {
    inputs.check()?;
    check_lambda(lambda)?;
    let (n, k) = (inputs.n as f64, inputs.k as f64);
    let d = inputs.increment();
    let omega = inputs.omega;
    if 2 * inputs.k < inputs.n {
        Ok(box_terms(n, k, d, omega, lambda).to_vec())
    } else {
        let w = omega.eval(1.0 / n.sqrt());
        let f1 = exp_ratio(2.0 * n * lambda * lambda * (k / n) * (k / n), d * d);
        let inv = omega.inverse((k / n.sqrt() * w * lambda / 2.0).sqrt());
        let f2 = exp_neg(-2.0 * n * inv * inv);
        let f3 = exp_ratio(k * lambda, n.sqrt() * w);
        Ok(vec![f1, f2, f3])
    }
}

fn box_terms(n: f64, k: f64, d: f64, omega: &ModulusFunction, lambda: f64) -> [f64; 6] {
    let w = omega.eval(2.0 * k.sqrt() / n);
    let k14 = k.powf(0.25);
    let e1 = exp_ratio(k * lambda * lambda, 64.0 * d * d);
    let e2 = exp_ratio(3.0 * k * lambda, 16.0 * d);
    let inv3 = omega.inverse(k14 * (lambda / 8.0 * w).sqrt());
    let e3 = exp_neg(-(n * n) / (4.0 * k) * inv3 * inv3);
    let inv4 = omega.inverse(k14 * (lambda / 2.0 * w).sqrt());
    let e4 = exp_neg(-3.0 * n / 8.0 * inv4);
    let e5 = exp_ratio(k.sqrt() * lambda, 8.0 * w);
    let e6 = if w > 0.0 {
        exp_neg(-0.75 * k.powf(0.75) * (lambda / (2.0 * w)).sqrt())
    } else {
        0.0
    };
    [e1, e2, e3, e4, e5, e6]
}

/// Upper bound on `P(|Δ| ≥ λ)` for a bounded support, clamped to `[0,1]`;
/// exactly 0 when `λ > ω(1)`.
pub fn deviation_bound_bounded(inputs: &BoundInputs, lambda: f64) -> Result<f64> {
    let terms = deviation_terms_bounded(inputs, lambda)?;
    if lambda > inputs.omega.at_one() {
        return Ok(0.0);
    }
    Ok((2.0 * terms.iter().sum::<f64>()).clamp(0.0, 1.0))
}

/// The two expectation bounds for a bounded support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationBound {
    /// `(C/√k)·{[F⁻¹(k/n) − F⁻¹(0)] + ω(√k/n)}`
    pub initial: f64,
    /// `(2C/√k)·ω(k/n)`
    pub final_bound: f64,
    /// whether `initial ≤ final_bound` held for these inputs
    pub ordered: bool,
}

fn check_ratio(omega: &ModulusFunction) -> Result<()> {
    if !omega.has_nonincreasing_ratio() {
        return Err(Error::Precondition(
            "ω(v)/v must be nonincreasing; apply least_concave_majorant first".into(),
        ));
    }
    Ok(())
}

fn initial_expectation(inputs: &BoundInputs) -> f64 {
    let (n, k) = (inputs.n as f64, inputs.k as f64);
    inputs.c_abs / k.sqrt() * (inputs.increment() + inputs.omega.eval(k.sqrt() / n))
}

pub fn expectation_bound_bounded(inputs: &BoundInputs) -> Result<ExpectationBound> {
    inputs.check()?;
    check_ratio(inputs.omega)?;
    let k = inputs.k as f64;
    let initial = initial_expectation(inputs);
    let final_bound = 2.0 * inputs.c_abs / k.sqrt() * inputs.omega.eval(inputs.mass());
    let ordered = initial <= final_bound * (1.0 + 1e-12);
    if !ordered {
        log::warn!(
            "initial expectation bound {initial} exceeds the final one {final_bound}: ω does not dominate the quantile increment"
        );
    }
    Ok(ExpectationBound {
        initial,
        final_bound,
        ordered,
    })
}

/// Inputs for a possibly unbounded support, where `ω` only bounds the
/// modulus of `F⁻¹` on `(0, m̄]`.
#[derive(Clone, Copy)]
pub struct UnboundedInputs<'a> {
    pub base: BoundInputs<'a>,
    pub m_bar: f64,
    /// distribution function `F` of the push-forward
    pub tail_cdf: &'a (dyn Fn(f64) -> f64 + Sync),
    pub c_xrm: f64,
}

impl UnboundedInputs<'_> {
    fn check(&self) -> Result<()> {
        self.base.check()?;
        if !(self.m_bar > 0.0 && self.m_bar < 1.0) {
            return Err(Error::Precondition(format!(
                "m̄ = {} must lie in (0,1)",
                self.m_bar
            )));
        }
        let limit = self.base.n as f64 * self.m_bar.min(0.5);
        if !((self.base.k as f64) < limit) {
            return Err(Error::Precondition(format!(
                "k = {} must be below n·min(1/2, m̄) = {limit}",
                self.base.k
            )));
        }
        Ok(())
    }

    /// `(n²/4k)(m̄ − k/n)²`.
    fn gap_exponent(&self) -> f64 {
        let (n, k) = (self.base.n as f64, self.base.k as f64);
        let g = self.m_bar - k / n;
        n * n / (4.0 * k) * g * g
    }
}

/// `exp(−c·e^{a})` computed without overflowing `e^{a}`.
fn exp_neg_scaled(c: f64, a: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    let log_exponent = c.ln() + a;
    if log_exponent > 745f64.ln() {
        0.0
    } else {
        exp_neg(-log_exponent.exp())
    }
}

/// Terms of the unbounded deviation bound before doubling: the six `□(λ)`
/// terms, the two tail exponentials, and the minimum of the Gaussian-type and
/// binomial terms.
pub fn deviation_terms_unbounded(inputs: &UnboundedInputs, lambda: f64) -> Result<Vec<f64>> {
    inputs.check()?;
    check_lambda(lambda)?;
    let b = &inputs.base;
    let (n, k) = (b.n as f64, b.k as f64);
    let mut terms = box_terms(n, k, b.increment(), b.omega, lambda).to_vec();
    let a = inputs.gap_exponent();
    terms.push(exp_neg_scaled(k.sqrt() / 8.0 * lambda, a));
    terms.push(exp_neg_scaled(
        0.375 * k.powf(0.375) * (lambda / 2.0).sqrt(),
        a / 2.0,
    ));
    let gaussian = 2.0 * exp_neg(-2.0 * a);
    let survival = 1.0 - (inputs.tail_cdf)((lambda / 6.0).sqrt() * k / n);
    let binomial = if survival <= 0.0 {
        0.0
    } else {
        let log = ln_binomial(b.n as u64, (b.k - 1) as u64) - 2f64.ln()
            + (n - k + 1.0) * survival.min(1.0).ln();
        if log > 0.0 {
            log.exp()
        } else {
            exp_neg(log)
        }
    };
    terms.push(gaussian.min(binomial));
    Ok(terms)
}

/// Upper bound on `P(|Δ| ≥ λ)` when only a moment of order `r` is assumed.
pub fn deviation_bound_unbounded(inputs: &UnboundedInputs, lambda: f64) -> Result<f64> {
    let terms = deviation_terms_unbounded(inputs, lambda)?;
    Ok((2.0 * terms.iter().sum::<f64>()).clamp(0.0, 1.0))
}

/// Bounded-case initial expectation term plus `C_{x,r,m̄}·√k·exp(−(n²/4k)(m̄ − k/n)²)`.
pub fn expectation_bound_unbounded(inputs: &UnboundedInputs) -> Result<f64> {
    inputs.check()?;
    check_ratio(inputs.base.omega)?;
    let k = inputs.base.k as f64;
    Ok(initial_expectation(&inputs.base)
        + inputs.c_xrm * k.sqrt() * exp_neg(-inputs.gap_exponent()))
}

/// Covering description of a compact domain: `N(D, t) ≤ c·t^{−ν} ∨ 1`, with a
/// modulus `ω_D` valid at every point of the domain.
#[derive(Debug, Clone)]
pub struct CoveringParams {
    pub c: f64,
    pub nu: f64,
    pub omega_d: ModulusFunction,
}

impl CoveringParams {
    pub fn new(c: f64, nu: f64, dim: usize, omega_d: ModulusFunction) -> Result<Self> {
        if !(c > 0.0 && nu > 0.0 && nu <= dim as f64) {
            return Err(Error::OutOfRange(format!(
                "covering needs c > 0 and 0 < ν ≤ d = {dim}, got c = {c}, ν = {nu}"
            )));
        }
        Ok(CoveringParams { c, nu, omega_d })
    }
}

/// `(log u) ∨ 1` from `ln u`.
fn log_plus(ln_u: f64) -> f64 {
    ln_u.max(1.0)
}

/// `a · log⁺(·)` with the convention `0 · log⁺ = 0`.
fn weighted_log_plus(a: f64, ln_u: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * log_plus(ln_u)
    }
}

/// Sup-norm expectation bounds over a domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupNormBound {
    pub intermediate: f64,
    /// may be `+∞` when `F⁻¹(√k/n) = F⁻¹(0)`
    pub final_bound: f64,
}

pub fn supnorm_expectation_bound(
    inputs: &BoundInputs,
    cov: &CoveringParams,
) -> Result<SupNormBound> {
    inputs.check()?;
    if 2 * inputs.k > inputs.n {
        return Err(Error::Precondition(format!(
            "sup-norm bound needs k ≤ n/2, got k = {}, n = {}",
            inputs.k, inputs.n
        )));
    }
    let (n, k, nu) = (inputs.n as f64, inputs.k as f64, cov.nu);
    let scale = inputs.c_abs / k.sqrt();
    let d = inputs.increment();
    let w = cov.omega_d.eval(k.sqrt() / n);
    let q = inputs.quantile;
    let a = (q.eval((k.sqrt() / n).min(1.0)) - q.eval(0.0)).max(0.0);

    let first = weighted_log_plus(d, (nu + 5.0) * (k.ln() - 2.0 * d.ln()));
    let second = weighted_log_plus(w, (nu - 1.0) * (0.5 * k.ln() - w.ln()));
    let intermediate = scale * (first + second);

    let final_bound = if w == 0.0 {
        0.0
    } else {
        let ln_a = if a > 0.0 {
            (2.0 * nu + 5.0) * a.ln()
        } else {
            f64::NEG_INFINITY
        };
        let ln_w = if nu == 1.0 { 0.0 } else { (nu - 1.0) * w.ln() };
        scale * w * log_plus((nu + 5.0) * k.ln() - ln_a.min(ln_w))
    };
    Ok(SupNormBound {
        intermediate,
        final_bound,
    })
}

/// A finite measure on the real line, atoms sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMeasure {
    /// Merges atoms at equal positions.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|(p, w)| !p.is_finite() || !(*w >= 0.0)) {
            return Err(Error::InvalidTabulation(
                "atoms need finite positions and nonnegative masses".into(),
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        Ok(DiscreteMeasure { atoms: merged })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `∫|p − q|` over the merged support.
    pub fn l1_distance(&self, other: &DiscreteMeasure) -> f64 {
        let (a, b) = (&self.atoms, &other.atoms);
        let (mut i, mut j) = (0, 0);
        let mut total = 0.0;
        while i < a.len() || j < b.len() {
            let pa = a.get(i).map_or(f64::INFINITY, |x| x.0);
            let pb = b.get(j).map_or(f64::INFINITY, |x| x.0);
            if pa == pb {
                total += (a[i].1 - b[j].1).abs();
                i += 1;
                j += 1;
            } else if pa < pb {
                total += a[i].1;
                i += 1;
            } else {
                total += b[j].1;
                j += 1;
            }
        }
        total
    }

    /// Step quantile of a probability measure, evaluated exactly by
    /// [`Quantile::integral`].
    pub fn quantile(&self) -> Result<TabulatedQuantile> {
        let total = self.total_mass();
        let mut grid = vec![0.0];
        let mut values = vec![self.atoms[0].0];
        let mut acc = 0.0;
        for (p, w) in &self.atoms {
            if *w == 0.0 {
                continue;
            }
            acc += w;
            grid.push((acc / total).min(1.0));
            values.push(*p);
        }
        *grid.last_mut().unwrap() = 1.0;
        // rounding can produce repeated cumulative masses
        let mut g2 = vec![grid[0]];
        let mut v2 = vec![values[0]];
        for (g, v) in grid.into_iter().zip(values).skip(1) {
            if g > *g2.last().unwrap() {
                g2.push(g);
                v2.push(v);
            } else {
                *v2.last_mut().unwrap() = v;
            }
        }
        TabulatedQuantile::new(g2, v2, Interp::Step)
    }
}

/// The two-point pair used for the lower bound.
#[derive(Debug, Clone)]
pub struct LeCamPair {
    pub p0: DiscreteMeasure,
    pub p1: DiscreteMeasure,
}

impl LeCamPair {
    /// `TV(P₀,P₁)` as the `L¹` distance between densities; equals `2/n` by construction.
    pub fn total_variation(&self) -> f64 {
        self.p0.l1_distance(&self.p1)
    }
}

/// Discretizes `P₀ = P̄` into `n·atoms_per_mass` equal atoms at quantile
/// positions and builds `P₁ = (1/n)δ_{F̄⁻¹(0)} + P̄` restricted below `F̄⁻¹(1 − 1/n)`.
pub fn lecam_pair(base: &dyn Quantile, n: usize, atoms_per_mass: usize) -> Result<LeCamPair> {
    if n < 2 || atoms_per_mass == 0 {
        return Err(Error::OutOfRange(format!(
            "Le Cam pair needs n ≥ 2 and at least one atom per 1/n, got n = {n}"
        )));
    }
    let origin = base.eval(0.0);
    if origin < 0.0 {
        return Err(Error::Precondition(
            "base measure must live on [0, ∞)".into(),
        ));
    }
    let total = n * atoms_per_mass;
    let w = 1.0 / total as f64;
    let positions: Vec<f64> = (1..=total).map(|j| base.eval(frac(j, total))).collect();
    let p0 = DiscreteMeasure::new(positions.iter().map(|p| (*p, w)).collect())?;
    let kept = total - atoms_per_mass;
    let p1 = DiscreteMeasure::new(
        std::iter::once((origin, 1.0 / n as f64))
            .chain(positions[..kept].iter().map(|p| (*p, w)))
            .collect(),
    )?;
    Ok(LeCamPair { p0, p1 })
}

/// `(1/8)(1 − 2/n)^{2n}`.
pub fn lecam_factor(n: usize) -> f64 {
    let n = n as f64;
    0.125 * (1.0 - 2.0 / n).powf(2.0 * n)
}

/// Lower bound on the minimax risk, with the constant split out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeCamBound {
    /// `(n/k)(1/n)·ω((k−1)/n)`, with `ω(0⁺)` at `k = 1`
    pub raw: f64,
    /// `(1/8)(1 − 2/n)^{2n}`
    pub lecam_factor: f64,
    /// `raw · lecam_factor / c`
    pub value: f64,
}

pub fn lecam_lower_bound(
    omega: &ModulusFunction,
    c: f64,
    k: usize,
    n: usize,
) -> Result<LeCamBound> {
    if k == 0 || k > n || n < 2 {
        return Err(Error::OutOfRange(format!(
            "need 1 ≤ k ≤ n and n ≥ 2, got k = {k}, n = {n}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::OutOfRange(format!("c = {c} must be positive")));
    }
    let w = if k == 1 {
        omega.zero_plus()
    } else {
        omega.eval(frac(k - 1, n))
    };
    let raw = w / k as f64;
    let factor = lecam_factor(n);
    Ok(LeCamBound {
        raw,
        lecam_factor: factor,
        value: raw * factor / c,
    })
}

fn check_mass(m: f64) -> Result<()> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::OutOfRange(format!("mass m = {m} must lie in (0,1]")));
    }
    Ok(())
}

/// `m^{−1/r}·W_r(P, P̃)`: sup-norm distance between two DTMs.
pub fn wasserstein_stability_bound(m: f64, r: f64, wr: f64) -> Result<f64> {
    check_mass(m)?;
    Ok(m.powf(-1.0 / r) * wr)
}

/// `W₁(dF, dF̃)/m`: pointwise distance between two powered DTMs.
pub fn w1_pointwise_stability_bound(m: f64, w1_pushforward: f64) -> Result<f64> {
    check_mass(m)?;
    Ok(w1_pushforward / m)
}

/// Bound sweep as CSV: comment lines, then `<column>,bound` rows.
pub fn sweep_csv(comments: &[String], column: &str, rows: &[(f64, f64)]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{column},bound");
    for (x, b) in rows {
        let _ = writeln!(out, "{x:.16e},{b:.16e}");
    }
    out
}
