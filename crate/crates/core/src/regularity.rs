//! Dini-type integrability, critical exponents and remaining moduli.
//!
//! All weighted integrals `∫₀^b x^e ϖ(x) dx` are computed after the change of
//! variables `x = exp(-s)`. The half-line in `s` is cut into shells on which
//! `s` doubles (or, for triply iterated logarithms, on which `ln s` doubles),
//! and the shell contributions `d_j` decide convergence: geometric decay
//! means convergence, a ratio at or above one means divergence, and the slow
//! borderline band is settled by the decay power of `d_j` in the shell
//! variable. Working in logarithms lets the balance equation be solved for
//! `γ` far below the smallest positive double.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::modulus::{ModulusKind, ModulusSpec, PowerLogTail};
use crate::quad::{self, QuadOptions};

const LN2: f64 = std::f64::consts::LN_2;
const MAX_SHELLS: usize = 256;
const OVERFLOW: f64 = 700.0;

/// One entry of the truncation trace: lower limit `a_j` (stored as
/// `ln ln(1/a_j)`, which stays finite) and the integral over `[a_j, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub loglog_inv_lower: f64,
    pub partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralVerdict {
    pub converges: bool,
    /// Value of the integral when it converges.
    pub value: Option<f64>,
    /// `d ln I_j / d z_j` over the last shells when divergent (`z` = shell variable).
    pub divergence_rate: Option<f64>,
    pub truncation_trace: Vec<TracePoint>,
}

fn logsumexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `∫ x^e ϖ(x) dx` in the shell variable `z`, `depth` = number of logarithms
/// between `s` and `z`.
#[derive(Clone, Copy)]
struct Integrand<'a> {
    m: &'a ModulusSpec,
    e1: f64,
    depth: u32,
}

impl<'a> Integrand<'a> {
    fn new(m: &'a ModulusSpec, e: f64) -> Self {
        let mut e1 = e + 1.0;
        if e1.abs() < 1e-12 {
            e1 = 0.0;
        }
        let depth = match m.kind() {
            ModulusKind::GenLogHoelder { rho: 3, .. } => 2,
            _ => 1,
        };
        Self { m, e1, depth }
    }

    /// ln of the integrand with respect to `z`.
    fn ln_at(&self, z: f64) -> f64 {
        if self.depth == 2 {
            // Only the ρ = 3 tower uses depth 2. There ln ϖ = -t - z - λ ln z and
            // ln ds/dz = t + z cancel exactly; doing it in floating point loses everything.
            let ModulusKind::GenLogHoelder { lambda, .. } = *self.m.kind() else { unreachable!() };
            let lin = if self.e1 == 0.0 { 0.0 } else { -self.e1 * z.exp().exp() };
            return lin - lambda * z.ln();
        }
        let (t, lds) = (z, z);
        let (c, r) = self.m.split_loglog(t);
        let mut coef = c + self.e1;
        if coef.abs() < 1e-12 {
            coef = 0.0;
        }
        let lin = if coef == 0.0 { 0.0 } else { -coef * t.exp() };
        lin + r + lds
    }

    /// ln of the integrand with respect to `s` (depth-free).
    fn ln_at_s(&self, s: f64) -> f64 {
        let t = s.ln();
        let (c, r) = self.m.split_loglog(t);
        let mut coef = c + self.e1;
        if coef.abs() < 1e-12 {
            coef = 0.0;
        }
        -coef * s + r
    }

    fn z_of_s(&self, s: f64) -> f64 {
        if self.depth == 1 { s.ln() } else { s.ln().ln() }
    }
}

/// `ln ∫_{z0}^{z1} exp(g(z)) dz` with max-scaling; `+inf` on overflow.
fn ln_integral<G: Fn(f64) -> f64>(g: G, z0: f64, z1: f64) -> Result<f64> {
    ln_integral_capped(g, z0, z1, OVERFLOW)
}

/// `ln ∫ exp(g)` over `[z0, z1]`; `+∞` once the integrand exceeds `e^cap`.
fn ln_integral_capped<G: Fn(f64) -> f64>(g: G, z0: f64, z1: f64, cap: f64) -> Result<f64> {
    const PROBES: usize = 33;
    let mut gmax = f64::NEG_INFINITY;
    for i in 0..PROBES {
        let z = z0 + (z1 - z0) * i as f64 / (PROBES - 1) as f64;
        let v = g(z);
        if v.is_nan() {
            return Err(Error::Numeric(format!("integrand undefined at z = {z}")));
        }
        gmax = gmax.max(v);
    }
    if gmax == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if gmax > cap {
        return Ok(f64::INFINITY);
    }
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-12, max_intervals: 4000 };
    let q = quad::integrate(|z| (g(z) - gmax).exp(), z0, z1, opts)?;
    if q.value <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(gmax + q.value.ln())
}

#[derive(Debug, Clone)]
struct ShellRun {
    /// ln of each shell contribution.
    ln_d: Vec<f64>,
    /// left end of each shell in the shell variable
    z: Vec<f64>,
    outcome: ShellOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ShellOutcome {
    /// Converged with `ln` of the extrapolated tail beyond the last shell.
    Converges { ln_tail: f64 },
    Diverges,
}

fn run_shells(f: &Integrand, z_start: f64) -> Result<ShellRun> {
    let mut ln_d = Vec::new();
    let mut z = Vec::new();
    let mut ln_sum = f64::NEG_INFINITY;
    let mut small = 0;
    for j in 0..MAX_SHELLS {
        let za = z_start + j as f64 * LN2;
        let zb = za + LN2;
        let v = ln_integral(|zz| f.ln_at(zz), za, zb)?;
        z.push(za);
        ln_d.push(v);
        if v == f64::INFINITY {
            return Ok(ShellRun { ln_d, z, outcome: ShellOutcome::Diverges });
        }
        ln_sum = logsumexp(ln_sum, v);
        if ln_sum > OVERFLOW {
            return Ok(ShellRun { ln_d, z, outcome: ShellOutcome::Diverges });
        }
        let decreasing = j == 0 || v < ln_d[j - 1];
        if v == f64::NEG_INFINITY || (decreasing && v < ln_sum - 40.0) {
            small += 1;
            if small >= 3 {
                let ratio = if j >= 1 && ln_d[j - 1].is_finite() { (v - ln_d[j - 1]).min(0.0) } else { f64::NEG_INFINITY };
                // geometric bound on the rest: d_j·q/(1-q)
                let ln_tail = if ratio == f64::NEG_INFINITY || v == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    let q = ratio.exp().min(0.999);
                    v + (q / (1.0 - q)).ln()
                };
                return Ok(ShellRun { ln_d, z, outcome: ShellOutcome::Converges { ln_tail } });
            }
        } else {
            small = 0;
        }
    }
    let outcome = classify_tail(&ln_d, &z);
    Ok(ShellRun { ln_d, z, outcome })
}

/// Decide the fate of a run that used every shell.
fn classify_tail(ln_d: &[f64], z: &[f64]) -> ShellOutcome {
    let n = ln_d.len();
    let last = ln_d[n - 1];
    let q = ((last - ln_d[n - 9]) / 8.0).exp();
    if q < 0.9 {
        return ShellOutcome::Converges { ln_tail: last + (q / (1.0 - q)).ln() };
    }
    if q >= 1.0 {
        return ShellOutcome::Diverges;
    }
    // Borderline: d_j ~ C z_j^{-p}.
    let k = 32.min(n);
    let xs: Vec<f64> = z[n - k..].iter().map(|v| (v + LN2).ln()).collect();
    let ys = &ln_d[n - k..];
    match fit::line(&xs, ys) {
        Some(l) if -l.slope > 1.05 => {
            let p = -l.slope;
            let zl = z[n - 1] + LN2;
            ShellOutcome::Converges { ln_tail: last + (zl / ((p - 1.0) * LN2)).ln() }
        }
        _ => ShellOutcome::Diverges,
    }
}

/// `∫₀^b x^e ϖ(x) dx` with `b = min(1, δ)`.
pub fn weighted_integral(m: &ModulusSpec, e: f64) -> Result<IntegralVerdict> {
    if !e.is_finite() {
        return Err(Error::Argument(format!("weight exponent {e} not finite")));
    }
    let f = Integrand::new(m, e);
    let sb = m.s_delta().max(0.0);
    let s0 = sb + 16f64.ln();
    // Near piece x ∈ [b/16, b], integrated in s directly.
    let ln_a = ln_integral(|s| f.ln_at_s(s), sb, s0)?;
    if ln_a == f64::INFINITY {
        return Ok(IntegralVerdict { converges: false, value: None, divergence_rate: None, truncation_trace: vec![] });
    }
    let run = run_shells(&f, f.z_of_s(s0))?;
    let mut trace = Vec::with_capacity(run.ln_d.len());
    let mut acc = ln_a;
    for (j, &v) in run.ln_d.iter().enumerate() {
        acc = logsumexp(acc, v);
        // ln s at the shell's far end
        let zr = run.z[j] + LN2;
        let ln_s = if f.depth == 1 { zr } else { zr.exp() };
        trace.push(TracePoint { loglog_inv_lower: ln_s, partial: acc.exp() });
    }
    match run.outcome {
        ShellOutcome::Converges { ln_tail } => {
            let total = logsumexp(acc, ln_tail);
            Ok(IntegralVerdict { converges: true, value: Some(total.exp()), divergence_rate: None, truncation_trace: trace })
        }
        ShellOutcome::Diverges => {
            let n = trace.len();
            let rate = if n >= 3 {
                let k = 8.min(n);
                let xs: Vec<f64> = run.z[n - k..].iter().map(|z| z + LN2).collect();
                let ys: Vec<f64> = trace[n - k..].iter().map(|t| t.partial.ln()).collect();
                if ys.iter().all(|v| v.is_finite()) { fit::line(&xs, &ys).map(|l| l.slope) } else { None }
            } else {
                None
            };
            Ok(IntegralVerdict { converges: false, value: None, divergence_rate: rate, truncation_trace: trace })
        }
    }
}

/// Dini-type integral `∫₀¹ ϖ(x)/x^{2τ+3-k} dx`.
pub fn dini_integral(m: &ModulusSpec, k: u32, tau: f64) -> Result<IntegralVerdict> {
    weighted_integral(m, k as f64 - 2.0 * tau - 3.0)
}

/// Classical Dini integral `∫₀¹ ϖ(x)/x dx`.
pub fn classical_dini(m: &ModulusSpec) -> Result<IntegralVerdict> {
    weighted_integral(m, -1.0)
}

/// `φ(x) = x^p·ϖ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    pub base_modulus: ModulusSpec,
    pub power_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl PhiFunction {
    pub fn new(base_modulus: ModulusSpec, power_shift: f64) -> Self {
        Self { base_modulus, power_shift, label: None }
    }

    /// `ln φ(exp(-s))`.
    pub fn ln_at_log(&self, s: f64) -> f64 {
        -self.power_shift * s + self.base_modulus.ln_at_log(s)
    }

    /// `∫₀¹ φ(x)/x^{q} dx`.
    pub fn integral_against(&self, q: f64) -> Result<IntegralVerdict> {
        weighted_integral(&self.base_modulus, self.power_shift - q)
    }
}

/// `φ_i(x) = x^{k-(3-i)τ-1} ϖ(x)`.
pub fn phi_from_modulus(m: &ModulusSpec, k: u32, tau: f64, i: u8) -> Result<PhiFunction> {
    if i != 1 && i != 2 {
        return Err(Error::Argument(format!("phi label {i} must be 1 or 2")));
    }
    let p = k as f64 - (3 - i) as f64 * tau - 1.0;
    Ok(PhiFunction { base_modulus: m.clone(), power_shift: p, label: Some(i) })
}

/// Upper end of the critical-exponent search.
pub const K_STAR_MAX: u32 = 64;

/// The integer `k*` with `∫φ/x^{k*+1} < ∞` and `∫φ/x^{k*+2} = ∞`.
pub fn critical_exponent(phi: &PhiFunction) -> Result<u32> {
    if !phi.integral_against(1.0)?.converges {
        return Err(Error::Analysis("phi degenerate: ∫φ(x)/x dx already diverges".into()));
    }
    for k in 0..=K_STAR_MAX {
        if !phi.integral_against(k as f64 + 2.0)?.converges {
            return Ok(k);
        }
    }
    Err(Error::Analysis(format!("phi too regular: no divergence up to order {}", K_STAR_MAX + 2)))
}

/// Fitted shapes of a remaining modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainingFits {
    /// Slope of `ln ϖ_*` against `ln γ`.
    pub power: f64,
    /// `μ` in `ϖ_* ≈ c/(ln 1/γ)^μ`, from the slope against `ln ln(1/γ)`.
    pub log_power: f64,
    /// `(a, b)` in `ϖ_* ≈ c·γ^a/(ln 1/γ)^b`.
    pub power_log: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub k_star: u32,
    pub gamma: Vec<f64>,
    pub omega_star: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    /// `ln(1/L)`, finite even when `L` underflows.
    pub ln_inv_l: Vec<f64>,
    pub balance_residual: f64,
    pub eps: f64,
    pub fits: Option<RemainingFits>,
    /// `ϖ_*` as a tabulated modulus (when the γ-grid has at least two points).
    pub remaining_modulus: Option<ModulusSpec>,
}

impl RegularityReport {
    /// CSV mirror: `gamma,omega_star,L,ln_inv_L`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gamma,omega_star,L,ln_inv_L\n");
        for i in 0..self.gamma.len() {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.gamma[i], self.omega_star[i], self.l[i], self.ln_inv_l[i]
            ));
        }
        s
    }
}

/// Result of estimating regularity from measured deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DeltaRegularity {
    /// Deltas vanish from some index on: the limit is a finite sum of analytic terms.
    AnalyticLimit,
    Finite { fitted_phi: PhiFunction, report: RegularityReport },
}

/// Options for [`remaining_modulus`].
#[derive(Debug, Clone, Copy)]
pub struct BalanceOptions {
    /// Relative tolerance on the two sides of the balance equation.
    pub tolerance: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { tolerance: 0.1 }
    }
}

/// The two sides of the balance equation, in logarithms, at `σ = ln(1/L)`.
struct Balance<'a> {
    phi: &'a PhiFunction,
    k_star: u32,
    s_eps: f64,
}

impl Balance<'_> {
    /// `ln ∫₀^L φ(t)/t^{k*+1} dt`.
    fn ln_near(&self, sigma: f64) -> Result<f64> {
        let e = self.phi.power_shift - self.k_star as f64 - 1.0;
        let f = Integrand::new(&self.phi.base_modulus, e);
        // integrate in t = ln s with shells doubling s (depth 1 regardless of kind)
        let f1 = Integrand { depth: 1, ..f };
        let run = run_shells(&f1, sigma.ln())?;
        match run.outcome {
            ShellOutcome::Converges { ln_tail } => {
                let mut acc = ln_tail;
                for v in run.ln_d {
                    acc = logsumexp(acc, v);
                }
                Ok(acc)
            }
            ShellOutcome::Diverges => Err(Error::Analysis(format!(
                "near integral diverges at order k*+1 = {}; k* inconsistent with phi",
                self.k_star + 1
            ))),
        }
    }

    /// `ln γ∫_L^ε φ(t)/t^{k*+2} dt` without the `ln γ`.
    fn ln_far(&self, sigma: f64) -> Result<f64> {
        if sigma <= self.s_eps {
            return Ok(f64::NEG_INFINITY);
        }
        let e = self.phi.power_shift - self.k_star as f64 - 2.0;
        let f = Integrand { depth: 1, ..Integrand::new(&self.phi.base_modulus, e) };
        // Near s = 0 (ε close to 1) integrate in s, beyond s = 1 in t = ln s.
        let mut v = f64::NEG_INFINITY;
        if self.s_eps < 1.0 {
            v = ln_integral_capped(|s| f.ln_at_s(s), self.s_eps, sigma.min(1.0), f64::MAX)?;
        }
        if sigma > 1.0 {
            v = logsumexp(v, ln_integral_capped(|t| f.ln_at(t), self.s_eps.max(1.0).ln(), sigma.ln(), f64::MAX)?);
        }
        if v == f64::INFINITY {
            return Err(Error::Numeric("far integral overflowed".into()));
        }
        Ok(v)
    }
}

/// Solve the balance equation for each `γ` and tabulate `ϖ_*`.
pub fn remaining_modulus(phi: &PhiFunction, k_star: u32, eps: f64, gamma_grid: &[f64]) -> Result<RegularityReport> {
    remaining_modulus_with(phi, k_star, eps, gamma_grid, BalanceOptions::default())
}

pub fn remaining_modulus_with(
    phi: &PhiFunction,
    k_star: u32,
    eps: f64,
    gamma_grid: &[f64],
    opts: BalanceOptions,
) -> Result<RegularityReport> {
    if gamma_grid.is_empty() {
        return Err(Error::Argument("empty gamma grid".into()));
    }
    if !(eps > 0.0 && eps <= phi.base_modulus.delta() * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("eps {eps} outside (0, δ = {}]", phi.base_modulus.delta())));
    }
    if gamma_grid.iter().any(|&g| !(g > 0.0 && g <= eps)) {
        return Err(Error::Argument(format!("every gamma must lie in (0, eps = {eps}]")));
    }
    if gamma_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("gamma grid must be strictly decreasing".into()));
    }
    let bal = Balance { phi, k_star, s_eps: -eps.ln() };
    let rows: Vec<Result<(f64, f64, f64)>> = crate::par::map_slice(gamma_grid, |&g| solve_one(&bal, g));
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let mut report = RegularityReport {
        k_star,
        gamma: gamma_grid.to_vec(),
        omega_star: rows.iter().map(|r| r.0.exp()).collect(),
        l: rows.iter().map(|r| (-r.1).exp()).collect(),
        ln_inv_l: rows.iter().map(|r| r.1).collect(),
        balance_residual: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        eps,
        fits: None,
        remaining_modulus: None,
    };
    if report.balance_residual > opts.tolerance {
        return Err(Error::Analysis(format!(
            "balance residual {} above tolerance {}",
            report.balance_residual, opts.tolerance
        )));
    }
    let ln_w: Vec<f64> = rows.iter().map(|r| r.0).collect();
    if gamma_grid.len() >= 2 {
        let lg: Vec<f64> = gamma_grid.iter().map(|g| g.ln()).collect();
        let llg: Vec<f64> = gamma_grid.iter().map(|g| (-g.ln()).ln()).collect();
        let power = fit::line(&lg, &ln_w).map(|l| l.slope).unwrap_or(f64::NAN);
        let log_power = fit::line(&llg, &ln_w).map(|l| -l.slope).unwrap_or(f64::NAN);
        let power_log = fit::plane(&lg, &llg, &ln_w).map(|(_, a, b)| (a, -b));
        report.fits = Some(RemainingFits { power, log_power, power_log });
        // ascending samples; keep only representable values
        let mut samples: Vec<[f64; 2]> = gamma_grid
            .iter()
            .zip(&report.omega_star)
            .filter(|(g, w)| **g > 0.0 && **w > 0.0 && w.is_finite())
            .map(|(g, w)| [*g, *w])
            .collect();
        samples.reverse();
        if samples.len() >= 2 {
            report.remaining_modulus = Some(ModulusSpec::tabulated(samples, None).map_err(|e| {
                Error::Analysis(format!("remaining modulus not monotone: {e}"))
            })?);
        }
    }
    Ok(report)
}

/// `(ln ϖ_*, ln(1/L), relative mismatch)` for one `γ`.
fn solve_one(bal: &Balance, gamma: f64) -> Result<(f64, f64, f64)> {
    let lg = gamma.ln();
    let sg = -lg;
    let f = |sigma: f64| -> Result<(f64, f64)> {
        let far = lg + bal.ln_far(sigma)?;
        let near = bal.ln_near(sigma)?;
        Ok((far - near, near))
    };
    let (mut lo, mut hi) = (sg, 2.0 * sg);
    let (mut flo, _) = f(lo)?;
    let (mut fhi, _) = f(hi)?;
    // widen towards L = γ^{2^j} or back towards ε when γ is not small against ε
    for _ in 0..60 {
        if fhi >= 0.0 || !fhi.is_finite() {
            break;
        }
        (lo, flo) = (hi, fhi);
        hi *= 2.0;
        fhi = f(hi)?.0;
    }
    for _ in 0..60 {
        if flo <= 0.0 || lo <= bal.s_eps * (1.0 + 1e-9) {
            break;
        }
        (hi, fhi) = (lo, flo);
        lo = bal.s_eps.max(0.5 * lo) * (1.0 + 1e-12);
        flo = f(lo)?.0;
    }
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::Analysis(format!(
            "balance bracket failure at gamma = {gamma:e}: ln(far/near) = {flo:.4} at L = gamma, {fhi:.4} at L = gamma^2"
        )));
    }
    let mut best = (f64::INFINITY, 0.0, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (fm, near) = f(mid)?;
        if fm.abs() < best.0.abs() {
            best = (fm, near, mid);
        }
        if fm.abs() < 1e-12 || (hi - lo) < 1e-13 * hi {
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (fm, near, sigma) = best;
    Ok((near, sigma, 1.0 - (-fm.abs()).exp()))
}

/// Number of smallest-radius samples used to fit the tail of `φ`.
const TAIL_SAMPLES: usize = 6;

/// Fit `φ` through measured deltas and run the critical-exponent analysis.
///
/// `r_seq` must be geometric and strictly decreasing; deltas at or below zero
/// count as vanished.
pub fn regularity_from_deltas(r_seq: &[f64], deltas: &[f64]) -> Result<DeltaRegularity> {
    if r_seq.len() != deltas.len() || r_seq.is_empty() {
        return Err(Error::Argument("radii and deltas must have equal nonzero length".into()));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Argument("deltas must be finite and nonnegative".into()));
    }
    if r_seq.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::Argument("radii must lie in (0, 1)".into()));
    }
    if r_seq.len() >= 2 {
        let q = r_seq[1] / r_seq[0];
        if !(q < 1.0) || r_seq.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-9) {
            return Err(Error::Argument("radii must be strictly decreasing and geometric".into()));
        }
    }
    let last_pos = match deltas.iter().rposition(|d| *d > 0.0) {
        None => return Ok(DeltaRegularity::AnalyticLimit),
        Some(i) => i,
    };
    if last_pos + 1 < deltas.len() {
        return Ok(DeltaRegularity::AnalyticLimit);
    }
    let n = deltas.len();
    if n < 3 {
        return Err(Error::Analysis("need at least three positive deltas to fit phi".into()));
    }
    // Upper envelope, nondecreasing in r.
    let mut env = vec![0.0; n];
    let mut run = 0.0f64;
    for i in (0..n).rev() {
        run = run.max(deltas[i]);
        env[i] = run;
    }
    let k = 4.min(n - 1);
    if !(env[n - 1] < env[n - 1 - k]) || !(env[n - 1] < env[0]) {
        return Err(Error::Analysis("deltas do not decay: cannot fit a modulus".into()));
    }
    let samples: Vec<[f64; 2]> = (0..n).rev().map(|i| [r_seq[i], env[i]]).collect();
    let tail = fit_tail(&samples);
    let base = ModulusSpec::tabulated(samples, Some(tail))?;
    let phi = PhiFunction::new(base, 0.0);
    let k_star = critical_exponent(&phi)?;
    let eps = r_seq[0];
    let g_hi = eps / 4.0;
    let g_lo = r_seq[n - 1];
    let m = 24usize.min(4 * n).max(2);
    let grid = if g_lo < g_hi { crate::modulus::geometric_grid(g_hi, g_lo, m) } else { vec![eps] };
    let report = remaining_modulus(&phi, k_star, eps, &grid)?;
    Ok(DeltaRegularity::Finite { fitted_phi: phi, report })
}

/// Power-log tail `x^a (ln 1/x)^{-b}` through the smallest samples, falling
/// back to a pure power when the log term cannot be resolved.
fn fit_tail(samples: &[[f64; 2]]) -> PowerLogTail {
    let m = TAIL_SAMPLES.min(samples.len());
    let pts = &samples[..m];
    let lx: Vec<f64> = pts.iter().map(|p| p[0].ln()).collect();
    let llx: Vec<f64> = pts.iter().map(|p| (-p[0].ln()).ln()).collect();
    let lw: Vec<f64> = pts.iter().map(|p| p[1].ln()).collect();
    if m >= 4 {
        if let Some((_, a, b)) = fit::plane(&lx, &llx, &lw) {
            let b = -b;
            let resid = (0..m)
                .map(|i| {
                    let c = lw[0] - a * lx[0] + b * llx[0];
                    (lw[i] - (c + a * lx[i] - b * llx[i])).abs()
                })
                .fold(0.0, f64::max);
            if a >= 0.0 && a.is_finite() && b.is_finite() && resid < 1e-6 {
                return PowerLogTail { a, b };
            }
        }
    }
    let a = fit::line(&lx, &lw).map(|l| l.slope).unwrap_or(0.0).max(0.0);
    PowerLogTail { a, b: 0.0 }
}

/// Closed-form reference integrals for power-log and iterated-log growth.
pub mod asymptotics {
    use super::*;

    /// Product `ln z · ln ln z ⋯ (ln^{(ρ)} z)^λ` in logarithms, for `u = ln z`.
    fn ln_iterated(rho: u32, lambda: f64, u: f64) -> f64 {
        let mut l = u;
        let mut acc = 0.0;
        for j in 1..=rho {
            if j == rho {
                acc += lambda * l.ln();
            } else {
                acc += l.ln();
                l = l.ln();
            }
        }
        acc
    }

    /// `∫_M^X dz/((ln z)⋯(ln⋯ln z)^λ)`.
    pub fn iterated_log_integral(rho: u32, lambda: f64, m: f64, x: f64) -> Result<f64> {
        let g = |u: f64| (u - ln_iterated(rho, lambda, u)).exp();
        quad::integrate(g, m.ln(), x.ln(), QuadOptions::default()).map(|q| q.value)
    }

    /// `X/((ln X)⋯(ln⋯ln X)^λ)`.
    pub fn iterated_log_closed_form(rho: u32, lambda: f64, x: f64) -> f64 {
        (x.ln() - ln_iterated(rho, lambda, x.ln())).exp()
    }

    /// `∫_M^X dz/(z^σ (ln z)^λ)`.
    pub fn power_log_integral(sigma: f64, lambda: f64, m: f64, x: f64) -> Result<f64> {
        let g = |u: f64| ((1.0 - sigma) * u - lambda * u.ln()).exp();
        quad::integrate(g, m.ln(), x.ln(), QuadOptions::default()).map(|q| q.value)
    }

    /// `X^{1-σ}/(ln X)^λ`.
    pub fn power_log_closed_form(sigma: f64, lambda: f64, x: f64) -> f64 {
        ((1.0 - sigma) * x.ln() - lambda * x.ln().ln()).exp()
    }

    /// `∫_X^∞ dz/(z^{1+σ} (ln z)^λ)`.
    pub fn power_log_tail_integral(sigma: f64, lambda: f64, x: f64) -> Result<f64> {
        let u0 = x.ln();
        // scaled by the value at the lower end; the rest decays like e^{-σv}
        let g = |v: f64| (-sigma * v - lambda * ((u0 + v) / u0).ln()).exp();
        let span = 800.0 / sigma;
        let q = quad::integrate(g, 0.0, span, QuadOptions::default())?;
        Ok(q.value * (-sigma * u0 - lambda * u0.ln()).exp())
    }

    /// `1/(X^σ (ln X)^λ)`.
    pub fn power_log_tail_closed_form(sigma: f64, lambda: f64, x: f64) -> f64 {
        (-sigma * x.ln() - lambda * x.ln().ln()).exp()
    }
}
