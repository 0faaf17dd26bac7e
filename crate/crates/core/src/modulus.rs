//! Moduli of continuity.
//!
//! A modulus ϖ is a nondecreasing function on `(0, δ]` with `ϖ(0⁺) = 0` and
//! `x/ϖ(x)` bounded near zero. Besides plain evaluation every kind can be
//! evaluated in logarithmic coordinates: [`ModulusSpec::ln_at_loglog`] returns
//! `ln ϖ(x)` at `x = exp(-exp(t))`, which stays finite far below the smallest
//! positive double and is what the integrability machinery works with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-log tail `c·x^a·(ln 1/x)^(-b)` used below the first tabulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLogTail {
    pub a: f64,
    pub b: f64,
}

/// The closed-form families plus a tabulated fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModulusKind {
    /// `x^alpha`, `alpha ∈ (0, 1]`.
    Hoelder { alpha: f64 },
    /// `(-ln x)^(-lambda)`.
    LogHoelder { lambda: f64 },
    /// `1/(L1·L2⋯L_{rho-1}·L_rho^lambda)` with `L1 = ln(1/x)` and `L_{j+1} = ln L_j`.
    GenLogHoelder { rho: u32, lambda: f64 },
    /// `x^a/(-ln x)^lambda`, `a ∈ [0, 1)`.
    PowerLog { a: f64, lambda: f64 },
    /// Monotone log–log interpolation through `(x_j, w_j)`.
    Tabulated {
        samples: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<PowerLogTail>,
    },
}

/// A modulus together with its validity endpoint δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModulus", into = "RawModulus")]
pub struct ModulusSpec {
    kind: ModulusKind,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawModulus {
    #[serde(flatten)]
    kind: ModulusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

impl TryFrom<RawModulus> for ModulusSpec {
    type Error = Error;
    fn try_from(r: RawModulus) -> Result<Self> {
        ModulusSpec::with_delta(r.kind, r.delta)
    }
}

impl From<ModulusSpec> for RawModulus {
    fn from(m: ModulusSpec) -> Self {
        RawModulus { kind: m.kind, delta: Some(m.delta) }
    }
}

fn tower_delta(rho: u32) -> f64 {
    // Largest x with every iterated logarithm L_1..L_rho ≥ 1.
    match rho {
        1 => 0.5,
        2 => (-std::f64::consts::E).exp(),
        _ => (-(std::f64::consts::E.exp())).exp(),
    }
}

impl ModulusSpec {
    /// Build with the default δ of the kind.
    pub fn new(kind: ModulusKind) -> Result<Self> {
        Self::with_delta(kind, None)
    }

    pub fn hoelder(alpha: f64) -> Result<Self> {
        Self::new(ModulusKind::Hoelder { alpha })
    }

    pub fn log_hoelder(lambda: f64) -> Result<Self> {
        Self::new(ModulusKind::LogHoelder { lambda })
    }

    pub fn gen_log_hoelder(rho: u32, lambda: f64) -> Result<Self> {
        Self::new(ModulusKind::GenLogHoelder { rho, lambda })
    }

    pub fn power_log(a: f64, lambda: f64) -> Result<Self> {
        Self::new(ModulusKind::PowerLog { a, lambda })
    }

    pub fn tabulated(samples: Vec<[f64; 2]>, tail: Option<PowerLogTail>) -> Result<Self> {
        Self::new(ModulusKind::Tabulated { samples, tail })
    }

    /// Build with an explicit δ (or the kind's default when `None`).
    pub fn with_delta(kind: ModulusKind, delta: Option<f64>) -> Result<Self> {
        let arg = |s: String| Err(Error::Argument(s));
        let default = match &kind {
            ModulusKind::Hoelder { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return arg(format!("hoelder exponent {alpha} not in (0, 1]"));
                }
                1.0
            }
            ModulusKind::LogHoelder { lambda } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return arg(format!("log_hoelder index {lambda} must be positive"));
                }
                0.5
            }
            ModulusKind::GenLogHoelder { rho, lambda } => {
                if !(1..=3).contains(rho) {
                    return arg(format!("gen_log_hoelder depth {rho} not in 1..=3"));
                }
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return arg(format!("gen_log_hoelder index {lambda} must be positive"));
                }
                tower_delta(*rho)
            }
            ModulusKind::PowerLog { a, lambda } => {
                if !(*a >= 0.0 && *a < 1.0) {
                    return arg(format!("power_log exponent {a} not in [0, 1)"));
                }
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return arg(format!("power_log index {lambda} must be positive"));
                }
                0.5
            }
            ModulusKind::Tabulated { samples, tail } => {
                if samples.len() < 2 {
                    return arg("tabulated modulus needs at least two samples".into());
                }
                for w in samples.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return arg("tabulated abscissae must be strictly increasing".into());
                    }
                    if w[1][1] < w[0][1] {
                        return arg("tabulated values must be nondecreasing".into());
                    }
                }
                if samples.iter().any(|s| !(s[0] > 0.0 && s[1] > 0.0 && s[0].is_finite() && s[1].is_finite())) {
                    return arg("tabulated samples must be positive and finite".into());
                }
                if let Some(t) = tail {
                    if !(t.a >= 0.0 && t.a.is_finite() && t.b.is_finite()) {
                        return arg("tail exponents must be finite with a ≥ 0".into());
                    }
                    if t.b != 0.0 && samples[0][0] >= 1.0 {
                        return arg("logarithmic tail needs the first sample below 1".into());
                    }
                }
                samples[samples.len() - 1][0]
            }
        };
        let delta = delta.unwrap_or(default);
        if !(delta > 0.0 && delta.is_finite()) {
            return arg(format!("delta {delta} must be positive"));
        }
        match &kind {
            ModulusKind::LogHoelder { .. } | ModulusKind::PowerLog { .. } if delta >= 1.0 => {
                return arg(format!("delta {delta} must be below 1 for logarithmic kinds"));
            }
            ModulusKind::GenLogHoelder { .. } if delta > default * (1.0 + 1e-12) => {
                return arg(format!("delta {delta} exceeds {default} where the iterated logs stay ≥ 1"));
            }
            ModulusKind::Tabulated { .. } if delta > default * (1.0 + 1e-12) => {
                return arg(format!("delta {delta} beyond last tabulated sample {default}"));
            }
            _ => {}
        }
        Ok(Self { kind, delta })
    }

    pub fn kind(&self) -> &ModulusKind {
        &self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ln(1/δ)`, the smallest admissible `s` in logarithmic evaluation.
    pub fn s_delta(&self) -> f64 {
        -self.delta.ln()
    }

    /// Evaluate ϖ(x) for `0 < x ≤ δ`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || x > self.delta * (1.0 + 1e-14) || !x.is_finite() {
            return Err(Error::Domain(format!("x = {x:e} outside (0, {}]", self.delta)));
        }
        Ok(match &self.kind {
            ModulusKind::Hoelder { alpha } => x.powf(*alpha),
            ModulusKind::LogHoelder { lambda } => (-x.ln()).powf(-lambda),
            ModulusKind::PowerLog { a, lambda } => x.powf(*a) * (-x.ln()).powf(-lambda),
            ModulusKind::GenLogHoelder { rho, lambda } => {
                let mut l = -x.ln();
                let mut prod = 1.0;
                for _ in 1..*rho {
                    prod *= l;
                    l = l.ln();
                }
                1.0 / (prod * l.powf(*lambda))
            }
            ModulusKind::Tabulated { .. } => self.ln_at_log(-x.ln()).exp(),
        })
    }

    /// `ln ϖ(exp(-s))`.
    pub fn ln_at_log(&self, s: f64) -> f64 {
        match &self.kind {
            ModulusKind::Hoelder { alpha } => -alpha * s,
            _ => self.ln_at_loglog(s.ln()),
        }
    }

    /// `ln ϖ(exp(-exp(t)))`; defined for every `t` with `exp(t) ≥ ln(1/δ)`.
    pub fn ln_at_loglog(&self, t: f64) -> f64 {
        let s = t.exp();
        match &self.kind {
            ModulusKind::Hoelder { alpha } => -alpha * s,
            ModulusKind::LogHoelder { lambda } => -lambda * t,
            ModulusKind::PowerLog { a, lambda } => power_term(*a, s) - lambda * t,
            ModulusKind::GenLogHoelder { rho, lambda } => match rho {
                1 => -lambda * t,
                2 => -t - lambda * t.ln(),
                _ => {
                    let lt = t.ln();
                    -t - lt - lambda * lt.ln()
                }
            },
            ModulusKind::Tabulated { samples, tail } => {
                let lx0 = samples[0][0].ln();
                let lw0 = samples[0][1].ln();
                let lx = -s;
                if lx >= lx0 {
                    return interp_loglog(samples, lx);
                }
                match tail {
                    Some(tl) => {
                        // Anchored at the first sample.
                        let t0 = (-lx0).ln();
                        lw0 + power_term(tl.a, s) - tl.a * lx0 - tl.b * (t - t0)
                    }
                    None => {
                        let slope = (samples[1][1].ln() - lw0) / (samples[1][0].ln() - lx0);
                        if slope == 0.0 {
                            lw0
                        } else {
                            lw0 - slope * s - slope * lx0
                        }
                    }
                }
            }
        }
    }

    /// Split `ln ϖ(exp(-exp(t))) = -c·exp(t) + r` into the coefficient `c` of
    /// the linear-in-`s` part and the remainder `r`, so callers can combine `c`
    /// with other linear terms before multiplying by a possibly infinite `s`.
    pub fn split_loglog(&self, t: f64) -> (f64, f64) {
        match &self.kind {
            ModulusKind::Hoelder { alpha } => (*alpha, 0.0),
            ModulusKind::PowerLog { a, lambda } => (*a, -lambda * t),
            ModulusKind::LogHoelder { .. } | ModulusKind::GenLogHoelder { .. } => (0.0, self.ln_at_loglog(t)),
            ModulusKind::Tabulated { samples, tail } => {
                let lx0 = samples[0][0].ln();
                let lw0 = samples[0][1].ln();
                let s = t.exp();
                if -s >= lx0 {
                    return (0.0, interp_loglog(samples, -s));
                }
                match tail {
                    Some(tl) => (tl.a, lw0 - tl.a * lx0 - tl.b * (t - (-lx0).ln())),
                    None => {
                        let slope = (samples[1][1].ln() - lw0) / (samples[1][0].ln() - lx0);
                        (slope, lw0 - slope * lx0)
                    }
                }
            }
        }
    }

    /// Whether `x/ϖ(x)` may legitimately be unbounded (only for fitted tables).
    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, ModulusKind::Tabulated { .. })
    }
}

fn power_term(a: f64, s: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        -a * s
    }
}

fn interp_loglog(samples: &[[f64; 2]], lx: f64) -> f64 {
    let n = samples.len();
    let last = samples[n - 1];
    if lx >= last[0].ln() {
        return last[1].ln();
    }
    // samples sorted by x; find segment with lx in [ln x_i, ln x_{i+1}]
    let idx = samples.partition_point(|p| p[0].ln() <= lx);
    let i = idx.saturating_sub(1).min(n - 2);
    let (x0, w0) = (samples[i][0].ln(), samples[i][1].ln());
    let (x1, w1) = (samples[i + 1][0].ln(), samples[i + 1][1].ln());
    let f = (lx - x0) / (x1 - x0);
    w0 + f * (w1 - w0)
}

/// Geometric grid from `hi` to `lo` (either order) with `n ≥ 2` points.
pub fn geometric_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..n).map(|i| (lh + (ll - lh) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// The default "towards zero" grid: δ down to 1e-12.
pub fn default_zero_grid(m: &ModulusSpec, n: usize) -> Vec<f64> {
    geometric_grid(m.delta(), 1e-12, n)
}

/// Which structural property a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyTag {
    SemiSeparable,
    WeakHomogeneous,
    Convex,
    Concave,
    Comparison,
}

/// Relative strength of two moduli, read as "m1 is ... than m2".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusOrdering {
    StrictlyWeaker,
    Weaker,
    Equivalent,
    Stronger,
    StrictlyStronger,
    Incomparable,
}

impl ModulusOrdering {
    pub fn reversed(self) -> Self {
        use ModulusOrdering::*;
        match self {
            StrictlyWeaker => StrictlyStronger,
            Weaker => Stronger,
            Equivalent => Equivalent,
            Stronger => Weaker,
            StrictlyStronger => StrictlyWeaker,
            Incomparable => Incomparable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Verdict {
    Holds(bool),
    Ordering(ModulusOrdering),
}

/// One measured grid point: `value` is the raw measurement, `ratio` the quantity tested for boundedness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub x: f64,
    pub value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: PropertyTag,
    pub verdict: Verdict,
    pub witness: Vec<WitnessPoint>,
    pub bound_constant: f64,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds(true))
    }
}

/// Boundedness test on a sequence ordered towards the limit.
fn bounded_tail(r: &[f64]) -> bool {
    if r.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let n = r.len();
    let third = (n / 3).max(1);
    let start = n - third;
    let nonincreasing = (start.max(1)..n).all(|i| r[i] <= r[i - 1] * (1.0 + 1e-12) + 1e-300);
    if nonincreasing {
        return true;
    }
    let head = r[..start].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = r[start..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    tail <= head * (1.0 + 1e-9)
}

/// Estimate `ψ(x) = sup_{0<r<δ/x} ϖ(rx)/ϖ(r)` and test `ψ(x) = O(x)`.
pub fn semi_separability(m: &ModulusSpec, x_grid: &[f64], r_resolution: usize) -> Result<PropertyReport> {
    if x_grid.len() < 3 || r_resolution < 2 {
        return Err(Error::Argument("semi separability needs ≥ 3 grid points and r_resolution ≥ 2".into()));
    }
    if x_grid.iter().any(|x| !(*x >= 1.0) || !x.is_finite()) {
        return Err(Error::Argument("semi separability grid points must be ≥ 1".into()));
    }
    if x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("semi separability grid must be increasing".into()));
    }
    let delta = m.delta();
    let rows: Vec<Result<WitnessPoint>> = crate::par::map_slice(x_grid, |&x| {
        let top = delta / x * (1.0 - 1e-12);
        let rs = geometric_grid(top, top * 1e-12, r_resolution);
        let mut best = 0.0f64;
        for r in rs {
            let q = m.eval(r * x)? / m.eval(r)?;
            best = best.max(q);
        }
        Ok(WitnessPoint { x, value: best, ratio: best / x })
    });
    let witness: Vec<WitnessPoint> = rows.into_iter().collect::<Result<_>>()?;
    let ratios: Vec<f64> = witness.iter().map(|w| w.ratio).collect();
    let bound = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(PropertyReport {
        property: PropertyTag::SemiSeparable,
        verdict: Verdict::Holds(bounded_tail(&ratios)),
        witness,
        bound_constant: bound,
    })
}

/// Estimate `limsup_{x→0⁺} ϖ(x)/ϖ(ax)` over a grid decreasing to zero.
pub fn weak_homogeneity(m: &ModulusSpec, a: f64, x_grid: &[f64]) -> Result<PropertyReport> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Argument(format!("a = {a} outside (0, 1)")));
    }
    if x_grid.len() < 3 || x_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("weak homogeneity grid must be decreasing with ≥ 3 points".into()));
    }
    let mut witness = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let q = m.eval(x)? / m.eval(a * x)?;
        witness.push(WitnessPoint { x, value: q, ratio: q });
    }
    let ratios: Vec<f64> = witness.iter().map(|w| w.ratio).collect();
    let third = (ratios.len() / 3).max(1);
    let limsup = ratios[ratios.len() - third..].iter().cloned().fold(0.0, f64::max);
    Ok(PropertyReport {
        property: PropertyTag::WeakHomogeneous,
        verdict: Verdict::Holds(bounded_tail(&ratios)),
        witness,
        bound_constant: limsup,
    })
}

/// Compare two moduli on the tail of a grid decreasing to zero.
///
/// The tested ratio is `ϖ₂/ϖ₁`: decaying means `m1` is strictly weaker.
pub fn compare(m1: &ModulusSpec, m2: &ModulusSpec, x_grid: &[f64]) -> Result<PropertyReport> {
    if x_grid.len() < 3 || x_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("comparison grid must be decreasing with ≥ 3 points".into()));
    }
    let common = m1.delta().min(m2.delta());
    if x_grid.iter().any(|&x| x > common * (1.0 + 1e-14) || x <= 0.0) {
        return Err(Error::Domain(format!("comparison grid leaves (0, {common}]")));
    }
    let mut witness = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let s = -x.ln();
        let lr = m2.ln_at_log(s) - m1.ln_at_log(s);
        witness.push(WitnessPoint { x, value: lr.exp(), ratio: lr });
    }
    let n = witness.len();
    let third = (n / 3).max(2).min(n);
    let tail: Vec<f64> = witness[n - third..].iter().map(|w| w.ratio).collect();
    let head_max = witness[..n - third].iter().map(|w| w.ratio).fold(f64::NEG_INFINITY, f64::max);
    let head_min = witness[..n - third].iter().map(|w| w.ratio).fold(f64::INFINITY, f64::min);
    let tmax = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tmin = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let trend = tail[tail.len() - 1] - tail[0];
    let tol = 1.01f64.ln();
    let eps = 1e-12;
    let nonincreasing = tail.windows(2).all(|w| w[1] <= w[0] + eps);
    let nondecreasing = tail.windows(2).all(|w| w[1] >= w[0] - eps);
    use ModulusOrdering::*;
    let ord = if nonincreasing && trend < -tol {
        StrictlyWeaker
    } else if nondecreasing && trend > tol {
        StrictlyStronger
    } else if tmax - tmin <= tol {
        Equivalent
    } else if head_max.is_finite() && tmax <= head_max + eps {
        Weaker
    } else if head_min.is_finite() && tmin >= head_min - eps {
        Stronger
    } else {
        Incomparable
    };
    Ok(PropertyReport {
        property: PropertyTag::Comparison,
        verdict: Verdict::Ordering(ord),
        witness,
        bound_constant: tmax.exp(),
    })
}

fn sorted_interior(m: &ModulusSpec, x_grid: &[f64]) -> Result<Vec<f64>> {
    if x_grid.len() < 3 {
        return Err(Error::Argument("shape check needs at least three grid points".into()));
    }
    let mut g = x_grid.to_vec();
    g.sort_by(|a, b| a.total_cmp(b));
    g.dedup();
    if g.len() < 3 {
        return Err(Error::Argument("shape check needs three distinct grid points".into()));
    }
    if g[0] <= 0.0 || g[g.len() - 1] > m.delta() * (1.0 + 1e-14) {
        return Err(Error::Domain(format!("shape grid leaves (0, {}]", m.delta())));
    }
    Ok(g)
}

fn slopes(m: &ModulusSpec, g: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(g.len() - 1);
    let mut prev = m.eval(g[0])?;
    for w in g.windows(2) {
        let cur = m.eval(w[1])?;
        out.push((0.5 * (w[0] + w[1]), (cur - prev) / (w[1] - w[0])));
        prev = cur;
    }
    Ok(out)
}

fn shape_check(m: &ModulusSpec, x_grid: &[f64], convex: bool) -> Result<PropertyReport> {
    let g = sorted_interior(m, x_grid)?;
    let sl = slopes(m, &g)?;
    let mut witness = Vec::with_capacity(sl.len() - 1);
    let mut ok = true;
    let mut worst = 0.0f64;
    for w in sl.windows(2) {
        let d = w[1].1 - w[0].1;
        let scale = w[0].1.abs().max(w[1].1.abs()).max(1e-300);
        let bad = if convex { d < -1e-9 * scale } else { d > 1e-9 * scale };
        ok &= !bad;
        worst = worst.max(if convex { -d / scale } else { d / scale });
        witness.push(WitnessPoint { x: w[1].0, value: w[1].1, ratio: d / scale });
    }
    Ok(PropertyReport {
        property: if convex { PropertyTag::Convex } else { PropertyTag::Concave },
        verdict: Verdict::Holds(ok),
        witness,
        bound_constant: worst.max(0.0),
    })
}

/// Convexity by monotone divided differences on the grid.
pub fn convexity_check(m: &ModulusSpec, x_grid: &[f64]) -> Result<PropertyReport> {
    shape_check(m, x_grid, true)
}

/// Concavity (nonincreasing divided differences) on the grid.
pub fn concavity_check(m: &ModulusSpec, x_grid: &[f64]) -> Result<PropertyReport> {
    shape_check(m, x_grid, false)
}

/// Shape that forces both semi separability and weak homogeneity, if any.
///
/// A concave modulus has `ϖ(x)/x` nonincreasing, which bounds both quotients
/// directly. A convex one is squeezed between two multiples of `x` once
/// `x/ϖ(x)` is bounded, so the same conclusion holds.
pub fn shape_shortcut(m: &ModulusSpec, x_grid: &[f64]) -> Result<Option<PropertyTag>> {
    if concavity_check(m, x_grid)?.holds() {
        return Ok(Some(PropertyTag::Concave));
    }
    if convexity_check(m, x_grid)?.holds() && validate(m)?.ratio_bounded {
        return Ok(Some(PropertyTag::Convex));
    }
    Ok(None)
}

/// Outcome of the defining invariants on the grid `δ·2^{-j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub nondecreasing: bool,
    pub vanishes_at_zero: bool,
    pub ratio_bounded: bool,
    /// `max x/ϖ(x)` over the grid.
    pub ratio_max: f64,
}

/// Check the three defining properties on `δ·2^{-j}`, `j = 0..=60`.
pub fn validate(m: &ModulusSpec) -> Result<Validity> {
    let xs: Vec<f64> = (0..=60).map(|j| m.delta() * 0.5f64.powi(j)).collect();
    let ws: Vec<f64> = xs.iter().map(|&x| m.eval(x)).collect::<Result<_>>()?;
    let nondecreasing = ws.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    // Decay toward 0 can be logarithmically slow; follow ln ϖ out to x = exp(-1e300).
    let s0 = m.s_delta().max(1e-3);
    let ss: Vec<f64> = (0..=60).map(|j| s0 * (1e300 / s0).powf(j as f64 / 60.0)).collect();
    let lw: Vec<f64> = ss.iter().map(|&s| m.ln_at_log(s)).collect();
    let vanishes_at_zero = lw[45..].windows(2).all(|w| w[1] < w[0]) && lw[60] < lw[0];
    let ratios: Vec<f64> = xs.iter().zip(&ws).map(|(x, w)| x / w).collect();
    let ratio_max = ratios.iter().cloned().fold(0.0, f64::max);
    // x/ϖ(x) may only turn down below the grid (x^{1-a}(ln 1/x)^λ peaks at ln(1/x) = λ/(1-a)).
    let lr: Vec<f64> = ss.iter().zip(&lw).map(|(s, l)| -s - l).collect();
    let deep_bounded = lr[45..].windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
    Ok(Validity { nondecreasing, vanishes_at_zero, ratio_bounded: bounded_tail(&ratios) || deep_bounded, ratio_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let lh = ModulusSpec::log_hoelder(2.0).unwrap();
        assert!((lh.eval((-10.0f64).exp()).unwrap() - 0.01).abs() < 1e-15);
        let h = ModulusSpec::hoelder(0.5).unwrap();
        assert_eq!(h.eval(0.25).unwrap(), 0.5);
        // x = exp(-e^10) underflows; evaluate through t = ln ln(1/x) = 10.
        let g = ModulusSpec::gen_log_hoelder(2, 1.5).unwrap();
        let expect = -(10.0 + 1.5 * 10f64.ln());
        assert!((g.ln_at_loglog(10.0) - expect).abs() < 1e-12);
        // and directly at a representable point
        let x = (-(3.0f64).exp()).exp();
        let direct = 1.0 / (3f64.exp() * 3f64.powf(1.5));
        assert!((g.eval(x).unwrap() / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let lh = ModulusSpec::log_hoelder(1.0).unwrap();
        assert!(matches!(lh.eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(lh.eval(0.6), Err(Error::Domain(_))));
        assert!(ModulusSpec::hoelder(1.5).is_err());
        assert!(ModulusSpec::gen_log_hoelder(4, 1.0).is_err());
        assert!(ModulusSpec::with_delta(ModulusKind::LogHoelder { lambda: 1.0 }, Some(1.0)).is_err());
    }

    #[test]
    fn log_space_agrees_with_direct() {
        let kinds = [
            ModulusSpec::hoelder(0.3).unwrap(),
            ModulusSpec::log_hoelder(1.7).unwrap(),
            ModulusSpec::power_log(0.4, 2.0).unwrap(),
            ModulusSpec::gen_log_hoelder(2, 1.2).unwrap(),
            ModulusSpec::gen_log_hoelder(3, 1.2).unwrap(),
        ];
        for m in &kinds {
            for j in 0..40 {
                let x = m.delta() * 0.7f64.powi(j);
                let d = m.eval(x).unwrap().ln();
                let l = m.ln_at_log(-x.ln());
                assert!((d - l).abs() < 1e-11 * d.abs().max(1.0), "{m:?} {x} {d} {l}");
            }
        }
    }

    #[test]
    fn tabulated_interpolates_power_laws_exactly() {
        let s: Vec<[f64; 2]> = (0..10).rev().map(|j| {
            let x = 0.5f64.powi(j);
            [x, x.powf(0.6)]
        }).collect();
        let m = ModulusSpec::tabulated(s, None).unwrap();
        for x in [0.3, 0.01, 1e-3, 1e-6] {
            assert!((m.eval(x).unwrap() / x.powf(0.6) - 1.0).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn tabulated_power_log_tail_is_continuous() {
        let s: Vec<[f64; 2]> = (1..8).rev().map(|j| {
            let x = 0.5f64.powi(j);
            [x, x * x / (-x.ln()).powi(2)]
        }).collect();
        let x0 = s[0][0];
        let m = ModulusSpec::tabulated(s, Some(PowerLogTail { a: 2.0, b: 2.0 })).unwrap();
        let below = m.eval(x0 * (1.0 - 1e-9)).unwrap();
        let at = m.eval(x0).unwrap();
        assert!((below / at - 1.0).abs() < 1e-7);
        let x = 1e-30;
        assert!((m.eval(x).unwrap() / (x * x / (-x.ln()).powi(2)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn json_roundtrip_and_shape() {
        let m = ModulusSpec::log_hoelder(2.0).unwrap();
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j["kind"], "log_hoelder");
        assert_eq!(j["params"]["lambda"], 2.0);
        assert_eq!(j["delta"], 0.5);
        let back: ModulusSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
        let t: ModulusSpec = serde_json::from_str(
            r#"{"kind":"tabulated","params":{"samples":[[0.1,0.2],[0.5,0.4]]}}"#,
        ).unwrap();
        assert_eq!(t.delta(), 0.5);
        assert!(serde_json::from_str::<ModulusSpec>(r#"{"kind":"hoelder","params":{"alpha":2.0}}"#).is_err());
    }

    #[test]
    fn hoelder_semi_separability_matches_power() {
        let m = ModulusSpec::hoelder(0.4).unwrap();
        let xs = geometric_grid(1.0, 1e4, 12);
        let r = semi_separability(&m, &xs, 200).unwrap();
        assert!(r.holds());
        for w in &r.witness {
            assert!((w.value / w.x.powf(0.4) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn lipschitz_boundary() {
        let m = ModulusSpec::hoelder(1.0).unwrap();
        let r = semi_separability(&m, &geometric_grid(1.0, 1e3, 8), 64).unwrap();
        for w in &r.witness {
            assert!((w.value - w.x).abs() < 1e-9 * w.x);
        }
        assert!(r.holds());
    }

    #[test]
    fn log_hoelder_psi_is_log_power() {
        let m = ModulusSpec::log_hoelder(2.0).unwrap();
        let r = semi_separability(&m, &geometric_grid(2.0, 1e6, 15), 300).unwrap();
        assert!(r.holds());
        // exact sup sits at r → δ/x: (ln(x/δ)/ln(1/δ))^λ
        for w in &r.witness {
            let exact = ((w.x / 0.5).ln() / 2f64.ln()).powi(2);
            assert!((w.value / exact - 1.0).abs() < 1e-6, "{} {}", w.value, exact);
        }
    }

    #[test]
    fn weak_homogeneity_examples() {
        let lh = ModulusSpec::log_hoelder(2.0).unwrap();
        let r = weak_homogeneity(&lh, 0.5, &default_zero_grid(&lh, 90)).unwrap();
        assert!(r.holds());
        assert!((r.bound_constant - 1.0).abs() < 0.1, "{}", r.bound_constant);
        let h = ModulusSpec::hoelder(0.3).unwrap();
        let r = weak_homogeneity(&h, 0.25, &default_zero_grid(&h, 30)).unwrap();
        for w in &r.witness {
            assert!((w.ratio - 0.25f64.powf(-0.3)).abs() < 1e-12);
        }
        assert!(weak_homogeneity(&h, 1.5, &[0.5, 0.1, 0.01]).is_err());
    }

    #[test]
    fn concave_table_ratio_below_inverse_a() {
        // w(x) = x - x^2 on (0, 1/2] is concave, so w(x)/w(ax) <= 1/a
        let s: Vec<[f64; 2]> = (0..40).rev().map(|j| {
            let x = 0.5 * 0.8f64.powi(j);
            [x, x - x * x]
        }).collect();
        let m = ModulusSpec::tabulated(s, None).unwrap();
        let grid: Vec<f64> = geometric_grid(0.5, 0.5 * 0.8f64.powi(39), 60);
        assert!(concavity_check(&m, &grid).unwrap().holds());
        let a = 0.3;
        let r = weak_homogeneity(&m, a, &geometric_grid(0.5, 1e-3, 30)).unwrap();
        for w in &r.witness {
            assert!(w.ratio <= 1.0 / a * (1.0 + 1e-6), "{w:?}");
        }
    }

    #[test]
    fn comparisons() {
        use ModulusOrdering::*;
        let lh = ModulusSpec::log_hoelder(2.0).unwrap();
        let h = ModulusSpec::hoelder(0.5).unwrap();
        let g = geometric_grid(0.5, 1e-12, 60);
        let ord = |a: &ModulusSpec, b: &ModulusSpec| match compare(a, b, &g).unwrap().verdict {
            Verdict::Ordering(o) => o,
            _ => unreachable!(),
        };
        assert_eq!(ord(&lh, &h), StrictlyWeaker);
        assert_eq!(ord(&h, &lh), StrictlyStronger);
        let h3 = ModulusSpec::hoelder(0.3).unwrap();
        let h7 = ModulusSpec::hoelder(0.7).unwrap();
        assert_eq!(ord(&h3, &h7), StrictlyWeaker);
        assert_eq!(ord(&lh, &lh), Equivalent);
        let g1 = ModulusSpec::gen_log_hoelder(1, 2.0).unwrap();
        assert_eq!(ord(&lh, &g1), Equivalent);
        assert!(compare(&lh, &h, &[0.9, 0.5, 0.1]).is_err());
    }

    #[test]
    fn shapes() {
        let h = ModulusSpec::hoelder(0.5).unwrap();
        let g = geometric_grid(1.0, 1e-12, 80);
        assert!(!convexity_check(&h, &g).unwrap().holds());
        assert!(concavity_check(&h, &g).unwrap().holds());
        let lin = ModulusSpec::tabulated(vec![[1e-6, 1e-6], [1e-3, 1e-3], [0.5, 0.5]], None).unwrap();
        assert!(convexity_check(&lin, &geometric_grid(0.5, 1e-6, 30)).unwrap().holds());
        // 1/ln(1/x)^2 bends down below x = e^{-3} and up above it.
        let pl = ModulusSpec::power_log(0.0, 2.0).unwrap();
        assert!(!convexity_check(&pl, &geometric_grid(0.04, 1e-12, 60)).unwrap().holds());
        assert!(concavity_check(&pl, &geometric_grid(0.04, 1e-12, 60)).unwrap().holds());
        assert!(convexity_check(&pl, &geometric_grid(0.5, 0.06, 30)).unwrap().holds());
    }

    #[test]
    fn validity_of_builtins() {
        for m in [
            ModulusSpec::hoelder(0.7).unwrap(),
            ModulusSpec::log_hoelder(0.5).unwrap(),
            ModulusSpec::gen_log_hoelder(2, 2.0).unwrap(),
            ModulusSpec::power_log(0.2, 1.0).unwrap(),
            // x/ϖ peaks near x = 4e-17, below most of the dyadic grid
            ModulusSpec::power_log(0.944, 2.11).unwrap(),
        ] {
            let v = validate(&m).unwrap();
            assert!(v.nondecreasing && v.vanishes_at_zero && v.ratio_bounded, "{m:?} {v:?}");
        }
        let steep = ModulusSpec::tabulated(vec![[0.01, 1e-4], [0.1, 1e-2], [0.5, 0.25]], None).unwrap();
        assert!(!validate(&steep).unwrap().ratio_bounded);
    }
}
