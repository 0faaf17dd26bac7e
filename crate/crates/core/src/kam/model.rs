//! Hamiltonians `H(x, y) = A(y) + Σ_t f_t(x) y^{p_t}` on `Tⁿ × ℝⁿ`.
//!
//! `A(y) = ⟨ω, y⟩ + |y|²/M + a·Σ_i P(y_i)` carries the action dependence; the
//! angle terms are trig polynomials times action monomials, which is the form
//! the smoothing acts on coefficient by coefficient.

use serde::{Deserialize, Serialize};

use crate::diophantine;
use crate::error::{Error, Result};
use crate::jackson;
use crate::modulus::ModulusSpec;
use crate::torus::{Evaluator, PhaseTable, TorusFunction};

/// Samples on `[0, 1]` for the iterated-integral action profile.
pub const ACTION_SAMPLES: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Integrable,
    HoelderTest,
    LogHoelderExample,
    Custom,
}

/// `f(x)·y^{y_power}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTerm {
    pub f: TorusFunction,
    pub y_power: Vec<u32>,
}

/// `P` and its derivatives up to `order` on `[0, 1]`, built by repeated
/// cumulative trapezoid integration of the top derivative from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile {
    order: usize,
    h: f64,
    /// `values[j][i] = P^{(j)}(i h)`.
    values: Vec<Vec<f64>>,
}

impl ActionProfile {
    pub fn build<G: Fn(f64) -> f64>(order: usize, top: G, samples: usize) -> Self {
        let h = 1.0 / samples as f64;
        let mut values = vec![vec![0.0; samples + 1]; order + 1];
        values[order] = (0..=samples).map(|i| top(i as f64 * h)).collect();
        for j in (0..order).rev() {
            let (lo, hi) = values.split_at_mut(j + 1);
            let (dst, src) = (&mut lo[j], &hi[0]);
            for i in 1..=samples {
                dst[i] = dst[i - 1] + 0.5 * h * (src[i - 1] + src[i]);
            }
        }
        Self { order, h, values }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `P^{(j)}(y)` for `|y| ≤ 1`; NaN outside.
    ///
    /// Off-node values use the Taylor expansion at the nearest node built from
    /// the tabulated higher derivatives, so `d/dy` of level `j` is level `j+1`.
    pub fn deriv(&self, j: usize, y: f64) -> f64 {
        if !(y.abs() <= 1.0) || j > self.order {
            return f64::NAN;
        }
        let ay = y.abs();
        let n = self.values[0].len() - 1;
        let i = ((ay / self.h).round() as usize).min(n);
        let d = ay - i as f64 * self.h;
        let mut acc = 0.0;
        let mut pw = 1.0;
        for m in 0..=(self.order - j) {
            acc += self.values[j + m][i] * pw;
            pw *= d / (m + 1) as f64;
        }
        // P^{(j)} has parity (−1)^{order−j}
        if y < 0.0 && (self.order - j) % 2 == 1 { -acc } else { acc }
    }
}

/// Values of `H` and its first derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub h: f64,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    /// row-major `n×n`
    pub hyy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    pub kind: BuiltinKind,
    pub dim: usize,
    pub omega: Vec<f64>,
    /// Bound `M` of the boundedness/nondegeneracy hypothesis.
    pub m_bound: f64,
    pub epsilon: f64,
    /// Size `a` of the perturbation (angle terms and action profile).
    pub amplitude: f64,
    pub k: u32,
    pub modulus: ModulusSpec,
    pub action_radius: f64,
    /// Smoothing scale applied to the angle terms, if any.
    pub smoothing: Option<f64>,
    terms: Vec<AngleTerm>,
    profile: Option<ActionProfile>,
    evals: Vec<TermEval>,
}

#[derive(Debug, Clone)]
struct TermEval {
    f: Evaluator,
    grad: Vec<Evaluator>,
    y_power: Vec<u32>,
}

/// Parameters for [`build_example_hamiltonian`]; unset fields take per-kind defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub m_bound: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Log-Hölder index of the explicit example.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Total Hölder regularity `ℓ` of the Hölder test model.
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub terms: Vec<AngleTerm>,
    #[serde(default)]
    pub action_radius: Option<f64>,
}

fn sin_terms(dim: usize, amp: f64) -> Result<Vec<AngleTerm>> {
    (0..dim)
        .map(|a| {
            let mut k = vec![0i64; dim];
            k[a] = 1;
            Ok(AngleTerm { f: TorusFunction::from_real_terms(dim, &[(k, 0.0, amp)])?, y_power: vec![0; dim] })
        })
        .collect()
}

/// Default perturbation size `ε^k ϖ(ε)`: the largest amplitude for which the
/// smallness hypothesis can hold with a bound `M` of order one.
pub fn default_amplitude(eps: f64, k: u32, m: &ModulusSpec) -> Result<f64> {
    if eps == 0.0 {
        return Ok(0.0);
    }
    Ok(eps.powi(k as i32) * m.eval(eps.min(m.delta()))?)
}

/// Build one of the builtin Hamiltonians.
pub fn build_example_hamiltonian(kind: BuiltinKind, p: &ModelParams) -> Result<HamiltonianModel> {
    let omega = p.omega.clone().unwrap_or_else(|| vec![1.0, diophantine::golden()]);
    let dim = omega.len();
    if dim == 0 || omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::Argument("omega must be a nonempty finite vector".into()));
    }
    let m_bound = p.m_bound.unwrap_or(10.0);
    if !(m_bound > 0.0 && m_bound.is_finite()) {
        return Err(Error::Argument("M must be positive".into()));
    }
    let radius = p.action_radius.unwrap_or(1.0);
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::Argument("action radius must lie in (0, 1]".into()));
    }
    let default_eps = if kind == BuiltinKind::Integrable { 0.0 } else { 0.05 };
    let epsilon = p.epsilon.unwrap_or(default_eps);
    if !(epsilon >= 0.0 && epsilon < 1.0) {
        return Err(Error::Argument(format!("epsilon = {epsilon} outside [0, 1)")));
    }
    let (k, modulus, terms, profile, amplitude) = match kind {
        BuiltinKind::Integrable => {
            let m = match &p.modulus {
                Some(m) => m.clone(),
                None => ModulusSpec::hoelder(0.5)?,
            };
            (p.k.unwrap_or(6), m, vec![], None, 0.0)
        }
        BuiltinKind::LogHoelderExample => {
            let lambda = p.lambda.unwrap_or(1.5);
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Argument(format!("lambda = {lambda} must be positive")));
            }
            if dim != 2 {
                return Err(Error::Argument("the explicit example is two-dimensional".into()));
            }
            let k = 6;
            let m = ModulusSpec::log_hoelder(lambda)?;
            let amp = match p.amplitude {
                Some(a) => a,
                None => default_amplitude(epsilon, k, &m)?,
            };
            let prof = ActionProfile::build(k as usize, |s| if s == 0.0 { 0.0 } else { (1.0 - s.ln()).powf(-lambda) }, ACTION_SAMPLES);
            (k, m, sin_terms(dim, amp)?, Some(prof), amp)
        }
        BuiltinKind::HoelderTest => {
            let ell = p.ell.unwrap_or(7.5);
            let k = ell.floor();
            let frac = ell - k;
            if !(ell > 1.0 && frac > 0.0 && ell.is_finite()) {
                return Err(Error::Argument(format!("ell = {ell} must be a non-integer above 1")));
            }
            let k = k as u32;
            let m = ModulusSpec::hoelder(frac)?;
            let amp = match p.amplitude {
                Some(a) => a,
                None => default_amplitude(epsilon, k, &m)?,
            };
            let prof = ActionProfile::build(k as usize, |s| s.powf(frac), ACTION_SAMPLES);
            (k, m, sin_terms(dim, amp)?, Some(prof), amp)
        }
        BuiltinKind::Custom => {
            let m = p.modulus.clone().ok_or_else(|| Error::Argument("custom model needs a modulus".into()))?;
            let k = p.k.ok_or_else(|| Error::Argument("custom model needs k".into()))?;
            (k, m, p.terms.clone(), None, p.amplitude.unwrap_or(0.0))
        }
    };
    HamiltonianModel::assemble(kind, omega, m_bound, epsilon, amplitude, k, modulus, radius, terms, profile)
}

fn mono(y: &[f64], p: &[u32]) -> f64 {
    y.iter().zip(p).map(|(v, e)| v.powi(*e as i32)).product()
}

/// `∂_{y_i} y^p` as (coefficient, reduced power).
fn dmono(p: &[u32], i: usize) -> Option<(f64, Vec<u32>)> {
    if p[i] == 0 {
        return None;
    }
    let mut q = p.to_vec();
    q[i] -= 1;
    Some((p[i] as f64, q))
}

impl HamiltonianModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: BuiltinKind,
        omega: Vec<f64>,
        m_bound: f64,
        epsilon: f64,
        amplitude: f64,
        k: u32,
        modulus: ModulusSpec,
        action_radius: f64,
        terms: Vec<AngleTerm>,
        profile: Option<ActionProfile>,
    ) -> Result<Self> {
        let dim = omega.len();
        for t in &terms {
            if t.f.dim() != dim || t.y_power.len() != dim {
                return Err(Error::Argument("angle term dimension differs from omega".into()));
            }
            if !t.f.is_conjugate_symmetric(1e-12 * (1.0 + t.f.coeffs().iter().map(|c| c.norm()).sum::<f64>())) {
                return Err(Error::Argument("angle terms must be real (conjugate-symmetric)".into()));
            }
        }
        let evals = terms
            .iter()
            .map(|t| TermEval {
                f: Evaluator::new(&t.f),
                grad: (0..dim)
                    .map(|a| {
                        let mut alpha = vec![0u32; dim];
                        alpha[a] = 1;
                        Evaluator::new(&t.f.derivative(&alpha))
                    })
                    .collect(),
                y_power: t.y_power.clone(),
            })
            .collect();
        Ok(Self { kind, dim, omega, m_bound, epsilon, amplitude, k, modulus, action_radius, smoothing: None, terms, profile, evals })
    }

    pub fn terms(&self) -> &[AngleTerm] {
        &self.terms
    }

    pub fn profile(&self) -> Option<&ActionProfile> {
        self.profile.as_ref()
    }

    /// Largest `|k|_∞` among the angle terms.
    pub fn angle_cutoff(&self) -> i64 {
        self.terms.iter().map(|t| t.f.cutoff()).max().unwrap_or(0)
    }

    /// Same model with every angle coefficient replaced by `S_r` of itself.
    pub fn smoothed(&self, r: f64) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| Ok(AngleTerm { f: jackson::smooth(&t.f, r)?, y_power: t.y_power.clone() }))
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::assemble(
            self.kind,
            self.omega.clone(),
            self.m_bound,
            self.epsilon,
            self.amplitude,
            self.k,
            self.modulus.clone(),
            self.action_radius,
            terms,
            self.profile.clone(),
        )?;
        m.smoothing = Some(r);
        Ok(m)
    }

    fn cut(&self) -> usize {
        self.angle_cutoff().max(1) as usize
    }

    /// `H` at `(x, y)`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.jet(x, y).h
    }

    /// `H`, `H_x`, `H_y`, `H_yy` at `(x, y)`.
    pub fn jet(&self, x: &[f64], y: &[f64]) -> Jet {
        let n = self.dim;
        let mut h = 0.0;
        let mut hx = vec![0.0; n];
        let mut hy = self.omega.clone();
        let mut hyy = vec![0.0; n * n];
        let q = 1.0 / self.m_bound;
        for i in 0..n {
            h += self.omega[i] * y[i] + q * y[i] * y[i];
            hy[i] += 2.0 * q * y[i];
            hyy[i * n + i] += 2.0 * q;
        }
        if let Some(p) = &self.profile {
            if self.amplitude != 0.0 {
                for i in 0..n {
                    h += self.amplitude * p.deriv(0, y[i]);
                    hy[i] += self.amplitude * p.deriv(1, y[i]);
                    hyy[i * n + i] += self.amplitude * p.deriv(2, y[i]);
                }
            }
        }
        if !self.evals.is_empty() {
            let table = PhaseTable::new(x, self.cut());
            for t in &self.evals {
                let f = t.f.eval_with(&table);
                let m = mono(y, &t.y_power);
                h += f * m;
                for a in 0..n {
                    hx[a] += t.grad[a].eval_with(&table) * m;
                }
                for i in 0..n {
                    if let Some((ci, pi)) = dmono(&t.y_power, i) {
                        hy[i] += f * ci * mono(y, &pi);
                        for j in 0..n {
                            if let Some((cj, pj)) = dmono(&pi, j) {
                                hyy[i * n + j] += f * ci * cj * mono(y, &pj);
                            }
                        }
                    }
                }
            }
        }
        Jet { h, hx, hy, hyy }
    }

    /// `H(x, 0)` as a trig polynomial (the action part vanishes at `y = 0`
    /// because `P(0) = 0`).
    pub fn angle_part_at_zero(&self) -> Result<TorusFunction> {
        let mut acc = TorusFunction::zero(self.dim);
        for t in &self.terms {
            if t.y_power.iter().all(|p| *p == 0) {
                acc = acc.add(&t.f)?;
            }
        }
        Ok(acc)
    }

    /// `H_y(x, 0) − ω` componentwise as trig polynomials, plus the constant
    /// `a·P'(0)` from the action profile.
    pub fn frequency_part_at_zero(&self) -> Result<Vec<TorusFunction>> {
        let mut out = Vec::with_capacity(self.dim);
        let p1 = match &self.profile {
            Some(p) if self.amplitude != 0.0 => self.amplitude * p.deriv(1, 0.0),
            _ => 0.0,
        };
        for i in 0..self.dim {
            let mut acc = TorusFunction::constant(self.dim, p1);
            for t in &self.terms {
                let mut e = vec![0u32; self.dim];
                e[i] = 1;
                if t.y_power == e {
                    acc = acc.add(&t.f)?;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Largest mismatch between the analytic derivatives and central differences
    /// (step `h`) at the given points.
    pub fn finite_difference_check(&self, points: &[(Vec<f64>, Vec<f64>)], h: f64) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for (x, y) in points {
            let j = self.jet(x, y);
            for a in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += h;
                xm[a] -= h;
                let fd = (self.value(&xp, y) - self.value(&xm, y)) / (2.0 * h);
                worst = worst.max((fd - j.hx[a]).abs());
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[a] += h;
                ym[a] -= h;
                let fd = (self.value(x, &yp) - self.value(x, &ym)) / (2.0 * h);
                worst = worst.max((fd - j.hy[a]).abs());
                let (jp, jm) = (self.jet(x, &yp), self.jet(x, &ym));
                for b in 0..n {
                    let fd = (jp.hy[b] - jm.hy[b]) / (2.0 * h);
                    worst = worst.max((fd - j.hyy[b * n + a]).abs());
                }
            }
        }
        worst
    }
}
