//! Diophantine certificates over truncated integer lattices.
//!
//! The lattice norm is ℓ¹. Enumeration walks shells `|k|₁ = s` on the half
//! lattice (first nonzero coordinate positive), since `|⟨-k,ω⟩| = |⟨k,ω⟩|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation for two-frequency certificates.
pub const DEFAULT_K_MAX: u32 = 200;

/// Relative threshold below which `⟨k,ω⟩` counts as an exact resonance.
const RESONANCE_TOL: f64 = 1e-14;

/// Golden mean `(1 + √5)/2`.
pub fn golden() -> f64 {
    0.5 * (1.0 + 5f64.sqrt())
}

/// A frequency vector, optionally carrying a truncation-relative certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub omega: Vec<f64>,
    pub tau: f64,
    #[serde(default)]
    pub alpha_star: Option<f64>,
    pub k_max: u32,
}

impl Frequency {
    /// `(1, golden)` with τ = 1.
    pub fn golden_pair() -> Self {
        Self { omega: vec![1.0, golden()], tau: 1.0, alpha_star: None, k_max: DEFAULT_K_MAX }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// Smallest certified divisor bound `α_* |k|^{-τ}` at `|k|₁ = s`.
    pub fn divisor_floor(&self, s: u32) -> Option<f64> {
        self.alpha_star.map(|a| a * (s.max(1) as f64).powf(-self.tau))
    }
}

/// Outcome of a lattice scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    /// `min |⟨k,ω⟩|·|k|^τ` (zero on resonance).
    pub minimum: f64,
    /// Lattice point attaining the minimum.
    pub witness: Vec<i64>,
}

fn check_args(omega: &[f64], tau: f64, k_max: u32) -> Result<()> {
    if omega.is_empty() || omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::Argument("omega must be a nonempty finite vector".into()));
    }
    if omega.iter().all(|w| *w == 0.0) {
        return Err(Error::Argument("omega must be nonzero".into()));
    }
    if k_max < 1 {
        return Err(Error::Argument("k_max must be at least 1".into()));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Argument("tau must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Visit every `k` with `|k|₁ = s` whose first nonzero entry is positive.
fn for_each_in_shell<F: FnMut(&[i64])>(n: usize, s: u32, f: &mut F) {
    let mut k = vec![0i64; n];
    fn rec<F: FnMut(&[i64])>(k: &mut [i64], pos: usize, left: i64, leading: bool, f: &mut F) {
        let n = k.len();
        if pos == n - 1 {
            if left == 0 {
                if !leading {
                    k[pos] = 0;
                    f(k);
                }
                return;
            }
            k[pos] = left;
            f(k);
            if !leading {
                k[pos] = -left;
                f(k);
            }
            return;
        }
        for v in 0..=left {
            if v == 0 {
                k[pos] = 0;
                rec(k, pos + 1, left, leading, f);
            } else {
                k[pos] = v;
                rec(k, pos + 1, left - v, false, f);
                if !leading {
                    k[pos] = -v;
                    rec(k, pos + 1, left - v, false, f);
                }
            }
        }
    }
    rec(&mut k, 0, s as i64, true, f);
}

fn scan_shell(omega: &[f64], tau: f64, s: u32, scale: f64) -> Scan {
    let mut best = Scan { minimum: f64::INFINITY, witness: vec![] };
    let weight = (s as f64).powf(tau);
    for_each_in_shell(omega.len(), s, &mut |k| {
        let d = crate::torus::dot(k, omega).abs();
        let v = if d <= RESONANCE_TOL * s as f64 * scale { 0.0 } else { d * weight };
        if v < best.minimum {
            best = Scan { minimum: v, witness: k.to_vec() };
        }
    });
    best
}

/// Exhaustive `min |⟨k,ω⟩|·|k|₁^τ` over `0 < |k|₁ ≤ k_max`, with its witness.
///
/// Shells are scanned in parallel; ties resolve to the smallest shell.
pub fn scan(omega: &[f64], tau: f64, k_max: u32) -> Result<Scan> {
    check_args(omega, tau, k_max)?;
    let scale = omega.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let shells = crate::par::map_range(k_max as usize, |i| scan_shell(omega, tau, i as u32 + 1, scale));
    let mut best = Scan { minimum: f64::INFINITY, witness: vec![] };
    for s in shells {
        if s.minimum < best.minimum {
            best = s;
        }
    }
    Ok(best)
}

/// Exhaustive Diophantine constant; zero when an exact resonance is found.
pub fn dio_constant(omega: &[f64], tau: f64, k_max: u32) -> Result<f64> {
    scan(omega, tau, k_max).map(|s| s.minimum)
}

/// Certify `ω` up to `k_max`, or report the resonant witness.
pub fn certify(omega: &[f64], tau: f64, k_max: u32) -> Result<Frequency> {
    let s = scan(omega, tau, k_max)?;
    if s.minimum <= 0.0 {
        return Err(Error::Resonance { witness: s.witness });
    }
    Ok(Frequency { omega: omega.to_vec(), tau, alpha_star: Some(s.minimum), k_max })
}
