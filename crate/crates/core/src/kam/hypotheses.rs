//! Numerical checks of the four standing hypotheses on a model.

use serde::{Deserialize, Serialize};

use super::linalg;
use super::model::HamiltonianModel;
use crate::diophantine::{self, Frequency};
use crate::error::{Error, Result};
use crate::regularity;
use crate::torus::{point_of, Spectrum, TorusFunction};

/// Grid points per axis for the angle sweeps.
const ANGLE_GRID: usize = 32;
/// Points per axis in the action box `|y_i| ≤ ρ`.
const ACTION_GRID: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (left side).
    pub measured: f64,
    /// Threshold it is compared with (right side).
    pub bound: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    /// The certified frequency when the Diophantine check passed.
    pub frequency: Option<Frequency>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn multi_indices_upto(dim: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(dim, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, k, &mut Vec::new(), &mut out);
    out
}

fn grid_values(f: &TorusFunction, size: usize) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Ok(vec![0.0; size.pow(f.dim() as u32)]);
    }
    Ok(Spectrum::from_torus(f, size)?.to_grid()?.values)
}

fn grid_size(cut: i64) -> usize {
    (4 * (cut as usize + 1)).next_power_of_two().max(ANGLE_GRID)
}

/// Left side of the smallness condition, as a sup over a grid.
pub fn smallness_lhs(model: &HamiltonianModel, tau: f64) -> Result<f64> {
    let eps = model.epsilon;
    let n = model.dim;
    let h0 = model.angle_part_at_zero()?;
    let h0 = h0.map_coeffs(|k, c| if k.iter().all(|v| *v == 0) { num_complex::Complex64::new(0.0, 0.0) } else { c });
    let fy = model.frequency_part_at_zero()?;
    let cut = fy.iter().map(|f| f.cutoff()).chain([h0.cutoff()]).max().unwrap_or(0);
    let size = grid_size(cut);
    let total = size.pow(n as u32);
    let mut acc = vec![0.0; total];
    for alpha in multi_indices_upto(n, model.k) {
        let ord: u32 = alpha.iter().sum();
        let w = eps.powi(ord as i32);
        for (j, v) in grid_values(&h0.derivative(&alpha), size)?.iter().enumerate() {
            acc[j] += v.abs() * w;
        }
        if ord + 1 <= model.k {
            let w = eps.powf(ord as f64 + tau + 1.0);
            let comps: Vec<Vec<f64>> = fy.iter().map(|f| grid_values(&f.derivative(&alpha), size)).collect::<Result<_>>()?;
            for j in 0..total {
                let e: f64 = comps.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt();
                acc[j] += e * w;
            }
        }
    }
    Ok(acc.into_iter().fold(0.0, f64::max))
}

/// `sup|H| + sup|H_x| + sup|H_y| + sup|H_yy|` over the angle grid and the action box.
pub fn norm_proxy(model: &HamiltonianModel) -> f64 {
    let n = model.dim;
    let rho = model.action_radius;
    let ys: Vec<Vec<f64>> = (0..ACTION_GRID.pow(n as u32))
        .map(|j| point_of(j, n, ACTION_GRID).iter().map(|t| rho * (2.0 * t * ACTION_GRID as f64 / (ACTION_GRID - 1) as f64 - 1.0).min(1.0)).collect())
        .collect();
    let sizes = ANGLE_GRID.pow(n as u32);
    let sups = crate::par::map_range(sizes, |j| {
        let x = point_of(j, n, ANGLE_GRID);
        let mut s = [0.0f64; 4];
        for y in &ys {
            let jet = model.jet(&x, y);
            s[0] = s[0].max(jet.h.abs());
            s[1] = s[1].max(linalg::euclid(&jet.hx));
            s[2] = s[2].max(linalg::euclid(&jet.hy));
            s[3] = s[3].max(linalg::norm_inf(&jet.hyy, n));
        }
        s
    });
    let mut tot = [0.0f64; 4];
    for s in sups {
        for i in 0..4 {
            tot[i] = tot[i].max(s[i]);
        }
    }
    tot.iter().sum()
}

/// `|(∫ H_yy(ξ, 0) dξ)^{-1}|` (max row sum norm); infinite when singular.
pub fn averaged_hessian_inverse_norm(model: &HamiltonianModel) -> f64 {
    let n = model.dim;
    let total = ANGLE_GRID.pow(n as u32);
    let y0 = vec![0.0; n];
    let rows = crate::par::map_range(total, |j| model.jet(&point_of(j, n, ANGLE_GRID), &y0).hyy);
    let mut mean = vec![0.0; n * n];
    for r in rows {
        for i in 0..n * n {
            mean[i] += r[i] / total as f64;
        }
    }
    linalg::inverse(&mean, n).map(|m| linalg::norm_inf(&m, n)).unwrap_or(f64::INFINITY)
}

/// Evaluate every hypothesis; never fails on a failed check.
pub fn evaluate_hypotheses(model: &HamiltonianModel, tau: f64, k_max: u32) -> Result<HypothesisReport> {
    let mut checks = Vec::new();
    let dini = regularity::dini_integral(&model.modulus, model.k, tau)?;
    checks.push(HypothesisCheck {
        name: "H1".into(),
        passed: dini.converges,
        measured: dini.value.unwrap_or(f64::INFINITY),
        bound: f64::INFINITY,
        detail: if dini.converges {
            "Dini-type integral converges".into()
        } else {
            format!("Dini-type integral diverges (log-growth rate {:.3e})", dini.divergence_rate.unwrap_or(f64::NAN))
        },
    });
    let np = norm_proxy(model);
    let hi = averaged_hessian_inverse_norm(model);
    let h2 = np.max(hi);
    checks.push(HypothesisCheck {
        name: "H2".into(),
        passed: np <= model.m_bound && hi <= model.m_bound,
        measured: h2,
        bound: model.m_bound,
        detail: format!("norm proxy {np:.6e}, averaged Hessian inverse {hi:.6e}"),
    });
    let mut frequency = None;
    match diophantine::certify(&model.omega, tau, k_max) {
        Ok(f) => {
            checks.push(HypothesisCheck {
                name: "H3".into(),
                passed: true,
                measured: f.alpha_star.unwrap_or(0.0),
                bound: 0.0,
                detail: format!("certified up to |k| = {k_max}"),
            });
            frequency = Some(f);
        }
        Err(Error::Resonance { witness }) => checks.push(HypothesisCheck {
            name: "H3".into(),
            passed: false,
            measured: 0.0,
            bound: 0.0,
            detail: format!("resonant lattice vector {witness:?}"),
        }),
        Err(e) => return Err(e),
    }
    let lhs = smallness_lhs(model, tau)?;
    let eps = model.epsilon;
    let rhs = if eps == 0.0 { 0.0 } else { model.m_bound * eps.powi(model.k as i32) * model.modulus.eval(eps.min(model.modulus.delta()))? };
    checks.push(HypothesisCheck {
        name: "H4".into(),
        passed: lhs <= rhs,
        measured: lhs,
        bound: rhs,
        detail: format!("margin {:.6e}", rhs - lhs),
    });
    Ok(HypothesisReport { checks, frequency })
}

/// Evaluate and turn the first failed hypothesis into an error.
pub fn check_hypotheses(model: &HamiltonianModel, tau: f64, k_max: u32) -> Result<HypothesisReport> {
    let r = evaluate_hypotheses(model, tau, k_max)?;
    if let Some(f) = r.first_failure() {
        return Err(Error::Hypothesis {
            name: f.name.clone(),
            detail: format!("{} (measured {:.6e}, bound {:.6e})", f.detail, f.measured, f.bound),
        });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kam::model::{build_example_hamiltonian, BuiltinKind, ModelParams};

    #[test]
    fn multi_index_count() {
        // number of α ∈ N² with |α| ≤ 6 is 28
        assert_eq!(multi_indices_upto(2, 6).len(), 28);
    }

    #[test]
    fn example_passes_and_lambda_one_fails_h1() {
        let m = build_example_hamiltonian(BuiltinKind::LogHoelderExample, &ModelParams::default()).unwrap();
        let r = evaluate_hypotheses(&m, 2.0, 200).unwrap();
        assert!(r.all_passed(), "{r:?}");
        assert!((averaged_hessian_inverse_norm(&m) - 5.0).abs() < 1e-12);
        let bad = build_example_hamiltonian(BuiltinKind::LogHoelderExample, &ModelParams { lambda: Some(1.0), ..Default::default() }).unwrap();
        match check_hypotheses(&bad, 2.0, 200) {
            Err(Error::Hypothesis { name, .. }) => assert_eq!(name, "H1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integrable_smallness_is_zero() {
        let m = build_example_hamiltonian(BuiltinKind::Integrable, &ModelParams::default()).unwrap();
        assert_eq!(smallness_lhs(&m, 2.0).unwrap(), 0.0);
        assert!(check_hypotheses(&m, 2.0, 100).is_ok());
    }

    #[test]
    fn resonant_frequency_fails_h3() {
        let m = build_example_hamiltonian(BuiltinKind::LogHoelderExample, &ModelParams { omega: Some(vec![1.0, 0.5]), ..Default::default() }).unwrap();
        let r = evaluate_hypotheses(&m, 2.0, 50).unwrap();
        assert!(!r.get("H3").unwrap().passed);
    }
}
