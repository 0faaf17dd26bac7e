//! Small-divisor division and the frequency-preserving Newton step.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg;
use super::map::MapSpectra;
use super::model::HamiltonianModel;
use crate::diophantine::Frequency;
use crate::error::{Error, Result};
use crate::torus::{dot, Grid, Spectrum, TorusFunction};

/// Relative tolerance on the mean of a homological right-hand side.
pub const MEAN_TOL: f64 = 1e-12;

fn divisor_check(k: &[i64], omega: &[f64], freq: &Frequency) -> Result<f64> {
    let d = 2.0 * PI * dot(k, omega);
    let l1: i64 = k.iter().map(|v| v.abs()).sum();
    if l1 as u32 > freq.k_max {
        return Err(Error::Consistency(format!(
            "mode {k:?} beyond certificate truncation k_max = {}",
            freq.k_max
        )));
    }
    if let Some(floor) = freq.divisor_floor(l1 as u32) {
        if dot(k, omega).abs() < floor * (1.0 - 1e-12) {
            return Err(Error::Consistency(format!("divisor at {k:?} below certified floor {floor:e}")));
        }
    }
    Ok(d)
}

/// Solve `Dφ = g` with `D = Σ ω_j ∂_j` for zero-mean `g`; the solution has zero mean.
pub fn solve_homological(g: &TorusFunction, freq: &Frequency) -> Result<TorusFunction> {
    if g.dim() != freq.omega.len() {
        return Err(Error::Argument("dimension of g and omega differ".into()));
    }
    let scale = g.coeffs().iter().map(|c| c.norm()).sum::<f64>().max(1.0);
    if g.mean().norm() > MEAN_TOL * scale {
        return Err(Error::Solvability { mean: g.mean().norm(), tol: MEAN_TOL * scale });
    }
    let mut modes = Vec::with_capacity(g.len());
    let mut coeffs = Vec::with_capacity(g.len());
    for (k, c) in g.modes().iter().zip(g.coeffs()) {
        if k.iter().all(|v| *v == 0) {
            continue;
        }
        let d = divisor_check(k, &freq.omega, freq)?;
        modes.push(k.clone());
        coeffs.push(c / Complex64::new(0.0, d));
    }
    TorusFunction::new(g.dim(), modes, coeffs)
}

/// `sup |Dφ − g|` on a grid of `size` points per axis.
pub fn homological_residual(phi: &TorusFunction, g: &TorusFunction, omega: &[f64], size: usize) -> Result<f64> {
    let r = phi.directional(omega).add(&g.scale(-1.0))?;
    if r.is_empty() {
        return Ok(0.0);
    }
    Ok(Spectrum::from_torus(&r, size)?.to_grid()?.sup())
}

/// Dense variant; modes outside `band` (Euclidean `|k|`) are dropped from the solution.
fn solve_spectrum(g: &Spectrum, freq: &Frequency, band: f64) -> Result<Spectrum> {
    let scale = g.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
    if g.mean().norm() > MEAN_TOL * scale {
        return Err(Error::Solvability { mean: g.mean().norm(), tol: MEAN_TOL * scale });
    }
    let mut out = Spectrum::zeros(g.dim, g.size);
    for (i, c) in g.coeffs.iter().enumerate() {
        if i == 0 || g.is_nyquist(i) || *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let k = g.mode(i);
        let norm = k.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if norm > band {
            continue;
        }
        let d = divisor_check(&k, &freq.omega, freq)?;
        out.coeffs[i] = c / Complex64::new(0.0, d);
    }
    Ok(out)
}

/// Step tolerances and gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepOptions {
    /// Target for `sup|K_η(ξ,0) − ω|`.
    pub freq_tol: f64,
    /// Target for `sup|K_ξ(ξ,0)|`.
    pub angle_tol: f64,
    pub max_inner: usize,
    /// Inputs with errors above this are rejected as outside the step's validity.
    pub smallness_gate: f64,
    pub newton_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { freq_tol: 1e-12, angle_tol: 1e-12, max_inner: 30, smallness_gate: 0.1, newton_tol: 1e-12 }
    }
}

/// Errors of the transformed Hamiltonian `K = H∘φ` at `η = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KErrors {
    pub freq_error: f64,
    pub angle_error: f64,
}

/// Generating data of one Newton substep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTransform {
    /// `U` (scalar)
    pub u_gen: Spectrum,
    /// `V` (vector)
    pub v_gen: Vec<Spectrum>,
    /// constant action shift
    pub c: Vec<f64>,
    /// averaged `K_ηη`
    pub q_mean: Vec<f64>,
    pub r_nu: f64,
}

/// Result of one outer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// `ψ^ν` such that `φ^ν = φ^{ν−1} ∘ ψ^ν`.
    pub psi: MapSpectra,
    pub phi: MapSpectra,
    pub transforms: Vec<StepTransform>,
    pub before: KErrors,
    pub after: KErrors,
    pub strip: f64,
}

struct KData {
    /// `K(ξ,0)`
    k0: Vec<f64>,
    /// `K_η(ξ,0) − ω`
    f: Vec<Vec<f64>>,
    /// `K_ηη(ξ,0)`
    q: Vec<Vec<f64>>,
    errors: KErrors,
}

fn k_data(h: &HamiltonianModel, phi: &MapSpectra) -> Result<KData> {
    let n = h.dim;
    let s = phi.samples()?;
    let m = s.x.len();
    let rows: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = crate::par::map_range(m, |j| {
        let jet = h.jet(&s.x[j], &s.y[j]);
        let ux = &s.ux[j];
        let uinv = linalg::inverse(ux, n).unwrap_or_else(|| vec![f64::NAN; n * n]);
        let keta = linalg::matvec(&uinv, &jet.hy, n);
        let f: Vec<f64> = (0..n).map(|a| keta[a] - h.omega[a]).collect();
        let q = linalg::matmul(&linalg::matmul(&uinv, &jet.hyy, n), &linalg::transpose(&uinv, n), n);
        let kxi: Vec<f64> = (0..n)
            .map(|a| (0..n).map(|b| ux[b * n + a] * jet.hx[b] + s.vx[j][b * n + a] * jet.hy[b]).sum())
            .collect();
        (jet.h, f, q, kxi)
    });
    let mut k0 = Vec::with_capacity(m);
    let mut f = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut fe = 0.0f64;
    let mut ae = 0.0f64;
    for (a, b, c, d) in rows {
        if !(a.is_finite() && b.iter().chain(&c).chain(&d).all(|v| v.is_finite())) {
            return Err(Error::Numeric("transformed Hamiltonian is not finite on the grid".into()));
        }
        fe = fe.max(linalg::max_abs(&b));
        ae = ae.max(linalg::max_abs(&d));
        k0.push(a);
        f.push(b);
        q.push(c);
    }
    Ok(KData { k0, f, q, errors: KErrors { freq_error: fe, angle_error: ae } })
}

/// Frequency and angle errors of `H∘φ`.
pub fn k_errors(h: &HamiltonianModel, phi: &MapSpectra) -> Result<KErrors> {
    Ok(k_data(h, phi)?.errors)
}

fn grid_of(dim: usize, size: usize, vals: Vec<f64>) -> Result<Spectrum> {
    Ok(Grid::new(dim, size, vals)?.to_spectrum())
}

/// One linearized correction: returns the substep map `ψ_s` (in `(a, b)` form) and its generating data.
fn newton_substep(h: &HamiltonianModel, freq: &Frequency, phi: &MapSpectra, kd: &KData, band: f64, opts: &StepOptions, r_nu: f64) -> Result<(MapSpectra, StepTransform)> {
    let n = h.dim;
    let size = phi.size;
    let m = kd.k0.len();
    // DU = −(K − mean K)
    let mut hs = grid_of(n, size, kd.k0.iter().map(|v| -v).collect())?;
    hs.coeffs[0] = Complex64::new(0.0, 0.0);
    let u_gen = solve_spectrum(&hs, freq, band)?;
    let ux: Vec<Vec<f64>> = (0..n).map(|a| u_gen.partial(a).to_grid().map(|g| g.values)).collect::<Result<_>>()?;
    // c = −mean(Q)^{-1} mean(f + Q U_x)
    let mut qm = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for j in 0..m {
        let uxj: Vec<f64> = (0..n).map(|a| ux[a][j]).collect();
        let qu = linalg::matvec(&kd.q[j], &uxj, n);
        for a in 0..n {
            rhs[a] += (kd.f[j][a] + qu[a]) / m as f64;
        }
        for i in 0..n * n {
            qm[i] += kd.q[j][i] / m as f64;
        }
    }
    let c: Vec<f64> = linalg::solve(&qm, &rhs, n)
        .ok_or_else(|| Error::Nondegeneracy("averaged Hessian K_ηη is singular".into()))?
        .iter()
        .map(|v| -v)
        .collect();
    // DV = −f − Q(c + U_x)
    let mut v_gen = Vec::with_capacity(n);
    let mut dv_rhs = vec![vec![0.0; m]; n];
    for j in 0..m {
        let cu: Vec<f64> = (0..n).map(|a| c[a] + ux[a][j]).collect();
        let qc = linalg::matvec(&kd.q[j], &cu, n);
        for a in 0..n {
            dv_rhs[a][j] = -kd.f[j][a] - qc[a];
        }
    }
    for a in 0..n {
        let mut s = grid_of(n, size, std::mem::take(&mut dv_rhs[a]))?;
        let scale = s.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        if s.mean().norm() > 1e-9 * scale {
            return Err(Error::Solvability { mean: s.mean().norm(), tol: 1e-9 * scale });
        }
        s.coeffs[0] = Complex64::new(0.0, 0.0);
        v_gen.push(solve_spectrum(&s, freq, band)?);
    }
    // a = (id + V)^{-1}, b = c + U_x∘a
    let vmap = MapSpectra { dim: n, size, u: v_gen.clone(), v: vec![Spectrum::zeros(n, size); n] };
    let ev = vmap.evaluator();
    let ux_ev: Vec<crate::torus::Evaluator> = (0..n)
        .map(|a| {
            let s = u_gen.partial(a);
            let max = s.coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.norm()));
            crate::torus::Evaluator::new(&s.to_torus(1e-17 * max))
        })
        .collect();
    let pts = phi.points();
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = crate::par::map_range(m, |j| {
        let target = &pts[j];
        let mut x = target.clone();
        {
            let dv = ev.u_with(&ev.table(&x));
            for a in 0..n {
                x[a] -= dv[a];
            }
        }
        let mut ok = false;
        for _ in 0..50 {
            let t = ev.table(&x);
            let dv = ev.u_with(&t);
            let res: Vec<f64> = (0..n).map(|a| x[a] + dv[a] - target[a]).collect();
            if linalg::max_abs(&res) <= opts.newton_tol {
                ok = true;
                break;
            }
            let jac = ev.ux_with(&t);
            let st = linalg::solve(&jac, &res, n).ok_or_else(|| Error::Numeric("singular Jacobian inverting id + V".into()))?;
            for a in 0..n {
                x[a] -= st[a];
            }
        }
        if !ok {
            return Err(Error::Numeric(format!("Newton inversion of id + V failed near {target:?}")));
        }
        let t = crate::torus::PhaseTable::new(&x, ux_ev.iter().map(|e| e.cutoff()).max().unwrap_or(1).max(1));
        let b: Vec<f64> = (0..n).map(|a| c[a] + ux_ev[a].eval_with(&t)).collect();
        Ok(((0..n).map(|a| x[a] - target[a]).collect(), b))
    });
    let mut am = Vec::with_capacity(m);
    let mut bm = Vec::with_capacity(m);
    for r in rows {
        let (a, b) = r?;
        am.push(a);
        bm.push(b);
    }
    let psi = MapSpectra::from_samples(n, size, &am, &bm)?;
    Ok((psi, StepTransform { u_gen, v_gen, c, q_mean: qm, r_nu }))
}

/// Drive `H∘φ` to `K_ξ(ξ,0) = 0`, `K_η(ξ,0) = ω` by Newton substeps, each a
/// symplectic map from the generating function `⟨x,η⟩ + ⟨c,x⟩ + U(x) + ⟨V(x),η⟩`.
///
/// `r_star` is the analyticity radius of `h`; the returned strip is `θ·r_star`.
pub fn kam_step(h: &HamiltonianModel, freq: &Frequency, phi: &MapSpectra, theta: f64, r_star: f64, opts: &StepOptions) -> Result<StepOutcome> {
    if freq.omega != h.omega {
        return Err(Error::Argument("frequency and model omega differ".into()));
    }
    let half = (phi.size / 2) as f64 - 1.0;
    let band = if r_star > 0.0 { (1.0 / (2.0 * PI * r_star)).min(half * 2f64.sqrt()) } else { half * 2f64.sqrt() };
    let mut cur = phi.clone();
    let mut psi = MapSpectra::identity(h.dim, phi.size);
    let mut kd = k_data(h, &cur)?;
    let before = kd.errors;
    if before.freq_error > opts.smallness_gate || before.angle_error > opts.smallness_gate {
        return Err(Error::Hypothesis {
            name: "step smallness".into(),
            detail: format!(
                "input errors (frequency {:.3e}, angle {:.3e}) exceed gate {:.3e}",
                before.freq_error, before.angle_error, opts.smallness_gate
            ),
        });
    }
    let mut transforms = Vec::new();
    let mut last = before;
    for _ in 0..opts.max_inner {
        if kd.errors.freq_error <= opts.freq_tol && kd.errors.angle_error <= opts.angle_tol {
            break;
        }
        let (sub, tr) = newton_substep(h, freq, &cur, &kd, band, opts, r_star)?;
        let next = cur.compose(&sub)?;
        let nkd = k_data(h, &next)?;
        let before_err = last.freq_error.max(last.angle_error);
        let after_err = nkd.errors.freq_error.max(nkd.errors.angle_error);
        if after_err > before_err {
            // round-off or truncation floor reached; keep the better state
            break;
        }
        psi = psi.compose(&sub)?;
        cur = next;
        kd = nkd;
        transforms.push(tr);
        last = kd.errors;
        if after_err > 0.5 * before_err {
            break;
        }
    }
    Ok(StepOutcome { psi, phi: cur, transforms, before, after: kd.errors, strip: theta * r_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diophantine::certify;
    use crate::kam::model::{build_example_hamiltonian, BuiltinKind, ModelParams};

    fn golden() -> Frequency {
        certify(&[1.0, crate::diophantine::golden()], 2.0, 200).unwrap()
    }

    #[test]
    fn closed_form_sine() {
        let f = golden();
        let g = TorusFunction::from_real_terms(2, &[(vec![1, 0], 0.0, 1.0)]).unwrap();
        let phi = solve_homological(&g, &f).unwrap();
        for x in [[0.1, 0.2], [0.63, 0.9]] {
            let exact = -(2.0 * PI * x[0]).cos() / (2.0 * PI * f.omega[0]);
            assert!((phi.eval(&x) - exact).abs() < 1e-15);
        }
        assert!(homological_residual(&phi, &g, &f.omega, 16).unwrap() < 1e-12);
        assert!(solve_homological(&TorusFunction::zero(2), &f).unwrap().is_empty());
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let g = TorusFunction::from_real_terms(2, &[(vec![0, 0], 0.5, 0.0), (vec![1, 1], 1.0, 0.0)]).unwrap();
        assert!(matches!(solve_homological(&g, &golden()), Err(Error::Solvability { .. })));
    }

    #[test]
    fn truncation_beyond_certificate_is_inconsistent() {
        let f = certify(&[1.0, crate::diophantine::golden()], 2.0, 4).unwrap();
        let g = TorusFunction::from_real_terms(2, &[(vec![3, 3], 1.0, 0.0)]).unwrap();
        assert!(matches!(solve_homological(&g, &f), Err(Error::Consistency(_))));
    }

    #[test]
    fn integrable_step_is_identity() {
        let m = build_example_hamiltonian(BuiltinKind::Integrable, &ModelParams::default()).unwrap();
        let phi = MapSpectra::identity(2, 16);
        let out = kam_step(&m, &golden(), &phi, 0.5f64.sqrt(), 0.0, &StepOptions::default()).unwrap();
        assert!(out.transforms.is_empty());
        assert_eq!(out.phi, phi);
        assert_eq!(out.after.freq_error, 0.0);
    }

    #[test]
    fn example_step_reaches_frequency_tolerance() {
        let m = build_example_hamiltonian(BuiltinKind::LogHoelderExample, &ModelParams { amplitude: Some(1e-3), ..Default::default() }).unwrap();
        let phi = MapSpectra::identity(2, 32);
        let out = kam_step(&m, &golden(), &phi, 0.5f64.sqrt(), 0.05, &StepOptions::default()).unwrap();
        assert!(out.after.freq_error <= 1e-10, "{:?}", out.after);
        assert!(out.after.angle_error * 10.0 <= out.before.angle_error);
        assert!(out.phi.min_jacobian_det().unwrap() > 0.0);
    }
}
