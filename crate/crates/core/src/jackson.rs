//! Analytic smoothing by a band-limited kernel.
//!
//! `K̂` equals 1 on `|ξ| ≤ 1/2` and falls smoothly to 0 at `|ξ| = 1`. On the
//! torus the convolution with `r^{-n} K(·/r)` is the Fourier multiplier
//! `K̂(2πr k)`, which is what [`smooth`] applies.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::modulus::ModulusSpec;
use crate::torus::{Spectrum, TorusFunction};

/// Largest moment order the sampling sums resolve reliably.
pub const MOMENT_ORDER_MAX: u32 = 6;
/// Truncation of the real-line lattice used for moments and convolution.
const X_MAX: f64 = 1600.0;

/// Smooth transition from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial profile `K̂(|ξ|)`.
pub fn khat(rho: f64) -> f64 {
    1.0 - step(2.0 * rho.abs() - 1.0)
}

/// `K̂` at a vector argument (Euclidean norm).
pub fn khat_vec(xi: &[f64]) -> f64 {
    khat(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// The smoothing kernel with its quadrature data.
#[derive(Debug, Clone)]
pub struct Kernel {
    dim: usize,
    resolution: usize,
    /// Frequency nodes in the support and their weights `K̂(ξ) Δξⁿ / (2π)ⁿ`.
    nodes: Vec<(Vec<f64>, f64)>,
    /// One dimension only: `T_p(j) = Σ_ξ>0 w ξ^p cs(jξ)` for `p ≤ 6`, with
    /// `cs = cos` for even `p` and `sin` for odd `p`.
    table: Vec<Vec<f64>>,
    /// Samples `K(j e₁)` on the nonnegative integer grid.
    cached_samples: Vec<f64>,
}

/// Construct the kernel for `n ∈ {1,2,3}` with `resolution` frequency samples per unit.
pub fn build_kernel(n: usize, resolution: usize) -> Result<Kernel> {
    if !(1..=3).contains(&n) {
        return Err(Error::Argument(format!("kernel dimension must be 1, 2 or 3, got {n}")));
    }
    if resolution < 64 {
        return Err(Error::Argument(format!("kernel resolution must be at least 64, got {resolution}")));
    }
    let d = 1.0 / resolution as f64;
    let m = resolution as i64;
    let norm = (d / (2.0 * PI)).powi(n as i32);
    let mut nodes = Vec::new();
    let side = (2 * m + 1) as usize;
    for flat in 0..side.pow(n as u32) {
        let mut r = flat;
        let mut xi = vec![0.0; n];
        for a in (0..n).rev() {
            xi[a] = ((r % side) as i64 - m) as f64 * d;
            r /= side;
        }
        let w = khat_vec(&xi);
        if w > 0.0 {
            nodes.push((xi, w * norm));
        }
    }
    let mut k = Kernel { dim: n, resolution, nodes, table: vec![], cached_samples: vec![] };
    if n == 1 {
        k.table = one_dim_table(resolution);
        k.cached_samples = k.table[0].clone();
    } else {
        k.cached_samples = (0..=4)
            .map(|j| {
                let mut z = vec![Complex64::new(0.0, 0.0); n];
                z[0] = Complex64::new(j as f64, 0.0);
                k.eval_complex(&z).re
            })
            .collect();
    }
    Ok(k)
}

fn lattice_extent(resolution: usize) -> usize {
    // Keep well inside the alias period 2π·resolution of the ξ trapezoid.
    (0.25 * 2.0 * PI * resolution as f64).min(X_MAX).floor() as usize
}

fn one_dim_table(resolution: usize) -> Vec<Vec<f64>> {
    let d = 1.0 / resolution as f64;
    let xs = lattice_extent(resolution);
    // Half-line nodes: weight d/π, halved at ξ = 0.
    let half: Vec<(f64, f64)> = (0..resolution)
        .map(|l| {
            let xi = l as f64 * d;
            let w = khat(xi) * d / PI * if l == 0 { 0.5 } else { 1.0 };
            (xi, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let rows = crate::par::map_range(xs + 1, |j| {
        let x = j as f64;
        let mut acc = [0.0f64; (MOMENT_ORDER_MAX + 1) as usize];
        for (xi, w) in &half {
            let (s, c) = (x * xi).sin_cos();
            let mut pw = *w;
            for (p, slot) in acc.iter_mut().enumerate() {
                *slot += pw * if p % 2 == 0 { c } else { s };
                pw *= xi;
            }
        }
        acc
    });
    (0..=MOMENT_ORDER_MAX as usize).map(|p| rows.iter().map(|r| r[p]).collect()).collect()
}

impl Kernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cached_samples(&self) -> &[f64] {
        &self.cached_samples
    }

    /// `K̂` at `ξ`.
    pub fn fourier_profile(&self, xi: &[f64]) -> f64 {
        khat_vec(xi)
    }

    /// `∂^β K(z)` at a complex point by the inverse Fourier sum.
    pub fn derivative_complex(&self, z: &[Complex64], beta: &[u32]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (xi, w) in &self.nodes {
            let mut ph = Complex64::new(0.0, 0.0);
            let mut mono = Complex64::new(*w, 0.0);
            for a in 0..self.dim {
                ph += z[a] * xi[a];
                let b = beta.get(a).copied().unwrap_or(0);
                if b > 0 {
                    mono *= Complex64::new(0.0, xi[a]).powu(b);
                }
            }
            acc += mono * (Complex64::i() * ph).exp();
        }
        acc
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        self.derivative_complex(z, &[])
    }

    /// `K(x)` for real `x` in one dimension.
    pub fn eval_1d(&self, x: f64) -> f64 {
        self.derivative_1d(x, 0)
    }

    /// `K^{(β)}(x)` for real `x` in one dimension.
    pub fn derivative_1d(&self, x: f64, beta: u32) -> f64 {
        let mut acc = 0.0;
        for (xi, w) in &self.nodes {
            let xi = xi[0];
            if xi < 0.0 {
                continue;
            }
            let w = if xi == 0.0 { 0.5 * w } else { *w };
            let (s, c) = (x * xi).sin_cos();
            acc += 2.0 * w * xi.powi(beta as i32) * if beta % 2 == 0 { c } else { s };
        }
        acc * parity_sign(beta)
    }
}

fn parity_sign(beta: u32) -> f64 {
    // Real part of i^β e^{ixξ} paired with its mirror: (−1)^{β/2} cos or (−1)^{(β+1)/2} sin.
    let e = if beta % 2 == 0 { beta / 2 } else { beta.div_ceil(2) };
    if e % 2 == 0 { 1.0 } else { -1.0 }
}

/// `∫ x^α ∂^β K(x) dx` in one dimension, by the band-limited sampling sum `Σ_j j^α K^{(β)}(j)`.
///
/// The sum is exact for band-limited integrands sampled at unit spacing; what
/// remains is the truncation of the lattice and the round-off floor of `K`
/// (about 1e-19), which `j^α` amplifies at high orders.
pub fn kernel_moments(kernel: &Kernel, alpha: &[u32], beta: &[u32], k: u32) -> Result<f64> {
    if k > MOMENT_ORDER_MAX {
        return Err(Error::Argument(format!("moment order bound {k} exceeds {MOMENT_ORDER_MAX}")));
    }
    if kernel.dim != 1 {
        return Err(Error::Argument("moments are computed for the one-dimensional kernel".into()));
    }
    let (a, b) = match (alpha, beta) {
        ([a], [b]) => (*a, *b),
        _ => return Err(Error::Argument("alpha and beta must have one component".into())),
    };
    if a > k || b > k {
        return Err(Error::Argument(format!("|alpha| = {a}, |beta| = {b} exceed order bound {k}")));
    }
    let t = &kernel.table[b as usize];
    let sign = parity_sign(b);
    // K^{(β)} has parity (−1)^β; x^α has parity (−1)^α.
    if (a + b) % 2 == 1 {
        return Ok(0.0);
    }
    let mut acc = if a == 0 { sign * t[0] } else { 0.0 };
    // Sum the tail from small to large for accuracy.
    let mut tail = 0.0;
    for j in (1..t.len()).rev() {
        tail += (j as f64).powi(a as i32) * t[j];
    }
    acc += 2.0 * sign * tail;
    Ok(acc)
}

/// `(−1)^{|α|} α!` when `α = β`, else 0.
pub fn moment_exact(alpha: u32, beta: u32) -> f64 {
    if alpha != beta {
        return 0.0;
    }
    let f: f64 = (1..=alpha).map(|v| v as f64).product();
    if alpha % 2 == 0 { f } else { -f }
}

/// Growth check of `|K(z)| (1+|Re z|)^p e^{−|Im z|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaleyWienerReport {
    pub p: f64,
    pub max_ratio: f64,
    /// True when the ratio over the outer third (by `|Re z|`) stays below the inner maximum.
    pub stable: bool,
    pub ratios: Vec<f64>,
}

pub fn paley_wiener_check(kernel: &Kernel, p: f64, points: &[Vec<Complex64>]) -> Result<PaleyWienerReport> {
    if !(p >= 1.0) {
        return Err(Error::Argument("decay order p must be at least 1".into()));
    }
    let ratios = crate::par::map_slice(points, |z| {
        let re: f64 = z.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
        let im: f64 = z.iter().map(|c| c.im.abs()).sum();
        kernel.eval_complex(z).norm() * (1.0 + re).powf(p) * (-im).exp()
    });
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let re_of = |i: usize| points[i].iter().map(|c| c.re * c.re).sum::<f64>();
    order.sort_by(|a, b| re_of(*a).total_cmp(&re_of(*b)));
    let cut = order.len() - order.len() / 3;
    let inner = order[..cut].iter().map(|i| ratios[*i]).fold(0.0, f64::max);
    let outer = order[cut..].iter().map(|i| ratios[*i]).fold(0.0, f64::max);
    let stable = max_ratio.is_finite() && outer <= inner * (1.0 + 1e-9);
    Ok(PaleyWienerReport { p, max_ratio, stable, ratios })
}

/// `S_r f`: multiply the coefficient at `k` by `K̂(2πr|k|)`.
pub fn smooth(f: &TorusFunction, r: f64) -> Result<TorusFunction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Argument(format!("smoothing scale must be positive, got {r}")));
    }
    Ok(f.map_coeffs(|k, c| {
        let norm = k.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        c * khat(2.0 * PI * r * norm)
    }))
}

/// `S_r f (x)` by direct quadrature of `∫ K(z) f(x − r z) dz` (one dimension).
///
/// The integrand is band-limited to `1 + 2πr·cutoff`, so a uniform rule with
/// spacing below `2π/(1 + 2πr·cutoff)` is exact up to truncation.
pub fn smooth_by_quadrature(kernel: &Kernel, f: &TorusFunction, r: f64, xs: &[f64]) -> Result<Vec<f64>> {
    if kernel.dim != 1 || f.dim() != 1 {
        return Err(Error::Argument("direct quadrature is one-dimensional".into()));
    }
    let band = 1.0 + 2.0 * PI * r * f.cutoff() as f64;
    let h = 0.9 * 2.0 * PI / (1.0 + band);
    let x_max = lattice_extent(kernel.resolution) as f64;
    let nz = (x_max / h).floor() as i64;
    let kz: Vec<(f64, f64)> = crate::par::map_range((2 * nz + 1) as usize, |i| {
        let z = (i as i64 - nz) as f64 * h;
        (z, h * kernel.eval_1d(z))
    });
    Ok(crate::par::map_slice(xs, |x| kz.iter().map(|(z, w)| w * f.eval(&[x - r * z])).sum()))
}

/// One row of a smoothing error table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub r: f64,
    /// Derivative order `|α|`.
    pub order: u32,
    pub error: f64,
    /// `r^{k−|α|} ϖ(r)`.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: u32,
    /// Slope of `ln error` against `ln bound`.
    pub slope: f64,
    pub offset: f64,
    /// Slope of `ln error` against `ln r`.
    pub slope_vs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothErrorReport {
    pub k: u32,
    pub rows: Vec<ErrorRow>,
    pub fits: Vec<OrderFit>,
    /// Set when some error fails to decrease as `r` shrinks.
    pub non_monotone: bool,
}

impl SmoothErrorReport {
    /// CSV `r,error,bound,ratio` for one derivative order.
    pub fn to_csv(&self, order: u32) -> String {
        let mut s = String::from("r,error,bound,ratio\n");
        for row in self.rows.iter().filter(|r| r.order == order) {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", row.r, row.error, row.bound, row.ratio));
        }
        s
    }

    pub fn fit(&self, order: u32) -> Option<&OrderFit> {
        self.fits.iter().find(|f| f.order == order)
    }
}

fn multi_indices(dim: usize, order: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![order]];
    }
    let mut out = Vec::new();
    for first in 0..=order {
        for mut rest in multi_indices(dim - 1, order - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn grid_size_for(f: &TorusFunction) -> usize {
    (4 * (f.cutoff() as usize + 1)).next_power_of_two().max(8)
}

/// `sup_x |g(x)|` on a real grid fine enough to resolve the modes of `g`.
pub fn sup_norm(g: &TorusFunction) -> Result<f64> {
    if g.is_empty() {
        return Ok(0.0);
    }
    Ok(Spectrum::from_torus(g, grid_size_for(g))?.to_grid()?.sup())
}

/// Error table for `S_r f − f` and its derivatives of order `k`, with exponent fits.
pub fn smooth_error_report(f: &TorusFunction, m: &ModulusSpec, k: u32, r_list: &[f64]) -> Result<SmoothErrorReport> {
    if r_list.is_empty() {
        return Err(Error::Argument("r_list is empty".into()));
    }
    let orders: Vec<u32> = if k == 0 { vec![0] } else { vec![0, k] };
    let mut rows = Vec::new();
    for &order in &orders {
        for &r in r_list {
            let diff = smooth(f, r)?.add(&f.scale(-1.0))?;
            let mut err = 0.0f64;
            for alpha in multi_indices(f.dim(), order) {
                err = err.max(sup_norm(&diff.derivative(&alpha))?);
            }
            let bound = r.powi((k - order) as i32) * m.eval(r.min(m.delta()))?;
            rows.push(ErrorRow { r, order, error: err, bound, ratio: err / bound });
        }
    }
    let mut fits = Vec::new();
    let mut non_monotone = false;
    for &order in &orders {
        let mut sel: Vec<&ErrorRow> = rows.iter().filter(|r| r.order == order).collect();
        sel.sort_by(|a, b| b.r.total_cmp(&a.r));
        if sel.windows(2).any(|w| w[1].error > w[0].error) {
            non_monotone = true;
        }
        let pos: Vec<&&ErrorRow> = sel.iter().filter(|r| r.error > 0.0).collect();
        let lb: Vec<f64> = pos.iter().map(|r| r.bound.ln()).collect();
        let lr: Vec<f64> = pos.iter().map(|r| r.r.ln()).collect();
        let le: Vec<f64> = pos.iter().map(|r| r.error.ln()).collect();
        if let (Some(a), Some(b)) = (fit::line(&lb, &le), fit::line(&lr, &le)) {
            fits.push(OrderFit { order, slope: a.slope, offset: a.intercept, slope_vs_r: b.slope });
        }
    }
    Ok(SmoothErrorReport { k, rows, fits, non_monotone })
}

/// One-dimensional cosine series with `c_j = |j|^{−(k+1+α̂)}` for `1 ≤ |j| ≤ cutoff`.
pub fn power_decay_series(k: u32, alpha_hat: f64, cutoff: usize) -> TorusFunction {
    let s = k as f64 + 1.0 + alpha_hat;
    let mut modes = Vec::with_capacity(2 * cutoff);
    let mut coeffs = Vec::with_capacity(2 * cutoff);
    for j in 1..=cutoff as i64 {
        let c = Complex64::new((j as f64).powf(-s), 0.0);
        modes.push(vec![j]);
        coeffs.push(c);
        modes.push(vec![-j]);
        coeffs.push(c);
    }
    TorusFunction::new(1, modes, coeffs).expect("well-formed series")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_plateau_and_support() {
        assert_eq!(khat(0.25), 1.0);
        assert_eq!(khat(1.25), 0.0);
        assert_eq!(khat(-0.5), 1.0);
        assert_eq!(khat(1.0), 0.0);
        assert!((khat(0.75) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resolution_and_dimension_guards() {
        assert!(build_kernel(1, 32).is_err());
        assert!(build_kernel(4, 128).is_err());
    }

    #[test]
    fn one_dim_paths_agree() {
        let k = build_kernel(1, 256).unwrap();
        for x in [0.0, 1.0, 7.0, 30.0] {
            let a = k.eval_1d(x);
            let b = k.eval_complex(&[Complex64::new(x, 0.0)]);
            assert!((a - b.re).abs() < 1e-14 && b.im.abs() < 1e-14, "{a} {b}");
            assert!((k.cached_samples()[x as usize] - a).abs() < 1e-14);
        }
        let d = k.derivative_1d(2.0, 1);
        let fd = (k.eval_1d(2.0 + 1e-5) - k.eval_1d(2.0 - 1e-5)) / 2e-5;
        assert!((d - fd).abs() < 1e-8);
    }

    #[test]
    fn normalization_and_low_moments() {
        let k = build_kernel(1, 2048).unwrap();
        assert!((kernel_moments(&k, &[0], &[0], 3).unwrap() - 1.0).abs() < 1e-8);
        assert!(kernel_moments(&k, &[1], &[0], 3).unwrap().abs() < 1e-6);
        assert!((kernel_moments(&k, &[2], &[2], 3).unwrap() - 2.0).abs() < 1e-5);
        assert!(kernel_moments(&k, &[7], &[0], 7).is_err());
        assert!(kernel_moments(&k, &[3], &[0], 2).is_err());
    }

    #[test]
    fn smoothing_exact_cases() {
        let c = TorusFunction::constant(2, 3.5);
        assert_eq!(smooth(&c, 0.3).unwrap(), c);
        let f = TorusFunction::from_real_terms(1, &[(vec![3], 1.0, 0.0)]).unwrap();
        let s = smooth(&f, 0.01).unwrap();
        assert_eq!(s, f);
        let s = smooth(&f, 0.05).unwrap();
        assert!((s.coeff(&[3]).re - 0.5 * khat(2.0 * PI * 0.15)).abs() < 1e-16);
        assert!(smooth(&f, 0.0).is_err());
    }

    #[test]
    fn moment_exact_values() {
        assert_eq!(moment_exact(2, 2), 2.0);
        assert_eq!(moment_exact(3, 3), -6.0);
        assert_eq!(moment_exact(1, 0), 0.0);
    }
}
