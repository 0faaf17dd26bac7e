//! Periodic functions on the torus `ℝⁿ/ℤⁿ`.
//!
//! [`TorusFunction`] is the sparse, serializable trig-polynomial form.
//! [`Spectrum`] is the dense form on an `N^n` grid used by the KAM solver,
//! with FFT round trips through [`Grid`] samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// A trig polynomial `Σ c_k e^{2πi⟨k,x⟩}` over a finite set of modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTorus", into = "RawTorus")]
pub struct TorusFunction {
    dim: usize,
    modes: Vec<Vec<i64>>,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RawTorus {
    dimension: usize,
    frequencies: Vec<Vec<i64>>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<RawTorus> for TorusFunction {
    type Error = Error;
    fn try_from(r: RawTorus) -> Result<Self> {
        if r.re.len() != r.frequencies.len() || r.im.len() != r.frequencies.len() {
            return Err(Error::Argument("frequencies, re and im must have equal length".into()));
        }
        let c = r.re.iter().zip(&r.im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        TorusFunction::new(r.dimension, r.frequencies, c)
    }
}

impl From<TorusFunction> for RawTorus {
    fn from(f: TorusFunction) -> Self {
        RawTorus {
            dimension: f.dim,
            re: f.coeffs.iter().map(|c| c.re).collect(),
            im: f.coeffs.iter().map(|c| c.im).collect(),
            frequencies: f.modes,
        }
    }
}

impl TorusFunction {
    /// Build from modes and coefficients; repeated modes are summed, order is canonical.
    pub fn new(dim: usize, modes: Vec<Vec<i64>>, coeffs: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("torus dimension must be positive".into()));
        }
        if modes.len() != coeffs.len() {
            return Err(Error::Argument("modes and coefficients differ in length".into()));
        }
        if modes.iter().any(|k| k.len() != dim) {
            return Err(Error::Argument(format!("every mode must have {dim} components")));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Argument("coefficients must be finite".into()));
        }
        let mut pairs: Vec<(Vec<i64>, Complex64)> = modes.into_iter().zip(coeffs).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out_m: Vec<Vec<i64>> = Vec::with_capacity(pairs.len());
        let mut out_c: Vec<Complex64> = Vec::with_capacity(pairs.len());
        for (k, c) in pairs {
            if out_m.last() == Some(&k) {
                *out_c.last_mut().unwrap() += c;
            } else {
                out_m.push(k);
                out_c.push(c);
            }
        }
        Ok(Self { dim, modes: out_m, coeffs: out_c })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, modes: vec![], coeffs: vec![] }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self { dim, modes: vec![vec![0; dim]], coeffs: vec![Complex64::new(c, 0.0)] }
    }

    /// Real function from cosine/sine amplitudes: `a cos 2π⟨k,x⟩ + b sin 2π⟨k,x⟩` per entry.
    pub fn from_real_terms(dim: usize, terms: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        for (k, a, b) in terms {
            if k.iter().all(|v| *v == 0) {
                modes.push(k.clone());
                coeffs.push(Complex64::new(*a, 0.0));
                continue;
            }
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            // a cos + b sin = (a - ib)/2 e^{+} + (a + ib)/2 e^{-}
            modes.push(k.clone());
            coeffs.push(Complex64::new(0.5 * a, -0.5 * b));
            modes.push(neg);
            coeffs.push(Complex64::new(0.5 * a, 0.5 * b));
        }
        Self::new(dim, modes, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Coefficient of mode `k` (zero when absent).
    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        match self.modes.binary_search_by(|m| m.as_slice().cmp(k)) {
            Ok(i) => self.coeffs[i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mean(&self) -> Complex64 {
        self.coeff(&vec![0; self.dim])
    }

    /// Largest `|k|_∞` present.
    pub fn cutoff(&self) -> i64 {
        self.modes.iter().flat_map(|k| k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    /// `c_{-k} = conj(c_k)` within `tol`.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.modes.iter().zip(&self.coeffs).all(|(k, c)| {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            (self.coeff(&neg) - c.conj()).norm() <= tol
        })
    }

    /// Value at a complex point (analytic continuation of the real function).
    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.modes.iter().zip(&self.coeffs) {
            let mut ph = Complex64::new(0.0, 0.0);
            for (ki, zi) in k.iter().zip(z) {
                ph += *zi * (*ki as f64);
            }
            acc += c * (Complex64::i() * TWO_PI * ph).exp();
        }
        acc
    }

    /// Real part of the value at a real point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.modes.iter().zip(&self.coeffs) {
            let ph: f64 = k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum::<f64>() * TWO_PI;
            acc += c.re * ph.cos() - c.im * ph.sin();
        }
        acc
    }

    /// Multiply each coefficient by `mult(k)`, dropping exact zeros.
    pub fn map_coeffs<F: Fn(&[i64], Complex64) -> Complex64>(&self, mult: F) -> Self {
        let mut modes = Vec::with_capacity(self.len());
        let mut coeffs = Vec::with_capacity(self.len());
        for (k, c) in self.modes.iter().zip(&self.coeffs) {
            let v = mult(k, *c);
            if v != Complex64::new(0.0, 0.0) {
                modes.push(k.clone());
                coeffs.push(v);
            }
        }
        Self { dim: self.dim, modes, coeffs }
    }

    /// `∂^α f`.
    pub fn derivative(&self, alpha: &[u32]) -> Self {
        self.map_coeffs(|k, c| {
            let mut m = Complex64::new(1.0, 0.0);
            for (ki, ai) in k.iter().zip(alpha) {
                m *= (Complex64::i() * TWO_PI * *ki as f64).powu(*ai);
            }
            c * m
        })
    }

    /// `D f = Σ ω_j ∂_j f`.
    pub fn directional(&self, omega: &[f64]) -> Self {
        self.map_coeffs(|k, c| c * Complex64::i() * TWO_PI * dot(k, omega))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Argument("dimension mismatch".into()));
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        let mut coeffs = self.coeffs.clone();
        coeffs.extend(other.coeffs.iter().cloned());
        Self::new(self.dim, modes, coeffs)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coeffs(|_, c| c * s)
    }

    /// Sample on the uniform `size^dim` grid.
    pub fn to_grid(&self, size: usize) -> Result<Grid> {
        Spectrum::from_torus(self, size)?.to_grid()
    }
}

/// Per-axis tables `e^{2πi m x_a}` for `0 ≤ m ≤ cut`, shared by several evaluations at one point.
pub struct PhaseTable {
    cut: usize,
    rows: Vec<Vec<Complex64>>,
}

impl PhaseTable {
    pub fn new(x: &[f64], cut: usize) -> Self {
        let rows = x
            .iter()
            .map(|xa| {
                let step = Complex64::from_polar(1.0, TWO_PI * xa);
                let mut row = Vec::with_capacity(cut + 1);
                let mut cur = Complex64::new(1.0, 0.0);
                for m in 0..=cut {
                    // refresh from the exact value every 16 steps to stop drift
                    if m % 16 == 0 && m > 0 {
                        cur = Complex64::from_polar(1.0, TWO_PI * xa * m as f64);
                    }
                    row.push(cur);
                    cur *= step;
                }
                row
            })
            .collect();
        Self { cut, rows }
    }

    #[inline]
    fn phase(&self, axis: usize, m: i64) -> Complex64 {
        let p = self.rows[axis][m.unsigned_abs() as usize];
        if m < 0 { p.conj() } else { p }
    }
}

/// Fast repeated evaluation of a real trig polynomial.
#[derive(Debug, Clone)]
pub struct Evaluator {
    dim: usize,
    cut: usize,
    modes: Vec<Vec<i64>>,
    coeffs: Vec<Complex64>,
}

impl Evaluator {
    pub fn new(f: &TorusFunction) -> Self {
        Self { dim: f.dim, cut: f.cutoff() as usize, modes: f.modes.clone(), coeffs: f.coeffs.clone() }
    }

    pub fn cutoff(&self) -> usize {
        self.cut
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(&PhaseTable::new(x, self.cut))
    }

    /// Evaluate using a table built for a cutoff at least this evaluator's.
    pub fn eval_with(&self, t: &PhaseTable) -> f64 {
        debug_assert!(t.cut >= self.cut);
        let mut acc = 0.0;
        for (k, c) in self.modes.iter().zip(&self.coeffs) {
            let mut ph = t.phase(0, k[0]);
            for a in 1..self.dim {
                ph *= t.phase(a, k[a]);
            }
            acc += c.re * ph.re - c.im * ph.im;
        }
        acc
    }
}

pub(crate) fn dot(k: &[i64], w: &[f64]) -> f64 {
    k.iter().zip(w).map(|(a, b)| *a as f64 * b).sum()
}

/// Frequency of FFT index `i` on a grid of `size` points.
#[inline]
pub fn freq_of(i: usize, size: usize) -> i64 {
    if i < size.div_ceil(2) { i as i64 } else { i as i64 - size as i64 }
}

/// Real samples on the uniform grid `x = j/size`, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub size: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size.pow(dim as u32) {
            return Err(Error::Argument("grid length does not match size^dim".into()));
        }
        Ok(Self { dim, size, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync + Send>(dim: usize, size: usize, f: F) -> Self {
        let total = size.pow(dim as u32);
        let values = crate::par::map_range(total, |idx| f(&point_of(idx, dim, size)));
        Self { dim, size, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        point_of(idx, self.dim, self.size)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let mut data: Vec<Complex64> = self.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fftn(&mut data, self.dim, self.size, false);
        let norm = 1.0 / self.values.len() as f64;
        for c in data.iter_mut() {
            *c *= norm;
        }
        Spectrum { dim: self.dim, size: self.size, coeffs: data }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Grid {
        Grid { dim: self.dim, size: self.size, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, o: &Grid, f: F) -> Grid {
        Grid { dim: self.dim, size: self.size, values: self.values.iter().zip(&o.values).map(|(a, b)| f(*a, *b)).collect() }
    }
}

pub fn point_of(idx: usize, dim: usize, size: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    let mut r = idx;
    for a in (0..dim).rev() {
        p[a] = (r % size) as f64 / size as f64;
        r /= size;
    }
    p
}

fn index_of(i: &[usize], size: usize) -> usize {
    i.iter().fold(0, |acc, v| acc * size + v)
}

fn fftn(data: &mut [Complex64], dim: usize, size: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(size) } else { planner.plan_fft_forward(size) };
    let mut line = vec![Complex64::new(0.0, 0.0); size];
    for axis in 0..dim {
        let stride = size.pow((dim - 1 - axis) as u32);
        let block = stride * size;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for j in 0..size {
                    line[j] = data[start + off + j * stride];
                }
                fft.process(&mut line);
                for j in 0..size {
                    data[start + off + j * stride] = line[j];
                }
            }
        }
    }
}

/// Dense Fourier coefficients on a `size^dim` grid (normalized so that
/// `f(x) = Σ c_k e^{2πi⟨k,x⟩}`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub dim: usize,
    pub size: usize,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(dim: usize, size: usize) -> Self {
        Self { dim, size, coeffs: vec![Complex64::new(0.0, 0.0); size.pow(dim as u32)] }
    }

    /// Place a sparse trig polynomial; modes beyond the grid's Nyquist band are an error.
    pub fn from_torus(f: &TorusFunction, size: usize) -> Result<Self> {
        let mut s = Self::zeros(f.dim(), size);
        let half = (size / 2) as i64;
        for (k, c) in f.modes().iter().zip(f.coeffs()) {
            if k.iter().any(|v| v.abs() >= half) {
                return Err(Error::Argument(format!("mode {k:?} beyond grid band {half}")));
            }
            let idx: Vec<usize> = k.iter().map(|v| v.rem_euclid(size as i64) as usize).collect();
            s.coeffs[index_of(&idx, size)] += c;
        }
        Ok(s)
    }

    /// Frequency vector of flat index `idx`.
    pub fn mode(&self, idx: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.dim];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            k[a] = freq_of(r % self.size, self.size);
            r /= self.size;
        }
        k
    }

    /// Whether `idx` sits on a Nyquist plane (even sizes only).
    pub fn is_nyquist(&self, idx: usize) -> bool {
        if self.size % 2 == 1 {
            return false;
        }
        let mut r = idx;
        for _ in 0..self.dim {
            if r % self.size == self.size / 2 {
                return true;
            }
            r /= self.size;
        }
        false
    }

    pub fn to_grid(&self) -> Result<Grid> {
        let mut data = self.coeffs.clone();
        fftn(&mut data, self.dim, self.size, true);
        Grid::new(self.dim, self.size, data.iter().map(|c| c.re).collect())
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Multiply every coefficient by `m(k)`; Nyquist modes are zeroed.
    pub fn multiply<F: Fn(&[i64]) -> Complex64 + Sync + Send>(&self, m: F) -> Spectrum {
        let coeffs = crate::par::map_range(self.coeffs.len(), |i| {
            if self.is_nyquist(i) { Complex64::new(0.0, 0.0) } else { self.coeffs[i] * m(&self.mode(i)) }
        });
        Spectrum { dim: self.dim, size: self.size, coeffs }
    }

    pub fn partial(&self, axis: usize) -> Spectrum {
        self.multiply(|k| Complex64::new(0.0, TWO_PI * k[axis] as f64))
    }

    pub fn directional(&self, omega: &[f64]) -> Spectrum {
        self.multiply(|k| Complex64::new(0.0, TWO_PI * dot(k, omega)))
    }

    /// Zero every mode with `|k|_∞ > cutoff`.
    pub fn truncate(&self, cutoff: i64) -> Spectrum {
        self.multiply(|k| if k.iter().all(|v| v.abs() <= cutoff) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    /// Sparse form, dropping coefficients with modulus ≤ `drop_below`.
    pub fn to_torus(&self, drop_below: f64) -> TorusFunction {
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.norm() > drop_below && !self.is_nyquist(i) {
                modes.push(self.mode(i));
                coeffs.push(*c);
            }
        }
        TorusFunction::new(self.dim, modes, coeffs).expect("consistent dimensions")
    }

    /// Evaluate at an arbitrary real point (Nyquist modes excluded).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.size;
        let phases: Vec<Vec<Complex64>> = x
            .iter()
            .map(|xa| (0..n).map(|i| Complex64::from_polar(1.0, TWO_PI * freq_of(i, n) as f64 * xa)).collect())
            .collect();
        self.eval_with_phases(&phases)
    }

    fn eval_with_phases(&self, phases: &[Vec<Complex64>]) -> f64 {
        let n = self.size;
        let nyq = if n % 2 == 0 { Some(n / 2) } else { None };
        match self.dim {
            1 => (0..n).filter(|i| Some(*i) != nyq).map(|i| (self.coeffs[i] * phases[0][i]).re).sum(),
            2 => {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    if Some(i) == nyq {
                        continue;
                    }
                    let row = &self.coeffs[i * n..(i + 1) * n];
                    let mut inner = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        if Some(j) != nyq {
                            inner += row[j] * phases[1][j];
                        }
                    }
                    acc += inner * phases[0][i];
                }
                acc.re
            }
            _ => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (idx, c) in self.coeffs.iter().enumerate() {
                    if self.is_nyquist(idx) {
                        continue;
                    }
                    let mut ph = Complex64::new(1.0, 0.0);
                    let mut r = idx;
                    for a in (0..self.dim).rev() {
                        ph *= phases[a][r % n];
                        r /= n;
                    }
                    acc += c * ph;
                }
                acc.re
            }
        }
    }

    /// Evaluate at many points.
    pub fn eval_many(&self, pts: &[Vec<f64>]) -> Vec<f64> {
        crate::par::map_slice(pts, |p| self.eval(p))
    }

    pub fn add(&self, o: &Spectrum) -> Spectrum {
        Spectrum { dim: self.dim, size: self.size, coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, s: f64) -> Spectrum {
        Spectrum { dim: self.dim, size: self.size, coeffs: self.coeffs.iter().map(|a| a * s).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_terms_evaluate() {
        let f = TorusFunction::from_real_terms(2, &[(vec![1, 0], 0.0, 1.0), (vec![0, 1], 2.0, 0.0)]).unwrap();
        let x = [0.1, 0.3];
        let exact = (TWO_PI * 0.1).sin() + 2.0 * (TWO_PI * 0.3).cos();
        assert!((f.eval(&x) - exact).abs() < 1e-14);
        assert!(f.is_conjugate_symmetric(0.0));
        let z = [Complex64::new(0.1, 0.0), Complex64::new(0.3, 0.0)];
        assert!((f.eval_complex(&z).re - exact).abs() < 1e-14);
        assert!(f.eval_complex(&z).im.abs() < 1e-14);
    }

    #[test]
    fn grid_roundtrip() {
        let f = TorusFunction::from_real_terms(2, &[(vec![3, -2], 0.5, 0.25), (vec![0, 0], 1.0, 0.0)]).unwrap();
        let g = f.to_grid(16).unwrap();
        for idx in [0, 17, 100, 255] {
            assert!((g.values[idx] - f.eval(&g.point(idx))).abs() < 1e-13);
        }
        let back = g.to_spectrum().to_torus(1e-14);
        assert_eq!(back.len(), f.len());
        for (k, c) in f.modes().iter().zip(f.coeffs()) {
            assert!((back.coeff(k) - c).norm() < 1e-14);
        }
    }

    #[test]
    fn spectral_derivative_and_eval() {
        let f = TorusFunction::from_real_terms(2, &[(vec![1, 2], 1.0, 0.0)]).unwrap();
        let s = Spectrum::from_torus(&f, 16).unwrap();
        let d = s.directional(&[1.0, 0.5]).to_grid().unwrap();
        let exact = |x: &[f64]| -TWO_PI * 2.0 * (TWO_PI * (x[0] + 2.0 * x[1])).sin();
        for idx in [3, 40, 200] {
            assert!((d.values[idx] - exact(&d.point(idx))).abs() < 1e-12);
        }
        let p = [0.123, 0.456];
        assert!((s.eval(&p) - f.eval(&p)).abs() < 1e-14);
    }

    #[test]
    fn json_shape() {
        let f = TorusFunction::from_real_terms(1, &[(vec![2], 1.0, 0.0)]).unwrap();
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["frequencies"], serde_json::json!([[-2], [2]]));
        let back: TorusFunction = serde_json::from_value(v).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<TorusFunction>(r#"{"dimension":1,"frequencies":[[1,2]],"re":[1],"im":[0]}"#).is_err());
    }
}
