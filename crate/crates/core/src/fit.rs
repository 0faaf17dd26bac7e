//! Small least-squares helpers used for exponent fits.

use serde::{Deserialize, Serialize};

/// `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
}

/// Ordinary least squares line through `(x, y)`. Needs at least two distinct `x`.
pub fn line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 || !sxx.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = (0..n)
        .map(|i| (y[i] - intercept - slope * x[i]).abs())
        .fold(0.0, f64::max);
    Some(LineFit { slope, intercept, max_residual })
}

/// `y ≈ c + a·x1 + b·x2`, returned as `(c, a, b)`.
pub fn plane(x1: &[f64], x2: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = y.len();
    if n < 3 || x1.len() != n || x2.len() != n {
        return None;
    }
    let m1 = x1.iter().sum::<f64>() / n as f64;
    let m2 = x2.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (d1, d2, dy) = (x1[i] - m1, x2[i] - m2, y[i] - my);
        s11 += d1 * d1;
        s12 += d1 * d2;
        s22 += d2 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= 1e-14 * s11 * s22 || !det.is_finite() {
        return None;
    }
    let a = (s1y * s22 - s2y * s12) / det;
    let b = (s2y * s11 - s1y * s12) / det;
    Some((my - a * m1 - b * m2, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = line(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_plane() {
        let x1 = [0.0, 1.0, 2.0, 3.0, 5.0];
        let x2 = [1.0, 0.0, 4.0, 2.0, 3.0];
        let y: Vec<f64> = (0..5).map(|i| 0.3 + 1.5 * x1[i] - 0.7 * x2[i]).collect();
        let (c, a, b) = plane(&x1, &x2, &y).unwrap();
        assert!((c - 0.3).abs() < 1e-12 && (a - 1.5).abs() < 1e-12 && (b + 0.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(line(&[1.0], &[2.0]).is_none());
        assert!(line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
