//! Adaptive Gauss–Kronrod quadrature on finite intervals.
//!
//! A 7/15-point pair with global bisection of the interval carrying the
//! largest error estimate.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Integrate `f` over `[a, b]`.
///
/// Fails with [`Error::Numeric`] when a non-finite value is produced or the
/// interval budget runs out before the tolerance is met.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, abs_error: 0.0, intervals: 0 });
    }
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(&f, a, b);
    segs.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand on [{a:e}, {b:e}]")));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        if segs.len() >= opts.max_intervals {
            // Accept when we are within a few ulps of what the arithmetic can resolve.
            if err <= 1e3 * f64::EPSILON * total.abs() {
                break;
            }
            return Err(Error::Numeric(format!(
                "quadrature budget exhausted on [{a:e}, {b:e}]: value {total:e}, error {err:e}"
            )));
        }
        let (imax, _) = segs
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc });
        let (lo, hi, v0, e0) = segs.swap_remove(imax);
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            return Err(Error::Numeric(format!("interval collapsed near {lo:e}")));
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    // Re-sum to wash out drift from the incremental updates.
    let value: f64 = segs.iter().map(|s| s.2).sum();
    let abs_error: f64 = segs.iter().map(|s| s.3).sum();
    Ok(Quad { value, abs_error, intervals: segs.len() })
}

/// Convenience wrapper with default tolerances, returning only the value.
pub fn integrate_value<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate(f, a, b, QuadOptions::default()).map(|q| q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate_value(|x| 3.0 * x * x + 1.0, 0.0, 2.0).unwrap();
        assert!((q - 10.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let q = integrate_value(|x: f64| x.powf(-0.5), 0.0, 1.0).unwrap();
        assert!((q - 2.0).abs() < 1e-9, "{q}");
    }

    #[test]
    fn oscillatory() {
        let q = integrate_value(|x: f64| (50.0 * x).cos(), 0.0, 1.0).unwrap();
        assert!((q - (50.0f64).sin() / 50.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate_value(|x: f64| x.exp(), 0.0, 1.0).unwrap();
        let b = integrate_value(|x: f64| x.exp(), 1.0, 0.0).unwrap();
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn nan_is_reported() {
        assert!(integrate_value(|_| f64::NAN, 0.0, 1.0).is_err());
    }
}
