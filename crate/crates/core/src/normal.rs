//! Univariate and bivariate standard normal distribution functions.

use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

use crate::error::{Error, Result};

fn standard() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(Normal::standard)
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile `z(p)`.
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let z = standard().inverse_cdf(p);
    // one Halley step against the accurate CDF
    let residual = if z <= 0.0 { norm_cdf(z) - p } else { (1.0 - p) - norm_cdf(-z) };
    let d = norm_pdf(z);
    if d <= 0.0 || !residual.is_finite() {
        return z;
    }
    let e = residual / d;
    z - e / (1.0 + 0.5 * z * e)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Beyond this the standard normal tail mass (< 1.2e-19) is ignored.
const TAIL: f64 = 9.0;
const BVN_TOL: f64 = 1e-13;

/// `P(Z1 <= h, Z2 <= k)` for a standard bivariate normal with correlation `rho`.
///
/// Evaluated as `∫_{-∞}^{h} φ(z) Φ((k - ρ z) / √(1 - ρ²)) dz` by adaptive
/// Gauss–Kronrod quadrature, split at the point where the conditional CDF
/// switches from 0 to 1. Absolute error is below 1e-10 for all inputs.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(format!("correlation {rho} outside [-1, 1]")));
    }
    if h.is_nan() || k.is_nan() {
        return Err(Error::invalid("bvn_cdf arguments must not be NaN"));
    }
    Ok(bvn_cdf_unchecked(h, k, rho))
}

pub(crate) fn bvn_cdf_unchecked(h: f64, k: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return norm_cdf(h) * norm_cdf(k);
    }
    if rho >= 1.0 {
        return norm_cdf(h.min(k));
    }
    if rho <= -1.0 {
        return (norm_cdf(h) - norm_cdf(-k)).max(0.0);
    }
    if h <= -TAIL || k <= -TAIL {
        return 0.0;
    }
    if h >= TAIL {
        return norm_cdf(k);
    }
    if k >= TAIL {
        return norm_cdf(h);
    }
    let s = (1.0 - rho * rho).sqrt();
    let integrand = |z: f64| norm_pdf(z) * norm_cdf((k - rho * z) / s);
    let (lo, hi) = (-TAIL, h);
    let pivot = k / rho;
    let value = if pivot > lo && pivot < hi {
        adaptive_gk(&integrand, lo, pivot, BVN_TOL * 0.5) + adaptive_gk(&integrand, pivot, hi, BVN_TOL * 0.5)
    } else {
        adaptive_gk(&integrand, lo, hi, BVN_TOL)
    };
    value.clamp(0.0, norm_cdf(h).min(norm_cdf(k)))
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub(crate) fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (value, err) = whole;
        if err <= tol || depth >= 50 || (b - a).abs() < 1e-12 {
            return value;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        recurse(f, a, m, 0.5 * tol, left, depth + 1) + recurse(f, m, b, 0.5 * tol, right, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, tol, gk15(f, a, b), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    /// Independent route: Φ(h)Φ(k) + ∫_0^ρ φ₂(h, k; r) dr by composite
    /// Gauss–Legendre on many panels (valid for |ρ| well below 1).
    fn bvn_by_rho_integral(h: f64, k: f64, rho: f64) -> f64 {
        let dens = |r: f64| {
            let d = 1.0 - r * r;
            (-(h * h - 2.0 * h * k * r + k * k) / (2.0 * d)).exp() / (2.0 * PI * d.sqrt())
        };
        let nodes = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        let weights = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let panels = 4000;
        let width = rho / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let c = (p as f64 + 0.5) * width;
            for (x, w) in nodes.iter().zip(weights) {
                total += w * dens(c + 0.5 * width * x) * 0.5 * width;
            }
        }
        norm_cdf(h) * norm_cdf(k) + total
    }

    #[test]
    fn independence_factorizes() {
        let v = bvn_cdf(0.5, -1.2, 0.0).unwrap();
        assert!((v - norm_cdf(0.5) * norm_cdf(-1.2)).abs() < 1e-15);
    }

    #[test]
    fn median_identity() {
        for rho in [-0.95, -0.5, -0.1, 0.3, FRAC_1_SQRT_2, 0.9, 0.999] {
            let v = bvn_cdf(0.0, 0.0, rho).unwrap();
            let exact = 0.25 + rho.asin() / (2.0 * PI);
            assert!((v - exact).abs() < 1e-12, "rho {rho}: {v} vs {exact}");
        }
        assert!((bvn_cdf(0.0, 0.0, FRAC_1_SQRT_2).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn total_mass() {
        assert!((bvn_cdf(8.0, 8.0, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(bvn_cdf(-12.0, 1.0, 0.6).unwrap() < 1e-15);
    }

    #[test]
    fn matches_rho_integral_oracle() {
        for &(h, k, rho) in &[
            (-1.37, -0.39, 0.45),
            (0.8, -2.1, -0.6),
            (1.9, 1.2, 0.85),
            (-2.5, 0.3, 0.2),
            (-1.0, -1.0, 0.95),
            (0.1, 2.7, -0.9),
        ] {
            let a = bvn_cdf(h, k, rho).unwrap();
            let b = bvn_by_rho_integral(h, k, rho);
            assert!((a - b).abs() < 1e-11, "({h},{k},{rho}): {a} vs {b}");
        }
    }

    #[test]
    fn degenerate_correlations() {
        assert!((bvn_cdf(0.3, -0.2, 1.0).unwrap() - norm_cdf(-0.2)).abs() < 1e-15);
        assert!((bvn_cdf(0.3, 0.2, -1.0).unwrap() - (norm_cdf(0.3) - norm_cdf(-0.2))).abs() < 1e-15);
        assert_eq!(bvn_cdf(-0.3, -0.2, -1.0).unwrap(), 0.0);
        assert!(bvn_cdf(0.0, 0.0, 1.01).is_err());
    }

    #[test]
    fn near_one_correlation_is_continuous() {
        let v = bvn_cdf(-0.4, -0.6, 1.0 - 1e-9).unwrap();
        assert!((v - norm_cdf(-0.6)).abs() < 1e-5);
        let w = bvn_cdf(-0.4, -0.6, 1.0 - 1e-6).unwrap();
        assert!(w <= norm_cdf(-0.6) && w > v - 1e-3);
    }

    #[test]
    fn symmetric_in_arguments() {
        for &(h, k, rho) in &[(0.3, -1.1, 0.4), (-2.0, 0.5, -0.7)] {
            let a = bvn_cdf(h, k, rho).unwrap();
            let b = bvn_cdf(k, h, rho).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_roundtrip() {
        for p in [1e-6, 0.0847, 0.5, 0.93] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-14 * p.max(1e-3));
        }
    }
}
