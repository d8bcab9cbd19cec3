//! Sensitivity, variability and Godambe information, the robust adjustment
//! `a/b`, adjusted profile likelihood ratios and `1/k` support intervals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{CompositeLikelihood, ProfileCurve};

const MAX_J_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct InformationEstimates {
    /// `-(1/N)` times the total Hessian.
    pub h_hat: DMatrix<f64>,
    /// `(1/N) sum u_i u_i'` over families.
    pub j_hat: DMatrix<f64>,
    /// `H J^-1 H`.
    pub g_hat: DMatrix<f64>,
    pub n_families: usize,
}

impl InformationEstimates {
    /// Sandwich variance `(G^-1)/N` of the estimator.
    pub fn sandwich_covariance(&self) -> Result<DMatrix<f64>> {
        let inv = self
            .g_hat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInformation("Godambe information is singular".into()))?;
        Ok(inv / self.n_families as f64)
    }
}

pub fn estimate_information(per_family_scores: &[DVector<f64>], hessian: &DMatrix<f64>, n: usize) -> Result<InformationEstimates> {
    let d = hessian.nrows();
    if n == 0 || hessian.ncols() != d {
        return Err(Error::invalid("need a square Hessian and at least one family"));
    }
    if per_family_scores.iter().any(|u| u.len() != d) {
        return Err(Error::invalid("score and Hessian dimensions differ"));
    }
    let nf = n as f64;
    let h_hat = -hessian / nf;
    let mut j_hat = DMatrix::zeros(d, d);
    for u in per_family_scores {
        j_hat.ger(1.0, u, u, 1.0);
    }
    j_hat /= nf;
    let eig = SymmetricEigen::new(j_hat.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_J_CONDITION) {
        return Err(Error::SingularVariability { condition });
    }
    let j_inv = j_hat
        .clone()
        .cholesky()
        .ok_or(Error::SingularVariability { condition })?
        .inverse();
    let g_hat = &h_hat * j_inv * &h_hat;
    let g_hat = (&g_hat + g_hat.transpose()) * 0.5;
    Ok(InformationEstimates {
        h_hat,
        j_hat,
        g_hat,
        n_families: n,
    })
}

/// `(H^-1)_{kk} / (G^-1)_{kk}` for the scalar interest parameter `k`.
pub fn adjustment_factor(info: &InformationEstimates, interest_index: usize) -> Result<f64> {
    let d = info.h_hat.nrows();
    if interest_index >= d {
        return Err(Error::invalid(format!("interest index {interest_index} out of range")));
    }
    let h_inv = info
        .h_hat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInformation("sensitivity matrix is singular".into()))?;
    let g_inv = info
        .g_hat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInformation("Godambe information is singular".into()))?;
    let ratio = h_inv[(interest_index, interest_index)] / g_inv[(interest_index, interest_index)];
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidInformation(format!("adjustment factor {ratio} is not positive")));
    }
    Ok(ratio)
}

/// Information estimates and `a/b` for `cl` at `theta`.
pub fn robust_adjustment(cl: &CompositeLikelihood, theta: &[f64], interest_index: usize) -> Result<(InformationEstimates, f64)> {
    let ev = cl.eval_full(theta)?;
    let info = estimate_information(&ev.per_family_scores, &ev.hessian, cl.n_families())?;
    let ab = adjustment_factor(&info, interest_index)?;
    Ok((info, ab))
}

/// Estimates `a/b` at the curve's maximum and stores it on the curve.
pub fn adjust_curve(cl: &CompositeLikelihood, curve: &mut ProfileCurve) -> Result<f64> {
    let (_, ab) = robust_adjustment(cl, &curve.mcle.theta, curve.interest_index())?;
    curve.adjustment = Some(ab);
    Ok(ab)
}

/// Monotone piecewise cubic Hermite interpolant (Steffen's slopes). Knot
/// slopes are those of the parabola through neighbouring knots, clamped so no
/// interval overshoots; quadratic data are reproduced exactly away from
/// turning points.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::invalid("interpolation needs at least two knots"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("knots must be increasing with finite values"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let p = (delta[k - 1] * h[k] + delta[k] * h[k - 1]) / (h[k - 1] + h[k]);
                let bound = delta[k - 1].abs().min(delta[k].abs()).min(0.5 * p.abs());
                d[k] = (sign(delta[k - 1]) + sign(delta[k])) * bound;
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(MonotoneCubic { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `t`; `t` must lie within the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One-sided parabola slope at an end knot, clamped to `[0, 2 m0]`.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let p = m0 * (1.0 + h0 / (h0 + h1)) - m1 * h0 / (h0 + h1);
    if p * m0 <= 0.0 {
        0.0
    } else if p.abs() > 2.0 * m0.abs() {
        2.0 * m0
    } else {
        p
    }
}

/// Interpolant of a profile curve over its successful grid points, with the
/// maximum inserted as an extra knot when it falls inside the grid.
pub fn curve_interpolant(curve: &ProfileCurve) -> Result<MonotoneCubic> {
    let mut pts: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(&curve.loglik_p)
        .zip(&curve.failed)
        .filter(|(_, &f)| !f)
        .map(|((&x, &y), _)| (x, y))
        .collect();
    let m = &curve.mcle;
    if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
        if m.value.is_finite() && m.value > first.0 && m.value < last.0 {
            let pos = pts.partition_point(|p| p.0 < m.value);
            let close = |p: &(f64, f64)| (p.0 - m.value).abs() <= 1e-12 * (1.0 + m.value.abs());
            if !(close(&pts[pos]) || (pos > 0 && close(&pts[pos - 1]))) {
                pts.insert(pos, (m.value, m.loglik));
            }
        }
    }
    let (x, y) = pts.into_iter().unzip();
    MonotoneCubic::new(x, y)
}

fn adjustment_of(curve: &ProfileCurve) -> Result<f64> {
    curve
        .adjustment
        .ok_or_else(|| Error::invalid("profile curve carries no adjustment factor"))
}

/// Adjusted profile likelihood ratio of `or_1` against `or_2` (both on the
/// odds-ratio scale, i.e. `exp` of the interest parameter).
pub fn adjusted_lr(curve: &ProfileCurve, or_1: f64, or_2: f64) -> Result<f64> {
    let ab = adjustment_of(curve)?;
    let p = curve_interpolant(curve)?;
    let (lo, hi) = p.domain();
    let at = |or: f64| -> Result<f64> {
        let t = or.ln();
        if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
            return Err(Error::OutOfRange {
                value: or,
                lo: lo.exp(),
                hi: hi.exp(),
            });
        }
        Ok(p.eval(t.clamp(lo, hi)))
    };
    Ok((ab * (at(or_1)? - at(or_2)?)).exp())
}

/// A `1/k` support interval on the odds-ratio scale. An open side means the
/// curve never dropped below `1/k` on that side of the grid, and the
/// reported endpoint is the grid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub k: f64,
    pub lower_or: f64,
    pub upper_or: f64,
    pub lower_open: bool,
    pub upper_open: bool,
    pub contains_null: bool,
}

impl SupportInterval {
    pub fn contains(&self, or: f64) -> bool {
        (self.lower_open || or >= self.lower_or) && (self.upper_open || or <= self.upper_or)
    }
}

pub fn support_interval(curve: &ProfileCurve, k: f64) -> Result<SupportInterval> {
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::invalid(format!("evidence threshold k = {k} must exceed 1")));
    }
    let ab = adjustment_of(curve)?;
    let p = curve_interpolant(curve)?;
    let (xs, ys) = p.knots();
    let top = ys.iter().copied().fold(curve.mcle.loglik, f64::max);
    let cut = -k.ln();
    let level = |t: f64| ab * (p.eval(t) - top);
    let inside: Vec<bool> = ys.iter().map(|&y| ab * (y - top) >= cut).collect();
    let first = inside.iter().position(|&b| b).ok_or_else(|| Error::invalid("curve never reaches its maximum"))?;
    let last = inside.iter().rposition(|&b| b).unwrap();
    let crossing = |mut out: f64, mut inn: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (out + inn);
            if level(mid) >= cut {
                inn = mid;
            } else {
                out = mid;
            }
            if (inn - out).abs() <= 1e-13 {
                break;
            }
        }
        0.5 * (out + inn)
    };
    let (lower, lower_open) = if first == 0 { (xs[0], true) } else { (crossing(xs[first - 1], xs[first]), false) };
    let n = xs.len();
    let (upper, upper_open) = if last == n - 1 { (xs[n - 1], true) } else { (crossing(xs[last + 1], xs[last]), false) };
    let contains_null = (lower_open || lower <= 0.0) && (upper_open || upper >= 0.0);
    Ok(SupportInterval {
        k,
        lower_or: lower.exp(),
        upper_or: upper.exp(),
        lower_open,
        upper_open,
        contains_null,
    })
}
