//! Plackett odds-ratio parameterization of a binary pair.
//!
//! Given margins `p_i`, `p_j` and odds ratio `psi = p11 p00 / (p10 p01)`,
//! `p11` is the smaller root of
//! `(psi - 1) x^2 - (1 + (p_i + p_j)(psi - 1)) x + psi p_i p_j = 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Within this distance of 1 the odds ratio is treated as exactly 1.
pub const INDEPENDENCE_EPS: f64 = 1e-9;
const FRECHET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMargins {
    pub p_i: f64,
    pub p_j: f64,
    pub psi: f64,
}

impl PairMargins {
    pub fn new(p_i: f64, p_j: f64, psi: f64) -> Result<Self> {
        let m = PairMargins { p_i, p_j, psi };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for p in [self.p_i, self.p_j] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("margin {p} must lie strictly inside (0, 1)")));
            }
        }
        if !(self.psi >= 0.0) || !self.psi.is_finite() {
            return Err(Error::invalid(format!("odds ratio {} must be finite and >= 0", self.psi)));
        }
        Ok(())
    }

    /// Fréchet bounds on `p11`.
    pub fn frechet(&self) -> (f64, f64) {
        ((self.p_i + self.p_j - 1.0).max(0.0), self.p_i.min(self.p_j))
    }
}

/// The four cells of the 2x2 table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairJoint {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

impl PairJoint {
    pub fn from_p11(p_i: f64, p_j: f64, p11: f64) -> Self {
        PairJoint {
            p11,
            p10: p_i - p11,
            p01: p_j - p11,
            p00: 1.0 - p_i - p_j + p11,
        }
    }

    /// Cell probability for outcomes `(y_i, y_j)`.
    pub fn cell(&self, y_i: bool, y_j: bool) -> f64 {
        match (y_i, y_j) {
            (true, true) => self.p11,
            (true, false) => self.p10,
            (false, true) => self.p01,
            (false, false) => self.p00,
        }
    }

    pub fn cross_ratio(&self) -> f64 {
        self.p11 * self.p00 / (self.p10 * self.p01)
    }
}

/// Unchecked root for margins already known to be valid.
#[inline]
pub(crate) fn p11_unchecked(p_i: f64, p_j: f64, psi: f64) -> f64 {
    if (psi - 1.0).abs() <= INDEPENDENCE_EPS {
        return p_i * p_j;
    }
    let b = 1.0 + (p_i + p_j) * (psi - 1.0);
    let s = (b * b + 4.0 * psi * (1.0 - psi) * p_i * p_j).max(0.0).sqrt();
    if b > 0.0 {
        // rationalized form of (b - s) / (2 (psi - 1)); no cancellation
        2.0 * psi * p_i * p_j / (b + s)
    } else {
        (b - s) / (2.0 * (psi - 1.0))
    }
}

/// Joint success probability `p11` implied by the margins and odds ratio.
pub fn joint_prob(m: &PairMargins) -> Result<f64> {
    m.validate()?;
    let (p_i, p_j, psi) = (m.p_i, m.p_j, m.psi);
    if (psi - 1.0).abs() > INDEPENDENCE_EPS {
        let b = 1.0 + (p_i + p_j) * (psi - 1.0);
        let radicand = b * b + 4.0 * psi * (1.0 - psi) * p_i * p_j;
        if radicand < -1e-12 {
            return Err(Error::InternalConsistency(format!(
                "negative discriminant {radicand:e} for margins ({p_i}, {p_j}), psi {psi}"
            )));
        }
    }
    let p11 = p11_unchecked(p_i, p_j, psi);
    let (lo, hi) = m.frechet();
    if p11 < lo - FRECHET_SLACK || p11 > hi + FRECHET_SLACK || !p11.is_finite() {
        return Err(Error::InternalConsistency(format!(
            "p11 = {p11} violates Fréchet bounds [{lo}, {hi}] for psi {psi}"
        )));
    }
    Ok(p11.clamp(lo, hi))
}

pub fn joint_table(m: &PairMargins) -> Result<PairJoint> {
    Ok(PairJoint::from_p11(m.p_i, m.p_j, joint_prob(m)?))
}

/// Pearson correlation of the binary pair.
pub fn pair_correlation(m: &PairMargins) -> Result<f64> {
    let p11 = joint_prob(m)?;
    if (m.psi - 1.0).abs() <= INDEPENDENCE_EPS {
        return Ok(0.0);
    }
    Ok(correlation_from_p11(m.p_i, m.p_j, p11))
}

#[inline]
pub fn correlation_from_p11(p_i: f64, p_j: f64, p11: f64) -> f64 {
    (p11 - p_i * p_j) / (p_i * (1.0 - p_i) * p_j * (1.0 - p_j)).sqrt()
}

/// Range of Pearson correlations attainable by binary variables with these margins.
pub fn attainable_correlation(p_i: f64, p_j: f64) -> (f64, f64) {
    let sd = (p_i * (1.0 - p_i) * p_j * (1.0 - p_j)).sqrt();
    let lo = ((p_i + p_j - 1.0).max(0.0) - p_i * p_j) / sd;
    let hi = (p_i.min(p_j) - p_i * p_j) / sd;
    (lo, hi)
}

/// First and second partial derivatives of `p11` with respect to
/// `(p_i, p_j, psi)`, obtained by implicit differentiation of the quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDerivatives {
    pub p11: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

pub(crate) fn joint_derivatives(p_i: f64, p_j: f64, psi: f64) -> JointDerivatives {
    let x = p11_unchecked(p_i, p_j, psi);
    let q = psi - 1.0;
    // G(x; p_i, p_j, psi) = q x^2 - (1 + (p_i + p_j) q) x + psi p_i p_j
    let g_x = 2.0 * q * x - 1.0 - (p_i + p_j) * q;
    let g_xx = 2.0 * q;
    let g_u = [-q * x + psi * p_j, -q * x + psi * p_i, (x - p_i) * (x - p_j)];
    let g_xu = [-q, -q, 2.0 * x - p_i - p_j];
    let g_uu = [
        [0.0, psi, p_j - x],
        [psi, 0.0, p_i - x],
        [p_j - x, p_i - x, 0.0],
    ];
    let mut grad = [0.0; 3];
    for k in 0..3 {
        grad[k] = -g_u[k] / g_x;
    }
    let mut hess = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = -(g_uu[a][b] + g_xu[a] * grad[b] + g_xu[b] * grad[a] + g_xx * grad[a] * grad[b]) / g_x;
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    JointDerivatives { p11: x, grad, hess }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompatibilityViolation {
    /// Margin outside [0, 1].
    Margin { index: usize, value: f64 },
    /// Joint outside its Fréchet bounds.
    Frechet { i: usize, j: usize, p11: f64, lo: f64, hi: f64 },
    /// `p_i + p_j + p_l - p_ij - p_il - p_jl > 1`.
    Triple { i: usize, j: usize, l: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub violations: Vec<CompatibilityViolation>,
}

impl CompatibilityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

const COMPAT_TOL: f64 = 1e-10;

/// Checks the necessary conditions for a nonnegative joint pmf with the given
/// first- and second-order probabilities. `joints` is keyed by `(i, j)` with `i < j`.
pub fn check_compatibility(margins: &[f64], joints: &BTreeMap<(usize, usize), f64>) -> Result<CompatibilityReport> {
    let n = margins.len();
    let joint = |i: usize, j: usize| -> Result<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        joints
            .get(&key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing joint probability for pair ({}, {})", key.0, key.1)))
    };
    let mut violations = Vec::new();
    for (index, &value) in margins.iter().enumerate() {
        if !(-COMPAT_TOL..=1.0 + COMPAT_TOL).contains(&value) {
            violations.push(CompatibilityViolation::Margin { index, value });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let p11 = joint(i, j)?;
            let lo = (margins[i] + margins[j] - 1.0).max(0.0);
            let hi = margins[i].min(margins[j]);
            if p11 < lo - COMPAT_TOL || p11 > hi + COMPAT_TOL {
                violations.push(CompatibilityViolation::Frechet { i, j, p11, lo, hi });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for l in (j + 1)..n {
                let value = margins[i] + margins[j] + margins[l] - joint(i, j)? - joint(i, l)? - joint(j, l)?;
                if value > 1.0 + COMPAT_TOL {
                    violations.push(CompatibilityViolation::Triple { i, j, l, value });
                }
            }
        }
    }
    Ok(CompatibilityReport { violations })
}
