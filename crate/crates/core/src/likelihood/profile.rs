use serde::{Deserialize, Serialize};

use super::{maximize, CLKind, CompositeLikelihood, Mcle, OptimizeOptions, Param, ParamLayout};
use crate::error::{Error, Result};
use crate::model::FamilyData;

/// Default profile grid on the log scale: 401 points, odds ratio 1/20 to 20.
pub fn default_or_grid() -> Vec<f64> {
    grid_from_or_range(1.0 / 20.0, 20.0, 401).expect("valid default grid")
}

/// `points` values of `log(or)`, equally spaced between `log(lo)` and `log(hi)`.
pub fn grid_from_or_range(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
        return Err(Error::invalid(format!("bad odds-ratio grid {lo}:{hi}:{points}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect())
}

/// The maximizer of a profile curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMax {
    /// Interest parameter value (log scale).
    pub value: f64,
    pub loglik: f64,
    /// Full parameter vector at the maximum.
    pub theta: Vec<f64>,
    pub converged: bool,
    pub separation: bool,
}

/// Profiled composite log-likelihood over a grid of interest values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub kind: CLKind,
    pub interest: Param,
    pub layout: ParamLayout,
    /// Interest values on the log scale (`beta1 = log OR` or `log psi`).
    pub grid: Vec<f64>,
    /// Profiled log-likelihood; NaN where the fit failed.
    pub loglik_p: Vec<f64>,
    /// Maximizing parameter vector at each grid point (empty where failed).
    pub nuisance_hat: Vec<Vec<f64>>,
    pub failed: Vec<bool>,
    pub mcle: ProfileMax,
    /// Robust adjustment `a/b`, once estimated.
    pub adjustment: Option<f64>,
}

impl ProfileCurve {
    pub fn interest_index(&self) -> usize {
        self.layout.index(self.interest).expect("interest is part of the layout")
    }

    pub fn n_failed(&self) -> usize {
        self.failed.iter().filter(|&&f| f).count()
    }

    /// A curve built from given values, for synthetic checks.
    pub fn from_values(interest: Param, grid: Vec<f64>, loglik_p: Vec<f64>, mcle_value: f64, mcle_loglik: f64) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != loglik_p.len() {
            return Err(Error::invalid("grid and log-likelihood lengths differ"));
        }
        let n = grid.len();
        Ok(ProfileCurve {
            kind: CLKind::Independence,
            interest,
            layout: ParamLayout::marginal(),
            failed: loglik_p.iter().map(|l| !l.is_finite()).collect(),
            grid,
            loglik_p,
            nuisance_hat: vec![Vec::new(); n],
            mcle: ProfileMax {
                value: mcle_value,
                loglik: mcle_loglik,
                theta: Vec::new(),
                converged: true,
                separation: false,
            },
            adjustment: None,
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("profile grid is empty"));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("profile grid must be finite and strictly increasing"));
    }
    Ok(())
}

const GOLDEN_TOL: f64 = 1e-6;

/// Profiles `interest` over `grid` (log scale) for an already compiled likelihood.
pub fn profile_with(cl: &CompositeLikelihood, interest: Param, grid: &[f64], opts: &OptimizeOptions) -> Result<ProfileCurve> {
    check_grid(grid)?;
    let layout = cl.layout().clone();
    let idx = layout
        .index(interest)
        .ok_or_else(|| Error::invalid(format!("parameter {interest} is not free in this likelihood")))?;
    if idx == 0 {
        return Err(Error::invalid("the intercept is a nuisance parameter"));
    }
    let init = cl.initial_theta()?;
    let global = match maximize(cl, &[], &init, opts) {
        Ok(m) => Some(m),
        Err(Error::NonConvergence { .. }) | Err(Error::DegenerateCell { .. }) => None,
        Err(e) => return Err(e),
    };
    let fit_at = |value: f64, warm: &[f64]| -> Option<Mcle> {
        maximize(cl, &[(idx, value)], warm, opts).ok().filter(|m| m.converged)
    };

    let n = grid.len();
    let mut loglik_p = vec![f64::NAN; n];
    let mut nuisance_hat = vec![Vec::new(); n];
    let mut failed = vec![true; n];
    let centre = global.as_ref().map_or(init[idx], |m| m.theta[idx]);
    let start = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - centre).abs().total_cmp(&(b.1 - centre).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let seed = global.as_ref().map_or_else(|| init.clone(), |m| m.theta.clone());
    let mut warm = seed.clone();
    let order: Vec<usize> = (start..n).chain((0..start).rev()).collect();
    for k in order {
        if k + 1 == start {
            warm = if failed[start] { seed.clone() } else { nuisance_hat[start].clone() };
        }
        if let Some(m) = fit_at(grid[k], &warm) {
            loglik_p[k] = m.loglik;
            failed[k] = false;
            warm = m.theta.clone();
            nuisance_hat[k] = m.theta;
        }
    }

    let best = (0..n)
        .filter(|&k| !failed[k])
        .max_by(|&a, &b| loglik_p[a].total_cmp(&loglik_p[b]));
    let best_ll = best.map_or(f64::NEG_INFINITY, |k| loglik_p[k]);

    let mcle = match global {
        Some(m) if m.separation || (m.converged && m.loglik >= best_ll - 1e-9 * best_ll.abs().max(1.0)) => ProfileMax {
            value: m.theta[idx],
            loglik: m.loglik,
            converged: m.converged,
            separation: m.separation,
            theta: m.theta,
        },
        _ => {
            let b = best.ok_or_else(|| Error::NonConvergence {
                iterations: opts.max_iter,
                score_norm: f64::NAN,
                last: init.clone(),
            })?;
            golden_refine(grid, idx, b, &nuisance_hat[b], &fit_at)?
        }
    };

    Ok(ProfileCurve {
        kind: cl.kind(),
        interest,
        layout,
        grid: grid.to_vec(),
        loglik_p,
        nuisance_hat,
        failed,
        mcle,
        adjustment: None,
    })
}

fn golden_refine(grid: &[f64], idx: usize, best: usize, warm: &[f64], fit_at: &dyn Fn(f64, &[f64]) -> Option<Mcle>) -> Result<ProfileMax> {
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |t: f64| fit_at(t, warm).map_or((f64::NEG_INFINITY, None), |m| (m.loglik, Some(m)));
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut mc) = eval(c);
    let (mut fd, mut md) = eval(d);
    while hi - lo > GOLDEN_TOL {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            md = mc.take();
            c = hi - inv_phi * (hi - lo);
            (fc, mc) = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            mc = md.take();
            d = lo + inv_phi * (hi - lo);
            (fd, md) = eval(d);
        }
    }
    let m = if fc >= fd { mc } else { md };
    let m = m
        .or_else(|| fit_at(grid[best], warm))
        .ok_or_else(|| Error::NonConvergence {
            iterations: 0,
            score_norm: f64::NAN,
            last: warm.to_vec(),
        })?;
    Ok(ProfileMax {
        value: m.theta[idx],
        loglik: m.loglik,
        theta: m.theta,
        converged: true,
        separation: false,
    })
}

/// Profiles `interest` for `data` under `kind`.
pub fn profile_cl(data: &[FamilyData], kind: CLKind, interest: Param, grid: &[f64]) -> Result<ProfileCurve> {
    let cl = CompositeLikelihood::new(data, kind)?;
    profile_with(&cl, interest, grid, &OptimizeOptions::default())
}
