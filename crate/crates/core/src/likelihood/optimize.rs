use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{CLKind, CompositeLikelihood, Param, ParamLayout};
use crate::error::{Error, Result};
use crate::model::{FamilyData, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Convergence when the max-norm of the free score is at most this.
    pub score_tol: f64,
    /// `|beta1|` beyond this is reported as separation.
    pub separation_bound: f64,
    /// Above this condition number Newton steps give way to coordinate solves.
    pub max_condition: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iter: 50,
            score_tol: 1e-8,
            separation_bound: 15.0,
            max_condition: 1e12,
        }
    }
}

/// A (possibly constrained) maximizer of a composite likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mcle {
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Max-norm of the score over free parameters.
    pub score_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
}

impl Mcle {
    pub fn params(&self, layout: &ParamLayout) -> ModelParams {
        layout.model_params(&self.theta)
    }
}

struct State {
    theta: Vec<f64>,
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn state(cl: &CompositeLikelihood, theta: Vec<f64>, free: &[usize]) -> Result<State> {
    let ev = cl.eval(&theta)?;
    let grad = DVector::from_iterator(free.len(), free.iter().map(|&i| ev.score[i]));
    let hess = DMatrix::from_fn(free.len(), free.len(), |a, b| ev.hessian[(free[a], free[b])]);
    Ok(State {
        theta,
        loglik: ev.loglik,
        grad,
        hess,
    })
}

fn accepts(new: f64, old: f64) -> bool {
    new.is_finite() && new >= old - 1e-12 * old.abs().max(1.0)
}

/// Maximizes over every coordinate not listed in `fixed` (index, value),
/// starting from `init`.
pub fn maximize(cl: &CompositeLikelihood, fixed: &[(usize, f64)], init: &[f64], opts: &OptimizeOptions) -> Result<Mcle> {
    let dim = cl.layout().dim();
    if init.len() != dim {
        return Err(Error::invalid(format!("initial vector has length {}, expected {dim}", init.len())));
    }
    let mut theta = init.to_vec();
    for &(i, v) in fixed {
        if i >= dim {
            return Err(Error::invalid(format!("constraint index {i} out of range")));
        }
        theta[i] = v;
    }
    let free: Vec<usize> = (0..dim).filter(|i| !fixed.iter().any(|&(j, _)| j == *i)).collect();
    let beta1_free = free.contains(&1);
    let mut s = state(cl, theta, &free)?;
    let norm = |s: &State| s.grad.amax();
    for it in 0..=opts.max_iter {
        if free.is_empty() || norm(&s) <= opts.score_tol {
            return Ok(finish(s, it, true, opts));
        }
        if beta1_free && s.theta[1].abs() > opts.separation_bound {
            return Ok(finish(s, it, false, opts));
        }
        if it == opts.max_iter {
            break;
        }
        let neg_h = -&s.hess;
        let eig = SymmetricEigen::new(neg_h.clone());
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.amax());
        let well_posed = lo > 0.0 && hi / lo <= opts.max_condition;
        let mut moved = false;
        if well_posed {
            if let Some(chol) = neg_h.cholesky() {
                let step = chol.solve(&s.grad);
                let mut t = 1.0;
                for _ in 0..40 {
                    let mut cand = s.theta.clone();
                    for (k, &i) in free.iter().enumerate() {
                        cand[i] += t * step[k];
                    }
                    if let Ok(next) = state(cl, cand, &free) {
                        if accepts(next.loglik, s.loglik) {
                            s = next;
                            moved = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
        }
        if !moved {
            let (next, any) = coordinate_sweep(cl, s, &free, opts)?;
            s = next;
            if !any {
                let score_norm = norm(&s);
                return Err(Error::NonConvergence {
                    iterations: it + 1,
                    score_norm,
                    last: s.theta,
                });
            }
        }
    }
    if beta1_free && s.theta[1].abs() > opts.separation_bound {
        return Ok(finish(s, opts.max_iter, false, opts));
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        score_norm: norm(&s),
        last: s.theta,
    })
}

fn finish(s: State, iterations: usize, converged: bool, opts: &OptimizeOptions) -> Mcle {
    let score_norm = s.grad.amax();
    Mcle {
        separation: s.theta[1].abs() > opts.separation_bound,
        theta: s.theta,
        loglik: s.loglik,
        score_norm,
        iterations,
        converged,
    }
}

/// One pass of safeguarded one-dimensional root finding on each free score
/// component in turn. Returns whether any coordinate moved.
fn coordinate_sweep(cl: &CompositeLikelihood, mut s: State, free: &[usize], opts: &OptimizeOptions) -> Result<(State, bool)> {
    let mut any = false;
    for (k, &i) in free.iter().enumerate() {
        if s.grad[k].abs() <= opts.score_tol {
            continue;
        }
        let score_at = |t: f64, base: &[f64]| -> Option<(f64, State)> {
            let mut cand = base.to_vec();
            cand[i] = t;
            let st = state(cl, cand, free).ok()?;
            Some((st.grad[k], st))
        };
        let base = s.theta.clone();
        let t0 = base[i];
        let dir = s.grad[k].signum();
        // Expand until the score changes sign; the 1-D profile is concave in
        // every coordinate used here, so the root is then bracketed.
        let mut width = 0.25;
        let mut lo = t0;
        let mut hi = None;
        let mut best: Option<State> = None;
        for _ in 0..60 {
            let t = t0 + dir * width;
            match score_at(t, &base) {
                Some((g, st)) if g * dir > 0.0 => {
                    lo = t;
                    if accepts(st.loglik, s.loglik) {
                        best = Some(st);
                    }
                    width *= 2.0;
                }
                Some((_, _)) | None => {
                    hi = Some(t);
                    break;
                }
            }
        }
        if let Some(mut hi) = hi {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (hi - lo).abs() <= 1e-14 * (1.0 + mid.abs()) {
                    break;
                }
                match score_at(mid, &base) {
                    Some((g, st)) => {
                        if g * dir > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        let done = g.abs() <= 0.1 * opts.score_tol;
                        if accepts(st.loglik, best.as_ref().map_or(s.loglik, |b| b.loglik)) {
                            best = Some(st);
                        }
                        if done {
                            break;
                        }
                    }
                    None => hi = mid,
                }
            }
        }
        if let Some(b) = best {
            if b.theta[i] != t0 {
                any = true;
            }
            s = b;
        }
    }
    Ok((s, any))
}

/// Maximizes the composite likelihood of `kind` on `data`.
///
/// `fixed` pins parameters (e.g. `beta1` for profiling); the rest start at
/// `init` when given, else at the default starting point.
pub fn maximize_cl(
    data: &[FamilyData],
    kind: CLKind,
    fixed: &[(Param, f64)],
    init: Option<&ModelParams>,
) -> Result<(ParamLayout, Mcle)> {
    if data.is_empty() {
        return Err(Error::invalid("no families"));
    }
    let cl = CompositeLikelihood::new(data, kind)?;
    let layout = cl.layout().clone();
    let start = match init {
        Some(p) => layout.theta(p),
        None => cl.initial_theta()?,
    };
    let fixed_idx = fixed
        .iter()
        .map(|&(p, v)| {
            layout
                .index(p)
                .map(|i| (i, v))
                .ok_or_else(|| Error::invalid(format!("parameter {p} is not free in this likelihood")))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = maximize(&cl, &fixed_idx, &start, &OptimizeOptions::default())?;
    Ok((layout, m))
}
