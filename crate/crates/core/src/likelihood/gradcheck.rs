use super::{CLKind, CompositeLikelihood};
use crate::error::Result;
use crate::model::{FamilyData, ModelParams};

const STEP: f64 = 1e-5;

/// Largest relative discrepancy between the analytic score and Hessian and
/// central finite differences (of the log-likelihood and of the score).
///
/// Relative errors are taken against `max(|analytic|, 1)`.
pub fn check_gradient(data: &[FamilyData], params: &ModelParams, kind: CLKind) -> Result<f64> {
    let cl = CompositeLikelihood::new(data, kind)?;
    let theta = cl.layout().theta(params);
    let ev = cl.eval(&theta)?;
    let d = theta.len();
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let h = STEP * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[k] += h;
        dn[k] -= h;
        let (eu, ed) = (cl.eval(&up)?, cl.eval(&dn)?);
        let fd = (eu.loglik - ed.loglik) / (2.0 * h);
        worst = worst.max((fd - ev.score[k]).abs() / ev.score[k].abs().max(1.0));
        for j in 0..d {
            let fd = (eu.score[j] - ed.score[j]) / (2.0 * h);
            let a = ev.hessian[(j, k)];
            worst = worst.max((fd - a).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
