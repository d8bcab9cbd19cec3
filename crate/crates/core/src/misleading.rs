//! Probability of misleading evidence: the bump function, Monte Carlo
//! estimates under simulation, and the family-wise error bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::robust_adjustment;
use crate::likelihood::{maximize, CLKind, CompositeLikelihood, OptimizeOptions};
use crate::normal::norm_cdf;
use crate::simulate::{simulate_dataset, PhenotypeSampler, SimConfig};

fn check_k(k: f64) -> Result<()> {
    if k > 1.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("evidence threshold k = {k} must exceed 1")))
    }
}

/// `Φ(-c/2 - log(k)/c)`; zero for `c <= 0`.
pub fn bump(c: f64, k: f64) -> Result<f64> {
    check_k(k)?;
    if !(c > 0.0) {
        return Ok(0.0);
    }
    Ok(norm_cdf(-c / 2.0 - k.ln() / c))
}

/// `Φ(-sqrt(2 log k))`, the maximum of the bump over `c`.
pub fn bump_max(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(norm_cdf(-(2.0 * k.ln()).sqrt()))
}

/// Argument of the bump maximum, `sqrt(2 log k)`.
pub fn bump_argmax(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok((2.0 * k.ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpCurve {
    pub k: f64,
    pub c_values: Vec<f64>,
    pub prob: Vec<f64>,
}

impl BumpCurve {
    pub fn new(c_values: Vec<f64>, k: f64) -> Result<Self> {
        let prob = c_values.iter().map(|&c| bump(c, k)).collect::<Result<_>>()?;
        Ok(BumpCurve { k, c_values, prob })
    }
}

/// Monte Carlo misleading-evidence proportions over a grid of alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisleadingEstimate {
    pub k: f64,
    pub kind: CLKind,
    pub true_value: f64,
    /// Alternatives on the `beta1` scale.
    pub alt_values: Vec<f64>,
    pub proportion_raw: Vec<f64>,
    pub proportion_adjusted: Vec<f64>,
    /// Successful replicates (the denominator of the proportions).
    pub replicates: usize,
    pub failures: usize,
    /// Binomial standard error of `proportion_adjusted`.
    pub mc_se: Vec<f64>,
    pub mc_se_raw: Vec<f64>,
    pub mean_adjustment: f64,
    /// Bump function at `c* = |alt - truth| / se`, with `se` the mean sandwich
    /// standard error of the estimate across replicates.
    pub theory: BumpCurve,
    /// Set when more than 1% of replicates failed to fit.
    pub unreliable: bool,
}

struct ReplicateOutcome {
    /// log LR of each alternative against the truth.
    log_lr: Vec<f64>,
    adjustment: f64,
    variance: f64,
}

fn replicate_outcome(
    config: &SimConfig,
    sampler: &PhenotypeSampler,
    kind: CLKind,
    alts: &[f64],
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let data = simulate_dataset(config, sampler, replicate)?;
    let cl = CompositeLikelihood::new(&data, kind)?;
    let opts = OptimizeOptions::default();
    let global = maximize(&cl, &[], &cl.initial_theta()?, &opts)?;
    if !global.converged {
        return Err(Error::NonConvergence {
            iterations: global.iterations,
            score_norm: global.score_norm,
            last: global.theta,
        });
    }
    let (info, adjustment) = robust_adjustment(&cl, &global.theta, 1)?;
    let variance = info.sandwich_covariance()?[(1, 1)];
    let profile = |b: f64| -> Result<f64> {
        let m = maximize(&cl, &[(1, b)], &global.theta, &opts)?;
        if m.converged {
            Ok(m.loglik)
        } else {
            Err(Error::NonConvergence {
                iterations: m.iterations,
                score_norm: m.score_norm,
                last: m.theta,
            })
        }
    };
    let at_truth = profile(config.params.beta1)?;
    let log_lr = alts.iter().map(|&a| Ok(profile(a)? - at_truth)).collect::<Result<Vec<_>>>()?;
    Ok(ReplicateOutcome {
        log_lr,
        adjustment,
        variance,
    })
}

/// Estimates `M(n, k)` for each `k` in `ks` from one set of replicates.
pub fn estimate_misleading_multi(
    config: &SimConfig,
    alt_grid: &[f64],
    ks: &[f64],
    kind: CLKind,
    replicates: usize,
) -> Result<Vec<MisleadingEstimate>> {
    config.validate()?;
    if replicates < 100 {
        return Err(Error::invalid("need at least 100 replicates"));
    }
    if alt_grid.is_empty() || ks.is_empty() {
        return Err(Error::invalid("need at least one alternative and one threshold"));
    }
    let truth = config.params.beta1;
    if alt_grid.iter().any(|&a| !a.is_finite() || (a - truth).abs() <= 1e-12) {
        return Err(Error::invalid("alternatives must be finite and differ from the true value"));
    }
    for &k in ks {
        check_k(k)?;
    }
    let sampler = PhenotypeSampler::new(config.params)?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| replicate_outcome(config, &sampler, kind, alt_grid, r))
        .collect();
    let mut ok = Vec::with_capacity(replicates);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(Error::NonConvergence { .. })
            | Err(Error::DegenerateCell { .. })
            | Err(Error::SingularVariability { .. })
            | Err(Error::InvalidInformation(_)) => failures += 1,
            Err(Error::InvalidArgument(msg)) if msg.contains("case and one control") => failures += 1,
            Err(e) => return Err(e),
        }
    }
    let good = ok.len();
    if good == 0 {
        return Err(Error::invalid("every replicate failed to fit"));
    }
    let unreliable = failures as f64 > 0.01 * replicates as f64;
    if unreliable {
        log::warn!("{failures} of {replicates} replicates failed to fit");
    }
    let mean_adjustment = ok.iter().map(|o| o.adjustment).sum::<f64>() / good as f64;
    let se = (ok.iter().map(|o| o.variance).sum::<f64>() / good as f64).sqrt();
    let c_star: Vec<f64> = alt_grid.iter().map(|a| (a - truth).abs() / se).collect();
    let se_of = |p: f64| (p * (1.0 - p) / good as f64).sqrt();
    ks.iter()
        .map(|&k| {
            let lk = k.ln();
            let mut raw = vec![0usize; alt_grid.len()];
            let mut adj = vec![0usize; alt_grid.len()];
            for o in &ok {
                for (j, &l) in o.log_lr.iter().enumerate() {
                    raw[j] += usize::from(l >= lk);
                    adj[j] += usize::from(o.adjustment * l >= lk);
                }
            }
            let proportion_raw: Vec<f64> = raw.iter().map(|&c| c as f64 / good as f64).collect();
            let proportion_adjusted: Vec<f64> = adj.iter().map(|&c| c as f64 / good as f64).collect();
            Ok(MisleadingEstimate {
                k,
                kind,
                true_value: truth,
                alt_values: alt_grid.to_vec(),
                mc_se: proportion_adjusted.iter().map(|&p| se_of(p)).collect(),
                mc_se_raw: proportion_raw.iter().map(|&p| se_of(p)).collect(),
                proportion_raw,
                proportion_adjusted,
                replicates: good,
                failures,
                mean_adjustment,
                theory: BumpCurve::new(c_star.clone(), k)?,
                unreliable,
            })
        })
        .collect()
}

/// Fraction of replicates, simulated under `config.params`, whose adjusted
/// profile likelihood ratio for each alternative `beta1` against the truth
/// reaches `k`.
pub fn estimate_misleading(
    config: &SimConfig,
    alt_grid: &[f64],
    k: f64,
    kind: CLKind,
    replicates: usize,
) -> Result<MisleadingEstimate> {
    Ok(estimate_misleading_multi(config, alt_grid, &[k], kind, replicates)?.remove(0))
}

/// A family-wise error bound and its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwerRecord {
    pub n_eff: u64,
    pub m0: f64,
    pub bound: f64,
}

impl FwerRecord {
    pub fn new(n_eff: u64, m0: f64) -> Result<Self> {
        Ok(FwerRecord {
            n_eff,
            m0,
            bound: fwer_bound(n_eff, m0)?,
        })
    }
}

/// `min(1, n_eff * m0)`.
pub fn fwer_bound(n_eff: u64, m0: f64) -> Result<f64> {
    if n_eff < 1 {
        return Err(Error::invalid("effective number of tests must be at least 1"));
    }
    if !(0.0..=1.0).contains(&m0) {
        return Err(Error::invalid(format!("probability {m0} outside [0, 1]")));
    }
    Ok((n_eff as f64 * m0).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_limits() {
        assert_eq!(bump(0.0, 8.0).unwrap(), 0.0);
        assert!(bump(1e-3, 8.0).unwrap() < 1e-100);
        assert!(bump(1e3, 8.0).unwrap() < 1e-100);
        assert!(bump(1.0, 0.9).is_err());
        assert!(bump_max(1.0).is_err());
    }

    #[test]
    fn bump_max_near_half_for_small_k() {
        assert!((bump_max(1.0 + 1e-12).unwrap() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn fwer_caps_and_scales() {
        assert_eq!(fwer_bound(1413, 0.0).unwrap(), 0.0);
        assert_eq!(fwer_bound(1413, 0.01).unwrap(), 1.0);
        assert!((fwer_bound(10, 0.02).unwrap() - 0.2).abs() < 1e-15);
        assert!(fwer_bound(0, 0.1).is_err());
        assert!(fwer_bound(3, 1.5).is_err());
    }
}
