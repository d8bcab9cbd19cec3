//! Replicated simulation studies of the maximum composite likelihood estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{maximize, CLKind, CompositeLikelihood, OptimizeOptions, Param};
use crate::simulate::{simulate_dataset, PhenotypeSampler, SimConfig};

/// Estimates of one parameter from one likelihood at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub kind: CLKind,
    pub interest: Param,
    pub n_families: usize,
    /// Per replicate; `None` where the fit failed or was separated.
    pub estimates: Vec<Option<f64>>,
    pub failures: usize,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of `mean`.
    pub mc_se: f64,
}

impl ReplicateSummary {
    fn new(kind: CLKind, interest: Param, n_families: usize, estimates: Vec<Option<f64>>) -> Self {
        let vals: Vec<f64> = estimates.iter().flatten().copied().collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        ReplicateSummary {
            kind,
            interest,
            n_families,
            failures: estimates.len() - vals.len(),
            mean,
            sd: var.sqrt(),
            mc_se: (var / m).sqrt(),
            estimates,
        }
    }
}

fn fit(data: &[crate::model::FamilyData], kind: CLKind, interest: Param) -> Option<f64> {
    let cl = CompositeLikelihood::new(data, kind).ok()?;
    let idx = cl.layout().index(interest)?;
    let m = maximize(&cl, &[], &cl.initial_theta().ok()?, &OptimizeOptions::default()).ok()?;
    (m.converged && !m.separation).then(|| m.theta[idx])
}

/// Simulates `replicates` datasets of `max(sizes)` families and fits every
/// likelihood in `kinds` to each prefix of `sizes` families. Smaller sample
/// sizes therefore reuse the leading families of the larger ones.
///
/// Results are ordered by size, then kind.
pub fn replicate_study(
    config: &SimConfig,
    sizes: &[usize],
    kinds: &[CLKind],
    interest: Param,
    replicates: usize,
) -> Result<Vec<ReplicateSummary>> {
    if sizes.is_empty() || kinds.is_empty() || replicates < 2 {
        return Err(Error::invalid("need sample sizes, likelihoods and at least two replicates"));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    let largest = *sizes.iter().max().unwrap();
    let config = config.with_families(largest);
    config.validate()?;
    let sampler = PhenotypeSampler::new(config.params)?;
    let per_rep: Vec<Vec<Option<f64>>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<f64>>> {
            let data = simulate_dataset(&config, &sampler, r)?;
            Ok(sizes
                .iter()
                .flat_map(|&n| kinds.iter().map(move |&k| (n, k)))
                .map(|(n, k)| fit(&data[..n], k, interest))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut col = 0;
    for &n in sizes {
        for &k in kinds {
            let est = per_rep.iter().map(|row| row[col]).collect();
            out.push(ReplicateSummary::new(k, interest, n, est));
            col += 1;
        }
    }
    Ok(out)
}
