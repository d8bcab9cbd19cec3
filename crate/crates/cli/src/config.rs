//! JSON configuration file. Every key is optional; command-line flags win.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use famcl_core::likelihood::grid_from_or_range;
use famcl_core::{DependenceOdds, PedigreeTemplate};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub k: Option<Vec<f64>>,
    pub cl: Option<String>,
    pub grid_or: Option<String>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub threads: Option<usize>,
    pub n_eff: Option<u64>,
    pub m0: Option<Vec<f64>>,
    pub template: Option<String>,
    pub template_file: Option<PathBuf>,
    pub families: Option<usize>,
    pub maf: Option<f64>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub psi: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub interest: Option<String>,
    pub alt_beta: Option<String>,
    pub null_snps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag, else config value, else default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

/// `lo:hi:points` on the odds-ratio scale, returned on the log scale.
pub fn parse_or_grid(spec: &str) -> Result<Vec<f64>> {
    let (lo, hi, n) = parse_range(spec)?;
    Ok(grid_from_or_range(lo, hi, n)?)
}

/// `lo:hi:points`, equally spaced on the given scale.
pub fn parse_linear_grid(spec: &str) -> Result<Vec<f64>> {
    let (lo, hi, n) = parse_range(spec)?;
    if !(hi > lo) || n < 1 {
        bail!("bad range `{spec}`");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn parse_range(spec: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("expected lo:hi:points, got `{spec}`");
    }
    let lo: f64 = parts[0].trim().parse().with_context(|| format!("bad lower bound in `{spec}`"))?;
    let hi: f64 = parts[1].trim().parse().with_context(|| format!("bad upper bound in `{spec}`"))?;
    let n: usize = parts[2].trim().parse().with_context(|| format!("bad point count in `{spec}`"))?;
    Ok((lo, hi, n))
}

/// A single number for every class, or `sib=3,po=2.5,...`.
pub fn parse_psi(spec: &str) -> Result<DependenceOdds> {
    if let Ok(v) = spec.trim().parse::<f64>() {
        let odds = DependenceOdds::uniform(v);
        odds.validate()?;
        return Ok(odds);
    }
    Ok(DependenceOdds::parse_assignments(spec)?)
}

/// Comma-separated built-in names, each optionally repeated as `name*count`.
pub fn parse_templates(spec: &str) -> Result<Vec<PedigreeTemplate>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, count) = match part.split_once('*') {
            Some((n, c)) => (n.trim(), c.trim().parse::<usize>().with_context(|| format!("bad count in `{part}`"))?),
            None => (part, 1),
        };
        let t = PedigreeTemplate::builtin(name).with_context(|| {
            format!("unknown template `{name}` (built-ins: extended12, singleton, sibshipK, nuclearK)")
        })?;
        out.extend(std::iter::repeat_n(t, count));
    }
    if out.is_empty() {
        bail!("no family template given");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file() {
        assert_eq!(pick(Some(3), &Some(2), 1), 3);
        assert_eq!(pick(None, &Some(2), 1), 2);
        assert_eq!(pick(None, &None, 1), 1);
    }

    #[test]
    fn templates_repeat() {
        let t = parse_templates("nuclear3, singleton*2").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].len(), 5);
        assert!(parse_templates("pentagon").is_err());
    }

    #[test]
    fn ranges() {
        let g = parse_or_grid("0.5:2:3").unwrap();
        assert!((g[1]).abs() < 1e-15);
        assert_eq!(parse_linear_grid("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_or_grid("1:2").is_err());
        assert_eq!(parse_psi("3").unwrap().cousin, 3.0);
        assert_eq!(parse_psi("sib=2").unwrap().parent_offspring, 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"kk": 1}"#).is_err());
        let c: FileConfig = serde_json::from_str(r#"{"k": [8, 32], "seed": 5}"#).unwrap();
        assert_eq!(c.seed, Some(5));
    }
}
