//! Correlated binary family data by the discretized multivariate normal method.
//!
//! For each family, marginal probabilities come from the logistic model at the
//! members' genotypes and pairwise joints from the Plackett odds ratio of each
//! pair's relationship class. A latent Gaussian vector with thresholds `z(p_i)`
//! and correlations solved pair by pair reproduces those first and second
//! moments exactly.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FamilyData, Genotype, ModelParams, PairClasses, RelationshipClass};
use crate::normal::{bvn_cdf_unchecked, norm_quantile};
use crate::pedigree::PedigreeTemplate;
use crate::plackett::{self, check_compatibility, PairMargins};

const RHO_BRACKET: f64 = 1.0 - 1e-9;
const RHO_WIDTH: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussianSpec {
    /// `z(p_i)`; member `i` is affected when its latent value is at or below this.
    pub thresholds: Vec<f64>,
    pub rho: DMatrix<f64>,
}

impl LatentGaussianSpec {
    pub fn dim(&self) -> usize {
        self.thresholds.len()
    }

    /// Lower-triangular factor `F` with `F Fᵀ = rho` (after regularization of
    /// numerically semi-definite matrices).
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        latent_factor(self.rho.clone())
    }
}

fn latent_factor(rho: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = rho.clone().cholesky() {
        return Ok(chol.l());
    }
    let min_eig = SymmetricEigen::new(rho.clone()).eigenvalues.min();
    if min_eig < -PSD_TOL {
        return Err(Error::NonPsdLatentCorrelation { min_eigenvalue: min_eig });
    }
    // Numerically semi-definite: nudge the diagonal and renormalize to unit diagonal.
    let n = rho.nrows();
    let regularized = (rho + DMatrix::identity(n, n) * PSD_TOL) / (1.0 + PSD_TOL);
    regularized
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NonPsdLatentCorrelation { min_eigenvalue: min_eig })
}

/// Latent correlation reproducing binary correlation `delta` between
/// margins `p_i`, `p_j`, found by bisection on `Φ₂(z(p_i), z(p_j), ρ)`.
pub fn solve_latent_rho(p_i: f64, p_j: f64, delta: f64) -> Result<f64> {
    solve_rho_for_pair(p_i, p_j, delta, (0, 1))
}

fn solve_rho_for_pair(p_i: f64, p_j: f64, delta: f64, pair: (usize, usize)) -> Result<f64> {
    for p in [p_i, p_j] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("margin {p} must lie strictly inside (0, 1)")));
        }
    }
    if !delta.is_finite() {
        return Err(Error::invalid("binary correlation must be finite"));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let target = p_i * p_j + delta * (p_i * (1.0 - p_i) * p_j * (1.0 - p_j)).sqrt();
    solve_rho_for_joint(p_i, p_j, target, pair)
}

fn solve_rho_for_joint(p_i: f64, p_j: f64, target: f64, pair: (usize, usize)) -> Result<f64> {
    let (h, k) = (norm_quantile(p_i), norm_quantile(p_j));
    let f = |r: f64| bvn_cdf_unchecked(h, k, r);
    let (mut lo, mut hi) = (-RHO_BRACKET, RHO_BRACKET);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if target < f_lo - 1e-12 || target > f_hi + 1e-12 {
        return Err(Error::IncompatibleCorrelation {
            i: pair.0,
            j: pair.1,
            target,
            lo: f_lo,
            hi: f_hi,
        });
    }
    while hi - lo > RHO_WIDTH {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Thresholds and latent correlations for one family's margins and pairwise
/// binary correlations (keyed `(i, j)`, `i < j`; absent pairs are independent).
pub fn build_latent_spec(margins: &[f64], deltas: &BTreeMap<(usize, usize), f64>) -> Result<LatentGaussianSpec> {
    let n = margins.len();
    let mut joints = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = deltas.get(&(i, j)).copied().unwrap_or(0.0);
            let (pi, pj) = (margins[i], margins[j]);
            joints.insert((i, j), pi * pj + delta * (pi * (1.0 - pi) * pj * (1.0 - pj)).sqrt());
        }
    }
    let report = check_compatibility(margins, &joints)?;
    if let Some(v) = report.violations.first() {
        return Err(match *v {
            plackett::CompatibilityViolation::Frechet { i, j, p11, lo, hi } => Error::IncompatibleCorrelation {
                i,
                j,
                target: p11,
                lo,
                hi,
            },
            ref other => Error::invalid(format!("incompatible margins/correlations: {other:?}")),
        });
    }
    let mut rho = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = deltas.get(&(i, j)).copied().unwrap_or(0.0);
            let r = solve_rho_for_pair(margins[i], margins[j], delta, (i, j))?;
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    let spec = LatentGaussianSpec {
        thresholds: margins.iter().map(|&p| norm_quantile(p)).collect(),
        rho,
    };
    spec.factor()?;
    Ok(spec)
}

/// Founders are drawn under Hardy–Weinberg equilibrium; every child receives
/// one allele from each parent with fair Mendelian transmission. A missing
/// parent transmits a population allele.
pub fn simulate_genotypes<R: Rng + ?Sized>(template: &PedigreeTemplate, maf: f64, rng: &mut R) -> Result<Vec<Genotype>> {
    if !(0.0..=1.0).contains(&maf) {
        return Err(Error::invalid(format!("minor allele frequency {maf} outside [0, 1]")));
    }
    let members = template.members();
    let mut genotypes: Vec<Option<Genotype>> = vec![None; members.len()];
    for &i in template.founders_first() {
        let m = &members[i];
        let mut count = 0u8;
        for parent in [m.father, m.mother] {
            let transmitted = match parent {
                None => rng.random_bool(maf),
                Some(p) => {
                    let g = genotypes[p].expect("parents are simulated first").count();
                    match g {
                        0 => false,
                        2 => true,
                        _ => rng.random_bool(0.5),
                    }
                }
            };
            count += u8::from(transmitted);
        }
        genotypes[i] = Some(Genotype::new(count)?);
    }
    Ok(genotypes.into_iter().map(|g| g.expect("every member visited")).collect())
}

/// Phenotype generator for fixed model parameters.
///
/// Latent correlations depend only on the two genotypes and the pair's
/// relationship class, so they are solved once per distinct triple and shared
/// across families, replicates and threads.
pub struct PhenotypeSampler {
    params: ModelParams,
    thresholds: [f64; 3],
    rho_cache: [OnceLock<f64>; 54],
}

fn class_slot(class: RelationshipClass) -> usize {
    match class {
        RelationshipClass::Sibling => 0,
        RelationshipClass::ParentOffspring => 1,
        RelationshipClass::Avuncular => 2,
        RelationshipClass::Grandparental => 3,
        RelationshipClass::Cousin => 4,
        RelationshipClass::Unrelated => 5,
    }
}

impl PhenotypeSampler {
    pub fn new(params: ModelParams) -> Result<Self> {
        ModelParams::new(params.beta0, params.beta1, params.psi)?;
        let thresholds = [0u8, 1, 2].map(|x| norm_quantile(params.marginal(Genotype::new(x).expect("valid count"))));
        Ok(PhenotypeSampler {
            params,
            thresholds,
            rho_cache: std::array::from_fn(|_| OnceLock::new()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn latent_rho(&self, gi: Genotype, gj: Genotype, class: RelationshipClass, pair: (usize, usize)) -> Result<f64> {
        let psi = self.params.psi_for(class);
        if (psi - 1.0).abs() <= plackett::INDEPENDENCE_EPS {
            return Ok(0.0);
        }
        let (a, b) = if gi <= gj { (gi, gj) } else { (gj, gi) };
        let slot = &self.rho_cache[(a.count() as usize * 3 + b.count() as usize) * 6 + class_slot(class)];
        if let Some(&r) = slot.get() {
            return Ok(r);
        }
        let (pa, pb) = (self.params.marginal(a), self.params.marginal(b));
        let p11 = plackett::joint_prob(&PairMargins::new(pa, pb, psi)?)?;
        let r = solve_rho_for_joint(pa, pb, p11, pair)?;
        Ok(*slot.get_or_init(|| r))
    }

    /// Latent specification for one family.
    pub fn latent_spec(&self, genotypes: &[Genotype], pair_classes: &PairClasses) -> Result<LatentGaussianSpec> {
        let n = genotypes.len();
        if pair_classes.members() != n {
            return Err(Error::invalid("pair classes do not match family size"));
        }
        let mut rho = DMatrix::identity(n, n);
        for (i, j, class) in pair_classes.iter() {
            let r = self.latent_rho(genotypes[i], genotypes[j], class, (i, j))?;
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
        let thresholds = genotypes.iter().map(|&g| self.thresholds[g.count() as usize]).collect();
        Ok(LatentGaussianSpec { thresholds, rho })
    }

    /// Draws one phenotype vector given the family's genotypes.
    pub fn sample<R: Rng + ?Sized>(&self, genotypes: &[Genotype], pair_classes: &PairClasses, rng: &mut R) -> Result<Vec<bool>> {
        if genotypes.len() == 1 {
            return Ok(vec![rng.random::<f64>() < self.params.marginal(genotypes[0])]);
        }
        let spec = self.latent_spec(genotypes, pair_classes)?;
        let factor = spec.factor()?;
        let e = DVector::from_iterator(genotypes.len(), (0..genotypes.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = factor * e;
        Ok(z.iter().zip(&spec.thresholds).map(|(zi, t)| zi <= t).collect())
    }
}

/// One phenotype vector for a family with known genotypes.
pub fn simulate_phenotypes<R: Rng + ?Sized>(
    genotypes: &[Genotype],
    pair_classes: &PairClasses,
    params: &ModelParams,
    rng: &mut R,
) -> Result<Vec<bool>> {
    PhenotypeSampler::new(*params)?.sample(genotypes, pair_classes, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_families: usize,
    /// Family `f` uses `templates[f % templates.len()]`.
    pub templates: Vec<PedigreeTemplate>,
    pub maf: f64,
    pub params: ModelParams,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_families: usize, template: PedigreeTemplate, maf: f64, params: ModelParams, seed: u64) -> Self {
        SimConfig {
            n_families,
            templates: vec![template],
            maf,
            params,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_families == 0 {
            return Err(Error::invalid("need at least one family"));
        }
        if self.templates.is_empty() || self.templates.iter().any(|t| t.observed_indices().is_empty()) {
            return Err(Error::invalid("every family template needs at least one observed member"));
        }
        if !(self.maf > 0.0 && self.maf < 1.0) {
            return Err(Error::invalid(format!("minor allele frequency {} outside (0, 1)", self.maf)));
        }
        if self.maf >= 0.5 {
            log::warn!("minor allele frequency {} is not below 0.5", self.maf);
        }
        ModelParams::new(self.params.beta0, self.params.beta1, self.params.psi)?;
        Ok(())
    }

    pub fn with_families(&self, n_families: usize) -> Self {
        SimConfig {
            n_families,
            ..self.clone()
        }
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        SimConfig {
            params,
            ..self.clone()
        }
    }
}

/// Independent stream for `(seed, replicate, family)`; `tag` separates
/// independent uses of the same family slot.
pub fn substream(seed: u64, replicate: u64, family: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&family.to_le_bytes());
    key[24..].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A simulated family with all template members (observed or not).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFamily {
    pub template_index: usize,
    pub genotypes: Vec<Genotype>,
    pub phenotypes: Vec<bool>,
}

struct PreparedTemplate {
    observed: Vec<usize>,
    classes: PairClasses,
}

fn prepare(config: &SimConfig) -> Vec<PreparedTemplate> {
    config
        .templates
        .iter()
        .map(|t| PreparedTemplate {
            observed: t.observed_indices(),
            classes: t.observed_pair_classes(),
        })
        .collect()
}

fn simulate_prepared(
    config: &SimConfig,
    prepared: &[PreparedTemplate],
    sampler: &PhenotypeSampler,
    replicate: u64,
    family: usize,
) -> Result<SimulatedFamily> {
    let template_index = family % config.templates.len();
    let template = &config.templates[template_index];
    let prep = &prepared[template_index];
    let mut rng = substream(config.seed, replicate, family as u64, 0);
    let genotypes = simulate_genotypes(template, config.maf, &mut rng)?;
    let obs_genotypes: Vec<Genotype> = prep.observed.iter().map(|&i| genotypes[i]).collect();
    let obs_pheno = sampler.sample(&obs_genotypes, &prep.classes, &mut rng)?;
    let mut phenotypes = vec![false; template.len()];
    for (k, &i) in prep.observed.iter().enumerate() {
        phenotypes[i] = obs_pheno[k];
    }
    Ok(SimulatedFamily {
        template_index,
        genotypes,
        phenotypes,
    })
}

/// Simulates family `family` of replicate `replicate`. Family `f` depends only
/// on `(seed, replicate, f)`, so smaller studies are prefixes of larger ones.
pub fn simulate_family(config: &SimConfig, sampler: &PhenotypeSampler, replicate: u64, family: usize) -> Result<SimulatedFamily> {
    simulate_prepared(config, &prepare(config), sampler, replicate, family)
}

/// Analysis-ready families (observed members only) for one replicate.
pub fn simulate_dataset(config: &SimConfig, sampler: &PhenotypeSampler, replicate: u64) -> Result<Vec<FamilyData>> {
    let prepared = prepare(config);
    (0..config.n_families)
        .map(|f| {
            let t = f % config.templates.len();
            let prep = &prepared[t];
            let mut rng = substream(config.seed, replicate, f as u64, 0);
            let all = simulate_genotypes(&config.templates[t], config.maf, &mut rng)?;
            let genotypes: Vec<Genotype> = prep.observed.iter().map(|&i| all[i]).collect();
            let phenotypes = sampler.sample(&genotypes, &prep.classes, &mut rng)?;
            Ok(FamilyData {
                family_id: (f + 1).to_string(),
                phenotypes: phenotypes.into_iter().map(Some).collect(),
                genotypes: genotypes.into_iter().map(Some).collect(),
                pair_classes: prep.classes.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DependenceOdds;
    use crate::normal::bvn_cdf;
    use std::f64::consts::PI;

    #[test]
    fn zero_delta_gives_zero_rho() {
        assert_eq!(solve_latent_rho(0.3, 0.7, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn median_closed_form() {
        for delta in [0.1, 0.5, -0.3, 0.9] {
            let rho = solve_latent_rho(0.5, 0.5, delta).unwrap();
            assert!((rho - (PI * delta / 2.0).sin()).abs() < 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn roundtrip_recovers_plackett_joint() {
        let p0 = crate::model::inv_logit(-2.38);
        let m = PairMargins::new(p0, p0, 3.0).unwrap();
        let delta = plackett::pair_correlation(&m).unwrap();
        assert!((delta - 0.120).abs() < 5e-4);
        let rho = solve_latent_rho(p0, p0, delta).unwrap();
        let z = norm_quantile(p0);
        let p11 = bvn_cdf(z, z, rho).unwrap();
        assert!((p11 - plackett::joint_prob(&m).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn unattainable_correlation_rejected() {
        // maximal attainable correlation for these margins, plus 0.01
        let (pi, pj) = (0.2, 0.6);
        let (_, hi) = plackett::attainable_correlation(pi, pj);
        let err = solve_latent_rho(pi, pj, hi + 0.01).unwrap_err();
        assert!(matches!(err, Error::IncompatibleCorrelation { .. }));
        let mut deltas = BTreeMap::new();
        deltas.insert((0, 1), hi + 0.01);
        assert!(matches!(
            build_latent_spec(&[pi, pj], &deltas),
            Err(Error::IncompatibleCorrelation { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn independent_fair_margins() {
        let spec = build_latent_spec(&[0.5; 4], &BTreeMap::new()).unwrap();
        assert!(spec.thresholds.iter().all(|t| t.abs() < 1e-15));
        assert_eq!(spec.rho, DMatrix::identity(4, 4));
    }

    #[test]
    fn non_psd_target_reported() {
        // Three binary variables pairwise correlated +0.9, -0.9, +0.9: latent matrix indefinite.
        let mut deltas = BTreeMap::new();
        deltas.insert((0, 1), 0.9);
        deltas.insert((0, 2), 0.9);
        deltas.insert((1, 2), -0.9);
        let err = build_latent_spec(&[0.5; 3], &deltas).unwrap_err();
        assert!(
            matches!(err, Error::NonPsdLatentCorrelation { min_eigenvalue } if min_eigenvalue < 0.0)
                || matches!(err, Error::InvalidArgument(_)),
            "{err:?}"
        );
    }

    #[test]
    fn factor_reproduces_matrix() {
        let params = ModelParams::new(-2.38, 1.76, DependenceOdds::from_array([3.0, 2.5, 2.0, 1.5, 1.2])).unwrap();
        let sampler = PhenotypeSampler::new(params).unwrap();
        let t = PedigreeTemplate::extended_twelve();
        let g: Vec<Genotype> = [0, 1, 2, 1, 0, 0, 1, 2, 1, 0, 1, 1].iter().map(|&c| Genotype::new(c).unwrap()).collect();
        let spec = sampler.latent_spec(&g, &t.observed_pair_classes()).unwrap();
        let f = spec.factor().unwrap();
        let diff = (&f * f.transpose() - &spec.rho).abs().max();
        assert!(diff <= 1e-10);
    }

    #[test]
    fn mendelian_certainty_and_zero_maf() {
        let t = PedigreeTemplate::nuclear(3);
        let mut rng = substream(1, 0, 0, 0);
        let g = simulate_genotypes(&t, 0.0, &mut rng).unwrap();
        assert!(g.iter().all(|&x| x == Genotype::ZERO));
        let g = simulate_genotypes(&t, 1.0, &mut rng).unwrap();
        assert!(g.iter().all(|&x| x == Genotype::TWO));
        assert!(simulate_genotypes(&t, 1.5, &mut rng).is_err());
    }

    #[test]
    fn single_member_is_bernoulli() {
        let params = ModelParams::independent(0.0, 0.0);
        let sampler = PhenotypeSampler::new(params).unwrap();
        let pc = PairClasses::uniform(1, RelationshipClass::Unrelated);
        let mut rng = substream(3, 0, 0, 0);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| sampler.sample(&[Genotype::ONE], &pc, &mut rng).unwrap()[0])
            .count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt() + 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let params = ModelParams::new(-1.0, 2.0, DependenceOdds::uniform(3.0)).unwrap();
        let cfg = SimConfig::new(20, PedigreeTemplate::nuclear(3), 0.2, params, 99);
        let s1 = PhenotypeSampler::new(params).unwrap();
        let s2 = PhenotypeSampler::new(params).unwrap();
        let a = simulate_dataset(&cfg, &s1, 4).unwrap();
        let b = simulate_dataset(&cfg, &s2, 4).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&cfg, &s1, 5).unwrap();
        assert_ne!(a, c);
        // prefix property
        let small = simulate_dataset(&cfg.with_families(7), &s1, 4).unwrap();
        assert_eq!(&a[..7], &small[..]);
    }
}
