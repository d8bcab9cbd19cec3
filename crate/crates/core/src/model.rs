//! Domain types shared across the crate and the logistic marginal model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minor-allele count at a biallelic SNP under additive coding.
///
/// Missing genotypes are carried as `Option<Genotype>::None` by the
/// containers; there is no sentinel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Genotype(u8);

impl Genotype {
    pub const ZERO: Genotype = Genotype(0);
    pub const ONE: Genotype = Genotype(1);
    pub const TWO: Genotype = Genotype(2);

    pub fn new(count: u8) -> Result<Self> {
        if count <= 2 {
            Ok(Genotype(count))
        } else {
            Err(Error::invalid(format!("genotype count {count} not in {{0, 1, 2}}")))
        }
    }

    #[inline]
    pub fn count(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn dosage(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<u8> for Genotype {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Genotype::new(value)
    }
}

impl From<Genotype> for u8 {
    fn from(g: Genotype) -> u8 {
        g.0
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Relationship between two members of a pedigree.
///
/// Only the five named classes carry their own dependence odds ratio;
/// everything else (spouses, half-sibs, distant relatives) is `Unrelated`
/// and is modelled as independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationshipClass {
    Sibling,
    ParentOffspring,
    Avuncular,
    Grandparental,
    Cousin,
    Unrelated,
}

impl RelationshipClass {
    /// The classes that carry a free dependence parameter, in canonical order.
    pub const DEPENDENT: [RelationshipClass; 5] = [
        RelationshipClass::Sibling,
        RelationshipClass::ParentOffspring,
        RelationshipClass::Avuncular,
        RelationshipClass::Grandparental,
        RelationshipClass::Cousin,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RelationshipClass::Sibling => "sib",
            RelationshipClass::ParentOffspring => "po",
            RelationshipClass::Avuncular => "avunc",
            RelationshipClass::Grandparental => "gp",
            RelationshipClass::Cousin => "cousin",
            RelationshipClass::Unrelated => "unrel",
        }
    }
}

impl fmt::Display for RelationshipClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for RelationshipClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sib" | "sibling" => Ok(RelationshipClass::Sibling),
            "po" | "parent_offspring" | "parent-offspring" => Ok(RelationshipClass::ParentOffspring),
            "avunc" | "avuncular" => Ok(RelationshipClass::Avuncular),
            "gp" | "grandparental" => Ok(RelationshipClass::Grandparental),
            "cousin" => Ok(RelationshipClass::Cousin),
            "unrel" | "unrelated" => Ok(RelationshipClass::Unrelated),
            other => Err(Error::invalid(format!("unknown relationship class `{other}`"))),
        }
    }
}

/// Plackett odds ratios for the five dependent relationship classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceOdds {
    pub sibling: f64,
    pub parent_offspring: f64,
    pub avuncular: f64,
    pub grandparental: f64,
    pub cousin: f64,
}

impl Default for DependenceOdds {
    fn default() -> Self {
        Self::independent()
    }
}

impl DependenceOdds {
    pub fn independent() -> Self {
        Self::uniform(1.0)
    }

    pub fn uniform(psi: f64) -> Self {
        DependenceOdds {
            sibling: psi,
            parent_offspring: psi,
            avuncular: psi,
            grandparental: psi,
            cousin: psi,
        }
    }

    /// Odds ratios in canonical class order (sib, po, avuncular, grandparental, cousin).
    pub fn from_array(values: [f64; 5]) -> Self {
        DependenceOdds {
            sibling: values[0],
            parent_offspring: values[1],
            avuncular: values[2],
            grandparental: values[3],
            cousin: values[4],
        }
    }

    #[inline]
    pub fn get(&self, class: RelationshipClass) -> f64 {
        match class {
            RelationshipClass::Sibling => self.sibling,
            RelationshipClass::ParentOffspring => self.parent_offspring,
            RelationshipClass::Avuncular => self.avuncular,
            RelationshipClass::Grandparental => self.grandparental,
            RelationshipClass::Cousin => self.cousin,
            RelationshipClass::Unrelated => 1.0,
        }
    }

    /// Sets the odds ratio of a dependent class. Setting `Unrelated` is a no-op.
    pub fn set(&mut self, class: RelationshipClass, psi: f64) {
        match class {
            RelationshipClass::Sibling => self.sibling = psi,
            RelationshipClass::ParentOffspring => self.parent_offspring = psi,
            RelationshipClass::Avuncular => self.avuncular = psi,
            RelationshipClass::Grandparental => self.grandparental = psi,
            RelationshipClass::Cousin => self.cousin = psi,
            RelationshipClass::Unrelated => {}
        }
    }

    /// Parses `sib=3,po=2.5,...`; unspecified classes stay independent.
    pub fn parse_assignments(spec: &str) -> Result<Self> {
        let mut odds = DependenceOdds::independent();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected class=value, got `{part}`")))?;
            let class: RelationshipClass = name.parse()?;
            let psi: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad odds ratio `{value}`")))?;
            odds.set(class, psi);
        }
        odds.validate()?;
        Ok(odds)
    }

    pub fn validate(&self) -> Result<()> {
        for class in RelationshipClass::DEPENDENT {
            let psi = self.get(class);
            if !psi.is_finite() || psi < 0.0 {
                return Err(Error::invalid(format!("odds ratio for {class} must be finite and >= 0, got {psi}")));
            }
        }
        Ok(())
    }
}

/// Marginal logistic coefficients plus per-relationship dependence odds ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default)]
    pub psi: DependenceOdds,
}

impl ModelParams {
    pub fn new(beta0: f64, beta1: f64, psi: DependenceOdds) -> Result<Self> {
        if !beta0.is_finite() || !beta1.is_finite() {
            return Err(Error::invalid("logistic coefficients must be finite"));
        }
        psi.validate()?;
        Ok(ModelParams { beta0, beta1, psi })
    }

    pub fn independent(beta0: f64, beta1: f64) -> Self {
        ModelParams {
            beta0,
            beta1,
            psi: DependenceOdds::independent(),
        }
    }

    #[inline]
    pub fn psi_for(&self, class: RelationshipClass) -> f64 {
        self.psi.get(class)
    }

    pub fn marginal(&self, x: Genotype) -> f64 {
        inv_logit(self.beta0 + self.beta1 * x.dosage())
    }
}

/// Inverse-logit of `beta0 + beta1 * x`.
pub fn marginal_prob(beta0: f64, beta1: f64, x: Genotype) -> Result<f64> {
    if !beta0.is_finite() || !beta1.is_finite() {
        return Err(Error::invalid("marginal_prob requires finite coefficients"));
    }
    Ok(inv_logit(beta0 + beta1 * x.dosage()))
}

#[inline]
pub(crate) fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(inv_logit(eta))` without cancellation for large |eta|.
#[inline]
pub(crate) fn log_inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Relationship classes for every unordered pair of an `n`-member family,
/// stored row-major over the strict upper triangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairClasses {
    n: usize,
    classes: Vec<RelationshipClass>,
}

impl PairClasses {
    pub fn new(n: usize, classes: Vec<RelationshipClass>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if classes.len() != expected {
            return Err(Error::invalid(format!(
                "{n}-member family needs {expected} pair classes, got {}",
                classes.len()
            )));
        }
        Ok(PairClasses { n, classes })
    }

    /// All pairs in one class (e.g. a sibship).
    pub fn uniform(n: usize, class: RelationshipClass) -> Self {
        PairClasses {
            n,
            classes: vec![class; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> RelationshipClass) -> Self {
        let mut classes = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                classes.push(f(i, j));
            }
        }
        PairClasses { n, classes }
    }

    pub fn members(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    /// Class of the unordered pair `{i, j}`; panics on `i == j` or out of range.
    pub fn get(&self, i: usize, j: usize) -> RelationshipClass {
        assert!(i != j && i < self.n && j < self.n, "invalid pair ({i}, {j})");
        self.classes[self.index(i, j)]
    }

    /// Iterates `(i, j, class)` with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, RelationshipClass)> + '_ {
        (0..self.n)
            .flat_map(move |i| ((i + 1)..self.n).map(move |j| (i, j)))
            .zip(self.classes.iter().copied())
            .map(|((i, j), c)| (i, j, c))
    }

    pub fn as_slice(&self) -> &[RelationshipClass] {
        &self.classes
    }

    /// Restricts to the listed members, preserving their order.
    pub fn subset(&self, keep: &[usize]) -> PairClasses {
        PairClasses::from_fn(keep.len(), |a, b| self.get(keep[a], keep[b]))
    }
}

/// One family's phenotypes, genotypes at one SNP, and pair relationships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyData {
    pub family_id: String,
    pub phenotypes: Vec<Option<bool>>,
    pub genotypes: Vec<Option<Genotype>>,
    pub pair_classes: PairClasses,
}

impl FamilyData {
    pub fn new(
        family_id: impl Into<String>,
        phenotypes: Vec<Option<bool>>,
        genotypes: Vec<Option<Genotype>>,
        pair_classes: PairClasses,
    ) -> Result<Self> {
        let family_id = family_id.into();
        if phenotypes.is_empty() {
            return Err(Error::invalid(format!("family {family_id} has no members")));
        }
        if phenotypes.len() != genotypes.len() {
            return Err(Error::invalid(format!(
                "family {family_id}: {} phenotypes but {} genotypes",
                phenotypes.len(),
                genotypes.len()
            )));
        }
        if pair_classes.members() != phenotypes.len() {
            return Err(Error::invalid(format!(
                "family {family_id}: pair classes describe {} members, family has {}",
                pair_classes.members(),
                phenotypes.len()
            )));
        }
        Ok(FamilyData {
            family_id,
            phenotypes,
            genotypes,
            pair_classes,
        })
    }

    /// Fully observed family from plain vectors.
    pub fn complete(
        family_id: impl Into<String>,
        phenotypes: &[bool],
        genotypes: &[Genotype],
        pair_classes: PairClasses,
    ) -> Result<Self> {
        Self::new(
            family_id,
            phenotypes.iter().map(|&y| Some(y)).collect(),
            genotypes.iter().map(|&g| Some(g)).collect(),
            pair_classes,
        )
    }

    pub fn singleton(family_id: impl Into<String>, phenotype: bool, genotype: Genotype) -> Self {
        FamilyData {
            family_id: family_id.into(),
            phenotypes: vec![Some(phenotype)],
            genotypes: vec![Some(genotype)],
            pair_classes: PairClasses::uniform(1, RelationshipClass::Unrelated),
        }
    }

    pub fn size(&self) -> usize {
        self.phenotypes.len()
    }

    /// Indices of members with both phenotype and genotype observed.
    pub fn complete_members(&self) -> Vec<usize> {
        (0..self.size())
            .filter(|&i| self.phenotypes[i].is_some() && self.genotypes[i].is_some())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genotype_rejects_out_of_range() {
        assert!(Genotype::new(3).is_err());
        assert_eq!(Genotype::new(2).unwrap(), Genotype::TWO);
    }

    #[test]
    fn marginal_prob_values() {
        assert_eq!(marginal_prob(0.0, 0.0, Genotype::ZERO).unwrap(), 0.5);
        let p0 = marginal_prob(-2.38, 1.76, Genotype::ZERO).unwrap();
        assert!((p0 / (1.0 - p0) - 0.0925).abs() < 5e-4);
        // exp(-0.62) / (1 + exp(-0.62)) evaluated independently in extended precision
        let p1 = marginal_prob(-2.38, 1.76, Genotype::ONE).unwrap();
        assert!((p1 - 0.349_781_451_426_172_94).abs() < 1e-14);
        assert!(marginal_prob(f64::NAN, 0.0, Genotype::ONE).is_err());
        assert!(marginal_prob(0.0, f64::INFINITY, Genotype::ONE).is_err());
    }

    #[test]
    fn odds_ratio_recovered_from_beta1() {
        assert!((1.76f64.exp() - 5.8).abs() < 0.05);
    }

    #[test]
    fn marginal_prob_monotone() {
        let xs = [Genotype::ZERO, Genotype::ONE, Genotype::TWO];
        for w in xs.windows(2) {
            assert!(marginal_prob(-1.0, 0.7, w[0]).unwrap() < marginal_prob(-1.0, 0.7, w[1]).unwrap());
        }
        let mut last = 0.0;
        for b0 in [-3.0, -1.0, 0.0, 2.0] {
            let p = marginal_prob(b0, 0.5, Genotype::ONE).unwrap();
            assert!(p > last && p < 1.0);
            last = p;
        }
    }

    #[test]
    fn extreme_linear_predictor_stays_inside_unit_interval() {
        assert!(inv_logit(-700.0) > 0.0);
        assert!(inv_logit(30.0) < 1.0);
        assert!((log_inv_logit(-800.0) + 800.0).abs() < 1e-12);
        assert!((log_inv_logit(2.0) - inv_logit(2.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn unrelated_always_independent() {
        let odds = DependenceOdds::uniform(4.0);
        assert_eq!(odds.get(RelationshipClass::Unrelated), 1.0);
        let mut odds = odds;
        odds.set(RelationshipClass::Unrelated, 9.0);
        assert_eq!(odds.get(RelationshipClass::Unrelated), 1.0);
    }

    #[test]
    fn parse_odds_assignments() {
        let odds = DependenceOdds::parse_assignments("sib=3, po=2.5,cousin=1.2").unwrap();
        assert_eq!(odds.sibling, 3.0);
        assert_eq!(odds.parent_offspring, 2.5);
        assert_eq!(odds.avuncular, 1.0);
        assert_eq!(odds.cousin, 1.2);
        assert!(DependenceOdds::parse_assignments("sib=-1").is_err());
        assert!(DependenceOdds::parse_assignments("bogus=2").is_err());
    }

    #[test]
    fn pair_classes_cover_every_pair() {
        let pc = PairClasses::from_fn(4, |i, j| {
            if i == 0 && j == 1 {
                RelationshipClass::Unrelated
            } else {
                RelationshipClass::Sibling
            }
        });
        assert_eq!(pc.len(), 6);
        assert_eq!(pc.get(1, 0), RelationshipClass::Unrelated);
        assert_eq!(pc.get(2, 3), RelationshipClass::Sibling);
        let pairs: Vec<_> = pc.iter().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(PairClasses::new(3, vec![RelationshipClass::Sibling; 2]).is_err());
        assert!(PairClasses::uniform(1, RelationshipClass::Sibling).is_empty());
    }

    #[test]
    fn family_lengths_checked() {
        let pc = PairClasses::uniform(2, RelationshipClass::Sibling);
        assert!(FamilyData::new("f", vec![Some(true)], vec![Some(Genotype::ONE)], pc.clone()).is_err());
        assert!(FamilyData::new("f", vec![], vec![], PairClasses::uniform(0, RelationshipClass::Sibling)).is_err());
        let fam = FamilyData::new(
            "f",
            vec![Some(true), None],
            vec![Some(Genotype::ONE), Some(Genotype::ZERO)],
            pc,
        )
        .unwrap();
        assert_eq!(fam.complete_members(), vec![0]);
    }
}
