//! Independence and pairwise composite log-likelihoods for logistic margins.
//!
//! Data are compiled once into weighted counts: a 3x2 table of (genotype,
//! phenotype) for Bernoulli terms, and one 2x2 table per distinct
//! (genotype, genotype, relationship class) for pair terms. Evaluation cost is
//! then independent of the number of families.

mod gradcheck;
mod optimize;
mod profile;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inv_logit, log_inv_logit, logit, DependenceOdds, FamilyData, ModelParams, RelationshipClass};
use crate::plackett::{joint_derivatives, p11_unchecked};

pub use gradcheck::check_gradient;
pub use optimize::{maximize, maximize_cl, Mcle, OptimizeOptions};
pub use profile::{default_or_grid, grid_from_or_range, profile_cl, profile_with, ProfileCurve, ProfileMax};

const DEGENERATE_CELL: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CLKind {
    /// Product of Bernoulli margins.
    Independence,
    /// Pairwise likelihood, each family weighted by `1/(n_i - 1)`.
    PairwiseWeighted,
    /// Pairwise likelihood with unit family weights, for dependence inference.
    PairwiseUnweightedPsi,
}

impl CLKind {
    pub fn is_pairwise(self) -> bool {
        !matches!(self, CLKind::Independence)
    }

    pub fn name(self) -> &'static str {
        match self {
            CLKind::Independence => "independence",
            CLKind::PairwiseWeighted => "pairwise",
            CLKind::PairwiseUnweightedPsi => "pairwise-psi",
        }
    }
}

impl fmt::Display for CLKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CLKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independence" | "ind" => Ok(CLKind::Independence),
            "pairwise" | "pairwise-weighted" => Ok(CLKind::PairwiseWeighted),
            "pairwise-psi" | "pairwise-unweighted" => Ok(CLKind::PairwiseUnweightedPsi),
            other => Err(Error::invalid(format!("unknown composite likelihood `{other}`"))),
        }
    }
}

/// A single model parameter on its optimization scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Beta0,
    Beta1,
    /// `log psi` of a dependent relationship class.
    LogPsi(RelationshipClass),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Beta0 => f.write_str("beta0"),
            Param::Beta1 => f.write_str("beta1"),
            Param::LogPsi(c) => write!(f, "log_psi_{c}"),
        }
    }
}

impl FromStr for Param {
    type Err = Error;

    /// `beta0`, `beta1` or `log_psi_<class>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "beta0" => Ok(Param::Beta0),
            "beta1" => Ok(Param::Beta1),
            other => match other.strip_prefix("log_psi_") {
                Some(c) => Ok(Param::LogPsi(c.parse()?)),
                None => Err(Error::invalid(format!("unknown parameter `{other}`"))),
            },
        }
    }
}

/// Free parameters of a composite likelihood: `[beta0, beta1, log psi_c...]`
/// with one `log psi` per dependent class that occurs in the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub dependence: Vec<RelationshipClass>,
}

impl ParamLayout {
    pub fn marginal() -> Self {
        ParamLayout { dependence: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        2 + self.dependence.len()
    }

    pub fn index(&self, p: Param) -> Option<usize> {
        match p {
            Param::Beta0 => Some(0),
            Param::Beta1 => Some(1),
            Param::LogPsi(c) => self.dependence.iter().position(|&d| d == c).map(|k| k + 2),
        }
    }

    pub fn params(&self) -> Vec<Param> {
        let mut v = vec![Param::Beta0, Param::Beta1];
        v.extend(self.dependence.iter().map(|&c| Param::LogPsi(c)));
        v
    }

    pub fn theta(&self, params: &ModelParams) -> Vec<f64> {
        let mut t = vec![params.beta0, params.beta1];
        t.extend(self.dependence.iter().map(|&c| params.psi_for(c).ln()));
        t
    }

    /// Model parameters for `theta`; classes outside the layout get `psi = 1`.
    pub fn model_params(&self, theta: &[f64]) -> ModelParams {
        let mut psi = DependenceOdds::independent();
        for (k, &c) in self.dependence.iter().enumerate() {
            psi.set(c, theta[k + 2].exp());
        }
        ModelParams {
            beta0: theta[0],
            beta1: theta[1],
            psi,
        }
    }
}

/// Value and analytic derivatives of a composite log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CLEvaluation {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub per_family_scores: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
struct PairGroup {
    xa: u8,
    xb: u8,
    class: RelationshipClass,
    /// Weighted counts of cells (1,1), (1,0), (0,1), (0,0), `a` first.
    counts: [f64; 4],
    origin: (usize, usize, usize),
}

#[derive(Debug, Clone, Default)]
struct FamilyTerms {
    /// Bernoulli term weights by genotype, then case/control.
    singles: [[f64; 2]; 3],
    pairs: Vec<(usize, usize, f64)>,
}

/// Composite likelihood compiled from a dataset.
#[derive(Debug, Clone)]
pub struct CompositeLikelihood {
    kind: CLKind,
    layout: ParamLayout,
    singles: [[f64; 2]; 3],
    groups: Vec<PairGroup>,
    families: Vec<FamilyTerms>,
    family_ids: Vec<String>,
    cases: usize,
    controls: usize,
}

fn cell_index(ya: bool, yb: bool) -> usize {
    match (ya, yb) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

type GroupKey = (u8, u8, RelationshipClass);

impl CompositeLikelihood {
    /// Compiles `data`. Members missing a phenotype or genotype are dropped,
    /// together with every pair they belong to; a family left with a single
    /// member contributes its Bernoulli term under every kind.
    pub fn new(data: &[FamilyData], kind: CLKind) -> Result<Self> {
        let mut singles = [[0.0; 2]; 3];
        let mut group_map: BTreeMap<GroupKey, PairGroup> = BTreeMap::new();
        let mut raw: Vec<([[f64; 2]; 3], Vec<(GroupKey, usize, f64)>)> = Vec::with_capacity(data.len());
        let (mut cases, mut controls) = (0, 0);
        for (f, fam) in data.iter().enumerate() {
            if fam.pair_classes.members() != fam.size() {
                return Err(Error::invalid(format!("family {}: pair classes do not match members", fam.family_id)));
            }
            let used = fam.complete_members();
            let obs: Vec<(u8, bool)> = used
                .iter()
                .map(|&i| (fam.genotypes[i].unwrap().count(), fam.phenotypes[i].unwrap()))
                .collect();
            for &(_, y) in &obs {
                if y {
                    cases += 1;
                } else {
                    controls += 1;
                }
            }
            let mut fs = [[0.0; 2]; 3];
            let mut fp = Vec::new();
            if !kind.is_pairwise() || used.len() == 1 {
                for &(x, y) in &obs {
                    singles[x as usize][usize::from(!y)] += 1.0;
                    fs[x as usize][usize::from(!y)] += 1.0;
                }
            } else if used.len() >= 2 {
                let w = match kind {
                    CLKind::PairwiseWeighted => 1.0 / (used.len() - 1) as f64,
                    _ => 1.0,
                };
                for a in 0..used.len() {
                    for b in (a + 1)..used.len() {
                        let class = fam.pair_classes.get(used[a], used[b]);
                        let ((xa, ya), (xb, yb)) = if obs[a].0 <= obs[b].0 { (obs[a], obs[b]) } else { (obs[b], obs[a]) };
                        let key = (xa, xb, class);
                        let cell = cell_index(ya, yb);
                        let g = group_map.entry(key).or_insert_with(|| PairGroup {
                            xa,
                            xb,
                            class,
                            counts: [0.0; 4],
                            origin: (f, used[a], used[b]),
                        });
                        g.counts[cell] += w;
                        fp.push((key, cell, w));
                    }
                }
            }
            raw.push((fs, fp));
        }
        let ids: BTreeMap<GroupKey, usize> = group_map.keys().enumerate().map(|(k, key)| (*key, k)).collect();
        let groups: Vec<PairGroup> = group_map.into_values().collect();
        let families = raw
            .into_iter()
            .map(|(s, p)| FamilyTerms {
                singles: s,
                pairs: p.into_iter().map(|(key, cell, w)| (ids[&key], cell, w)).collect(),
            })
            .collect();
        let mut dependence: Vec<RelationshipClass> = RelationshipClass::DEPENDENT
            .into_iter()
            .filter(|c| groups.iter().any(|g| g.class == *c))
            .collect();
        if !kind.is_pairwise() {
            dependence.clear();
        }
        Ok(CompositeLikelihood {
            kind,
            layout: ParamLayout { dependence },
            singles,
            groups,
            families,
            family_ids: data.iter().map(|f| f.family_id.clone()).collect(),
            cases,
            controls,
        })
    }

    pub fn kind(&self) -> CLKind {
        self.kind
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    /// Numbers of (cases, controls) among the members used.
    pub fn case_control(&self) -> (usize, usize) {
        (self.cases, self.controls)
    }

    /// Deterministic starting point: `beta0` at the logit of the case
    /// fraction, `beta1 = 0`, every `log psi = 0`.
    pub fn initial_theta(&self) -> Result<Vec<f64>> {
        if self.cases == 0 || self.controls == 0 {
            return Err(Error::invalid("need at least one case and one control among the used observations"));
        }
        let frac = self.cases as f64 / (self.cases + self.controls) as f64;
        let mut t = vec![0.0; self.layout.dim()];
        t[0] = logit(frac);
        Ok(t)
    }

    /// Log-likelihood, score and Hessian at `theta` (no per-family scores).
    pub fn eval(&self, theta: &[f64]) -> Result<CLEvaluation> {
        self.evaluate(theta, false)
    }

    /// As [`eval`](Self::eval), plus the per-family score contributions.
    pub fn eval_full(&self, theta: &[f64]) -> Result<CLEvaluation> {
        self.evaluate(theta, true)
    }

    /// Log-likelihood only.
    pub fn loglik(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let mut ll = 0.0;
        for (x, row) in self.singles.iter().enumerate() {
            if row[0] + row[1] == 0.0 {
                continue;
            }
            let eta = theta[0] + theta[1] * x as f64;
            ll += row[0] * log_inv_logit(eta) + row[1] * log_inv_logit(-eta);
        }
        for (gi, g) in self.groups.iter().enumerate() {
            let (pa, pb, psi) = self.group_margins(g, theta);
            let p11 = p11_unchecked(pa, pb, psi);
            let cells = [p11, pa - p11, pb - p11, 1.0 - pa - pb + p11];
            for r in 0..4 {
                if g.counts[r] == 0.0 {
                    continue;
                }
                if !(cells[r] > DEGENERATE_CELL) {
                    return Err(self.degenerate(gi, cells[r]));
                }
                ll += g.counts[r] * cells[r].ln();
            }
        }
        Ok(ll)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.dim() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, layout needs {}",
                theta.len(),
                self.layout.dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(())
    }

    fn degenerate(&self, group: usize, prob: f64) -> Error {
        let (f, i, j) = self.groups[group].origin;
        Error::DegenerateCell {
            family: self.family_ids[f].clone(),
            i,
            j,
            prob,
        }
    }

    fn psi_index(&self, class: RelationshipClass) -> Option<usize> {
        if class == RelationshipClass::Unrelated {
            None
        } else {
            self.layout.index(Param::LogPsi(class))
        }
    }

    fn group_margins(&self, g: &PairGroup, theta: &[f64]) -> (f64, f64, f64) {
        let pa = inv_logit(theta[0] + theta[1] * g.xa as f64);
        let pb = inv_logit(theta[0] + theta[1] * g.xb as f64);
        let psi = self.psi_index(g.class).map_or(1.0, |k| theta[k].exp());
        (pa, pb, psi)
    }

    fn evaluate(&self, theta: &[f64], per_family: bool) -> Result<CLEvaluation> {
        self.check_theta(theta)?;
        let d = self.layout.dim();
        let mut ll = 0.0;
        let mut score = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);

        // Bernoulli terms: d/dbeta log-lik = (y - p) z, d2 = -p(1-p) z z'.
        let mut single_resid = [[0.0; 2]; 3];
        for (x, row) in self.singles.iter().enumerate() {
            let xf = x as f64;
            let eta = theta[0] + theta[1] * xf;
            let p = inv_logit(eta);
            single_resid[x] = [1.0 - p, -p];
            let (w1, w0) = (row[0], row[1]);
            if w1 + w0 == 0.0 {
                continue;
            }
            ll += w1 * log_inv_logit(eta) + w0 * log_inv_logit(-eta);
            let r = w1 - (w1 + w0) * p;
            score[0] += r;
            score[1] += r * xf;
            let v = (w1 + w0) * p * (1.0 - p);
            hess[(0, 0)] -= v;
            hess[(0, 1)] -= v * xf;
            hess[(1, 1)] -= v * xf * xf;
        }

        // Pair terms: per group, the gradient of each log cell in local
        // coordinates (beta0, beta1, log psi).
        let mut cell_grads: Vec<[[f64; 3]; 4]> = Vec::with_capacity(if per_family { self.groups.len() } else { 0 });
        for (gi, g) in self.groups.iter().enumerate() {
            let (pa, pb, psi) = self.group_margins(g, theta);
            let psi_idx = self.psi_index(g.class);
            let jd = joint_derivatives(pa, pb, psi);
            let f = jd.p11;
            let cells = [f, pa - f, pb - f, 1.0 - pa - pb + f];
            // cell = const + lin_a pa + lin_b pb + s f
            const LIN: [(f64, f64, f64); 4] = [(0.0, 0.0, 1.0), (1.0, 0.0, -1.0), (0.0, 1.0, -1.0), (-1.0, -1.0, 1.0)];
            // Jacobian of u = (pa, pb, psi) with respect to local theta.
            let (xa, xb) = (g.xa as f64, g.xb as f64);
            let (va, vb) = (pa * (1.0 - pa), pb * (1.0 - pb));
            let free_psi = psi_idx.is_some();
            let jac = [
                [va, va * xa, 0.0],
                [vb, vb * xb, 0.0],
                [0.0, 0.0, if free_psi { psi } else { 0.0 }],
            ];
            let (ca, cb) = (va * (1.0 - 2.0 * pa), vb * (1.0 - 2.0 * pb));
            let u_hess = [
                [[ca, ca * xa, 0.0], [ca * xa, ca * xa * xa, 0.0], [0.0; 3]],
                [[cb, cb * xb, 0.0], [cb * xb, cb * xb * xb, 0.0], [0.0; 3]],
                [[0.0; 3], [0.0; 3], [0.0, 0.0, if free_psi { psi } else { 0.0 }]],
            ];
            let globals = [Some(0), Some(1), psi_idx];
            let mut grads = [[0.0; 3]; 4];
            for r in 0..4 {
                let (la, lb, s) = LIN[r];
                let c = cells[r];
                let w = g.counts[r];
                if w != 0.0 && !(c > DEGENERATE_CELL) {
                    return Err(self.degenerate(gi, c));
                }
                let dc_du = [la + s * jd.grad[0], lb + s * jd.grad[1], s * jd.grad[2]];
                let mut dc = [0.0; 3];
                for a in 0..3 {
                    dc[a] = (0..3).map(|k| dc_du[k] * jac[k][a]).sum();
                }
                let g_log = [dc[0] / c, dc[1] / c, dc[2] / c];
                grads[r] = g_log;
                if w == 0.0 {
                    continue;
                }
                ll += w * c.ln();
                for a in 0..3 {
                    let Some(ga) = globals[a] else { continue };
                    score[ga] += w * g_log[a];
                    for b in a..3 {
                        let Some(gb) = globals[b] else { continue };
                        let mut d2 = 0.0;
                        for k in 0..3 {
                            for l in 0..3 {
                                d2 += s * jd.hess[k][l] * jac[k][a] * jac[l][b];
                            }
                            d2 += dc_du[k] * u_hess[k][a][b];
                        }
                        let h = w * (d2 / c - g_log[a] * g_log[b]);
                        hess[(ga, gb)] += h;
                        if ga != gb {
                            hess[(gb, ga)] += h;
                        }
                    }
                }
            }
            if per_family {
                cell_grads.push(grads);
            }
        }
        // Bernoulli blocks only filled the upper triangle.
        hess[(1, 0)] = hess[(0, 1)];

        let per_family_scores = if per_family {
            let group_globals: Vec<Option<usize>> = self.groups.iter().map(|g| self.psi_index(g.class)).collect();
            self.families
                .par_iter()
                .map(|fam| {
                    let mut u = DVector::zeros(d);
                    for (x, row) in fam.singles.iter().enumerate() {
                        let r = row[0] * single_resid[x][0] + row[1] * single_resid[x][1];
                        u[0] += r;
                        u[1] += r * x as f64;
                    }
                    for &(gi, cell, w) in &fam.pairs {
                        let gl = &cell_grads[gi][cell];
                        u[0] += w * gl[0];
                        u[1] += w * gl[1];
                        if let Some(k) = group_globals[gi] {
                            u[k] += w * gl[2];
                        }
                    }
                    u
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(CLEvaluation {
            loglik: ll,
            score,
            hessian: hess,
            per_family_scores,
        })
    }
}

/// Evaluates the composite likelihood of `kind` at `params`, with per-family
/// scores. Free dependence parameters are those of the classes present.
pub fn cl_eval(data: &[FamilyData], params: &ModelParams, kind: CLKind) -> Result<CLEvaluation> {
    let cl = CompositeLikelihood::new(data, kind)?;
    let theta = cl.layout().theta(params);
    cl.eval_full(&theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Genotype, PairClasses};

    fn g(c: u8) -> Genotype {
        Genotype::new(c).unwrap()
    }

    #[test]
    fn singleton_half() {
        let data = vec![FamilyData::singleton("s", true, g(0))];
        let ev = cl_eval(&data, &ModelParams::independent(0.0, 0.0), CLKind::Independence).unwrap();
        assert!((ev.loglik - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(ev.score.len(), 2);
    }

    #[test]
    fn empty_data_is_zero() {
        let ev = cl_eval(&[], &ModelParams::independent(0.3, -0.2), CLKind::PairwiseWeighted).unwrap();
        assert_eq!(ev.loglik, 0.0);
        assert!(ev.score.iter().all(|&s| s == 0.0));
        assert!(ev.per_family_scores.is_empty());
    }

    #[test]
    fn missing_members_dropped() {
        let pc = PairClasses::uniform(3, RelationshipClass::Sibling);
        let fam = FamilyData::new(
            "f",
            vec![Some(true), None, Some(false)],
            vec![Some(g(1)), Some(g(2)), Some(g(0))],
            pc.clone(),
        )
        .unwrap();
        let reduced = FamilyData::complete("f", &[true, false], &[g(1), g(0)], pc.subset(&[0, 2])).unwrap();
        let p = ModelParams::new(-0.4, 0.7, DependenceOdds::uniform(2.0)).unwrap();
        for kind in [CLKind::Independence, CLKind::PairwiseWeighted, CLKind::PairwiseUnweightedPsi] {
            let a = cl_eval(std::slice::from_ref(&fam), &p, kind).unwrap();
            let b = cl_eval(std::slice::from_ref(&reduced), &p, kind).unwrap();
            assert!((a.loglik - b.loglik).abs() < 1e-14);
        }
    }

    #[test]
    fn score_is_sum_of_family_scores() {
        let pc = PairClasses::from_fn(3, |i, _| if i == 0 { RelationshipClass::ParentOffspring } else { RelationshipClass::Sibling });
        let data = vec![
            FamilyData::complete("a", &[true, false, true], &[g(1), g(0), g(2)], pc.clone()).unwrap(),
            FamilyData::complete("b", &[false, false, true], &[g(0), g(1), g(1)], pc.clone()).unwrap(),
            FamilyData::singleton("c", true, g(2)),
        ];
        let p = ModelParams::new(-0.3, 0.5, DependenceOdds::from_array([2.0, 1.5, 1.0, 1.0, 1.0])).unwrap();
        for kind in [CLKind::Independence, CLKind::PairwiseWeighted, CLKind::PairwiseUnweightedPsi] {
            let ev = cl_eval(&data, &p, kind).unwrap();
            let total = ev.per_family_scores.iter().fold(DVector::zeros(ev.score.len()), |acc, u| acc + u);
            assert!((total - &ev.score).amax() < 1e-10);
            assert!((&ev.hessian - ev.hessian.transpose()).amax() < 1e-10);
        }
    }

    #[test]
    fn degenerate_cell_reported() {
        let pc = PairClasses::uniform(2, RelationshipClass::Sibling);
        let data = vec![FamilyData::complete("fam7", &[true, false], &[g(0), g(0)], pc).unwrap()];
        let cl = CompositeLikelihood::new(&data, CLKind::PairwiseWeighted).unwrap();
        // psi = e^800 forces the discordant cells to zero
        let err = cl.eval(&[0.0, 0.0, 800.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCell { ref family, .. } if family == "fam7"), "{err:?}");
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in [CLKind::Independence, CLKind::PairwiseWeighted, CLKind::PairwiseUnweightedPsi] {
            assert_eq!(k.name().parse::<CLKind>().unwrap(), k);
        }
    }
}
