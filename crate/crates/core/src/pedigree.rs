//! Pedigree structure, relationship classification and built-in family designs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PairClasses, RelationshipClass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedigreeMember {
    pub id: String,
    pub father: Option<usize>,
    pub mother: Option<usize>,
    /// Whether the member is phenotyped/genotyped in the analysed data.
    /// Unobserved members only transmit alleles.
    pub observed: bool,
}

impl PedigreeMember {
    pub fn founder(id: impl Into<String>, observed: bool) -> Self {
        PedigreeMember {
            id: id.into(),
            father: None,
            mother: None,
            observed,
        }
    }

    pub fn child(id: impl Into<String>, father: usize, mother: usize, observed: bool) -> Self {
        PedigreeMember {
            id: id.into(),
            father: Some(father),
            mother: Some(mother),
            observed,
        }
    }

    pub fn is_founder(&self) -> bool {
        self.father.is_none() && self.mother.is_none()
    }
}

/// A validated (acyclic, referentially sound) pedigree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedigreeTemplate {
    members: Vec<PedigreeMember>,
    /// Members ordered so that parents precede children.
    order: Vec<usize>,
}

impl PedigreeTemplate {
    pub fn new(members: Vec<PedigreeMember>) -> Result<Self> {
        let n = members.len();
        for m in &members {
            for p in [m.father, m.mother].into_iter().flatten() {
                if p >= n {
                    return Err(Error::invalid(format!("member {} has parent index {p} out of range", m.id)));
                }
            }
        }
        let order = topological_order(&members)?;
        Ok(PedigreeTemplate { members, order })
    }

    /// Builds a template from `(id, father_id, mother_id, observed)` rows,
    /// where parent ids of `None` mark founders.
    pub fn from_ids<S: AsRef<str>>(rows: &[(S, Option<S>, Option<S>, bool)]) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, (id, ..)) in rows.iter().enumerate() {
            if index.insert(id.as_ref().to_string(), i).is_some() {
                return Err(Error::invalid(format!("duplicate member id `{}`", id.as_ref())));
            }
        }
        let lookup = |p: &Option<S>| -> Result<Option<usize>> {
            match p {
                None => Ok(None),
                Some(pid) => index
                    .get(pid.as_ref())
                    .copied()
                    .map(Some)
                    .ok_or_else(|| Error::invalid(format!("unknown parent id `{}`", pid.as_ref()))),
            }
        };
        let members = rows
            .iter()
            .map(|(id, f, m, observed)| {
                Ok(PedigreeMember {
                    id: id.as_ref().to_string(),
                    father: lookup(f)?,
                    mother: lookup(m)?,
                    observed: *observed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn members(&self) -> &[PedigreeMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Parents-before-children ordering.
    pub fn founders_first(&self) -> &[usize] {
        &self.order
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.members[i].observed).collect()
    }

    fn parents(&self, i: usize) -> [Option<usize>; 2] {
        [self.members[i].father, self.members[i].mother]
    }

    fn is_parent_of(&self, parent: usize, child: usize) -> bool {
        self.parents(child).contains(&Some(parent))
    }

    fn full_sibs(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        match (self.parents(a), self.parents(b)) {
            ([Some(fa), Some(ma)], [Some(fb), Some(mb)]) => {
                (fa == fb && ma == mb) || (fa == mb && ma == fb)
            }
            _ => false,
        }
    }

    fn is_grandparent_of(&self, gp: usize, child: usize) -> bool {
        self.parents(child)
            .into_iter()
            .flatten()
            .any(|p| self.is_parent_of(gp, p))
    }

    fn is_avuncular_to(&self, uncle: usize, child: usize) -> bool {
        self.parents(child)
            .into_iter()
            .flatten()
            .any(|p| self.full_sibs(uncle, p))
    }

    fn first_cousins(&self, a: usize, b: usize) -> bool {
        self.parents(a).into_iter().flatten().any(|pa| {
            self.parents(b)
                .into_iter()
                .flatten()
                .any(|pb| self.full_sibs(pa, pb))
        })
    }

    /// Classifies the pair `{a, b}`. Closer relationships win when a
    /// consanguineous pedigree admits several.
    pub fn classify(&self, a: usize, b: usize) -> RelationshipClass {
        if self.is_parent_of(a, b) || self.is_parent_of(b, a) {
            RelationshipClass::ParentOffspring
        } else if self.full_sibs(a, b) {
            RelationshipClass::Sibling
        } else if self.is_grandparent_of(a, b) || self.is_grandparent_of(b, a) {
            RelationshipClass::Grandparental
        } else if self.is_avuncular_to(a, b) || self.is_avuncular_to(b, a) {
            RelationshipClass::Avuncular
        } else if self.first_cousins(a, b) {
            RelationshipClass::Cousin
        } else {
            RelationshipClass::Unrelated
        }
    }

    /// Pair classes among the observed members, in member order.
    pub fn observed_pair_classes(&self) -> PairClasses {
        let keep = self.observed_indices();
        PairClasses::from_fn(keep.len(), |a, b| self.classify(keep[a], keep[b]))
    }

    pub fn all_pair_classes(&self) -> PairClasses {
        PairClasses::from_fn(self.len(), |a, b| self.classify(a, b))
    }

    /// `k` observed full siblings with unobserved parents.
    pub fn sibship(k: usize) -> Self {
        let mut members = vec![
            PedigreeMember::founder("F", false),
            PedigreeMember::founder("M", false),
        ];
        for i in 0..k {
            members.push(PedigreeMember::child(format!("S{}", i + 1), 0, 1, true));
        }
        Self::new(members).expect("sibship template is valid")
    }

    /// Two observed parents and `offspring` observed children.
    pub fn nuclear(offspring: usize) -> Self {
        let mut members = vec![
            PedigreeMember::founder("F", true),
            PedigreeMember::founder("M", true),
        ];
        for i in 0..offspring {
            members.push(PedigreeMember::child(format!("C{}", i + 1), 0, 1, true));
        }
        Self::new(members).expect("nuclear template is valid")
    }

    /// Three-generation, twelve-member pedigree: grandparents, their two
    /// children with spouses, and three grandchildren per couple. Contains
    /// all five dependent relationship classes.
    pub fn extended_twelve() -> Self {
        let members = vec![
            PedigreeMember::founder("GF", true),
            PedigreeMember::founder("GM", true),
            PedigreeMember::child("A", 0, 1, true),
            PedigreeMember::founder("SA", true),
            PedigreeMember::child("B", 0, 1, true),
            PedigreeMember::founder("SB", true),
            PedigreeMember::child("A1", 2, 3, true),
            PedigreeMember::child("A2", 2, 3, true),
            PedigreeMember::child("A3", 2, 3, true),
            PedigreeMember::child("B1", 4, 5, true),
            PedigreeMember::child("B2", 4, 5, true),
            PedigreeMember::child("B3", 4, 5, true),
        ];
        Self::new(members).expect("extended template is valid")
    }

    pub fn singleton() -> Self {
        Self::new(vec![PedigreeMember::founder("I", true)]).expect("singleton template is valid")
    }

    /// Reads a tab-separated template with header
    /// `individual_id  father_id  mother_id  observed` (`0` = no parent).
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, &path.display().to_string())
    }

    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut rows: Vec<(String, Option<String>, Option<String>, bool)> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !header_seen {
                if fields != ["individual_id", "father_id", "mother_id", "observed"] {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        line: line_no,
                        message: "expected header `individual_id\tfather_id\tmother_id\tobserved`".into(),
                    });
                }
                header_seen = true;
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let parent = |s: &str| (s != "0").then(|| s.to_string());
            let observed = match fields[3] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        line: line_no,
                        message: format!("observed must be 0 or 1, found `{other}`"),
                    })
                }
            };
            rows.push((fields[0].to_string(), parent(fields[1]), parent(fields[2]), observed));
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 0,
                message: "template has no members".into(),
            });
        }
        Self::from_ids(&rows)
    }

    /// Built-in designs by name: `extended12`, `singleton`, `sibshipK`, `nuclearK`
    /// (K = number of offspring).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "extended12" => Some(Self::extended_twelve()),
            "singleton" => Some(Self::singleton()),
            _ => {
                if let Some(k) = name.strip_prefix("sibship") {
                    k.parse().ok().filter(|&k| k >= 1).map(Self::sibship)
                } else if let Some(k) = name.strip_prefix("nuclear") {
                    k.parse().ok().map(Self::nuclear)
                } else {
                    None
                }
            }
        }
    }
}

fn topological_order(members: &[PedigreeMember]) -> Result<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let n = members.len();
    let mut state = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                state[node] = 2;
                order.push(node);
                continue;
            }
            match state[node] {
                2 => continue,
                1 => return Err(Error::CyclicPedigree(members[node].id.clone())),
                _ => {}
            }
            state[node] = 1;
            stack.push((node, true));
            for p in [members[node].father, members[node].mother].into_iter().flatten() {
                match state[p] {
                    0 => stack.push((p, false)),
                    1 => return Err(Error::CyclicPedigree(members[p].id.clone())),
                    _ => {}
                }
            }
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationshipClass::*;

    #[test]
    fn nuclear_family_classes() {
        let t = PedigreeTemplate::nuclear(3);
        let pc = t.observed_pair_classes();
        assert_eq!(pc.get(0, 1), Unrelated);
        for child in 2..5 {
            assert_eq!(pc.get(0, child), ParentOffspring);
            assert_eq!(pc.get(1, child), ParentOffspring);
        }
        assert_eq!(pc.get(2, 3), Sibling);
        assert_eq!(pc.get(3, 4), Sibling);
    }

    #[test]
    fn sibship_hides_parents() {
        let t = PedigreeTemplate::sibship(5);
        assert_eq!(t.observed_indices().len(), 5);
        let pc = t.observed_pair_classes();
        assert_eq!(pc.len(), 10);
        assert!(pc.iter().all(|(_, _, c)| c == Sibling));
    }

    #[test]
    fn extended_template_has_every_class() {
        let t = PedigreeTemplate::extended_twelve();
        let pc = t.observed_pair_classes();
        let count = |c| pc.iter().filter(|&(_, _, k)| k == c).count();
        assert_eq!(count(Sibling), 7);
        assert_eq!(count(ParentOffspring), 16);
        assert_eq!(count(Avuncular), 6);
        assert_eq!(count(Grandparental), 12);
        assert_eq!(count(Cousin), 9);
        assert_eq!(count(Unrelated), 16);
        // GF-A1 grandparental, A-B1 avuncular, A1-B1 cousins, SA-SB unrelated
        assert_eq!(pc.get(0, 6), Grandparental);
        assert_eq!(pc.get(2, 9), Avuncular);
        assert_eq!(pc.get(6, 9), Cousin);
        assert_eq!(pc.get(3, 5), Unrelated);
        assert_eq!(pc.get(3, 9), Unrelated);
    }

    #[test]
    fn founders_precede_children() {
        let t = PedigreeTemplate::extended_twelve();
        let pos: Vec<usize> = {
            let mut pos = vec![0; t.len()];
            for (rank, &i) in t.founders_first().iter().enumerate() {
                pos[i] = rank;
            }
            pos
        };
        for (i, m) in t.members().iter().enumerate() {
            for p in [m.father, m.mother].into_iter().flatten() {
                assert!(pos[p] < pos[i]);
            }
        }
    }

    #[test]
    fn cycle_rejected() {
        let members = vec![
            PedigreeMember {
                id: "a".into(),
                father: Some(1),
                mother: None,
                observed: true,
            },
            PedigreeMember {
                id: "b".into(),
                father: Some(0),
                mother: None,
                observed: true,
            },
        ];
        assert!(matches!(PedigreeTemplate::new(members), Err(Error::CyclicPedigree(_))));
    }

    #[test]
    fn half_sibs_are_unrelated() {
        let t = PedigreeTemplate::from_ids(&[
            ("f", None, None, true),
            ("m1", None, None, true),
            ("m2", None, None, true),
            ("c1", Some("f"), Some("m1"), true),
            ("c2", Some("f"), Some("m2"), true),
        ])
        .unwrap();
        assert_eq!(t.classify(3, 4), Unrelated);
    }

    #[test]
    fn template_tsv_roundtrip() {
        let text = "individual_id\tfather_id\tmother_id\tobserved\nF\t0\t0\t0\nM\t0\t0\t0\nK1\tF\tM\t1\nK2\tF\tM\t1\n";
        let t = PedigreeTemplate::parse_tsv(text, "mem").unwrap();
        assert_eq!(t.observed_indices(), vec![2, 3]);
        assert_eq!(t.observed_pair_classes().get(0, 1), Sibling);
        assert!(PedigreeTemplate::parse_tsv("bad\theader\n", "mem").is_err());
        let dangling = "individual_id\tfather_id\tmother_id\tobserved\nK1\tX\t0\t1\n";
        assert!(PedigreeTemplate::parse_tsv(dangling, "mem").is_err());
    }

    #[test]
    fn builtin_names() {
        assert_eq!(PedigreeTemplate::builtin("sibship4").unwrap().observed_indices().len(), 4);
        assert_eq!(PedigreeTemplate::builtin("nuclear3").unwrap().len(), 5);
        assert!(PedigreeTemplate::builtin("sibship0").is_none());
        assert!(PedigreeTemplate::builtin("nope").is_none());
    }
}
