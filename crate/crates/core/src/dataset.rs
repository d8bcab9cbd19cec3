//! Pedigree and genotype-matrix input, and writers for simulated data.
//!
//! Pedigree file (tab-separated, header required):
//!
//! ```text
//! family_id  individual_id  father_id  mother_id  phenotype
//! ```
//!
//! `0` marks an unknown parent; phenotypes are `0`, `1` or `NA`. The genotype
//! file has a header `individual_id  <snp ids...>` and one row per individual
//! with entries `0`, `1`, `2` or `NA`. The optional map file has header
//! `snp_id  position`. Lines starting with `#` are ignored everywhere.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FamilyData, Genotype, PairClasses};
use crate::pedigree::{PedigreeMember, PedigreeTemplate};
use crate::simulate::{simulate_genotypes, substream, PhenotypeSampler, SimConfig};

pub const PEDIGREE_HEADER: [&str; 5] = ["family_id", "individual_id", "father_id", "mother_id", "phenotype"];
pub const MAP_HEADER: [&str; 2] = ["snp_id", "position"];

/// One family with genotypes at every indexed SNP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFamily {
    pub family_id: String,
    pub member_ids: Vec<String>,
    /// Father and mother ids; `None` for an unknown parent.
    pub parents: Vec<[Option<String>; 2]>,
    pub phenotypes: Vec<Option<bool>>,
    /// `genotypes[member][snp]`.
    pub genotypes: Vec<Vec<Option<Genotype>>>,
    pub pair_classes: PairClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub families: Vec<DatasetFamily>,
    snp_ids: Vec<String>,
    snp_index: HashMap<String, usize>,
    positions: Vec<u64>,
}

impl Dataset {
    /// Assembles a dataset; `positions` default to the 1-based column order.
    pub fn new(families: Vec<DatasetFamily>, snp_ids: Vec<String>, positions: Option<Vec<u64>>) -> Result<Self> {
        let mut snp_index = HashMap::with_capacity(snp_ids.len());
        for (k, id) in snp_ids.iter().enumerate() {
            if snp_index.insert(id.clone(), k).is_some() {
                return Err(Error::invalid(format!("duplicate SNP id `{id}`")));
            }
        }
        let positions = positions.unwrap_or_else(|| (1..=snp_ids.len() as u64).collect());
        if positions.len() != snp_ids.len() {
            return Err(Error::invalid("one position per SNP required"));
        }
        for fam in &families {
            let n = fam.member_ids.len();
            if fam.phenotypes.len() != n || fam.parents.len() != n || fam.genotypes.len() != n || fam.pair_classes.members() != n {
                return Err(Error::invalid(format!("family {}: member arrays differ in length", fam.family_id)));
            }
            if fam.genotypes.iter().any(|row| row.len() != snp_ids.len()) {
                return Err(Error::invalid(format!("family {}: genotype row length differs from SNP count", fam.family_id)));
            }
        }
        Ok(Dataset {
            families,
            snp_ids,
            snp_index,
            positions,
        })
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn n_snps(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn snp_column(&self, snp_id: &str) -> Option<usize> {
        self.snp_index.get(snp_id).copied()
    }

    pub fn position(&self, column: usize) -> u64 {
        self.positions[column]
    }

    pub fn n_individuals(&self) -> usize {
        self.families.iter().map(|f| f.member_ids.len()).sum()
    }

    /// Analysis view of one SNP column.
    pub fn family_data(&self, column: usize) -> Vec<FamilyData> {
        self.families
            .iter()
            .map(|f| FamilyData {
                family_id: f.family_id.clone(),
                phenotypes: f.phenotypes.clone(),
                genotypes: f.genotypes.iter().map(|row| row[column]).collect(),
                pair_classes: f.pair_classes.clone(),
            })
            .collect()
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers, split on tabs.
fn records<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::trim).collect()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

struct PedRow {
    line: usize,
    id: String,
    father: Option<String>,
    mother: Option<String>,
    phenotype: Option<bool>,
}

fn parse_pedigree_text(text: &str, origin: &str) -> Result<Vec<(String, Vec<PedRow>)>> {
    let mut rows = records(text);
    match rows.next() {
        Some((_, h)) if h == PEDIGREE_HEADER => {}
        Some((line, _)) => return Err(parse_err(origin, line, format!("expected header `{}`", PEDIGREE_HEADER.join("\t")))),
        None => return Err(parse_err(origin, 0, "empty pedigree file")),
    }
    let mut families: Vec<(String, Vec<PedRow>)> = Vec::new();
    let mut family_pos: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line, f) in rows {
        if f.len() != PEDIGREE_HEADER.len() {
            return Err(parse_err(origin, line, format!("expected {} fields, found {}", PEDIGREE_HEADER.len(), f.len())));
        }
        if f[0].is_empty() || f[1].is_empty() || f[1] == "0" {
            return Err(parse_err(origin, line, "family and individual ids must be non-empty and not `0`"));
        }
        if !seen.insert(f[1].to_string()) {
            return Err(Error::DuplicateId {
                path: origin.to_string(),
                line,
                id: f[1].to_string(),
            });
        }
        let phenotype = match f[4] {
            "1" => Some(true),
            "0" => Some(false),
            "NA" => None,
            other => return Err(parse_err(origin, line, format!("phenotype must be 0, 1 or NA, found `{other}`"))),
        };
        let parent = |s: &str| (s != "0").then(|| s.to_string());
        let row = PedRow {
            line,
            id: f[1].to_string(),
            father: parent(f[2]),
            mother: parent(f[3]),
            phenotype,
        };
        let k = *family_pos.entry(f[0].to_string()).or_insert_with(|| {
            families.push((f[0].to_string(), Vec::new()));
            families.len() - 1
        });
        families[k].1.push(row);
    }
    Ok(families)
}

fn build_template(rows: &[PedRow], origin: &str) -> Result<PedigreeTemplate> {
    let index: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let members = rows
        .iter()
        .map(|r| {
            let lookup = |p: &Option<String>| -> Result<Option<usize>> {
                match p {
                    None => Ok(None),
                    Some(pid) => index.get(pid.as_str()).copied().map(Some).ok_or_else(|| Error::ReferentialIntegrity {
                        path: origin.to_string(),
                        line: r.line,
                        id: pid.clone(),
                    }),
                }
            };
            Ok(PedigreeMember {
                id: r.id.clone(),
                father: lookup(&r.father)?,
                mother: lookup(&r.mother)?,
                observed: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PedigreeTemplate::new(members)
}

fn parse_genotype_text(text: &str, origin: &str, known: &HashSet<&str>) -> Result<(Vec<String>, HashMap<String, Vec<Option<Genotype>>>)> {
    let mut rows = records(text);
    let snps: Vec<String> = match rows.next() {
        Some((line, h)) => {
            if h.first() != Some(&"individual_id") {
                return Err(parse_err(origin, line, "header must start with `individual_id`"));
            }
            h[1..].iter().map(|s| s.to_string()).collect()
        }
        None => return Err(parse_err(origin, 0, "empty genotype file")),
    };
    let mut out = HashMap::new();
    for (line, f) in rows {
        if f.len() != snps.len() + 1 {
            return Err(parse_err(origin, line, format!("expected {} fields, found {}", snps.len() + 1, f.len())));
        }
        if !known.contains(f[0]) {
            return Err(Error::ReferentialIntegrity {
                path: origin.to_string(),
                line,
                id: f[0].to_string(),
            });
        }
        let g = f[1..]
            .iter()
            .map(|s| match *s {
                "0" => Ok(Some(Genotype::ZERO)),
                "1" => Ok(Some(Genotype::ONE)),
                "2" => Ok(Some(Genotype::TWO)),
                "NA" => Ok(None),
                other => Err(parse_err(origin, line, format!("genotype must be 0, 1, 2 or NA, found `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if out.insert(f[0].to_string(), g).is_some() {
            return Err(Error::DuplicateId {
                path: origin.to_string(),
                line,
                id: f[0].to_string(),
            });
        }
    }
    Ok((snps, out))
}

fn parse_map_text(text: &str, origin: &str, snps: &[String]) -> Result<Vec<u64>> {
    let mut rows = records(text);
    match rows.next() {
        Some((_, h)) if h == MAP_HEADER => {}
        Some((line, _)) => return Err(parse_err(origin, line, "expected header `snp_id\tposition`")),
        None => return Err(parse_err(origin, 0, "empty map file")),
    }
    let index: HashMap<&str, usize> = snps.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut pos = vec![None; snps.len()];
    for (line, f) in rows {
        if f.len() != 2 {
            return Err(parse_err(origin, line, format!("expected 2 fields, found {}", f.len())));
        }
        let &k = index.get(f[0]).ok_or_else(|| Error::ReferentialIntegrity {
            path: origin.to_string(),
            line,
            id: f[0].to_string(),
        })?;
        let p: u64 = f[1].parse().map_err(|_| parse_err(origin, line, format!("bad position `{}`", f[1])))?;
        if pos[k].replace(p).is_some() {
            return Err(Error::DuplicateId {
                path: origin.to_string(),
                line,
                id: f[0].to_string(),
            });
        }
    }
    pos.into_iter()
        .zip(snps)
        .map(|(p, s)| p.ok_or_else(|| parse_err(origin, 0, format!("SNP `{s}` has no position"))))
        .collect()
}

/// Parses in-memory file contents; `origins` name the sources in errors.
pub fn parse_dataset_text(pedigree: (&str, &str), genotypes: (&str, &str), map: Option<(&str, &str)>) -> Result<Dataset> {
    let fams = parse_pedigree_text(pedigree.0, pedigree.1)?;
    let known: HashSet<&str> = fams.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.id.as_str())).collect();
    let (snps, mut geno) = parse_genotype_text(genotypes.0, genotypes.1, &known)?;
    let positions = map.map(|(text, origin)| parse_map_text(text, origin, &snps)).transpose()?;
    let families = fams
        .iter()
        .map(|(fid, rows)| {
            let template = build_template(rows, pedigree.1)?;
            Ok(DatasetFamily {
                family_id: fid.clone(),
                member_ids: rows.iter().map(|r| r.id.clone()).collect(),
                parents: rows.iter().map(|r| [r.father.clone(), r.mother.clone()]).collect(),
                phenotypes: rows.iter().map(|r| r.phenotype).collect(),
                // Individuals absent from the genotype file are untyped.
                genotypes: rows.iter().map(|r| geno.remove(&r.id).unwrap_or_else(|| vec![None; snps.len()])).collect(),
                pair_classes: template.all_pair_classes(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(families, snps, positions)
}

pub fn parse_dataset(pedigree_file: &Path, genotype_file: &Path, map_file: Option<&Path>) -> Result<Dataset> {
    let ped = read(pedigree_file)?;
    let geno = read(genotype_file)?;
    let map = map_file.map(read).transpose()?;
    let (pn, gn) = (pedigree_file.display().to_string(), genotype_file.display().to_string());
    let mn = map_file.map(|p| p.display().to_string());
    parse_dataset_text(
        (&ped, &pn),
        (&geno, &gn),
        map.as_deref().zip(mn.as_deref()),
    )
}

fn flush_to(path: &Path, body: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the pedigree, genotype and map files for `dataset`.
pub fn write_dataset(dataset: &Dataset, pedigree_file: &Path, genotype_file: &Path, map_file: Option<&Path>) -> Result<()> {
    let na = |o: Option<String>| o.unwrap_or_else(|| "NA".into());
    let mut body = String::new();
    body.push_str(&PEDIGREE_HEADER.join("\t"));
    body.push('\n');
    for fam in &dataset.families {
        for (i, id) in fam.member_ids.iter().enumerate() {
            let [f, m] = fam.parents[i].clone().map(|p| p.unwrap_or_else(|| "0".into()));
            let y = na(fam.phenotypes[i].map(|y| u8::from(y).to_string()));
            body.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", fam.family_id, id, f, m, y));
        }
    }
    flush_to(pedigree_file, &body)?;

    let mut body = String::from("individual_id");
    for s in &dataset.snp_ids {
        body.push('\t');
        body.push_str(s);
    }
    body.push('\n');
    for fam in &dataset.families {
        for (i, id) in fam.member_ids.iter().enumerate() {
            body.push_str(id);
            for g in &fam.genotypes[i] {
                body.push('\t');
                body.push_str(&na(g.map(|g| g.to_string())));
            }
            body.push('\n');
        }
    }
    flush_to(genotype_file, &body)?;

    if let Some(path) = map_file {
        let mut body = MAP_HEADER.join("\t");
        body.push('\n');
        for (s, p) in dataset.snp_ids.iter().zip(&dataset.positions) {
            body.push_str(&format!("{s}\t{p}\n"));
        }
        flush_to(path, &body)?;
    }
    Ok(())
}

/// A simulated replicate as a dataset: column `causal` holds the genotypes
/// that drove the phenotypes (identical to [`simulate_dataset`]), followed by
/// `null_snps` independent HWE columns. Unobserved template members are
/// included with missing phenotype and genotypes so the pedigree is complete.
///
/// [`simulate_dataset`]: crate::simulate::simulate_dataset
pub fn simulated_dataset(config: &SimConfig, sampler: &PhenotypeSampler, replicate: u64, null_snps: usize) -> Result<Dataset> {
    config.validate()?;
    let mut families = Vec::with_capacity(config.n_families);
    for f in 0..config.n_families {
        let template = &config.templates[f % config.templates.len()];
        let members = template.members();
        let observed = template.observed_indices();
        let classes = template.observed_pair_classes();
        let mut rng = substream(config.seed, replicate, f as u64, 0);
        let causal = simulate_genotypes(template, config.maf, &mut rng)?;
        let obs_g: Vec<Genotype> = observed.iter().map(|&i| causal[i]).collect();
        let obs_y = sampler.sample(&obs_g, &classes, &mut rng)?;
        let mut phenotypes = vec![None; members.len()];
        for (k, &i) in observed.iter().enumerate() {
            phenotypes[i] = Some(obs_y[k]);
        }
        let mut genotypes: Vec<Vec<Option<Genotype>>> = causal.iter().map(|&g| vec![Some(g)]).collect();
        for j in 0..null_snps {
            let mut rng = substream(config.seed, replicate, f as u64, 1 + j as u64);
            for (row, g) in genotypes.iter_mut().zip(simulate_genotypes(template, config.maf, &mut rng)?) {
                row.push(Some(g));
            }
        }
        for (i, m) in members.iter().enumerate() {
            if !m.observed {
                genotypes[i].iter_mut().for_each(|g| *g = None);
            }
        }
        let fid = format!("F{}", f + 1);
        let member_id = |i: usize| format!("{fid}_{}", members[i].id);
        families.push(DatasetFamily {
            member_ids: (0..members.len()).map(member_id).collect(),
            parents: members.iter().map(|m| [m.father.map(member_id), m.mother.map(member_id)]).collect(),
            phenotypes,
            genotypes,
            pair_classes: template.all_pair_classes(),
            family_id: fid,
        });
    }
    let snps = std::iter::once("causal".to_string()).chain((1..=null_snps).map(|j| format!("null{j}"))).collect();
    Dataset::new(families, snps, None)
}
