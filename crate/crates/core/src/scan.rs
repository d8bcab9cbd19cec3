//! Region scans: one profile, adjustment and set of support intervals per SNP.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{adjust_curve, adjusted_lr, curve_interpolant, support_interval, SupportInterval};
use crate::likelihood::{default_or_grid, profile_with, CLKind, CompositeLikelihood, OptimizeOptions, Param, ProfileCurve};
use crate::model::FamilyData;

/// Cells of the genotype-by-phenotype table below this count mark a SNP sparse.
pub const SPARSE_CELL_MIN: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFlag {
    Separation,
    SparseCells,
    FitFailure,
}

impl ScanFlag {
    pub fn name(self) -> &'static str {
        match self {
            ScanFlag::Separation => "separation",
            ScanFlag::SparseCells => "sparse_cells",
            ScanFlag::FitFailure => "fit_failure",
        }
    }
}

impl fmt::Display for ScanFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scan result for one SNP. Numeric fields are `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub snp_id: String,
    pub position: u64,
    pub mcle_or: Option<f64>,
    /// Adjusted likelihood ratio of the maximum against `OR = 1`.
    pub max_adjusted_lr: Option<f64>,
    pub adjustment: Option<f64>,
    /// Sorted by increasing `k`.
    pub intervals: Vec<SupportInterval>,
    pub flags: BTreeSet<ScanFlag>,
    /// Complete members by genotype (rows) and case/control (columns).
    pub cell_counts: [[u64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub k_values: Vec<f64>,
    pub kind: CLKind,
    /// Profile grid on the log odds-ratio scale.
    pub grid: Vec<f64>,
    pub optimizer: OptimizeOptions,
}

impl ScanOptions {
    pub fn new(k_values: &[f64], kind: CLKind) -> Result<Self> {
        let mut k_values = k_values.to_vec();
        if k_values.is_empty() || k_values.iter().any(|&k| !(k > 1.0 && k.is_finite())) {
            return Err(Error::invalid("evidence thresholds must be finite and exceed 1"));
        }
        k_values.sort_by(f64::total_cmp);
        k_values.dedup();
        Ok(ScanOptions {
            k_values,
            kind,
            grid: default_or_grid(),
            optimizer: OptimizeOptions::default(),
        })
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }
}

pub fn cell_counts(data: &[FamilyData]) -> [[u64; 2]; 3] {
    let mut c = [[0u64; 2]; 3];
    for fam in data {
        for i in fam.complete_members() {
            let x = fam.genotypes[i].unwrap().count() as usize;
            c[x][usize::from(!fam.phenotypes[i].unwrap())] += 1;
        }
    }
    c
}

/// `ab * (max - l(OR = 1))`, evaluated on the curve. The maximum may lie off
/// the grid under separation, so the larger of the stored maximum and the
/// interpolated values is used.
fn max_lr_against_null(curve: &ProfileCurve) -> Result<f64> {
    let mcle_or = curve.mcle.value.exp();
    let p = curve_interpolant(curve)?;
    let (lo, hi) = p.domain();
    if curve.mcle.value >= lo && curve.mcle.value <= hi {
        return adjusted_lr(curve, mcle_or, 1.0);
    }
    let ab = curve.adjustment.unwrap_or(1.0);
    let top = p.knots().1.iter().copied().fold(curve.mcle.loglik, f64::max);
    if !(lo <= 0.0 && 0.0 <= hi) {
        return Err(Error::OutOfRange {
            value: 1.0,
            lo: lo.exp(),
            hi: hi.exp(),
        });
    }
    Ok((ab * (top - p.eval(0.0))).exp())
}

fn scan_one(data: &[FamilyData], snp_id: &str, position: u64, opts: &ScanOptions) -> ScanRecord {
    let counts = cell_counts(data);
    let mut rec = ScanRecord {
        snp_id: snp_id.to_string(),
        position,
        mcle_or: None,
        max_adjusted_lr: None,
        adjustment: None,
        intervals: Vec::new(),
        flags: BTreeSet::new(),
        cell_counts: counts,
    };
    if counts.iter().flatten().any(|&c| c < SPARSE_CELL_MIN) {
        rec.flags.insert(ScanFlag::SparseCells);
    }
    let fitted = (|| -> Result<ProfileCurve> {
        let cl = CompositeLikelihood::new(data, opts.kind)?;
        let mut curve = profile_with(&cl, Param::Beta1, &opts.grid, &opts.optimizer)?;
        if curve.mcle.separation {
            return Ok(curve);
        }
        adjust_curve(&cl, &mut curve)?;
        Ok(curve)
    })();
    let curve = match fitted {
        Ok(c) => c,
        Err(e) => {
            log::debug!("{snp_id}: {e}");
            rec.flags.insert(ScanFlag::FitFailure);
            return rec;
        }
    };
    rec.mcle_or = Some(curve.mcle.value.exp());
    if curve.mcle.separation {
        rec.flags.insert(ScanFlag::Separation);
        return rec;
    }
    rec.adjustment = curve.adjustment;
    let rest = (|| -> Result<(f64, Vec<SupportInterval>)> {
        let lr = max_lr_against_null(&curve)?;
        let iv = opts.k_values.iter().map(|&k| support_interval(&curve, k)).collect::<Result<_>>()?;
        Ok((lr, iv))
    })();
    match rest {
        Ok((lr, iv)) => {
            rec.max_adjusted_lr = Some(lr);
            rec.intervals = iv;
        }
        Err(e) => {
            log::debug!("{snp_id}: {e}");
            rec.flags.insert(ScanFlag::FitFailure);
        }
    }
    rec
}

/// Scans `snps` (all SNPs when empty). Per-SNP failures are flagged on the
/// record; only unknown SNP ids are an error. Records follow input order.
pub fn scan_region(dataset: &Dataset, snps: &[String], opts: &ScanOptions) -> Result<Vec<ScanRecord>> {
    let columns: Vec<usize> = if snps.is_empty() {
        (0..dataset.n_snps()).collect()
    } else {
        snps.iter()
            .map(|s| dataset.snp_column(s).ok_or_else(|| Error::invalid(format!("unknown SNP `{s}`"))))
            .collect::<Result<_>>()?
    };
    Ok(columns
        .into_par_iter()
        .map(|c| scan_one(&dataset.family_data(c), &dataset.snp_ids()[c], dataset.position(c), opts))
        .collect())
}

/// Scans a single SNP's families.
pub fn scan_snp(data: &[FamilyData], snp_id: &str, position: u64, opts: &ScanOptions) -> ScanRecord {
    scan_one(data, snp_id, position, opts)
}
