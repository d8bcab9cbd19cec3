//! CSV and JSON encodings of scan records, profile curves and simulation
//! summaries.
//!
//! CSV files start with a `# schema: <name>` line followed by a header row;
//! reals are written with 17 significant digits and `.` as decimal separator.
//! JSON files are `{"schema": <name>, "records": ...}`. Non-finite reals are
//! written as `NaN`/`inf` in CSV and as `null` in JSON.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::ProfileCurve;
use crate::misleading::{bump_max, FwerRecord, MisleadingEstimate};
use crate::scan::ScanRecord;
use crate::study::ReplicateSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Format implied by a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!("unknown output format `{other}`"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// 17 significant digits, locale independent.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Anything emitted as a table and a JSON document.
pub trait Emit {
    const SCHEMA: &'static str;
    const COLUMNS: &'static [&'static str];
    fn rows(&self) -> Vec<Vec<String>>;
}

pub const SCAN_SCHEMA: &str = "famcl.scan.v1";
pub const CURVE_SCHEMA: &str = "famcl.curve.v1";
pub const MISLEADING_SCHEMA: &str = "famcl.misleading.v1";
pub const REPLICATE_SCHEMA: &str = "famcl.replicate.v1";
pub const FWER_SCHEMA: &str = "famcl.fwer.v1";

impl Emit for [ScanRecord] {
    const SCHEMA: &'static str = SCAN_SCHEMA;
    const COLUMNS: &'static [&'static str] = &[
        "snp_id",
        "position",
        "mcle_or",
        "max_adjusted_lr",
        "adjustment",
        "flags",
        "k",
        "lower_or",
        "upper_or",
        "lower_open",
        "upper_open",
        "contains_null",
    ];

    /// Long format: one row per SNP and threshold; SNPs without intervals get
    /// one row with empty interval columns.
    fn rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for r in self {
            let flags: Vec<&str> = r.flags.iter().map(|f| f.name()).collect();
            let head = vec![
                r.snp_id.clone(),
                r.position.to_string(),
                fmt_opt(r.mcle_or),
                fmt_opt(r.max_adjusted_lr),
                fmt_opt(r.adjustment),
                flags.join(";"),
            ];
            if r.intervals.is_empty() {
                let mut row = head.clone();
                row.extend(std::iter::repeat_n(String::new(), 6));
                out.push(row);
            }
            for iv in &r.intervals {
                let mut row = head.clone();
                row.extend([
                    fmt_real(iv.k),
                    fmt_real(iv.lower_or),
                    fmt_real(iv.upper_or),
                    iv.lower_open.to_string(),
                    iv.upper_open.to_string(),
                    iv.contains_null.to_string(),
                ]);
                out.push(row);
            }
        }
        out
    }
}

impl Emit for ProfileCurve {
    const SCHEMA: &'static str = CURVE_SCHEMA;
    const COLUMNS: &'static [&'static str] =
        &["kind", "interest", "log_value", "value", "loglik_p", "adjusted_relative_likelihood", "failed"];

    fn rows(&self) -> Vec<Vec<String>> {
        let ab = self.adjustment.unwrap_or(f64::NAN);
        let top = self
            .loglik_p
            .iter()
            .copied()
            .filter(|l| l.is_finite())
            .fold(self.mcle.loglik, f64::max);
        self.grid
            .iter()
            .zip(&self.loglik_p)
            .zip(&self.failed)
            .map(|((&t, &l), &failed)| {
                vec![
                    self.kind.to_string(),
                    self.interest.to_string(),
                    fmt_real(t),
                    fmt_real(t.exp()),
                    fmt_real(l),
                    fmt_real((ab * (l - top)).exp()),
                    failed.to_string(),
                ]
            })
            .collect()
    }
}

impl Emit for [MisleadingEstimate] {
    const SCHEMA: &'static str = MISLEADING_SCHEMA;
    const COLUMNS: &'static [&'static str] = &[
        "kind",
        "k",
        "true_value",
        "alt_value",
        "alt_or",
        "proportion_raw",
        "mc_se_raw",
        "proportion_adjusted",
        "mc_se",
        "theory",
        "bump_max",
        "replicates",
        "failures",
        "mean_adjustment",
    ];

    fn rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for e in self {
            let cap = bump_max(e.k).unwrap_or(f64::NAN);
            for j in 0..e.alt_values.len() {
                out.push(vec![
                    e.kind.to_string(),
                    fmt_real(e.k),
                    fmt_real(e.true_value),
                    fmt_real(e.alt_values[j]),
                    fmt_real(e.alt_values[j].exp()),
                    fmt_real(e.proportion_raw[j]),
                    fmt_real(e.mc_se_raw[j]),
                    fmt_real(e.proportion_adjusted[j]),
                    fmt_real(e.mc_se[j]),
                    fmt_real(e.theory.prob[j]),
                    fmt_real(cap),
                    e.replicates.to_string(),
                    e.failures.to_string(),
                    fmt_real(e.mean_adjustment),
                ]);
            }
        }
        out
    }
}

impl Emit for [ReplicateSummary] {
    const SCHEMA: &'static str = REPLICATE_SCHEMA;
    const COLUMNS: &'static [&'static str] =
        &["kind", "interest", "n_families", "replicates", "failures", "mean", "sd", "mc_se"];

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|s| {
                vec![
                    s.kind.to_string(),
                    s.interest.to_string(),
                    s.n_families.to_string(),
                    s.estimates.len().to_string(),
                    s.failures.to_string(),
                    fmt_real(s.mean),
                    fmt_real(s.sd),
                    fmt_real(s.mc_se),
                ]
            })
            .collect()
    }
}

impl Emit for [FwerRecord] {
    const SCHEMA: &'static str = FWER_SCHEMA;
    const COLUMNS: &'static [&'static str] = &["n_eff", "m0", "bound"];

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| vec![r.n_eff.to_string(), fmt_real(r.m0), fmt_real(r.bound)])
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema: String,
    records: T,
}

/// Writes `value` to `w`.
pub fn write_to<T, W>(value: &T, format: OutputFormat, mut w: W) -> Result<()>
where
    T: Emit + Serialize + ?Sized,
    W: Write,
{
    let ser = |e: &dyn fmt::Display| Error::Serialization(e.to_string());
    match format {
        OutputFormat::Csv => {
            writeln!(w, "# schema: {}", T::SCHEMA).map_err(|e| ser(&e))?;
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(T::COLUMNS).map_err(|e| ser(&e))?;
            for row in value.rows() {
                csv.write_record(&row).map_err(|e| ser(&e))?;
            }
            csv.flush().map_err(|e| ser(&e))
        }
        OutputFormat::Json => {
            let env = Envelope {
                schema: T::SCHEMA.to_string(),
                records: value,
            };
            serde_json::to_writer_pretty(&mut w, &env).map_err(|e| ser(&e))?;
            writeln!(w).map_err(|e| ser(&e))
        }
    }
}

/// Writes `value` to `path`, creating or truncating it.
pub fn emit_results<T>(value: &T, format: OutputFormat, path: &Path) -> Result<()>
where
    T: Emit + Serialize + ?Sized,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(value, format, &mut w).map_err(|e| match e {
        Error::Serialization(m) => Error::Serialization(format!("{}: {m}", path.display())),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON document written by [`emit_results`], checking its schema.
pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, schema)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, schema: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
    if env.schema != schema {
        return Err(Error::Serialization(format!("schema `{}` where `{schema}` was expected", env.schema)));
    }
    Ok(env.records)
}
