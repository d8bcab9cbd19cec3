mod config;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use famcl_core::dataset::{parse_dataset, simulated_dataset, write_dataset};
use famcl_core::evidence::{adjust_curve, adjusted_lr, support_interval};
use famcl_core::likelihood::{profile_with, CompositeLikelihood, OptimizeOptions};
use famcl_core::misleading::estimate_misleading_multi;
use famcl_core::output::{emit_results, write_to, Emit};
use famcl_core::scan::scan_region;
use famcl_core::study::replicate_study;
use famcl_core::{
    CLKind, Dataset, FwerRecord, ModelParams, OutputFormat, Param, PedigreeTemplate, PhenotypeSampler, ScanFlag,
    ScanOptions, SimConfig,
};

use config::{parse_linear_grid, parse_or_grid, parse_psi, parse_templates, pick, FileConfig};

const DEFAULT_K: [f64; 4] = [8.0, 32.0, 100.0, 1000.0];
const DEFAULT_GRID: &str = "0.05:20:401";
const DEFAULT_PSI: &str = "sib=3,po=2.5,avunc=2,gp=1.5,cousin=1.2";

#[derive(Parser, Debug)]
#[command(name = "famcl", version, about = "Composite likelihood evidence for binary traits in families")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Profile one SNP and write its curve.
    Fit(FitArgs),
    /// Scan SNPs and write one record per SNP.
    Scan(ScanArgs),
    /// Simulate a dataset and write pedigree, genotype and map files.
    Simulate(SimulateArgs),
    /// Replicated estimation study over sample sizes and likelihoods.
    Replicate(ReplicateArgs),
    /// Monte Carlo probability of misleading evidence.
    Misleading(MisleadingArgs),
    /// Family-wise error bound from an effective test count.
    Fwer(FwerArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    pedigree: PathBuf,
    #[arg(long)]
    genotypes: PathBuf,
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvidenceArgs {
    /// Evidence thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// independence | pairwise | pairwise-psi
    #[arg(long)]
    cl: Option<String>,
    /// Profile grid as odds-ratio lo:hi:points.
    #[arg(long)]
    grid_or: Option<String>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json (default from the file extension, else csv).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Built-in templates, e.g. `extended12` or `nuclear3,singleton*5`; family f uses entry f mod count.
    #[arg(long)]
    template: Option<String>,
    /// Template file (`individual_id father_id mother_id observed`).
    #[arg(long)]
    template_file: Option<PathBuf>,
    #[arg(long)]
    families: Option<usize>,
    #[arg(long)]
    maf: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta1: Option<f64>,
    /// Dependence odds ratios: one value for all classes or `sib=3,po=2.5,...`.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    evidence: EvidenceArgs,
    #[command(flatten)]
    out: OutArgs,
    /// SNP id (default: the first SNP).
    #[arg(long)]
    snp: Option<String>,
    /// Interest parameter: beta1 or log_psi_<class>.
    #[arg(long)]
    interest: Option<String>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    evidence: EvidenceArgs,
    #[command(flatten)]
    out: OutArgs,
    /// SNP ids to scan (default: all).
    #[arg(long, value_delimiter = ',')]
    snps: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Files are written as <prefix>.ped.tsv, <prefix>.geno.tsv and <prefix>.map.tsv.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Replicate index within the seed.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Extra SNP columns unrelated to the phenotype.
    #[arg(long)]
    null_snps: Option<usize>,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Likelihoods, comma separated.
    #[arg(long, value_delimiter = ',')]
    cl: Option<Vec<String>>,
    /// Numbers of families, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    interest: Option<String>,
}

#[derive(Args, Debug)]
struct MisleadingArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    #[arg(long)]
    cl: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Alternative slopes as lo:hi:points on the log odds-ratio scale.
    #[arg(long, allow_hyphen_values = true)]
    alt_beta: Option<String>,
}

#[derive(Args, Debug)]
struct FwerArgs {
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    n_eff: Option<u64>,
    /// Per-test misleading-evidence probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    m0: Option<Vec<f64>>,
}

fn output_format(args: &OutArgs) -> Result<OutputFormat> {
    match (&args.format, &args.out) {
        (Some(f), _) => Ok(f.parse()?),
        (None, Some(p)) => Ok(OutputFormat::from_path(p)),
        (None, None) => Ok(OutputFormat::Csv),
    }
}

fn emit<T: Emit + Serialize + ?Sized>(value: &T, args: &OutArgs) -> Result<()> {
    let format = output_format(args)?;
    match &args.out {
        Some(path) => emit_results(value, format, path).with_context(|| format!("writing {}", path.display()))?,
        None => write_to(value, format, io::stdout().lock())?,
    }
    Ok(())
}

struct Evidence {
    k: Vec<f64>,
    kind: CLKind,
    grid: Vec<f64>,
}

fn evidence(args: &EvidenceArgs, file: &FileConfig) -> Result<Evidence> {
    Ok(Evidence {
        k: pick(args.k.clone(), &file.k, DEFAULT_K.to_vec()),
        kind: pick(args.cl.clone(), &file.cl, "independence".into()).parse()?,
        grid: parse_or_grid(&pick(args.grid_or.clone(), &file.grid_or, DEFAULT_GRID.into()))?,
    })
}

fn design(args: &DesignArgs, file: &FileConfig) -> Result<SimConfig> {
    let templates = match args.template_file.clone().or_else(|| file.template_file.clone()) {
        Some(path) if args.template.is_none() => vec![PedigreeTemplate::from_tsv(&path)?],
        _ => parse_templates(&pick(args.template.clone(), &file.template, "extended12".into()))?,
    };
    let psi = parse_psi(&pick(args.psi.clone(), &file.psi, DEFAULT_PSI.into()))?;
    let params = ModelParams::new(
        pick(args.beta0, &file.beta0, -2.38),
        pick(args.beta1, &file.beta1, 1.76),
        psi,
    )?;
    let config = SimConfig {
        n_families: pick(args.families, &file.families, 300),
        templates,
        maf: pick(args.maf, &file.maf, 0.2),
        params,
        seed: pick(args.seed, &file.seed, 1),
    };
    config.validate()?;
    Ok(config)
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    Ok(parse_dataset(&args.pedigree, &args.genotypes, args.map.as_deref())?)
}

fn run_fit(args: &FitArgs, file: &FileConfig) -> Result<()> {
    let ev = evidence(&args.evidence, file)?;
    let data = load_data(&args.data)?;
    let column = match &args.snp {
        Some(s) => data.snp_column(s).with_context(|| format!("unknown SNP `{s}`"))?,
        None if data.n_snps() > 0 => 0,
        None => bail!("genotype file has no SNP columns"),
    };
    let interest: Param = pick(args.interest.clone(), &file.interest, "beta1".into()).parse()?;
    let cl = CompositeLikelihood::new(&data.family_data(column), ev.kind)?;
    let mut curve = profile_with(&cl, interest, &ev.grid, &OptimizeOptions::default())?;
    if curve.mcle.separation {
        log::warn!("separation: the estimate diverges and no adjustment is computed");
    } else {
        let ab = adjust_curve(&cl, &mut curve)?;
        eprintln!("{}: mcle {} = {:.6} (exp {:.6}), a/b = {:.6}", data.snp_ids()[column], interest, curve.mcle.value, curve.mcle.value.exp(), ab);
        if interest == Param::Beta1 {
            match adjusted_lr(&curve, curve.mcle.value.exp(), 1.0) {
                Ok(lr) => eprintln!("adjusted LR vs OR = 1: {lr:.6e}"),
                Err(e) => log::warn!("{e}"),
            }
        }
        for &k in &ev.k {
            match support_interval(&curve, k) {
                Ok(iv) => eprintln!(
                    "1/{k} interval: {}{:.6}, {:.6}{}",
                    if iv.lower_open { "<=" } else { "[" },
                    iv.lower_or,
                    iv.upper_or,
                    if iv.upper_open { "=>" } else { "]" }
                ),
                Err(e) => log::warn!("1/{k} interval: {e}"),
            }
        }
    }
    if curve.n_failed() > 0 {
        log::warn!("{} of {} grid points failed to fit", curve.n_failed(), curve.grid.len());
    }
    emit(&curve, &args.out)
}

fn run_scan(args: &ScanArgs, file: &FileConfig) -> Result<()> {
    let ev = evidence(&args.evidence, file)?;
    let data = load_data(&args.data)?;
    let opts = ScanOptions::new(&ev.k, ev.kind)?.with_grid(ev.grid);
    let records = scan_region(&data, &args.snps, &opts)?;
    for flag in [ScanFlag::Separation, ScanFlag::SparseCells, ScanFlag::FitFailure] {
        let n = records.iter().filter(|r| r.flags.contains(&flag)).count();
        if n > 0 {
            log::info!("{n} of {} SNPs flagged {flag}", records.len());
        }
    }
    emit(records.as_slice(), &args.out)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_simulate(args: &SimulateArgs, file: &FileConfig) -> Result<()> {
    let config = design(&args.design, file)?;
    let sampler = PhenotypeSampler::new(config.params)?;
    let data = simulated_dataset(&config, &sampler, args.replicate, pick(args.null_snps, &file.null_snps, 0))?;
    let (ped, geno, map) = (
        with_suffix(&args.out_prefix, ".ped.tsv"),
        with_suffix(&args.out_prefix, ".geno.tsv"),
        with_suffix(&args.out_prefix, ".map.tsv"),
    );
    write_dataset(&data, &ped, &geno, Some(&map))?;
    eprintln!("wrote {}, {} and {}", ped.display(), geno.display(), map.display());
    Ok(())
}

fn run_replicate(args: &ReplicateArgs, file: &FileConfig) -> Result<()> {
    let config = design(&args.design, file)?;
    let kinds = match &args.cl {
        Some(v) => v.iter().map(|s| s.parse()).collect::<Result<Vec<CLKind>, _>>()?,
        None => vec![file.cl.as_deref().unwrap_or("independence").parse()?],
    };
    let sizes = pick(args.sizes.clone(), &file.sizes, vec![30, 100, 300]);
    let interest: Param = pick(args.interest.clone(), &file.interest, "beta1".into()).parse()?;
    let reps = pick(args.replicates, &file.replicates, 1000);
    let out = replicate_study(&config, &sizes, &kinds, interest, reps)?;
    for s in &out {
        eprintln!(
            "n={:<6} {:<13} mean {:.5} (mc se {:.5}) failures {}",
            s.n_families, s.kind, s.mean, s.mc_se, s.failures
        );
    }
    emit(out.as_slice(), &args.out)
}

fn run_misleading(args: &MisleadingArgs, file: &FileConfig) -> Result<()> {
    let config = design(&args.design, file)?;
    let ks = pick(args.k.clone(), &file.k, vec![8.0]);
    let kind: CLKind = pick(args.cl.clone(), &file.cl, "independence".into()).parse()?;
    let reps = pick(args.replicates, &file.replicates, 1000);
    let alts = parse_linear_grid(&pick(args.alt_beta.clone(), &file.alt_beta, "1.0:2.5:31".into()))?;
    let truth = config.params.beta1;
    let alts: Vec<f64> = alts.into_iter().filter(|a| (a - truth).abs() > 1e-12).collect();
    let out = estimate_misleading_multi(&config, &alts, &ks, kind, reps)?;
    for e in &out {
        let worst = e.proportion_adjusted.iter().copied().fold(0.0, f64::max);
        eprintln!(
            "k={}: max adjusted proportion {:.5}, max raw {:.5}, mean a/b {:.4}, failures {}",
            e.k,
            worst,
            e.proportion_raw.iter().copied().fold(0.0, f64::max),
            e.mean_adjustment,
            e.failures
        );
    }
    emit(out.as_slice(), &args.out)
}

fn run_fwer(args: &FwerArgs, file: &FileConfig) -> Result<()> {
    let n_eff = pick(args.n_eff, &file.n_eff, 0);
    if n_eff == 0 {
        bail!("--n-eff is required");
    }
    let m0 = pick(args.m0.clone(), &file.m0, Vec::new());
    if m0.is_empty() {
        bail!("--m0 is required");
    }
    let rows = m0.iter().map(|&m| FwerRecord::new(n_eff, m)).collect::<Result<Vec<_>, _>>()?;
    emit(rows.as_slice(), &args.out)
}

fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Fit(a) => run_fit(a, &file),
        Command::Scan(a) => run_scan(a, &file),
        Command::Simulate(a) => run_simulate(a, &file),
        Command::Replicate(a) => run_replicate(a, &file),
        Command::Misleading(a) => run_misleading(a, &file),
        Command::Fwer(a) => run_fwer(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
