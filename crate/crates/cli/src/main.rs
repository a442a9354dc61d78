//! `gsa`: stage-by-stage and end-to-end gene set analysis from the command
//! line.
//!
//! Exit codes: 0 on success, 2 for invalid input or usage, 3 for numerical
//! failures (and replays that do not reproduce).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsa_core::diffexpr::{group_summaries, moderated_t, signed_logp_ranking, welch_de, ModeratedPrior};
use gsa_core::ingest::{parse_count_matrix, parse_expression_matrix, parse_gmt, parse_lengths, parse_mapping, parse_phenotype};
use gsa_core::model::CountMatrix;
use gsa_core::multiverse::{expand_grid, run_multiverse, write_multiverse};
use gsa_core::pipeline::{replay, run_to_dir, DeMethod, PipelineSpec, PrefilterSpec};
use gsa_core::preprocess::{
    convert_ids, log_cpm_transform, normalization_factors, prefilter, remove_duplicates, NormalizationMethod,
    TransformedMatrix,
};
use gsa_core::report::{write_conversion_report, write_count_matrix, write_de, write_factors, write_ranking, write_transformed};
use gsa_core::GsaError;
use serde_json::{Map, Value};

use config::{parse_grid_flag, InputFlags};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<GsaError> for CliError {
    fn from(e: GsaError) -> Self {
        CliError { code: if e.is_numerical() { 3 } else { 2 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "gsa", version, about = "Gene set analysis of RNA-Seq count data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct InputArgs {
    /// Count matrix TSV (genes x samples).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Phenotype TSV (sample_id, label 0/1).
    #[arg(long)]
    phenotype: Option<PathBuf>,
    /// Gene set database in GMT format.
    #[arg(long)]
    gmt: Option<PathBuf>,
    /// Gene id mapping TSV (source_id, target_id).
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Transcript lengths TSV (gene_id, length).
    #[arg(long)]
    lengths: Option<PathBuf>,
    /// Precomputed ranking TSV (gene_id, statistic) for ranking-based GSEA.
    #[arg(long)]
    ranking: Option<PathBuf>,
}

impl InputArgs {
    fn flags(&self) -> InputFlags {
        InputFlags {
            counts: self.counts.clone(),
            phenotype: self.phenotype.clone(),
            gmt: self.gmt.clone(),
            mapping: self.mapping.clone(),
            lengths: self.lengths.clone(),
            ranking: self.ranking.clone(),
        }
    }
}

/// Pipeline options; each one overrides the config file.
#[derive(Args, Debug, Clone, Default)]
struct SpecArgs {
    /// Random seed for every permutation and resampling step.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of permutations.
    #[arg(long = "n-perm")]
    n_perm: Option<usize>,
    /// Adjusted p threshold for calling DE genes and significant sets.
    #[arg(long)]
    alpha: Option<f64>,
    /// Method: fisher, ease, goseq, gsea or padog.
    #[arg(long)]
    method: Option<String>,
    /// GSEA permutation scheme: phenotype, gene-set or gene-label.
    #[arg(long)]
    scheme: Option<String>,
    /// ORA universe: experiment, annotated or intersection.
    #[arg(long)]
    universe: Option<String>,
    /// GSEA weight exponent: 0, 1, 1.5 or 2.
    #[arg(long = "p-exp")]
    p_exp: Option<f64>,
    /// Pre-filter: none, total:MIN, count:MIN:SAMPLES, cpm:MIN or cpm:MIN:SAMPLES.
    #[arg(long)]
    prefilter: Option<String>,
    /// Duplicate strategy: keep-first, mean or max-count.
    #[arg(long)]
    dedupe: Option<String>,
    /// Normalization: tmm, median-of-ratios or none.
    #[arg(long)]
    normalize: Option<String>,
    /// DE test: welch or moderated-t.
    #[arg(long = "de-method")]
    de_method: Option<String>,
    /// Ranking statistic: signal-to-noise, t-statistic, diff-of-classes or signed-logp.
    #[arg(long)]
    statistic: Option<String>,
    /// GOSeq bias covariate: length or total-count.
    #[arg(long)]
    bias: Option<String>,
    /// GOSeq null: wallenius, resampling or hypergeometric.
    #[arg(long = "goseq-method")]
    goseq_method: Option<String>,
    /// Number of GOSeq resamples.
    #[arg(long)]
    resamples: Option<usize>,
    /// Multiple-testing correction: benjamini-hochberg or bonferroni.
    #[arg(long)]
    adjust: Option<String>,
    /// NES normalization: same-sign or all-permutations.
    #[arg(long)]
    nes: Option<String>,
    /// Smallest gene set size tested.
    #[arg(long = "min-size")]
    min_size: Option<usize>,
    /// Largest gene set size tested.
    #[arg(long = "max-size")]
    max_size: Option<usize>,
}

impl SpecArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("seed", self.seed.map(Value::from));
        put("n_perm", self.n_perm.map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("method", self.method.clone().map(Value::from));
        put("scheme", self.scheme.clone().map(Value::from));
        put("universe", self.universe.clone().map(Value::from));
        put("p_exp", self.p_exp.map(Value::from));
        put("prefilter", self.prefilter.clone().map(Value::from));
        put("dedupe", self.dedupe.clone().map(Value::from));
        put("normalize", self.normalize.clone().map(Value::from));
        put("de_method", self.de_method.clone().map(Value::from));
        put("statistic", self.statistic.clone().map(Value::from));
        put("goseq_bias", self.bias.clone().map(Value::from));
        put("goseq_method", self.goseq_method.clone().map(Value::from));
        put("resamples", self.resamples.map(Value::from));
        put("adjustment", self.adjust.clone().map(Value::from));
        put("nes_mode", self.nes.clone().map(Value::from));
        put("min_size", self.min_size.map(Value::from));
        put("max_size", self.max_size.map(Value::from));
        m
    }
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    spec: SpecArgs,
    /// TOML config with [inputs] and [pipeline] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out-dir", default_value = "gsa-out")]
    out_dir: PathBuf,
    /// Worker threads for permutation loops.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse every input and report what was read.
    IngestCheck {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Drop lowly expressed genes from a count matrix.
    Prefilter {
        #[arg(long)]
        counts: PathBuf,
        /// Needed for the cpm:MIN rule, which uses the smaller group size.
        #[arg(long)]
        phenotype: Option<PathBuf>,
        #[arg(long, default_value = "total:10")]
        prefilter: String,
        #[arg(long = "out-dir", default_value = "gsa-out")]
        out_dir: PathBuf,
    },
    /// Map gene ids and collapse duplicated ids.
    ConvertIds {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long, default_value = "keep-first")]
        dedupe: String,
        #[arg(long = "out-dir", default_value = "gsa-out")]
        out_dir: PathBuf,
    },
    /// Compute per-sample normalization factors.
    Normalize {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value = "tmm")]
        normalize: String,
        #[arg(long = "out-dir", default_value = "gsa-out")]
        out_dir: PathBuf,
    },
    /// Write the normalized log-cpm matrix.
    Transform {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value = "tmm")]
        normalize: String,
        #[arg(long = "out-dir", default_value = "gsa-out")]
        out_dir: PathBuf,
    },
    /// Differential expression on counts (normalized and transformed first)
    /// or on an already transformed matrix.
    De {
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Transformed expression matrix TSV, used instead of --counts.
        #[arg(long)]
        expression: Option<PathBuf>,
        #[arg(long)]
        phenotype: PathBuf,
        #[arg(long, default_value = "tmm")]
        normalize: String,
        #[arg(long = "de-method", default_value = "welch")]
        de_method: String,
        #[arg(long = "out-dir", default_value = "gsa-out")]
        out_dir: PathBuf,
    },
    /// Over-representation analysis (Fisher or EASE) after DE calling.
    Ora(RunArgs),
    /// Bias-aware over-representation analysis.
    Goseq(RunArgs),
    /// GSEA on the count matrix or on a precomputed ranking.
    Gsea(RunArgs),
    /// PADOG with phenotype permutation.
    Padog(RunArgs),
    /// Any pipeline described by a config file and flags.
    Run(RunArgs),
    /// Run a grid of pipelines and compare their results.
    Multiverse {
        #[command(flatten)]
        run: RunArgs,
        /// Grid axis as name=value1,value2; repeatable. Adds to the [grid] table.
        #[arg(long = "grid")]
        grid: Vec<String>,
    },
    /// Re-execute a run from its provenance record.
    Replay {
        #[arg(long)]
        provenance: PathBuf,
        #[arg(long = "out-dir", default_value = "gsa-replay")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn open(path: &Path) -> CliResult<fs::File> {
    fs::File::open(path).map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))
}

fn choice<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> CliResult<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| CliError::usage(format!("unknown {what} `{s}`")))
}

fn create(dir: &Path, file: &str) -> CliResult<fs::File> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(file))?)
}

fn read_counts(path: &Path) -> CliResult<CountMatrix> {
    Ok(parse_count_matrix(open(path)?)?)
}

fn transformed(counts: &CountMatrix, normalize: &str) -> CliResult<TransformedMatrix> {
    let method: NormalizationMethod = choice("normalization", normalize)?;
    let nf = normalization_factors(counts, method)?;
    Ok(log_cpm_transform(counts, &nf)?)
}

fn ingest_check(inputs: &InputArgs) -> CliResult {
    let mut any = false;
    let mut samples = None;
    if let Some(p) = &inputs.counts {
        let cm = read_counts(p)?;
        println!("counts: {} genes x {} samples", cm.n_genes(), cm.n_samples());
        samples = Some(cm.sample_ids().to_vec());
        any = true;
    }
    if let Some(p) = &inputs.phenotype {
        let samples = samples.as_ref().ok_or_else(|| CliError::usage("--phenotype needs --counts"))?;
        let ph = parse_phenotype(open(p)?, samples)?;
        let (m0, m1) = ph.group_sizes();
        println!("phenotype: {m0} samples in group 0, {m1} in group 1");
        any = true;
    }
    if let Some(p) = &inputs.gmt {
        let (db, warnings) = parse_gmt(open(p)?)?;
        println!("gmt: {} gene sets covering {} genes", db.len(), db.annotated_genes().len());
        for w in warnings {
            eprintln!("warning: {w}");
        }
        any = true;
    }
    if let Some(p) = &inputs.mapping {
        let m = parse_mapping(open(p)?)?;
        println!("mapping: {} pairs, {} unmapped ids", m.pairs().len(), m.unmapped().len());
        any = true;
    }
    if let Some(p) = &inputs.lengths {
        println!("lengths: {} genes", parse_lengths(open(p)?)?.len());
        any = true;
    }
    if let Some(p) = &inputs.ranking {
        println!("ranking: {} genes", gsa_core::ingest::parse_ranking(open(p)?)?.len());
        any = true;
    }
    if !any {
        return Err(CliError::usage("nothing to check; pass at least one input file"));
    }
    Ok(())
}

fn run_pipeline_command(args: &RunArgs, method: Option<&str>) -> CliResult {
    let file = config::load(args.config.as_deref())?;
    let mut overrides = args.spec.overrides();
    if let Some(m) = method {
        match overrides.get("method").and_then(Value::as_str) {
            Some(given) if !accepts(m, given) => {
                return Err(CliError::usage(format!("--method {given} does not belong to this subcommand")));
            }
            Some(_) => {}
            None => {
                let default = if m == "ora" { "fisher" } else { m };
                overrides.insert("method".into(), Value::from(default));
            }
        }
    }
    let spec = file.spec(&overrides)?;
    let paths = file.inputs(&args.inputs.flags())?;
    warn_permutations(&spec);
    let (out, _) = run_to_dir(&spec, &paths, &args.out_dir, args.workers)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} gene sets tested; results in {}", out.table.rows.len(), args.out_dir.display());
    Ok(())
}

fn accepts(subcommand: &str, method: &str) -> bool {
    match subcommand {
        "ora" => method == "fisher" || method == "ease",
        other => other == method,
    }
}

fn warn_permutations(spec: &PipelineSpec) {
    use gsa_core::pipeline::GsaMethod;
    if matches!(spec.method, GsaMethod::Gsea | GsaMethod::Padog) && spec.n_perm < 1000 {
        eprintln!(
            "warning: {} permutations; use as many as is computationally feasible (at least 1000)",
            spec.n_perm
        );
    }
}

fn multiverse(args: &RunArgs, grid_flags: &[String]) -> CliResult {
    let file = config::load(args.config.as_deref())?;
    let base = file.spec(&args.spec.overrides())?;
    let mut axes = file.grid.clone();
    for g in grid_flags {
        let (axis, values) = parse_grid_flag(g)?;
        axes.insert(axis, values);
    }
    let specs = expand_grid(&base, &axes)?;
    for spec in &specs {
        warn_permutations(spec);
    }
    let inputs = gsa_core::pipeline::Inputs::load(&file.inputs(&args.inputs.flags())?)?;
    let report = run_multiverse(&specs, &inputs, args.workers)?;
    write_multiverse(&args.out_dir, &report, &inputs)?;
    let failed = report.runs.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{} pipelines ({} failed); agreement matrices in {}",
        report.runs.len(),
        failed,
        args.out_dir.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::IngestCheck { inputs } => ingest_check(&inputs),
        Command::Prefilter { counts, phenotype, prefilter: rule, out_dir } => {
            let cm = read_counts(&counts)?;
            let spec: PrefilterSpec = rule.parse()?;
            let filtered = match spec {
                PrefilterSpec::None => cm,
                PrefilterSpec::Rule(r) => prefilter(&cm, r)?,
                PrefilterSpec::CpmSmallerGroup { min_cpm } => {
                    let p = phenotype.ok_or_else(|| CliError::usage("cpm:MIN needs --phenotype"))?;
                    let ph = parse_phenotype(open(&p)?, cm.sample_ids())?;
                    prefilter(&cm, gsa_core::preprocess::FilterRule::cpm_in_smaller_group(min_cpm, &ph))?
                }
            };
            write_count_matrix(create(&out_dir, "filtered_counts.tsv")?, &filtered)?;
            println!("{} genes kept", filtered.n_genes());
            Ok(())
        }
        Command::ConvertIds { counts, mapping, dedupe, out_dir } => {
            let cm = read_counts(&counts)?;
            let map = parse_mapping(open(&mapping)?)?;
            let (converted, report) = convert_ids(&cm, &map)?;
            let deduped = remove_duplicates(&converted, choice("duplicate strategy", &dedupe)?)?;
            write_count_matrix(create(&out_dir, "converted_counts.tsv")?, &deduped)?;
            write_conversion_report(create(&out_dir, "conversion_report.tsv")?, &report)?;
            println!(
                "{} rows after conversion, {} unique genes ({} unmapped)",
                converted.gene_ids.len(),
                deduped.n_genes(),
                report.unmapped.len()
            );
            Ok(())
        }
        Command::Normalize { counts, normalize, out_dir } => {
            let cm = read_counts(&counts)?;
            let nf = normalization_factors(&cm, choice("normalization", &normalize)?)?;
            write_factors(create(&out_dir, "factors.tsv")?, &nf)?;
            Ok(())
        }
        Command::Transform { counts, normalize, out_dir } => {
            let tm = transformed(&read_counts(&counts)?, &normalize)?;
            write_transformed(create(&out_dir, "logcpm.tsv")?, &tm)?;
            Ok(())
        }
        Command::De { counts, expression, phenotype, normalize, de_method, out_dir } => {
            let tm = match (counts, expression) {
                (Some(c), None) => transformed(&read_counts(&c)?, &normalize)?,
                (None, Some(e)) => {
                    let (genes, samples, values) = parse_expression_matrix(open(&e)?)?;
                    TransformedMatrix::new(genes, samples, values)?
                }
                _ => return Err(CliError::usage("pass exactly one of --counts and --expression")),
            };
            let ph = parse_phenotype(open(&phenotype)?, tm.sample_ids())?;
            let gs = group_summaries(&tm, &ph)?;
            let de = match choice::<DeMethod>("DE method", &de_method)? {
                DeMethod::Welch => welch_de(&gs)?,
                DeMethod::ModeratedT => moderated_t(&gs, ModeratedPrior::default())?,
            };
            write_de(create(&out_dir, "de.tsv")?, &de)?;
            write_ranking(create(&out_dir, "ranking.tsv")?, &signed_logp_ranking(&de)?)?;
            let called = de.rows().iter().filter(|r| r.adjusted_p <= 0.05).count();
            println!("{} genes tested, {called} with adjusted p <= 0.05", de.len());
            Ok(())
        }
        Command::Ora(a) => run_pipeline_command(&a, Some("ora")),
        Command::Goseq(a) => run_pipeline_command(&a, Some("goseq")),
        Command::Gsea(a) => run_pipeline_command(&a, Some("gsea")),
        Command::Padog(a) => run_pipeline_command(&a, Some("padog")),
        Command::Run(a) => run_pipeline_command(&a, None),
        Command::Multiverse { run, grid } => multiverse(&run, &grid),
        Command::Replay { provenance, out_dir, workers } => {
            let report = replay(&provenance, &out_dir, workers)?;
            if report.reproduced() {
                println!("all outputs reproduced in {}", out_dir.display());
                Ok(())
            } else {
                Err(CliError { code: 3, message: format!("outputs differ from the record: {}", report.mismatched.join(", ")) })
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("exiting with code {}", e.code);
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
