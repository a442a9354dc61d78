//! End-to-end pipelines: one choice per preprocessing and analysis axis, the
//! stage sequence for the chosen method, result files and a provenance record
//! that is sufficient to replay the run.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffexpr::{
    call_de_genes, gene_level_statistic, group_summaries, moderated_t, signed_logp_ranking, welch_de,
    GeneLevelStatistic, ModeratedPrior,
};
use crate::error::{GsaError, Result};
use crate::fcs::{gsea_test, padog_test, FcsInput, PermutationScheme};
use crate::ingest::{parse_count_matrix, parse_gmt, parse_lengths, parse_mapping, parse_phenotype, parse_ranking, GeneIdMapping};
use crate::kernel::Adjustment;
use crate::model::{
    restrict_database, AnalysisConfig, CountMatrix, DeResultTable, EnrichmentResultTable, GeneId, GeneSetDatabase,
    NesMode, PhenotypeLabels, RankedGeneList, UniversePolicy, ALLOWED_WEIGHT_EXPONENTS,
};
use crate::ora::{bias_covariate, build_universe, fit_pwf, ora_ease, ora_fisher, ora_goseq, Bias, GoseqMethod, GoseqOptions};
use crate::preprocess::{
    convert_ids, log_cpm_transform, normalization_factors, prefilter, remove_duplicates, ConvertedCounts, DupStrategy,
    FilterRule, NormalizationMethod, TransformedMatrix,
};
use crate::report::{write_de, write_enrichment};

pub const PROVENANCE_SCHEMA_VERSION: u32 = 1;
pub const RESULT_FILE: &str = "result.tsv";
pub const DE_FILE: &str = "de.tsv";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Pre-filter choice in its textual form: `none`, `total:MIN`,
/// `count:MIN:SAMPLES`, `cpm:MIN` (samples = smaller group) or
/// `cpm:MIN:SAMPLES`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PrefilterSpec {
    None,
    Rule(FilterRule),
    CpmSmallerGroup { min_cpm: f64 },
}

impl Default for PrefilterSpec {
    fn default() -> Self {
        PrefilterSpec::Rule(FilterRule::default())
    }
}

impl PrefilterSpec {
    fn resolve(&self, ph: &PhenotypeLabels) -> Option<FilterRule> {
        match *self {
            PrefilterSpec::None => None,
            PrefilterSpec::Rule(r) => Some(r),
            PrefilterSpec::CpmSmallerGroup { min_cpm } => Some(FilterRule::cpm_in_smaller_group(min_cpm, ph)),
        }
    }
}

impl fmt::Display for PrefilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrefilterSpec::None => write!(f, "none"),
            PrefilterSpec::Rule(FilterRule::TotalCount { min_total }) => write!(f, "total:{min_total}"),
            PrefilterSpec::Rule(FilterRule::CountInSamples { min_count, min_samples }) => {
                write!(f, "count:{min_count}:{min_samples}")
            }
            PrefilterSpec::Rule(FilterRule::CpmInSamples { min_cpm, min_samples }) => {
                write!(f, "cpm:{min_cpm}:{min_samples}")
            }
            PrefilterSpec::CpmSmallerGroup { min_cpm } => write!(f, "cpm:{min_cpm}"),
        }
    }
}

impl FromStr for PrefilterSpec {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || GsaError::invalid(format!("unrecognized pre-filter `{s}` (try total:10, count:10:3, cpm:1 or none)"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| parts.get(i).ok_or_else(bad);
        let spec = match parts[0] {
            "none" if parts.len() == 1 => PrefilterSpec::None,
            "total" if parts.len() == 2 => {
                PrefilterSpec::Rule(FilterRule::TotalCount { min_total: num(1)?.parse().map_err(|_| bad())? })
            }
            "count" if parts.len() == 3 => PrefilterSpec::Rule(FilterRule::CountInSamples {
                min_count: num(1)?.parse().map_err(|_| bad())?,
                min_samples: num(2)?.parse().map_err(|_| bad())?,
            }),
            "cpm" if parts.len() == 2 || parts.len() == 3 => {
                let min_cpm: f64 = num(1)?.parse().map_err(|_| bad())?;
                if !(min_cpm >= 0.0 && min_cpm.is_finite()) {
                    return Err(bad());
                }
                if parts.len() == 2 {
                    PrefilterSpec::CpmSmallerGroup { min_cpm }
                } else {
                    PrefilterSpec::Rule(FilterRule::CpmInSamples { min_cpm, min_samples: num(2)?.parse().map_err(|_| bad())? })
                }
            }
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

impl TryFrom<String> for PrefilterSpec {
    type Error = GsaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PrefilterSpec> for String {
    fn from(p: PrefilterSpec) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeMethod {
    Welch,
    ModeratedT,
}

/// Per-gene statistic used to rank genes for GSEA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingMetric {
    SignalToNoise,
    TStatistic,
    DiffOfClasses,
    /// `-log10(p) * sign(logFC)` from the DE table.
    SignedLogp,
}

impl RankingMetric {
    fn gene_level(self) -> Option<GeneLevelStatistic> {
        match self {
            RankingMetric::SignalToNoise => Some(GeneLevelStatistic::SignalToNoise),
            RankingMetric::TStatistic => Some(GeneLevelStatistic::TStatistic),
            RankingMetric::DiffOfClasses => Some(GeneLevelStatistic::DiffOfClasses),
            RankingMetric::SignedLogp => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GsaMethod {
    Fisher,
    Ease,
    Goseq,
    Gsea,
    Padog,
}

impl GsaMethod {
    pub fn is_ora(self) -> bool {
        matches!(self, GsaMethod::Fisher | GsaMethod::Ease | GsaMethod::Goseq)
    }
}

/// One selected option per pipeline axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    pub prefilter: PrefilterSpec,
    pub dedupe: DupStrategy,
    pub normalize: NormalizationMethod,
    pub de_method: DeMethod,
    pub method: GsaMethod,
    pub universe: UniversePolicy,
    pub scheme: PermutationScheme,
    pub statistic: RankingMetric,
    pub p_exp: f64,
    pub goseq_bias: Bias,
    pub goseq_method: GoseqMethod,
    pub resamples: usize,
    pub alpha: f64,
    pub adjustment: Adjustment,
    pub nes_mode: NesMode,
    pub seed: u64,
    pub n_perm: usize,
    pub min_size: usize,
    pub max_size: usize,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        let config = AnalysisConfig::default();
        PipelineSpec {
            prefilter: PrefilterSpec::default(),
            dedupe: DupStrategy::KeepFirst,
            normalize: NormalizationMethod::Tmm,
            de_method: DeMethod::Welch,
            method: GsaMethod::Fisher,
            universe: config.universe,
            scheme: PermutationScheme::Phenotype,
            statistic: RankingMetric::SignalToNoise,
            p_exp: config.weight_exponent,
            goseq_bias: Bias::Length,
            goseq_method: GoseqMethod::Wallenius,
            resamples: crate::ora::DEFAULT_RESAMPLES,
            alpha: 0.05,
            adjustment: Adjustment::BenjaminiHochberg,
            nes_mode: config.nes_mode,
            seed: config.seed,
            n_perm: config.n_permutations,
            min_size: config.min_size,
            max_size: config.max_size,
        }
    }
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(GsaError::invalid(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !ALLOWED_WEIGHT_EXPONENTS.contains(&self.p_exp) {
            return Err(GsaError::invalid(format!("p_exp {} is not one of 0, 1, 1.5, 2", self.p_exp)));
        }
        if self.method == GsaMethod::Gsea
            && self.scheme == PermutationScheme::Phenotype
            && self.statistic == RankingMetric::SignedLogp
        {
            return Err(GsaError::invalid(
                "phenotype permutation recomputes the gene-level statistic per permutation; \
                 use signal-to-noise, t-statistic or diff-of-classes instead of signed-logp",
            ));
        }
        if self.method == GsaMethod::Goseq && self.goseq_method == GoseqMethod::Resampling && self.resamples == 0 {
            return Err(GsaError::invalid("resampling needs at least one resample"));
        }
        self.analysis_config(None).validate()
    }

    pub fn analysis_config(&self, workers: Option<usize>) -> AnalysisConfig {
        AnalysisConfig {
            seed: self.seed,
            n_permutations: self.n_perm,
            weight_exponent: self.p_exp,
            min_size: self.min_size,
            max_size: self.max_size,
            universe: self.universe,
            nes_mode: self.nes_mode,
            workers,
        }
    }
}

/// Input file locations. A `ranking` replaces counts and phenotype for
/// ranking-based GSEA.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub counts: Option<PathBuf>,
    pub phenotype: Option<PathBuf>,
    pub gmt: PathBuf,
    pub mapping: Option<PathBuf>,
    pub lengths: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Parsed inputs, shared by every pipeline of a grid.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub counts: Option<CountMatrix>,
    pub phenotype: Option<PhenotypeLabels>,
    pub db: GeneSetDatabase,
    pub mapping: Option<GeneIdMapping>,
    pub lengths: Option<BTreeMap<GeneId, f64>>,
    pub ranking: Option<RankedGeneList>,
    pub records: Vec<InputRecord>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_input(role: &str, path: &Path, records: &mut Vec<InputRecord>) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| GsaError::invalid(format!("cannot read {role} file {}: {e}", path.display())))?;
    let path = fs::canonicalize(path)?;
    records.push(InputRecord { role: role.into(), path, sha256: sha256_hex(&bytes) });
    Ok(bytes)
}

impl Inputs {
    pub fn load(paths: &InputPaths) -> Result<Inputs> {
        let mut records = Vec::new();
        let mut warnings = Vec::new();
        let (counts, phenotype) = match (&paths.counts, &paths.phenotype) {
            (Some(c), Some(p)) => {
                let cm = parse_count_matrix(&read_input("counts", c, &mut records)?[..]).map_err(|e| e.in_stage("ingest"))?;
                let ph = parse_phenotype(&read_input("phenotype", p, &mut records)?[..], cm.sample_ids())
                    .map_err(|e| e.in_stage("ingest"))?;
                (Some(cm), Some(ph))
            }
            (None, None) => (None, None),
            _ => return Err(GsaError::invalid("counts and phenotype must be given together")),
        };
        if counts.is_none() && paths.ranking.is_none() {
            return Err(GsaError::invalid("either counts with a phenotype or a ranking is required"));
        }
        let (db, gmt_warnings) = parse_gmt(&read_input("gmt", &paths.gmt, &mut records)?[..]).map_err(|e| e.in_stage("ingest"))?;
        warnings.extend(gmt_warnings);
        let mapping = match &paths.mapping {
            Some(p) => Some(parse_mapping(&read_input("mapping", p, &mut records)?[..]).map_err(|e| e.in_stage("ingest"))?),
            None => None,
        };
        let lengths = match &paths.lengths {
            Some(p) => Some(parse_lengths(&read_input("lengths", p, &mut records)?[..]).map_err(|e| e.in_stage("ingest"))?),
            None => None,
        };
        let ranking = match &paths.ranking {
            Some(p) => {
                let entries = parse_ranking(&read_input("ranking", p, &mut records)?[..]).map_err(|e| e.in_stage("ingest"))?;
                Some(RankedGeneList::from_unsorted(entries).map_err(|e| e.in_stage("ingest"))?)
            }
            None => None,
        };
        Ok(Inputs { counts, phenotype, db, mapping, lengths, ranking, records, warnings })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Genes (or ranked genes) leaving the stage.
    pub genes: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub table: EnrichmentResultTable,
    pub de: Option<DeResultTable>,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

/// Counts after filtering, id conversion and duplicate removal.
fn preprocess_counts(
    spec: &PipelineSpec,
    cm: &CountMatrix,
    ph: &PhenotypeLabels,
    mapping: Option<&GeneIdMapping>,
    stages: &mut Vec<StageRecord>,
    warnings: &mut Vec<String>,
) -> Result<CountMatrix> {
    let filtered = match spec.prefilter.resolve(ph) {
        Some(rule) => prefilter(cm, rule).map_err(|e| e.in_stage("prefilter"))?,
        None => cm.clone(),
    };
    stages.push(StageRecord { stage: "prefilter".into(), genes: filtered.n_genes() });
    let converted = match mapping {
        Some(map) => {
            let (cc, report) = convert_ids(&filtered, map).map_err(|e| e.in_stage("convert-ids"))?;
            if !report.unmapped.is_empty() {
                warnings.push(format!("{} genes had no mapping and were dropped", report.unmapped.len()));
            }
            if !report.one_to_many.is_empty() {
                warnings.push(format!("{} genes mapped to several ids", report.one_to_many.len()));
            }
            if !report.many_to_one.is_empty() {
                warnings.push(format!("{} ids were reached from several genes", report.many_to_one.len()));
            }
            cc
        }
        None => ConvertedCounts::from(&filtered),
    };
    stages.push(StageRecord { stage: "convert-ids".into(), genes: converted.gene_ids.len() });
    let deduped = remove_duplicates(&converted, spec.dedupe).map_err(|e| e.in_stage("dedupe"))?;
    stages.push(StageRecord { stage: "dedupe".into(), genes: deduped.n_genes() });
    Ok(deduped)
}

fn transform(spec: &PipelineSpec, cm: &CountMatrix, stages: &mut Vec<StageRecord>) -> Result<TransformedMatrix> {
    let nf = normalization_factors(cm, spec.normalize).map_err(|e| e.in_stage("normalize"))?;
    stages.push(StageRecord { stage: "normalize".into(), genes: cm.n_genes() });
    let tm = log_cpm_transform(cm, &nf).map_err(|e| e.in_stage("transform"))?;
    stages.push(StageRecord { stage: "transform".into(), genes: tm.n_genes() });
    Ok(tm)
}

fn differential_expression(spec: &PipelineSpec, tm: &TransformedMatrix, ph: &PhenotypeLabels) -> Result<DeResultTable> {
    let gs = group_summaries(tm, ph)?;
    match spec.de_method {
        DeMethod::Welch => welch_de(&gs),
        DeMethod::ModeratedT => moderated_t(&gs, ModeratedPrior::default()),
    }
}

pub fn run_pipeline(spec: &PipelineSpec, inputs: &Inputs, workers: Option<usize>) -> Result<PipelineOutput> {
    spec.validate()?;
    let config = spec.analysis_config(workers);
    let mut stages = Vec::new();
    let mut warnings = inputs.warnings.clone();
    let mut de_table = None;

    if let Some(rl) = &inputs.ranking {
        if spec.method != GsaMethod::Gsea || spec.scheme == PermutationScheme::Phenotype {
            return Err(GsaError::invalid(
                "a precomputed ranking only supports GSEA with gene-set or gene-label permutation",
            ));
        }
        stages.push(StageRecord { stage: "ranking".into(), genes: rl.len() });
        let mut table =
            gsea_test(&FcsInput::Ranking(rl), &inputs.db, spec.scheme, &config).map_err(|e| e.in_stage("gsea"))?;
        finish(spec, &mut table, &mut warnings)?;
        return Ok(PipelineOutput { table, de: None, stages, warnings });
    }

    let (cm, ph) = match (&inputs.counts, &inputs.phenotype) {
        (Some(cm), Some(ph)) => (cm, ph),
        _ => return Err(GsaError::invalid("this pipeline needs counts and a phenotype")),
    };
    let counts = preprocess_counts(spec, cm, ph, inputs.mapping.as_ref(), &mut stages, &mut warnings)?;
    let tm = transform(spec, &counts, &mut stages)?;
    let mut table = match spec.method {
        GsaMethod::Fisher | GsaMethod::Ease | GsaMethod::Goseq => {
            let de = differential_expression(spec, &tm, ph).map_err(|e| e.in_stage("de"))?;
            stages.push(StageRecord { stage: "de".into(), genes: de.len() });
            let (de_list, measured) = call_de_genes(&de, spec.alpha).map_err(|e| e.in_stage("call-de"))?;
            stages.push(StageRecord { stage: "call-de".into(), genes: de_list.len() });
            let stage = if spec.method == GsaMethod::Goseq { "goseq" } else { "ora" };
            let universe = build_universe(&measured, &inputs.db, spec.universe).map_err(|e| e.in_stage(stage))?;
            let in_universe: HashSet<GeneId> = universe.iter().cloned().collect();
            let db = restrict_database(&inputs.db, &in_universe, spec.min_size, spec.max_size)
                .map_err(|e| e.in_stage(stage))?;
            let de_list: Vec<GeneId> = de_list.into_iter().filter(|g| in_universe.contains(g)).collect();
            let table = match spec.method {
                GsaMethod::Fisher => ora_fisher(&de_list, &universe, &db),
                GsaMethod::Ease => ora_ease(&de_list, &universe, &db),
                _ => goseq(spec, &de_list, &universe, &db, &counts, inputs.lengths.as_ref()),
            }
            .map_err(|e| e.in_stage(stage))?;
            de_table = Some(de);
            table
        }
        GsaMethod::Padog => padog_test(&tm, ph, &inputs.db, &config).map_err(|e| e.in_stage("padog"))?,
        GsaMethod::Gsea => match (spec.scheme, spec.statistic.gene_level()) {
            (PermutationScheme::Phenotype, Some(statistic)) => {
                gsea_test(&FcsInput::Matrix { tm: &tm, ph, statistic }, &inputs.db, spec.scheme, &config)
                    .map_err(|e| e.in_stage("gsea"))?
            }
            (_, statistic) => {
                let rl = match statistic {
                    Some(kind) => gene_level_statistic(&group_summaries(&tm, ph).map_err(|e| e.in_stage("de"))?, kind),
                    None => {
                        let de = differential_expression(spec, &tm, ph).map_err(|e| e.in_stage("de"))?;
                        stages.push(StageRecord { stage: "de".into(), genes: de.len() });
                        let rl = signed_logp_ranking(&de);
                        de_table = Some(de);
                        rl
                    }
                }
                .map_err(|e| e.in_stage("ranking"))?;
                stages.push(StageRecord { stage: "ranking".into(), genes: rl.len() });
                gsea_test(&FcsInput::Ranking(&rl), &inputs.db, spec.scheme, &config).map_err(|e| e.in_stage("gsea"))?
            }
        },
    };
    finish(spec, &mut table, &mut warnings)?;
    Ok(PipelineOutput { table, de: de_table, stages, warnings })
}

fn goseq(
    spec: &PipelineSpec,
    de_list: &[GeneId],
    universe: &[GeneId],
    db: &GeneSetDatabase,
    counts: &CountMatrix,
    lengths: Option<&BTreeMap<GeneId, f64>>,
) -> Result<EnrichmentResultTable> {
    let options = GoseqOptions { method: spec.goseq_method, resamples: spec.resamples, seed: spec.seed };
    let de: HashSet<&str> = de_list.iter().map(String::as_str).collect();
    let flags: Vec<bool> = universe.iter().map(|g| de.contains(g.as_str())).collect();
    let pwf = if spec.goseq_method == GoseqMethod::Hypergeometric {
        crate::ora::ProbabilityWeightingFunction { bias: spec.goseq_bias, gene_ids: universe.to_vec(), weights: vec![1.0; universe.len()] }
    } else {
        let covariate = bias_covariate(spec.goseq_bias, universe, lengths, Some(counts))?;
        fit_pwf(universe, &flags, &covariate, spec.goseq_bias)?
    };
    ora_goseq(de_list, universe, db, &pwf, &options)
}

fn finish(spec: &PipelineSpec, table: &mut EnrichmentResultTable, warnings: &mut Vec<String>) -> Result<()> {
    if spec.adjustment != Adjustment::BenjaminiHochberg {
        table.readjust(spec.adjustment)?;
    }
    warnings.extend(table.warnings.iter().cloned());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to re-execute a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub spec: PipelineSpec,
    pub inputs: Vec<InputRecord>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
    pub warnings: Vec<String>,
}

impl Provenance {
    pub fn input_paths(&self) -> Result<InputPaths> {
        let mut paths = InputPaths::default();
        for r in &self.inputs {
            let p = Some(r.path.clone());
            match r.role.as_str() {
                "counts" => paths.counts = p,
                "phenotype" => paths.phenotype = p,
                "gmt" => paths.gmt = r.path.clone(),
                "mapping" => paths.mapping = p,
                "lengths" => paths.lengths = p,
                "ranking" => paths.ranking = p,
                other => return Err(GsaError::invalid(format!("unknown input role `{other}` in provenance"))),
            }
        }
        Ok(paths)
    }
}

/// Serialized result files of a run, in the order they are written.
pub fn render_outputs(out: &PipelineOutput) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut buf = Vec::new();
    write_enrichment(&mut buf, &out.table)?;
    files.push((RESULT_FILE.to_string(), buf));
    if let Some(de) = &out.de {
        let mut buf = Vec::new();
        write_de(&mut buf, de)?;
        files.push((DE_FILE.to_string(), buf));
    }
    Ok(files)
}

pub fn provenance_for(spec: &PipelineSpec, inputs: &Inputs, out: &PipelineOutput) -> Result<Provenance> {
    let outputs = render_outputs(out)?
        .into_iter()
        .map(|(file, bytes)| OutputRecord { file, sha256: sha256_hex(&bytes) })
        .collect();
    Ok(Provenance {
        schema_version: PROVENANCE_SCHEMA_VERSION,
        tool: "gsa".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        inputs: inputs.records.clone(),
        stages: out.stages.clone(),
        outputs,
        warnings: out.warnings.clone(),
    })
}

pub fn provenance_json(p: &Provenance) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(p)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the result files and the provenance record into `dir`.
pub fn write_outputs(dir: &Path, spec: &PipelineSpec, inputs: &Inputs, out: &PipelineOutput) -> Result<Provenance> {
    fs::create_dir_all(dir)?;
    for (file, bytes) in render_outputs(out)? {
        fs::write(dir.join(file), bytes)?;
    }
    let prov = provenance_for(spec, inputs, out)?;
    fs::write(dir.join(PROVENANCE_FILE), provenance_json(&prov)?)?;
    Ok(prov)
}

/// Loads inputs, runs the pipeline and writes its outputs.
pub fn run_to_dir(spec: &PipelineSpec, paths: &InputPaths, dir: &Path, workers: Option<usize>) -> Result<(PipelineOutput, Provenance)> {
    let inputs = Inputs::load(paths)?;
    let out = run_pipeline(spec, &inputs, workers)?;
    let prov = write_outputs(dir, spec, &inputs, &out)?;
    Ok((out, prov))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    /// Output files whose digest differs from the recorded one.
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn reproduced(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-executes the run described by a provenance file into `dir` and checks
/// every output against its recorded digest.
pub fn replay(provenance: &Path, dir: &Path, workers: Option<usize>) -> Result<ReplayReport> {
    let recorded: Provenance = serde_json::from_slice(&fs::read(provenance)?)?;
    if recorded.schema_version != PROVENANCE_SCHEMA_VERSION {
        return Err(GsaError::invalid(format!(
            "provenance schema version {} is not supported (expected {PROVENANCE_SCHEMA_VERSION})",
            recorded.schema_version
        )));
    }
    let inputs = Inputs::load(&recorded.input_paths()?)?;
    for (now, then) in inputs.records.iter().zip(&recorded.inputs) {
        if now.sha256 != then.sha256 {
            return Err(GsaError::invalid(format!("input file {} changed since the recorded run", now.path.display())));
        }
    }
    let out = run_pipeline(&recorded.spec, &inputs, workers)?;
    let prov = write_outputs(dir, &recorded.spec, &inputs, &out)?;
    let mut mismatched: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|o| !prov.outputs.contains(o))
        .map(|o| o.file.clone())
        .collect();
    if prov.outputs.len() != recorded.outputs.len() {
        mismatched.extend(prov.outputs.iter().filter(|o| !recorded.outputs.contains(o)).map(|o| o.file.clone()));
    }
    Ok(ReplayReport { mismatched })
}
