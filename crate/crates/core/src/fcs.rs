//! Functional class scoring: the GSEA enrichment score with its three
//! permutation nulls, and PADOG.
//!
//! Matrix input (phenotype permutation, PADOG) recomputes the gene-level
//! statistics for every relabelling of the samples. Ranking input only allows
//! the gene set and gene label schemes.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffexpr::{gene_level_values, moderated_t_values, summaries_for_labels, GeneLevelStatistic, ModeratedPrior};
use crate::error::{GsaError, Result};
use crate::kernel::{adjust_bh, ln_choose, permute, rng_stream, sample_without_replacement};
use crate::model::{
    restrict_database, AnalysisConfig, EnrichmentResultTable, EnrichmentRow, GeneId, GeneSet, GeneSetDatabase,
    NesMode, PhenotypeLabels, RankedGeneList, RowDetail, TableKind,
};
use crate::preprocess::TransformedMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichmentScore {
    pub es: f64,
    /// 1-based step of the maximal deviation.
    pub step: usize,
}

/// `|r|^p`, with the common exponents spelled out so they stay exact.
fn weight(r: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        r.abs()
    } else if p == 2.0 {
        r * r
    } else {
        r.abs().powf(p)
    }
}

/// Running-sum maximum for hits at the sorted `positions` of a list whose
/// per-position weights are `weights`. Only the steps right before and right
/// after each hit can hold the maximal deviation, so this is `O(G)`.
fn walk(weights: &[f64], positions: &[usize]) -> Result<EnrichmentScore> {
    let n = weights.len();
    let g = positions.len();
    if g == 0 {
        return Err(GsaError::invalid("gene set has no genes in the ranked list"));
    }
    if g == n {
        return Err(GsaError::invalid("gene set covers the whole ranked list; no misses are defined"));
    }
    let n_r: f64 = positions.iter().map(|&i| weights[i]).sum();
    if n_r == 0.0 {
        return Err(GsaError::invalid("all gene set members have a zero statistic"));
    }
    let n_miss = (n - g) as f64;
    let mut best = EnrichmentScore { es: 0.0, step: 0 };
    let mut best_abs = -1.0;
    let mut consider = |d: f64, step: usize| {
        if d.abs() > best_abs {
            best_abs = d.abs();
            best = EnrichmentScore { es: d, step };
        }
    };
    let mut hit_sum = 0.0;
    for (k, &pos) in positions.iter().enumerate() {
        let misses = pos - k;
        if misses > 0 && (k == 0 || positions[k - 1] + 1 != pos) {
            consider(hit_sum / n_r - misses as f64 / n_miss, pos);
        }
        hit_sum += weights[pos];
        consider(hit_sum / n_r - misses as f64 / n_miss, pos + 1);
    }
    Ok(best)
}

fn set_positions(rl: &RankedGeneList, set: &GeneSet) -> Vec<usize> {
    let index: HashMap<&str, usize> = rl.genes().iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut pos: Vec<usize> = set.members().iter().filter_map(|g| index.get(g.as_str()).copied()).collect();
    pos.sort_unstable();
    pos
}

/// Weighted Kolmogorov-Smirnov running-sum statistic of `set` on `rl`.
pub fn enrichment_score(rl: &RankedGeneList, set: &GeneSet, p_exp: f64) -> Result<EnrichmentScore> {
    if !(p_exp >= 0.0 && p_exp.is_finite()) {
        return Err(GsaError::invalid(format!("weight exponent must be non-negative, got {p_exp}")));
    }
    let weights: Vec<f64> = rl.values().iter().map(|&r| weight(r, p_exp)).collect();
    walk(&weights, &set_positions(rl, set))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationScheme {
    Phenotype,
    GeneSet,
    GeneLabel,
}

impl PermutationScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            PermutationScheme::Phenotype => "phenotype",
            PermutationScheme::GeneSet => "gene-set",
            PermutationScheme::GeneLabel => "gene-label",
        }
    }
}

/// Input to an FCS test: the expression matrix (FCS I) or a fixed ranking
/// (FCS II).
#[derive(Debug, Clone, Copy)]
pub enum FcsInput<'a> {
    Matrix {
        tm: &'a TransformedMatrix,
        ph: &'a PhenotypeLabels,
        statistic: GeneLevelStatistic,
    },
    Ranking(&'a RankedGeneList),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationNull {
    pub scheme: PermutationScheme,
    pub n_perm: usize,
    pub es: Vec<f64>,
}

fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| GsaError::invalid(format!("cannot start {w} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// A ranking expressed as per-position weights plus the position of every
/// gene in some fixed base order.
struct Ranked {
    weights: Vec<f64>,
    position: Vec<usize>,
}

impl Ranked {
    fn positions_of(&self, members: &[usize]) -> Vec<usize> {
        let mut pos: Vec<usize> = members.iter().map(|&g| self.position[g]).collect();
        pos.sort_unstable();
        pos
    }
}

/// Matrix context with genes in matrix row order.
struct MatrixContext<'a> {
    tm: &'a TransformedMatrix,
    labels: Vec<u8>,
    statistic: GeneLevelStatistic,
    /// Rank of each gene id in ascending string order, for tie breaking.
    id_rank: Vec<usize>,
}

impl<'a> MatrixContext<'a> {
    fn new(tm: &'a TransformedMatrix, ph: &PhenotypeLabels, statistic: GeneLevelStatistic) -> Result<Self> {
        let labels = ph.aligned_to(tm.sample_ids())?.labels().to_vec();
        let mut order: Vec<usize> = (0..tm.n_genes()).collect();
        order.sort_by(|&a, &b| tm.gene_ids()[a].cmp(&tm.gene_ids()[b]));
        let mut id_rank = vec![0; order.len()];
        for (r, g) in order.into_iter().enumerate() {
            id_rank[g] = r;
        }
        Ok(MatrixContext { tm, labels, statistic, id_rank })
    }

    fn values(&self, labels: &[u8]) -> Result<Vec<f64>> {
        let gs = summaries_for_labels(self.tm, labels)?;
        Ok(gene_level_values(&gs, self.statistic).into_iter().map(|v| v + 0.0).collect())
    }

    fn ranked(&self, labels: &[u8], p_exp: f64) -> Result<Ranked> {
        let values = self.values(labels)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GsaError::Numerical(format!("gene `{}` has a non-finite statistic", self.tm.gene_ids()[i])));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(self.id_rank[a].cmp(&self.id_rank[b])));
        let mut position = vec![0; values.len()];
        for (p, &g) in order.iter().enumerate() {
            position[g] = p;
        }
        let weights = order.iter().map(|&g| weight(values[g], p_exp)).collect();
        Ok(Ranked { weights, position })
    }

    fn permuted_labels(&self, seed: u64, i: usize) -> Vec<u8> {
        let perm = permute(&mut rng_stream(seed, i as u64), self.labels.len());
        perm.iter().map(|&j| self.labels[j]).collect()
    }
}

/// Distinct label arrangements `C(m, m1)`, saturating.
fn arrangements(labels: &[u8]) -> f64 {
    let m1 = labels.iter().filter(|&&l| l == 1).count();
    ln_choose(labels.len() as u64, m1 as u64).exp()
}

/// Observed ES and the permutation ES matrix (`[set][perm]`) for `sets`,
/// whose members are given as indices into the input's base gene order.
struct NullRun {
    observed: Vec<f64>,
    null: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

fn gsea_null_run(
    scheme: PermutationScheme,
    input: &FcsInput,
    sets: &[Vec<usize>],
    config: &AnalysisConfig,
) -> Result<NullRun> {
    let p_exp = config.weight_exponent;
    let n_perm = config.n_permutations;
    let seed = config.seed;
    let mut warnings = Vec::new();
    // a zero-weight fictive set has no defined walk; it counts as ES = 0
    let null_es = |r: Result<EnrichmentScore>| match r {
        Ok(e) => Ok(e.es),
        Err(GsaError::Invalid(msg)) if msg.contains("zero statistic") => Ok(0.0),
        Err(e) => Err(e),
    };
    match (scheme, input) {
        (PermutationScheme::Phenotype, FcsInput::Matrix { tm, ph, statistic }) => {
            let ctx = MatrixContext::new(tm, ph, *statistic)?;
            if n_perm as f64 > arrangements(&ctx.labels) {
                warnings.push(format!(
                    "{n_perm} permutations exceed the {} distinct label arrangements; duplicates are included",
                    arrangements(&ctx.labels).round()
                ));
            }
            let base = ctx.ranked(&ctx.labels, p_exp)?;
            let observed = sets
                .iter()
                .map(|m| walk(&base.weights, &base.positions_of(m)).map(|e| e.es))
                .collect::<Result<Vec<_>>>()?;
            let per_perm = run_in_pool(config.workers, || {
                (0..n_perm)
                    .into_par_iter()
                    .map(|i| {
                        let r = ctx.ranked(&ctx.permuted_labels(seed, i), p_exp)?;
                        sets.iter().map(|m| null_es(walk(&r.weights, &r.positions_of(m)))).collect()
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })??;
            let null = (0..sets.len()).map(|s| per_perm.iter().map(|p| p[s]).collect()).collect();
            Ok(NullRun { observed, null, warnings })
        }
        (PermutationScheme::Phenotype, FcsInput::Ranking(_)) => Err(GsaError::invalid(
            "phenotype permutation needs the expression matrix; a fixed ranking only allows gene-set or gene-label permutation",
        )),
        (_, FcsInput::Matrix { .. }) => Err(GsaError::invalid(
            "gene-set and gene-label permutation operate on a ranking; derive one from the matrix first",
        )),
        (PermutationScheme::GeneSet, FcsInput::Ranking(rl)) => {
            let weights: Vec<f64> = rl.values().iter().map(|&r| weight(r, p_exp)).collect();
            let n = weights.len();
            let observed = sets
                .iter()
                .map(|m| {
                    let mut pos = m.clone();
                    pos.sort_unstable();
                    walk(&weights, &pos).map(|e| e.es)
                })
                .collect::<Result<Vec<_>>>()?;
            let null = run_in_pool(config.workers, || {
                sets.par_iter()
                    .map(|m| {
                        (0..n_perm)
                            .map(|i| {
                                let mut pos = sample_without_replacement(&mut rng_stream(seed, i as u64), n, m.len())?;
                                pos.sort_unstable();
                                null_es(walk(&weights, &pos))
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            Ok(NullRun { observed, null, warnings })
        }
        (PermutationScheme::GeneLabel, FcsInput::Ranking(rl)) => {
            let weights: Vec<f64> = rl.values().iter().map(|&r| weight(r, p_exp)).collect();
            let n = weights.len();
            let identity = Ranked { weights: weights.clone(), position: (0..n).collect() };
            let observed = sets
                .iter()
                .map(|m| walk(&weights, &identity.positions_of(m)).map(|e| e.es))
                .collect::<Result<Vec<_>>>()?;
            let per_perm = run_in_pool(config.workers, || {
                (0..n_perm)
                    .into_par_iter()
                    .map(|i| {
                        // gene formerly at position j now sits at position perm[j]
                        let r = Ranked { weights: Vec::new(), position: permute(&mut rng_stream(seed, i as u64), n) };
                        sets.iter().map(|m| null_es(walk(&weights, &r.positions_of(m)))).collect()
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })??;
            let null = (0..sets.len()).map(|s| per_perm.iter().map(|p| p[s]).collect()).collect();
            Ok(NullRun { observed, null, warnings })
        }
    }
}

fn base_genes<'a>(input: &'a FcsInput) -> &'a [GeneId] {
    match input {
        FcsInput::Matrix { tm, .. } => tm.gene_ids(),
        FcsInput::Ranking(rl) => rl.genes(),
    }
}

fn member_indices(genes: &[GeneId], set: &GeneSet) -> Vec<usize> {
    let index: HashMap<&str, usize> = genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    set.members().iter().filter_map(|g| index.get(g.as_str()).copied()).collect()
}

/// Permutation ES values of one set under `scheme`, permutation `i` drawing
/// from stream `(seed, i)`.
pub fn permutation_null(
    scheme: PermutationScheme,
    input: &FcsInput,
    set: &GeneSet,
    config: &AnalysisConfig,
) -> Result<PermutationNull> {
    config.validate()?;
    let members = member_indices(base_genes(input), set);
    let run = gsea_null_run(scheme, input, std::slice::from_ref(&members), config)?;
    Ok(PermutationNull { scheme, n_perm: config.n_permutations, es: run.null.into_iter().next().unwrap() })
}

/// Permutation p-value and NES of an observed ES.
pub fn significance(observed: f64, null: &[f64], mode: NesMode) -> (f64, Option<f64>) {
    let positive = observed >= 0.0;
    let chosen: Vec<f64> = match mode {
        NesMode::SameSign => null.iter().copied().filter(|&v| (v >= 0.0) == positive).collect(),
        NesMode::AllPermutations => null.to_vec(),
    };
    let exceed = chosen.iter().filter(|v| v.abs() >= observed.abs()).count();
    let p = (1 + exceed) as f64 / (1 + chosen.len()) as f64;
    let mean_abs = chosen.iter().map(|v| v.abs()).sum::<f64>() / chosen.len() as f64;
    let nes = (!chosen.is_empty() && mean_abs > 0.0).then(|| observed / mean_abs);
    (p, nes)
}

pub fn gsea_test(
    input: &FcsInput,
    db: &GeneSetDatabase,
    scheme: PermutationScheme,
    config: &AnalysisConfig,
) -> Result<EnrichmentResultTable> {
    config.validate()?;
    let genes = base_genes(input);
    let measured = genes.iter().cloned().collect();
    let tested = restrict_database(db, &measured, config.min_size, config.max_size)?;
    let mut warnings = Vec::new();
    let mut names = Vec::new();
    let mut sets = Vec::new();
    for set in tested.sets() {
        if set.len() == genes.len() {
            warnings.push(format!("set `{}` covers every ranked gene and was not tested", set.name));
            continue;
        }
        names.push(set.name.clone());
        sets.push(member_indices(genes, set));
    }
    if sets.is_empty() {
        return Err(GsaError::NoTestableSets);
    }
    let run = gsea_null_run(scheme, input, &sets, config)?;
    warnings.extend(run.warnings);
    let mut raw = Vec::with_capacity(sets.len());
    let mut nes = Vec::with_capacity(sets.len());
    for (s, name) in names.iter().enumerate() {
        let (p, n) = significance(run.observed[s], &run.null[s], config.nes_mode);
        if n.is_none() {
            warnings.push(format!("set `{name}` has no usable permutations of matching sign; NES is undefined"));
        }
        raw.push(p);
        nes.push(n);
    }
    let adjusted = adjust_bh(&raw)?;
    let rows = (0..sets.len())
        .map(|s| EnrichmentRow {
            set_name: names[s].clone(),
            method: "gsea".into(),
            score: run.observed[s],
            normalized_score: nes[s],
            raw_p: raw[s],
            adjusted_p: adjusted[s],
            set_size: sets[s].len(),
            detail: RowDetail::Fcs {
                scheme: scheme.as_str().into(),
                n_perm: config.n_permutations,
                seed: config.seed,
            },
        })
        .collect();
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("adjustment".into(), "benjamini-hochberg".into());
    metadata.insert("scheme".into(), scheme.as_str().into());
    metadata.insert(
        "null".into(),
        if scheme == PermutationScheme::Phenotype { "self-contained" } else { "competitive" }.into(),
    );
    metadata.insert("weight_exponent".into(), config.weight_exponent.to_string());
    metadata.insert("nes".into(), format!("{:?}", config.nes_mode).to_lowercase());
    Ok(EnrichmentResultTable { kind: TableKind::Fcs, method: "gsea".into(), rows, metadata, warnings })
}

/// PADOG gene weights `1 + sqrt((f_max - f) / (f_max - f_min))` from the
/// membership frequencies of `db`.
pub fn padog_weights(db: &GeneSetDatabase) -> HashMap<GeneId, f64> {
    let f = db.membership_counts();
    let fmax = f.values().copied().max().unwrap_or(1) as f64;
    let fmin = f.values().copied().min().unwrap_or(1) as f64;
    f.iter()
        .map(|(g, &c)| {
            let w = if fmax == fmin { 1.0 } else { 1.0 + ((fmax - c as f64) / (fmax - fmin)).sqrt() };
            (g.clone(), w)
        })
        .collect()
}

/// Raw PADOG scores `mean(w |t|)` for every set.
fn padog_raw(t: &[f64], sets: &[Vec<(usize, f64)>]) -> Vec<f64> {
    sets.iter()
        .map(|m| m.iter().map(|&(g, w)| w * t[g].abs()).sum::<f64>() / m.len() as f64)
        .collect()
}

fn standardize(scores: &[f64]) -> Result<Vec<f64>> {
    let k = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / k;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0)).sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(GsaError::Numerical("PADOG scores have zero spread across gene sets".into()));
    }
    Ok(scores.iter().map(|s| (s - mean) / sd).collect())
}

pub fn padog_test(
    tm: &TransformedMatrix,
    ph: &PhenotypeLabels,
    db: &GeneSetDatabase,
    config: &AnalysisConfig,
) -> Result<EnrichmentResultTable> {
    config.validate()?;
    let labels = ph.aligned_to(tm.sample_ids())?.labels().to_vec();
    let measured = tm.gene_ids().iter().cloned().collect();
    let tested = restrict_database(db, &measured, config.min_size, config.max_size)?;
    if tested.len() < 2 {
        return Err(GsaError::invalid(
            "PADOG standardizes scores across gene sets and needs at least two testable sets",
        ));
    }
    let weights = padog_weights(&tested);
    let sets: Vec<Vec<(usize, f64)>> = tested
        .sets()
        .iter()
        .map(|s| member_indices(tm.gene_ids(), s).into_iter().map(|g| (g, weights[&tm.gene_ids()[g]])).collect())
        .collect();
    let t_for = |labels: &[u8]| -> Result<Vec<f64>> {
        let gs = summaries_for_labels(tm, labels)?;
        Ok(moderated_t_values(&gs, ModeratedPrior::default())?.0)
    };
    let raw_observed = padog_raw(&t_for(&labels)?, &sets);
    let observed = standardize(&raw_observed)?;
    let mut warnings = Vec::new();
    if config.n_permutations as f64 > arrangements(&labels) {
        warnings.push(format!(
            "{} permutations exceed the {} distinct label arrangements; duplicates are included",
            config.n_permutations,
            arrangements(&labels).round()
        ));
    }
    let per_perm = run_in_pool(config.workers, || {
        (0..config.n_permutations)
            .into_par_iter()
            .map(|i| {
                let perm = permute(&mut rng_stream(config.seed, i as u64), labels.len());
                let shuffled: Vec<u8> = perm.iter().map(|&j| labels[j]).collect();
                standardize(&padog_raw(&t_for(&shuffled)?, &sets))
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })??;
    let n = config.n_permutations as f64;
    let raw: Vec<f64> = (0..sets.len())
        .map(|s| (1 + per_perm.iter().filter(|p| p[s] >= observed[s]).count()) as f64 / (1.0 + n))
        .collect();
    let adjusted = adjust_bh(&raw)?;
    let rows = tested
        .sets()
        .iter()
        .enumerate()
        .map(|(s, set)| EnrichmentRow {
            set_name: set.name.clone(),
            method: "padog".into(),
            score: raw_observed[s],
            normalized_score: Some(observed[s]),
            raw_p: raw[s],
            adjusted_p: adjusted[s],
            set_size: set.len(),
            detail: RowDetail::Fcs { scheme: "phenotype".into(), n_perm: config.n_permutations, seed: config.seed },
        })
        .collect();
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert(
        "adjustment".into(),
        "benjamini-hochberg, post-hoc: PADOG itself reports unadjusted p-values".into(),
    );
    metadata.insert("scheme".into(), "phenotype".into());
    metadata.insert("null".into(), "self-contained".into());
    Ok(EnrichmentResultTable { kind: TableKind::Fcs, method: "padog".into(), rows, metadata, warnings })
}
