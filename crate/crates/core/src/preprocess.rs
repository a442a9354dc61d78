//! Count-level preprocessing: pre-filtering, gene id conversion, duplicate
//! removal, between-sample normalization and the log-cpm transformation.
//!
//! Library sizes are always the column sums of the matrix handed in, so they
//! are recomputed after pre-filtering.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::ingest::GeneIdMapping;
use crate::model::{CountMatrix, GeneId, PhenotypeLabels, SampleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum FilterRule {
    /// Keep genes whose total count is at least `min_total`.
    TotalCount { min_total: u64 },
    /// Keep genes with a count of at least `min_count` in `min_samples` samples.
    CountInSamples { min_count: u64, min_samples: usize },
    /// Keep genes with a cpm of at least `min_cpm` in `min_samples` samples.
    CpmInSamples { min_cpm: f64, min_samples: usize },
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule::TotalCount { min_total: 10 }
    }
}

impl FilterRule {
    /// cpm rule requiring `min_cpm` in as many samples as the smaller group.
    pub fn cpm_in_smaller_group(min_cpm: f64, phenotype: &PhenotypeLabels) -> Self {
        let (m0, m1) = phenotype.group_sizes();
        FilterRule::CpmInSamples {
            min_cpm,
            min_samples: m0.min(m1),
        }
    }
}

/// Drops lowly expressed genes; row order is preserved.
pub fn prefilter(cm: &CountMatrix, rule: FilterRule) -> Result<CountMatrix> {
    let keep: Vec<bool> = match rule {
        FilterRule::TotalCount { min_total } => cm.rows().map(|(_, r)| r.iter().sum::<u64>() >= min_total).collect(),
        FilterRule::CountInSamples { min_count, min_samples } => cm
            .rows()
            .map(|(_, r)| r.iter().filter(|&&k| k >= min_count).count() >= min_samples)
            .collect(),
        FilterRule::CpmInSamples { min_cpm, min_samples } => {
            let libs = cm.library_sizes();
            cm.rows()
                .map(|(_, r)| {
                    r.iter()
                        .zip(&libs)
                        .filter(|(&k, &s)| s > 0.0 && 1e6 * k as f64 / s >= min_cpm)
                        .count()
                        >= min_samples
                })
                .collect()
        }
    };
    cm.select_rows(|i| keep[i]).ok_or(GsaError::EmptyResult("pre-filtering"))
}

/// Count rows whose gene ids may repeat; the output of [`convert_ids`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertedCounts {
    pub gene_ids: Vec<GeneId>,
    pub sample_ids: Vec<SampleId>,
    pub rows: Vec<Vec<u64>>,
}

impl From<&CountMatrix> for ConvertedCounts {
    fn from(cm: &CountMatrix) -> Self {
        ConvertedCounts {
            gene_ids: cm.gene_ids().to_vec(),
            sample_ids: cm.sample_ids().to_vec(),
            rows: cm.rows().map(|(_, r)| r.to_vec()).collect(),
        }
    }
}

impl ConvertedCounts {
    pub fn has_duplicates(&self) -> bool {
        let mut seen = HashSet::new();
        !self.gene_ids.iter().all(|g| seen.insert(g))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConversionReport {
    /// Source ids without any target; these genes are lost.
    pub unmapped: Vec<GeneId>,
    /// Source ids that map to more than one target, with their target count.
    pub one_to_many: Vec<(GeneId, usize)>,
    /// Target ids reached from more than one source row.
    pub many_to_one: Vec<(GeneId, usize)>,
}

/// Re-labels every row through `map`. One-to-many sources duplicate the row;
/// many-to-one targets are left duplicated for [`remove_duplicates`].
pub fn convert_ids(cm: &CountMatrix, map: &GeneIdMapping) -> Result<(ConvertedCounts, ConversionReport)> {
    let mut report = ConversionReport::default();
    let mut out = ConvertedCounts {
        gene_ids: Vec::new(),
        sample_ids: cm.sample_ids().to_vec(),
        rows: Vec::new(),
    };
    let mut per_target: BTreeMap<&str, usize> = BTreeMap::new();
    for (gene, row) in cm.rows() {
        let targets = map.targets(gene);
        if targets.is_empty() {
            report.unmapped.push(gene.clone());
            continue;
        }
        if targets.len() > 1 {
            report.one_to_many.push((gene.clone(), targets.len()));
        }
        for t in targets {
            *per_target.entry(t.as_str()).or_insert(0) += 1;
            out.gene_ids.push(t.clone());
            out.rows.push(row.to_vec());
        }
    }
    report.many_to_one = per_target
        .into_iter()
        .filter(|&(_, c)| c > 1)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    if out.gene_ids.is_empty() {
        return Err(GsaError::EmptyResult("gene id conversion"));
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DupStrategy {
    /// Keep the first row seen for each id and drop the later ones.
    KeepFirst,
    /// Replace the rows by their element-wise mean, rounded half away from zero.
    Mean,
    /// Keep the row with the largest total count (first one on ties).
    MaxCount,
}

/// Collapses rows sharing a gene id so that every id appears once, in order of
/// first appearance.
pub fn remove_duplicates(cc: &ConvertedCounts, strategy: DupStrategy) -> Result<CountMatrix> {
    let mut groups: Vec<(GeneId, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, g) in cc.gene_ids.iter().enumerate() {
        match index.get(g.as_str()) {
            Some(&slot) => groups[slot].1.push(i),
            None => {
                index.insert(g, groups.len());
                groups.push((g.clone(), vec![i]));
            }
        }
    }
    let p = cc.sample_ids.len();
    let rows = groups
        .into_iter()
        .map(|(gene, members)| {
            let row = match strategy {
                DupStrategy::KeepFirst => cc.rows[members[0]].clone(),
                DupStrategy::MaxCount => {
                    let mut best = members[0];
                    let mut best_total: u64 = cc.rows[best].iter().sum();
                    for &m in &members[1..] {
                        let total: u64 = cc.rows[m].iter().sum();
                        if total > best_total {
                            best = m;
                            best_total = total;
                        }
                    }
                    cc.rows[best].clone()
                }
                DupStrategy::Mean => {
                    let n = members.len() as u64;
                    (0..p)
                        .map(|j| {
                            let sum: u64 = members.iter().map(|&m| cc.rows[m][j]).sum();
                            (2 * sum + n) / (2 * n)
                        })
                        .collect()
                }
            };
            (gene, row)
        })
        .collect();
    CountMatrix::from_rows(rows, cc.sample_ids.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMethod {
    Tmm,
    MedianOfRatios,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationFactors {
    pub method: NormalizationMethod,
    pub sample_ids: Vec<SampleId>,
    pub factors: Vec<f64>,
    /// Raw column sums `S_j`.
    pub library_sizes: Vec<f64>,
}

impl NormalizationFactors {
    pub fn effective_library_sizes(&self) -> Vec<f64> {
        self.library_sizes.iter().zip(&self.factors).map(|(s, f)| s * f).collect()
    }
}

pub fn normalization_factors(cm: &CountMatrix, method: NormalizationMethod) -> Result<NormalizationFactors> {
    let library_sizes = cm.library_sizes();
    let factors = match method {
        NormalizationMethod::None => vec![1.0; cm.n_samples()],
        NormalizationMethod::MedianOfRatios => median_of_ratios(cm)?,
        NormalizationMethod::Tmm => tmm(cm, &library_sizes)?,
    };
    Ok(NormalizationFactors {
        method,
        sample_ids: cm.sample_ids().to_vec(),
        factors,
        library_sizes,
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_of_ratios(cm: &CountMatrix) -> Result<Vec<f64>> {
    let p = cm.n_samples();
    let mut log_ratios: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (_, row) in cm.rows() {
        if row.contains(&0) {
            continue;
        }
        let logs: Vec<f64> = row.iter().map(|&k| (k as f64).ln()).collect();
        let log_geomean = logs.iter().sum::<f64>() / p as f64;
        for (j, l) in logs.into_iter().enumerate() {
            log_ratios[j].push(l - log_geomean);
        }
    }
    if log_ratios[0].is_empty() {
        return Err(GsaError::invalid(
            "median-of-ratios normalization needs at least one gene with positive counts in every sample",
        ));
    }
    Ok(log_ratios
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            median(&v).exp()
        })
        .collect())
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ranks with ties averaged (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

const TMM_LOG_RATIO_TRIM: f64 = 0.3;
const TMM_SUM_TRIM: f64 = 0.05;

fn tmm(cm: &CountMatrix, libs: &[f64]) -> Result<Vec<f64>> {
    if let Some(j) = libs.iter().position(|&s| s <= 0.0) {
        return Err(GsaError::invalid(format!(
            "sample `{}` has no counts; TMM needs positive library sizes",
            cm.sample_ids()[j]
        )));
    }
    let p = cm.n_samples();
    let upper_quartiles: Vec<f64> = (0..p)
        .map(|j| {
            let mut col: Vec<f64> = (0..cm.n_genes()).map(|i| cm.get(i, j) as f64 / libs[j]).collect();
            col.sort_by(f64::total_cmp);
            quantile_sorted(&col, 0.75)
        })
        .collect();
    let mean_uq = upper_quartiles.iter().sum::<f64>() / p as f64;
    let reference = upper_quartiles
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - mean_uq).abs().total_cmp(&(b.1 - mean_uq).abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);

    let raw: Vec<f64> = (0..p).map(|j| tmm_factor(cm, j, reference, libs)).collect();
    let log_mean = raw.iter().map(|f| f.ln()).sum::<f64>() / p as f64;
    Ok(raw.into_iter().map(|f| f / log_mean.exp()).collect())
}

fn tmm_factor(cm: &CountMatrix, sample: usize, reference: usize, libs: &[f64]) -> f64 {
    let (n_obs, n_ref) = (libs[sample], libs[reference]);
    let mut log_ratio = Vec::new();
    let mut abs_expr = Vec::new();
    let mut variance = Vec::new();
    for i in 0..cm.n_genes() {
        let (obs, refc) = (cm.get(i, sample) as f64, cm.get(i, reference) as f64);
        if obs == 0.0 || refc == 0.0 {
            continue;
        }
        let (lo, lr) = ((obs / n_obs).log2(), (refc / n_ref).log2());
        log_ratio.push(lo - lr);
        abs_expr.push(0.5 * (lo + lr));
        variance.push((n_obs - obs) / n_obs / obs + (n_ref - refc) / n_ref / refc);
    }
    if log_ratio.is_empty() || log_ratio.iter().all(|m| m.abs() < 1e-6) {
        return 1.0;
    }
    let n = log_ratio.len() as f64;
    let lo_m = (n * TMM_LOG_RATIO_TRIM).floor() + 1.0;
    let hi_m = n + 1.0 - lo_m;
    let lo_a = (n * TMM_SUM_TRIM).floor() + 1.0;
    let hi_a = n + 1.0 - lo_a;
    let rank_m = average_ranks(&log_ratio);
    let rank_a = average_ranks(&abs_expr);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..log_ratio.len() {
        if rank_m[k] >= lo_m && rank_m[k] <= hi_m && rank_a[k] >= lo_a && rank_a[k] <= hi_a {
            num += log_ratio[k] / variance[k];
            den += 1.0 / variance[k];
        }
    }
    let f = num / den;
    if f.is_finite() {
        f.exp2()
    } else {
        1.0
    }
}

/// Real-valued matrix on the log2-cpm scale, same axes as its source counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    gene_ids: Vec<GeneId>,
    sample_ids: Vec<SampleId>,
    values: Vec<f64>,
}

impl TransformedMatrix {
    pub fn new(gene_ids: Vec<GeneId>, sample_ids: Vec<SampleId>, values: Vec<f64>) -> Result<Self> {
        if gene_ids.is_empty() || sample_ids.len() < 2 || values.len() != gene_ids.len() * sample_ids.len() {
            return Err(GsaError::invalid("expression matrix has inconsistent dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GsaError::invalid("expression matrix has non-finite entries"));
        }
        let mut seen = HashSet::new();
        if let Some(g) = gene_ids.iter().find(|g| !seen.insert(g.as_str())) {
            return Err(GsaError::invalid(format!("duplicate gene id `{g}`")));
        }
        Ok(TransformedMatrix {
            gene_ids,
            sample_ids,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn gene_ids(&self) -> &[GeneId] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        let p = self.n_samples();
        &self.values[gene * p..(gene + 1) * p]
    }

    pub fn get(&self, gene: usize, sample: usize) -> f64 {
        self.values[gene * self.n_samples() + sample]
    }
}

/// `log2((K_ij + 0.5) / (S_j s_j + 1) * 1e6)`. Precision weights are not
/// computed.
pub fn log_cpm_transform(cm: &CountMatrix, nf: &NormalizationFactors) -> Result<TransformedMatrix> {
    if nf.sample_ids != cm.sample_ids() {
        return Err(GsaError::invalid(
            "normalization factors were computed for a different sample axis",
        ));
    }
    let effective = nf.effective_library_sizes();
    let values = cm
        .rows()
        .flat_map(|(_, row)| {
            row.iter()
                .zip(&effective)
                .map(|(&k, &lib)| ((k as f64 + 0.5) / (lib + 1.0) * 1e6).log2())
                .collect::<Vec<_>>()
        })
        .collect();
    TransformedMatrix::new(cm.gene_ids().to_vec(), cm.sample_ids().to_vec(), values)
}
