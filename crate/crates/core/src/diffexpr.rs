//! Two-group statistics on the transformed matrix.
//!
//! Orientation is always group 0 minus group 1. Standard deviations are
//! floored at [`SD_FLOOR`] before they enter any denominator.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{GsaError, Result};
use crate::kernel::adjust_bh;
use crate::model::{DeResultTable, DeRow, GeneId, PhenotypeLabels, RankedGeneList};
use crate::preprocess::TransformedMatrix;

pub const SD_FLOOR: f64 = 1e-8;

/// Per-gene means and sample standard deviations of both phenotype groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummaries {
    pub gene_ids: Vec<GeneId>,
    pub mean0: Vec<f64>,
    pub mean1: Vec<f64>,
    pub sd0: Vec<f64>,
    pub sd1: Vec<f64>,
    pub m0: usize,
    pub m1: usize,
}

impl GroupSummaries {
    pub fn len(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_ids.is_empty()
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone, m: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / m as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (m - 1) as f64).sqrt())
}

pub fn group_summaries(tm: &TransformedMatrix, ph: &PhenotypeLabels) -> Result<GroupSummaries> {
    let ph = ph.aligned_to(tm.sample_ids())?;
    summaries_for_labels(tm, ph.labels())
}

/// Same as [`group_summaries`] for labels already aligned with the matrix.
pub(crate) fn summaries_for_labels(tm: &TransformedMatrix, labels: &[u8]) -> Result<GroupSummaries> {
    let m1 = labels.iter().filter(|&&l| l == 1).count();
    let m0 = labels.len() - m1;
    if m0 < 2 || m1 < 2 {
        return Err(GsaError::invalid(format!(
            "each phenotype group needs at least two samples for variance-based statistics (m0 = {m0}, m1 = {m1})"
        )));
    }
    let n = tm.n_genes();
    let mut out = GroupSummaries {
        gene_ids: tm.gene_ids().to_vec(),
        mean0: Vec::with_capacity(n),
        mean1: Vec::with_capacity(n),
        sd0: Vec::with_capacity(n),
        sd1: Vec::with_capacity(n),
        m0,
        m1,
    };
    for i in 0..n {
        let row = tm.row(i);
        let group = |g: u8| row.iter().zip(labels).filter(move |(_, &l)| l == g).map(|(&v, _)| v);
        let (mu0, sd0) = mean_sd(group(0), m0);
        let (mu1, sd1) = mean_sd(group(1), m1);
        out.mean0.push(mu0);
        out.mean1.push(mu1);
        out.sd0.push(sd0);
        out.sd1.push(sd1);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneLevelStatistic {
    SignalToNoise,
    TStatistic,
    DiffOfClasses,
}

fn floored(sd: f64) -> f64 {
    sd.max(SD_FLOOR)
}

/// Statistic values in gene order (not sorted).
pub fn gene_level_values(gs: &GroupSummaries, kind: GeneLevelStatistic) -> Vec<f64> {
    let (m0, m1) = (gs.m0 as f64, gs.m1 as f64);
    (0..gs.len())
        .map(|i| {
            let diff = gs.mean0[i] - gs.mean1[i];
            let (s0, s1) = (floored(gs.sd0[i]), floored(gs.sd1[i]));
            match kind {
                GeneLevelStatistic::SignalToNoise => diff / (s0 + s1),
                GeneLevelStatistic::TStatistic => diff / (s0 * s0 / m0 + s1 * s1 / m1).sqrt(),
                GeneLevelStatistic::DiffOfClasses => diff,
            }
        })
        .collect()
}

pub fn gene_level_statistic(gs: &GroupSummaries, kind: GeneLevelStatistic) -> Result<RankedGeneList> {
    let values = gene_level_values(gs, kind);
    RankedGeneList::from_unsorted(gs.gene_ids.iter().cloned().zip(values).collect())
}

fn two_sided_t(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| GsaError::Numerical(format!("Student t with {df} degrees of freedom: {e}")))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

fn finish_table(gs: &GroupSummaries, stats: Vec<(f64, f64, bool)>) -> Result<DeResultTable> {
    let p: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let q = adjust_bh(&p)?;
    let rows = (0..gs.len())
        .map(|i| DeRow {
            gene_id: gs.gene_ids[i].clone(),
            log_fold_change: gs.mean0[i] - gs.mean1[i],
            statistic: stats[i].0,
            p_value: p[i],
            adjusted_p: q[i],
            degenerate: stats[i].2,
        })
        .collect();
    DeResultTable::new(rows)
}

/// Welch t-test per gene with Welch-Satterthwaite degrees of freedom.
pub fn welch_de(gs: &GroupSummaries) -> Result<DeResultTable> {
    let (m0, m1) = (gs.m0 as f64, gs.m1 as f64);
    let stats = (0..gs.len())
        .map(|i| {
            let degenerate = gs.sd0[i] < SD_FLOOR && gs.sd1[i] < SD_FLOOR;
            let (v0, v1) = (floored(gs.sd0[i]).powi(2) / m0, floored(gs.sd1[i]).powi(2) / m1);
            let t = (gs.mean0[i] - gs.mean1[i]) / (v0 + v1).sqrt();
            let df = (v0 + v1).powi(2) / (v0 * v0 / (m0 - 1.0) + v1 * v1 / (m1 - 1.0));
            Ok((t, two_sided_t(t, df)?, degenerate))
        })
        .collect::<Result<Vec<_>>>()?;
    finish_table(gs, stats)
}

/// Pooled variances `((m0-1) s0^2 + (m1-1) s1^2) / (m0+m1-2)` on floored sds.
pub fn pooled_variances(gs: &GroupSummaries) -> Vec<f64> {
    let d = (gs.m0 + gs.m1 - 2) as f64;
    (0..gs.len())
        .map(|i| {
            ((gs.m0 - 1) as f64 * floored(gs.sd0[i]).powi(2) + (gs.m1 - 1) as f64 * floored(gs.sd1[i]).powi(2)) / d
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeratedPrior {
    pub df: f64,
    /// Prior variance; `None` uses the median pooled variance.
    pub variance: Option<f64>,
}

impl Default for ModeratedPrior {
    fn default() -> Self {
        ModeratedPrior { df: 4.0, variance: None }
    }
}

/// Moderated t values in gene order, with the degrees of freedom used.
pub(crate) fn moderated_t_values(gs: &GroupSummaries, prior: ModeratedPrior) -> Result<(Vec<f64>, f64)> {
    let pooled = pooled_variances(gs);
    let prior_var = match prior.variance {
        Some(v) => v,
        None => {
            let mut sorted = pooled.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let med = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
            med.max(SD_FLOOR * SD_FLOOR)
        }
    };
    if !(prior.df > 0.0 && prior.df.is_finite()) || !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(GsaError::invalid(format!(
            "moderated t needs positive prior df and variance (got {}, {prior_var})",
            prior.df
        )));
    }
    let d = (gs.m0 + gs.m1 - 2) as f64;
    let scale = (1.0 / gs.m0 as f64 + 1.0 / gs.m1 as f64).sqrt();
    let t = (0..gs.len())
        .map(|i| {
            let shrunk = (prior.df * prior_var + d * pooled[i]) / (prior.df + d);
            (gs.mean0[i] - gs.mean1[i]) / (shrunk.sqrt() * scale)
        })
        .collect();
    Ok((t, prior.df + d))
}

/// Moderated t-test: pooled variances shrunk towards a prior variance.
pub fn moderated_t(gs: &GroupSummaries, prior: ModeratedPrior) -> Result<DeResultTable> {
    let (t, df) = moderated_t_values(gs, prior)?;
    let stats = t
        .into_iter()
        .enumerate()
        .map(|(i, t)| Ok((t, two_sided_t(t, df)?, gs.sd0[i] < SD_FLOOR && gs.sd1[i] < SD_FLOOR)))
        .collect::<Result<Vec<_>>>()?;
    finish_table(gs, stats)
}

/// `-log10(p) * sign(LFC)`, with p clamped to the smallest positive double.
pub fn signed_logp_ranking(de: &DeResultTable) -> Result<RankedGeneList> {
    let tiny = f64::from_bits(1);
    RankedGeneList::from_unsorted(
        de.rows()
            .iter()
            .map(|r| {
                let sign = if r.log_fold_change > 0.0 {
                    1.0
                } else if r.log_fold_change < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (r.gene_id.clone(), -r.p_value.max(tiny).log10() * sign)
            })
            .collect(),
    )
}

/// Genes with adjusted p at most `alpha`, and the full tested universe.
pub fn call_de_genes(de: &DeResultTable, alpha: f64) -> Result<(Vec<GeneId>, Vec<GeneId>)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(GsaError::invalid(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let de_list = de
        .rows()
        .iter()
        .filter(|r| r.adjusted_p <= alpha)
        .map(|r| r.gene_id.clone())
        .collect();
    let universe = de.rows().iter().map(|r| r.gene_id.clone()).collect();
    Ok((de_list, universe))
}
