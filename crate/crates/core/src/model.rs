//! Domain types shared by every stage of the analysis.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely between worker threads.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::kernel::Adjustment;

pub type GeneId = String;
pub type SampleId = String;

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a String>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(GsaError::invalid(format!("duplicate {what} `{id}`")));
        }
    }
    Ok(())
}

/// Integer read counts, genes x samples, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    gene_ids: Vec<GeneId>,
    sample_ids: Vec<SampleId>,
    counts: Vec<u64>,
}

impl CountMatrix {
    pub fn new(gene_ids: Vec<GeneId>, sample_ids: Vec<SampleId>, counts: Vec<u64>) -> Result<Self> {
        if gene_ids.is_empty() {
            return Err(GsaError::invalid("count matrix has no genes"));
        }
        if sample_ids.len() < 2 {
            return Err(GsaError::invalid("count matrix needs at least two samples"));
        }
        if counts.len() != gene_ids.len() * sample_ids.len() {
            return Err(GsaError::invalid(format!(
                "count matrix body has {} cells, expected {} x {}",
                counts.len(),
                gene_ids.len(),
                sample_ids.len()
            )));
        }
        check_unique(&gene_ids, "gene id")?;
        check_unique(&sample_ids, "sample id")?;
        Ok(CountMatrix {
            gene_ids,
            sample_ids,
            counts,
        })
    }

    /// Builds a matrix from rows; each row must have one count per sample.
    pub fn from_rows(rows: Vec<(GeneId, Vec<u64>)>, sample_ids: Vec<SampleId>) -> Result<Self> {
        let p = sample_ids.len();
        let mut gene_ids = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len() * p);
        for (id, row) in rows {
            if row.len() != p {
                return Err(GsaError::invalid(format!(
                    "row `{id}` has {} counts, expected {p}",
                    row.len()
                )));
            }
            gene_ids.push(id);
            counts.extend(row);
        }
        CountMatrix::new(gene_ids, sample_ids, counts)
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

    pub fn row(&self, gene: usize) -> &[u64] {
        let p = self.n_samples();
        &self.counts[gene * p..(gene + 1) * p]
    }

    pub fn get(&self, gene: usize, sample: usize) -> u64 {
        self.counts[gene * self.n_samples() + sample]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&GeneId, &[u64])> {
        self.gene_ids
            .iter()
            .zip(self.counts.chunks_exact(self.n_samples()))
    }

    /// Column sums of the raw counts (library sizes `S_j`).
    pub fn library_sizes(&self) -> Vec<f64> {
        let mut sums = vec![0u64; self.n_samples()];
        for (_, row) in self.rows() {
            for (s, &k) in sums.iter_mut().zip(row) {
                *s += k;
            }
        }
        sums.into_iter().map(|s| s as f64).collect()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.rows().map(|(_, r)| r.iter().sum()).collect()
    }

    /// Keeps the rows whose index satisfies `keep`, preserving order.
    pub(crate) fn select_rows(&self, keep: impl Fn(usize) -> bool) -> Option<CountMatrix> {
        let rows: Vec<(GeneId, Vec<u64>)> = (0..self.n_genes())
            .filter(|&i| keep(i))
            .map(|i| (self.gene_ids[i].clone(), self.row(i).to_vec()))
            .collect();
        if rows.is_empty() {
            return None;
        }
        CountMatrix::from_rows(rows, self.sample_ids.clone()).ok()
    }
}

/// Binary phenotype assignment aligned with a sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhenotypeLabels {
    sample_ids: Vec<SampleId>,
    labels: Vec<u8>,
}

impl PhenotypeLabels {
    pub fn new(sample_ids: Vec<SampleId>, labels: Vec<u8>) -> Result<Self> {
        if sample_ids.len() != labels.len() {
            return Err(GsaError::invalid("phenotype labels do not cover the samples"));
        }
        check_unique(&sample_ids, "sample id")?;
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(GsaError::invalid(format!("phenotype label {bad} is not 0 or 1")));
        }
        let ph = PhenotypeLabels { sample_ids, labels };
        let (m0, m1) = ph.group_sizes();
        if m0 == 0 || m1 == 0 {
            return Err(GsaError::invalid(format!(
                "both phenotype groups must be non-empty (m0 = {m0}, m1 = {m1})"
            )));
        }
        Ok(ph)
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let m1 = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - m1, m1)
    }

    /// Re-orders the labels to follow `samples`, which must be a permutation
    /// of this assignment's sample ids.
    pub fn aligned_to(&self, samples: &[SampleId]) -> Result<PhenotypeLabels> {
        let index: BTreeMap<&str, u8> = self
            .sample_ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
            .collect();
        if samples.len() != self.sample_ids.len() {
            return Err(GsaError::invalid(
                "phenotype and count matrix have different sample counts",
            ));
        }
        let labels = samples
            .iter()
            .map(|s| {
                index
                    .get(s.as_str())
                    .copied()
                    .ok_or_else(|| GsaError::invalid(format!("sample `{s}` has no phenotype label")))
            })
            .collect::<Result<Vec<_>>>()?;
        PhenotypeLabels::new(samples.to_vec(), labels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    members: Vec<GeneId>,
}

impl GeneSet {
    pub fn new(name: impl Into<String>, description: impl Into<String>, members: Vec<GeneId>) -> Result<Self> {
        let name = name.into();
        if members.is_empty() {
            return Err(GsaError::invalid(format!("gene set `{name}` has no members")));
        }
        check_unique(&members, &format!("member of gene set `{name}`"))?;
        Ok(GeneSet {
            name,
            description: description.into(),
            members,
        })
    }

    pub fn members(&self) -> &[GeneId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Named gene sets plus the per-gene membership count `f_g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSetDatabase {
    sets: Vec<GeneSet>,
    membership: BTreeMap<GeneId, usize>,
}

impl GeneSetDatabase {
    pub fn new(sets: Vec<GeneSet>) -> Result<Self> {
        check_unique(sets.iter().map(|s| &s.name), "gene set name")?;
        let mut membership = BTreeMap::new();
        for set in &sets {
            for g in set.members() {
                *membership.entry(g.clone()).or_insert(0) += 1;
            }
        }
        Ok(GeneSetDatabase { sets, membership })
    }

    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of sets containing `gene` (0 when the gene is not annotated).
    pub fn membership_count(&self, gene: &str) -> usize {
        self.membership.get(gene).copied().unwrap_or(0)
    }

    pub fn membership_counts(&self) -> &BTreeMap<GeneId, usize> {
        &self.membership
    }

    /// Union of all set members, sorted.
    pub fn annotated_genes(&self) -> BTreeSet<GeneId> {
        self.membership.keys().cloned().collect()
    }
}

/// Intersects every set with `universe` and drops sets whose restricted size
/// falls outside `[min_size, max_size]`.
pub fn restrict_database(
    db: &GeneSetDatabase,
    universe: &HashSet<GeneId>,
    min_size: usize,
    max_size: usize,
) -> Result<GeneSetDatabase> {
    if min_size < 1 {
        return Err(GsaError::invalid("minimum gene set size must be at least 1"));
    }
    if min_size > max_size {
        return Err(GsaError::invalid(format!(
            "minimum gene set size {min_size} exceeds maximum {max_size}"
        )));
    }
    let sets: Vec<GeneSet> = db
        .sets()
        .iter()
        .filter_map(|set| {
            let members: Vec<GeneId> = set
                .members()
                .iter()
                .filter(|g| universe.contains(g.as_str()))
                .cloned()
                .collect();
            (members.len() >= min_size && members.len() <= max_size).then(|| GeneSet {
                name: set.name.clone(),
                description: set.description.clone(),
                members,
            })
        })
        .collect();
    if sets.is_empty() {
        return Err(GsaError::NoTestableSets);
    }
    GeneSetDatabase::new(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeRow {
    pub gene_id: GeneId,
    /// `mean(group 0) - mean(group 1)` on the log2 scale.
    pub log_fold_change: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
    /// Set when the statistic relied on floored standard deviations.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResultTable {
    rows: Vec<DeRow>,
}

impl DeResultTable {
    pub fn new(rows: Vec<DeRow>) -> Result<Self> {
        check_unique(rows.iter().map(|r| &r.gene_id), "gene id")?;
        for r in &rows {
            if !(0.0..=1.0).contains(&r.p_value) || !(0.0..=1.0).contains(&r.adjusted_p) {
                return Err(GsaError::invalid(format!(
                    "gene `{}` has a p-value outside [0, 1]",
                    r.gene_id
                )));
            }
        }
        Ok(DeResultTable { rows })
    }

    pub fn rows(&self) -> &[DeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Genes sorted by decreasing statistic; ties broken by ascending gene id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGeneList {
    genes: Vec<GeneId>,
    values: Vec<f64>,
}

impl RankedGeneList {
    pub fn from_unsorted(mut entries: Vec<(GeneId, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(GsaError::invalid("ranked gene list is empty"));
        }
        if let Some((g, _)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(GsaError::invalid(format!("gene `{g}` has a non-finite statistic")));
        }
        check_unique(entries.iter().map(|(g, _)| g), "gene id")?;
        // -0.0 and 0.0 must tie so the gene id decides
        for e in entries.iter_mut() {
            e.1 += 0.0;
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (genes, values) = entries.into_iter().unzip();
        Ok(RankedGeneList { genes, values })
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn genes(&self) -> &[GeneId] {
        &self.genes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GeneId, f64)> {
        self.genes.iter().zip(self.values.iter().copied())
    }

    /// Applies `f` to every statistic and re-sorts.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<RankedGeneList> {
        RankedGeneList::from_unsorted(self.iter().map(|(g, v)| (g.clone(), f(v))).collect())
    }
}

/// Per-row detail that differs between the two families of tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowDetail {
    Ora {
        universe: usize,
        set_size: usize,
        de_count: usize,
        hits: usize,
        /// Wallenius odds ratio, only for the bias-aware test.
        odds: Option<f64>,
    },
    Fcs {
        scheme: String,
        n_perm: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub set_name: String,
    pub method: String,
    /// ES, PADOG raw score, or the hit count for ORA.
    pub score: f64,
    /// NES or standardized PADOG score; `None` when undefined.
    pub normalized_score: Option<f64>,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub set_size: usize,
    pub detail: RowDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableKind {
    Ora,
    Fcs,
}

/// One row per tested gene set, with adjusted p-values computed over exactly
/// these rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentResultTable {
    pub kind: TableKind,
    pub method: String,
    pub rows: Vec<EnrichmentRow>,
    /// `key -> value` notes carried into the output (e.g. how p was adjusted).
    pub metadata: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl EnrichmentResultTable {
    pub fn row(&self, set_name: &str) -> Option<&EnrichmentRow> {
        self.rows.iter().find(|r| r.set_name == set_name)
    }

    /// Recomputes the adjusted column with another correction.
    pub fn readjust(&mut self, adjustment: Adjustment) -> Result<()> {
        let raw: Vec<f64> = self.rows.iter().map(|r| r.raw_p).collect();
        for (row, q) in self.rows.iter_mut().zip(adjustment.apply(&raw)?) {
            row.adjusted_p = q;
        }
        self.metadata.insert("adjustment".into(), format!("{adjustment:?}").to_lowercase());
        Ok(())
    }

    /// Report order. GSEA tables are ordered by decreasing |NES| (rows
    /// without one last), then raw p; every other table by raw p, then by
    /// decreasing |normalized score|. Name breaks the remaining ties.
    pub fn ranked(&self) -> Vec<&EnrichmentRow> {
        let by_nes = self.kind == TableKind::Fcs && self.method == "gsea";
        let magnitude = |r: &EnrichmentRow| r.normalized_score.unwrap_or(r.score).abs();
        let mut rows: Vec<&EnrichmentRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            let first = if by_nes {
                let na = a.normalized_score.map_or(f64::NEG_INFINITY, f64::abs);
                let nb = b.normalized_score.map_or(f64::NEG_INFINITY, f64::abs);
                nb.total_cmp(&na).then_with(|| a.raw_p.total_cmp(&b.raw_p))
            } else {
                a.raw_p.total_cmp(&b.raw_p).then_with(|| magnitude(b).total_cmp(&magnitude(a)))
            };
            first.then_with(|| a.set_name.cmp(&b.set_name))
        });
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniversePolicy {
    /// All measured genes.
    Experiment,
    /// Union of all gene set members.
    Annotated,
    /// Measured genes that are annotated to at least one set.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NesMode {
    /// Normalize positive and negative scores by same-sign permutation means.
    SameSign,
    /// Normalize by the mean absolute score of all permutations.
    AllPermutations,
}

pub const ALLOWED_WEIGHT_EXPONENTS: [f64; 4] = [0.0, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub n_permutations: usize,
    pub weight_exponent: f64,
    pub min_size: usize,
    pub max_size: usize,
    pub universe: UniversePolicy,
    pub nes_mode: NesMode,
    /// Worker threads for permutation loops; `None` uses the global pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 42,
            n_permutations: 1000,
            weight_exponent: 1.0,
            min_size: 5,
            max_size: 500,
            universe: UniversePolicy::Intersection,
            nes_mode: NesMode::SameSign,
            workers: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_permutations < 1 {
            return Err(GsaError::invalid("number of permutations must be at least 1"));
        }
        if self.min_size < 1 || self.min_size > self.max_size {
            return Err(GsaError::invalid(format!(
                "invalid gene set size range [{}, {}]",
                self.min_size, self.max_size
            )));
        }
        if !ALLOWED_WEIGHT_EXPONENTS.contains(&self.weight_exponent) {
            return Err(GsaError::invalid(format!(
                "weight exponent {} is not one of 0, 1, 1.5, 2",
                self.weight_exponent
            )));
        }
        if self.workers == Some(0) {
            return Err(GsaError::invalid("worker count must be positive"));
        }
        Ok(())
    }
}
