//! Over-representation analysis: Fisher, the EASE score and the bias-aware
//! GOSeq test.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::kernel::{
    adjust_bh, hypergeom_tail, rng_stream, wallenius_tail, weighted_sample_without_replacement, WalleniusParams,
};
use crate::model::{
    CountMatrix, EnrichmentResultTable, EnrichmentRow, GeneId, GeneSetDatabase, RowDetail, TableKind, UniversePolicy,
};

const PWF_FLOOR: f64 = 1e-4;
pub const DEFAULT_RESAMPLES: usize = 2000;

/// The four margins of a 2x2 over-representation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Universe size.
    pub n: u64,
    /// Set size within the universe.
    pub g: u64,
    /// DE genes within the universe.
    pub l: u64,
    /// DE genes in the set.
    pub h: u64,
}

impl ContingencyTable {
    pub fn new(n: u64, g: u64, l: u64, h: u64) -> Result<Self> {
        if g > n || l > n || h > g.min(l) || g + l > n + h {
            return Err(GsaError::invalid(format!("inconsistent contingency table N={n} G={g} L={l} H={h}")));
        }
        Ok(ContingencyTable { n, g, l, h })
    }

    /// Cells `[[H, G-H], [L-H, N-L-G+H]]`.
    pub fn cells(&self) -> [[u64; 2]; 2] {
        [[self.h, self.g - self.h], [self.l - self.h, self.n + self.h - self.l - self.g]]
    }

    pub fn fisher_p(&self) -> Result<f64> {
        hypergeom_tail(self.n, self.g, self.l, self.h)
    }

    /// EASE: one hit is removed, so the tail runs over `L-1` draws from `H-1`.
    pub fn ease_p(&self) -> Result<f64> {
        if self.h == 0 {
            return Ok(1.0);
        }
        hypergeom_tail(self.n, self.g, self.l - 1, self.h - 1)
    }
}

pub fn build_universe(measured: &[GeneId], db: &GeneSetDatabase, policy: UniversePolicy) -> Result<Vec<GeneId>> {
    let annotated = db.annotated_genes();
    let universe: Vec<GeneId> = match policy {
        UniversePolicy::Experiment => measured.to_vec(),
        UniversePolicy::Annotated => annotated.into_iter().collect(),
        UniversePolicy::Intersection => measured.iter().filter(|g| annotated.contains(*g)).cloned().collect(),
    };
    if universe.is_empty() {
        return Err(GsaError::invalid(format!("the {policy:?} universe is empty")));
    }
    Ok(universe)
}

/// Sets and DE genes reduced to universe indices.
struct Counting {
    n: usize,
    de: Vec<bool>,
    l: usize,
    sets: Vec<(String, Vec<usize>)>,
    warnings: Vec<String>,
}

fn prepare(de_list: &[GeneId], universe: &[GeneId], db: &GeneSetDatabase) -> Result<Counting> {
    let index: HashMap<&str, usize> = universe.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    if index.len() != universe.len() {
        return Err(GsaError::invalid("universe contains duplicate gene ids"));
    }
    let mut warnings = Vec::new();
    let mut de = vec![false; universe.len()];
    let mut outside = 0usize;
    for g in de_list {
        match index.get(g.as_str()) {
            Some(&i) => de[i] = true,
            None => outside += 1,
        }
    }
    if outside > 0 {
        warnings.push(format!("{outside} DE genes outside the universe were ignored"));
    }
    let l = de.iter().filter(|&&d| d).count();
    if l == 0 {
        warnings.push("DE list is empty; every set gets p = 1".to_string());
    }
    let mut sets = Vec::new();
    let mut empty = 0usize;
    for set in db.sets() {
        let members: Vec<usize> = set.members().iter().filter_map(|g| index.get(g.as_str()).copied()).collect();
        if members.is_empty() {
            empty += 1;
        } else {
            sets.push((set.name.clone(), members));
        }
    }
    if empty > 0 {
        warnings.push(format!("{empty} sets share no genes with the universe and were not tested"));
    }
    if sets.is_empty() {
        return Err(GsaError::NoTestableSets);
    }
    Ok(Counting { n: universe.len(), de, l, sets, warnings })
}

impl Counting {
    fn table(&self, members: &[usize]) -> ContingencyTable {
        let h = members.iter().filter(|&&i| self.de[i]).count();
        ContingencyTable { n: self.n as u64, g: members.len() as u64, l: self.l as u64, h: h as u64 }
    }
}

fn assemble(
    method: &str,
    counting: Counting,
    results: Vec<(ContingencyTable, f64, Option<f64>)>,
    mut metadata: BTreeMap<String, String>,
) -> Result<EnrichmentResultTable> {
    let raw: Vec<f64> = results.iter().map(|r| r.1).collect();
    let adjusted = adjust_bh(&raw)?;
    let rows = counting
        .sets
        .iter()
        .zip(results)
        .zip(adjusted)
        .map(|(((name, _), (t, p, odds)), q)| EnrichmentRow {
            set_name: name.clone(),
            method: method.to_string(),
            score: t.h as f64,
            normalized_score: None,
            raw_p: p,
            adjusted_p: q,
            set_size: t.g as usize,
            detail: RowDetail::Ora {
                universe: t.n as usize,
                set_size: t.g as usize,
                de_count: t.l as usize,
                hits: t.h as usize,
                odds,
            },
        })
        .collect();
    metadata.entry("adjustment".into()).or_insert_with(|| "benjamini-hochberg".into());
    Ok(EnrichmentResultTable { kind: TableKind::Ora, method: method.into(), rows, metadata, warnings: counting.warnings })
}

fn classic(
    method: &str,
    de_list: &[GeneId],
    universe: &[GeneId],
    db: &GeneSetDatabase,
    tail: impl Fn(&ContingencyTable) -> Result<f64>,
) -> Result<EnrichmentResultTable> {
    let counting = prepare(de_list, universe, db)?;
    let results = counting
        .sets
        .iter()
        .map(|(_, m)| {
            let t = counting.table(m);
            Ok((t, tail(&t)?, None))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(method, counting, results, BTreeMap::new())
}

pub fn ora_fisher(de_list: &[GeneId], universe: &[GeneId], db: &GeneSetDatabase) -> Result<EnrichmentResultTable> {
    classic("fisher", de_list, universe, db, ContingencyTable::fisher_p)
}

pub fn ora_ease(de_list: &[GeneId], universe: &[GeneId], db: &GeneSetDatabase) -> Result<EnrichmentResultTable> {
    classic("ease", de_list, universe, db, ContingencyTable::ease_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bias {
    Length,
    TotalCount,
}

/// Detection weights for the universe genes, one per gene in universe order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityWeightingFunction {
    pub bias: Bias,
    pub gene_ids: Vec<GeneId>,
    pub weights: Vec<f64>,
}

/// Weighted pool-adjacent-violators fit of `y` against the sort order of `x`.
/// Returns fitted values in input order; equal `x` values share one value.
pub(crate) fn isotonic_fit(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    // blocks of (sum, weight, end position in `order`)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut sum = 0.0;
        while j < order.len() && x[order[j]] == x[order[i]] {
            sum += y[order[j]];
            j += 1;
        }
        blocks.push((sum, (j - i) as f64, j));
        while blocks.len() > 1 {
            let (s1, w1, _) = blocks[blocks.len() - 2];
            let (s2, w2, e2) = blocks[blocks.len() - 1];
            if s1 / w1 <= s2 / w2 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, w1 + w2, e2);
        }
        i = j;
    }
    let mut fitted = vec![0.0; x.len()];
    let mut start = 0;
    for (s, w, end) in blocks {
        for &k in &order[start..end] {
            fitted[k] = s / w;
        }
        start = end;
    }
    fitted
}

pub fn fit_pwf(
    gene_ids: &[GeneId],
    de_flags: &[bool],
    covariate: &[f64],
    bias: Bias,
) -> Result<ProbabilityWeightingFunction> {
    if de_flags.len() != gene_ids.len() || covariate.len() != gene_ids.len() {
        return Err(GsaError::invalid("DE flags, covariate and genes differ in length"));
    }
    if let Some(i) = covariate.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(GsaError::invalid(format!("gene `{}` has an invalid covariate {}", gene_ids[i], covariate[i])));
    }
    let y: Vec<f64> = de_flags.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    let weights = isotonic_fit(covariate, &y).into_iter().map(|w| w.clamp(PWF_FLOOR, 1.0 - PWF_FLOOR)).collect();
    Ok(ProbabilityWeightingFunction { bias, gene_ids: gene_ids.to_vec(), weights })
}

/// Covariate values for `universe` from a length table or the count matrix.
pub fn bias_covariate(
    bias: Bias,
    universe: &[GeneId],
    lengths: Option<&BTreeMap<GeneId, f64>>,
    counts: Option<&CountMatrix>,
) -> Result<Vec<f64>> {
    match bias {
        Bias::Length => {
            let lengths = lengths.ok_or_else(|| GsaError::invalid("length bias needs a transcript length table"))?;
            universe
                .iter()
                .map(|g| lengths.get(g).copied().ok_or_else(|| GsaError::invalid(format!("no length for gene `{g}`"))))
                .collect()
        }
        Bias::TotalCount => {
            let counts = counts.ok_or_else(|| GsaError::invalid("total-count bias needs the count matrix"))?;
            let totals: HashMap<&str, u64> =
                counts.gene_ids().iter().map(String::as_str).zip(counts.row_totals()).collect();
            universe
                .iter()
                .map(|g| {
                    totals
                        .get(g.as_str())
                        .map(|&t| t as f64)
                        .ok_or_else(|| GsaError::invalid(format!("no counts for gene `{g}`")))
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoseqMethod {
    Wallenius,
    Resampling,
    Hypergeometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoseqOptions {
    pub method: GoseqMethod,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for GoseqOptions {
    fn default() -> Self {
        GoseqOptions { method: GoseqMethod::Wallenius, resamples: DEFAULT_RESAMPLES, seed: 42 }
    }
}

/// `mean(w | in set) / mean(w | outside)`; 1 when either side is empty.
fn odds_ratio(weights: &[f64], members: &[usize], total: f64) -> f64 {
    let g = members.len();
    let n = weights.len();
    if g == 0 || g == n {
        return 1.0;
    }
    let inside: f64 = members.iter().map(|&i| weights[i]).sum();
    (inside / g as f64) / ((total - inside) / (n - g) as f64)
}

pub fn ora_goseq(
    de_list: &[GeneId],
    universe: &[GeneId],
    db: &GeneSetDatabase,
    pwf: &ProbabilityWeightingFunction,
    options: &GoseqOptions,
) -> Result<EnrichmentResultTable> {
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "adjustment".into(),
        "benjamini-hochberg applied explicitly to the GOSeq p-values, which are unadjusted by themselves".into(),
    );
    metadata.insert("bias".into(), format!("{:?}", pwf.bias).to_lowercase());
    if options.method == GoseqMethod::Hypergeometric {
        let mut table = ora_fisher(de_list, universe, db)?;
        table.method = "goseq-hypergeometric".into();
        for row in &mut table.rows {
            row.method = table.method.clone();
        }
        table.metadata.extend(metadata);
        table.warnings.push(
            "the standard hypergeometric test ignores the detection bias; the Wallenius or resampling method is advised"
                .into(),
        );
        return Ok(table);
    }
    if pwf.gene_ids.as_slice() != universe {
        return Err(GsaError::invalid("probability weighting function was not fitted on this universe"));
    }
    let counting = prepare(de_list, universe, db)?;
    let total: f64 = pwf.weights.iter().sum();
    let results = match options.method {
        GoseqMethod::Wallenius => counting
            .sets
            .iter()
            .map(|(_, m)| {
                let t = counting.table(m);
                let omega = odds_ratio(&pwf.weights, m, total);
                let wp = WalleniusParams::new(t.g, t.n - t.g, t.l, omega)?;
                Ok((t, wallenius_tail(&wp, t.h)?, Some(omega)))
            })
            .collect::<Result<Vec<_>>>()?,
        GoseqMethod::Resampling => {
            if options.resamples == 0 {
                return Err(GsaError::invalid("resampling needs at least one resample"));
            }
            metadata.insert("resamples".into(), options.resamples.to_string());
            metadata.insert("seed".into(), options.seed.to_string());
            let exceed = resample_exceedances(&counting, &pwf.weights, options)?;
            counting
                .sets
                .iter()
                .zip(exceed)
                .map(|((_, m), x)| {
                    let t = counting.table(m);
                    let p = (1.0 + x as f64) / (1.0 + options.resamples as f64);
                    (t, p, Some(odds_ratio(&pwf.weights, m, total)))
                })
                .collect()
        }
        GoseqMethod::Hypergeometric => unreachable!(),
    };
    let name = match options.method {
        GoseqMethod::Wallenius => "goseq-wallenius",
        _ => "goseq-resampling",
    };
    assemble(name, counting, results, metadata)
}

/// For each set, the number of weighted resamples whose hit count reaches the
/// observed one. Resample `r` draws from stream `(seed, r)` and is shared by
/// all sets.
fn resample_exceedances(counting: &Counting, weights: &[f64], options: &GoseqOptions) -> Result<Vec<usize>> {
    let observed: Vec<usize> = counting.sets.iter().map(|(_, m)| counting.table(m).h as usize).collect();
    let per_resample = (0..options.resamples)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng_stream(options.seed, r as u64);
            let drawn = weighted_sample_without_replacement(&mut stream, weights, counting.l)?;
            let mut selected = vec![false; counting.n];
            for i in drawn {
                selected[i] = true;
            }
            Ok(counting
                .sets
                .iter()
                .zip(&observed)
                .map(|((_, m), &h)| m.iter().filter(|&&i| selected[i]).count() >= h)
                .collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut exceed = vec![0usize; counting.sets.len()];
    for hits in per_resample {
        for (e, hit) in exceed.iter_mut().zip(hits) {
            *e += hit as usize;
        }
    }
    Ok(exceed)
}
