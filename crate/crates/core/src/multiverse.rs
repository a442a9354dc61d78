//! Factorial grids of pipelines and how much their results agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{GsaError, Result};
use crate::model::EnrichmentResultTable;
use crate::pipeline::{run_pipeline, write_outputs, Inputs, PipelineOutput, PipelineSpec};
use crate::report::fmt_f64;

/// Cartesian product of `axes` (field name to candidate values) applied on
/// top of `base`. Axes vary in name order, the last one fastest.
pub fn expand_grid(base: &PipelineSpec, axes: &BTreeMap<String, Vec<Value>>) -> Result<Vec<PipelineSpec>> {
    let base_value = serde_json::to_value(base)?;
    let mut specs = vec![base_value];
    for (axis, values) in axes {
        if !specs[0].as_object().is_some_and(|o| o.contains_key(axis)) {
            return Err(GsaError::invalid(format!("unknown grid axis `{axis}`")));
        }
        if values.is_empty() {
            return Err(GsaError::invalid(format!("grid axis `{axis}` has no values")));
        }
        specs = specs
            .into_iter()
            .flat_map(|s| {
                values.iter().map(move |v| {
                    let mut s = s.clone();
                    s[axis.as_str()] = v.clone();
                    s
                })
            })
            .collect();
    }
    specs
        .into_iter()
        .map(|v| {
            let spec: PipelineSpec = serde_json::from_value(v)
                .map_err(|e| GsaError::invalid(format!("grid produced an invalid pipeline: {e}")))?;
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

#[derive(Debug)]
pub struct PipelineRun {
    pub spec: PipelineSpec,
    pub outcome: std::result::Result<PipelineOutput, String>,
}

impl PipelineRun {
    pub fn table(&self) -> Option<&EnrichmentResultTable> {
        self.outcome.as_ref().ok().map(|o| &o.table)
    }

    /// Sets with adjusted p at most this pipeline's alpha.
    pub fn significant(&self) -> Option<BTreeSet<String>> {
        self.table().map(|t| {
            t.rows.iter().filter(|r| r.adjusted_p <= self.spec.alpha).map(|r| r.set_name.clone()).collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisEffect {
    pub axis: String,
    /// Pipeline pairs that differ in this axis only.
    pub pairs: usize,
    pub mean_jaccard: Option<f64>,
    pub mean_spearman: Option<f64>,
}

#[derive(Debug)]
pub struct MultiverseReport {
    pub runs: Vec<PipelineRun>,
    pub jaccard: Vec<Vec<Option<f64>>>,
    pub spearman: Vec<Vec<Option<f64>>>,
    pub axis_effects: Vec<AxisEffect>,
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation with tie-averaged ranks. Identical rank vectors give
/// exactly 1; constant vectors otherwise have no correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    if rx == ry {
        return Some(1.0);
    }
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn shared_p(a: &EnrichmentResultTable, b: &EnrichmentResultTable) -> (Vec<f64>, Vec<f64>) {
    let pb: BTreeMap<&str, f64> = b.rows.iter().map(|r| (r.set_name.as_str(), r.raw_p)).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows: Vec<_> = a.rows.iter().filter_map(|r| pb.get(r.set_name.as_str()).map(|&q| (&r.set_name, r.raw_p, q))).collect();
    rows.sort_by(|p, q| p.0.cmp(q.0));
    for (_, p, q) in rows {
        x.push(p);
        y.push(q);
    }
    (x, y)
}

/// Fields in which two specs differ.
fn differing_axes(a: &PipelineSpec, b: &PipelineSpec) -> Vec<String> {
    let (va, vb) = (serde_json::to_value(a).unwrap_or_default(), serde_json::to_value(b).unwrap_or_default());
    match (va.as_object(), vb.as_object()) {
        (Some(oa), Some(ob)) => oa.iter().filter(|(k, v)| ob.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect(),
        _ => Vec::new(),
    }
}

/// Runs every spec (concurrently) and compares all pairs. A failing pipeline
/// is recorded as failed and leaves its agreement cells empty.
pub fn run_multiverse(specs: &[PipelineSpec], inputs: &Inputs, workers: Option<usize>) -> Result<MultiverseReport> {
    if specs.len() < 2 {
        return Err(GsaError::invalid("a multiverse needs at least two pipelines"));
    }
    for spec in specs {
        spec.validate()?;
    }
    let runs: Vec<PipelineRun> = specs
        .par_iter()
        .map(|spec| PipelineRun {
            spec: spec.clone(),
            outcome: run_pipeline(spec, inputs, workers).map_err(|e| e.to_string()),
        })
        .collect();
    let k = runs.len();
    let significant: Vec<Option<BTreeSet<String>>> = runs.iter().map(PipelineRun::significant).collect();
    let mut jac = vec![vec![None; k]; k];
    let mut rho = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            if let (Some(a), Some(b)) = (&significant[i], &significant[j]) {
                jac[i][j] = Some(jaccard(a, b));
            }
            if let (Some(a), Some(b)) = (runs[i].table(), runs[j].table()) {
                rho[i][j] = if i == j {
                    Some(1.0)
                } else {
                    let (x, y) = shared_p(a, b);
                    spearman(&x, &y)
                };
            }
        }
    }
    let mut effects: BTreeMap<String, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = differing_axes(&runs[i].spec, &runs[j].spec);
            if let [axis] = diff.as_slice() {
                let e = effects.entry(axis.clone()).or_default();
                e.0 += 1;
                e.1.extend(jac[i][j]);
                e.2.extend(rho[i][j]);
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let axis_effects = effects
        .into_iter()
        .map(|(axis, (pairs, j, r))| AxisEffect { axis, pairs, mean_jaccard: mean(&j), mean_spearman: mean(&r) })
        .collect();
    Ok(MultiverseReport { runs, jaccard: jac, spearman: rho, axis_effects })
}

fn pipeline_id(i: usize) -> String {
    format!("p{:02}", i + 1)
}

fn write_matrix(path: &Path, m: &[Vec<Option<f64>>]) -> Result<()> {
    let mut f = Vec::new();
    let ids: Vec<String> = (0..m.len()).map(pipeline_id).collect();
    writeln!(f, "pipeline\t{}", ids.join("\t"))?;
    for (i, row) in m.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.map(fmt_f64).unwrap_or_else(|| "NA".into())).collect();
        writeln!(f, "{}\t{}", ids[i], cells.join("\t"))?;
    }
    fs::write(path, f)?;
    Ok(())
}

/// Writes `pipelines.tsv`, `jaccard.tsv`, `spearman.tsv`, `axes.tsv` and one
/// sub-directory of results and provenance per successful pipeline.
pub fn write_multiverse(dir: &Path, report: &MultiverseReport, inputs: &Inputs) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = Vec::new();
    writeln!(f, "pipeline\tstatus\tsignificant\tspec")?;
    for (i, run) in report.runs.iter().enumerate() {
        let spec = serde_json::to_string(&run.spec)?;
        match &run.outcome {
            Ok(out) => {
                write_outputs(&dir.join(pipeline_id(i)), &run.spec, inputs, out)?;
                let n = run.significant().map(|s| s.len()).unwrap_or(0);
                writeln!(f, "{}\tok\t{n}\t{spec}", pipeline_id(i))?;
            }
            Err(e) => writeln!(f, "{}\tfailed: {}\tNA\t{spec}", pipeline_id(i), e.replace(['\t', '\n'], " "))?,
        }
    }
    fs::write(dir.join("pipelines.tsv"), f)?;
    write_matrix(&dir.join("jaccard.tsv"), &report.jaccard)?;
    write_matrix(&dir.join("spearman.tsv"), &report.spearman)?;
    let mut f = Vec::new();
    writeln!(f, "axis\tpairs\tmean_jaccard\tmean_spearman")?;
    for e in &report.axis_effects {
        let show = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "NA".into());
        writeln!(f, "{}\t{}\t{}\t{}", e.axis, e.pairs, show(e.mean_jaccard), show(e.mean_spearman))?;
    }
    fs::write(dir.join("axes.tsv"), f)?;
    Ok(())
}
