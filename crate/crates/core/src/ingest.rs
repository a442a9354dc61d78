//! Parsers for the tab-separated input formats.
//!
//! All formats share the same line conventions: UTF-8, LF or CRLF line
//! endings, blank lines ignored, lines starting with `#` skipped, fields
//! trimmed of surrounding whitespace.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use log::warn;

use crate::error::{GsaError, Result};
use crate::model::{CountMatrix, GeneId, GeneSet, GeneSetDatabase, PhenotypeLabels, SampleId};

fn read_text(mut input: impl Read, format: &'static str) -> Result<String> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    String::from_utf8(bytes).map_err(|e| {
        GsaError::parse(format, 0, format!("input is not valid UTF-8 (byte {})", e.utf8_error().valid_up_to()))
    })
}

/// Yields `(1-based line number, line)` for every non-blank, non-comment line.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n').enumerate().filter_map(|(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn fields(line: &str) -> Vec<&str> {
    line.split('\t').map(str::trim).collect()
}

pub fn parse_count_matrix(input: impl Read) -> Result<CountMatrix> {
    const FMT: &str = "count matrix";
    let text = read_text(input, FMT)?;
    let mut lines = data_lines(&text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| GsaError::parse(FMT, 0, "empty input"))?;
    let header = fields(header);
    if header.len() < 3 {
        return Err(GsaError::parse(FMT, header_line, "header needs a gene column and at least two samples"));
    }
    let sample_ids: Vec<SampleId> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut seen_samples = HashSet::new();
    for s in &sample_ids {
        if s.is_empty() {
            return Err(GsaError::parse(FMT, header_line, "empty sample id"));
        }
        if !seen_samples.insert(s.as_str()) {
            return Err(GsaError::parse(FMT, header_line, format!("duplicate sample id `{s}`")));
        }
    }

    let p = sample_ids.len();
    let mut gene_ids = Vec::new();
    let mut counts = Vec::new();
    let mut seen_genes = HashSet::new();
    for (lineno, line) in lines {
        let row = fields(line);
        if row.len() != p + 1 {
            return Err(GsaError::parse(
                FMT,
                lineno,
                format!("row has {} fields, expected {}", row.len(), p + 1),
            ));
        }
        let gene = row[0];
        if gene.is_empty() {
            return Err(GsaError::parse(FMT, lineno, "empty gene id"));
        }
        if !seen_genes.insert(gene.to_string()) {
            return Err(GsaError::parse(FMT, lineno, format!("duplicate gene id `{gene}`")));
        }
        for (j, cell) in row[1..].iter().enumerate() {
            let k: u64 = cell.parse().map_err(|_| {
                GsaError::parse(
                    FMT,
                    lineno,
                    format!(
                        "cell `{cell}` for gene `{gene}`, sample `{}` is not a non-negative integer",
                        sample_ids[j]
                    ),
                )
            })?;
            counts.push(k);
        }
        gene_ids.push(gene.to_string());
    }
    if gene_ids.is_empty() {
        return Err(GsaError::parse(FMT, header_line, "no gene rows"));
    }
    CountMatrix::new(gene_ids, sample_ids, counts)
}

/// Parses a GMT file. Returns the database and any warnings produced while
/// de-duplicating members.
pub fn parse_gmt(input: impl Read) -> Result<(GeneSetDatabase, Vec<String>)> {
    const FMT: &str = "GMT";
    let text = read_text(input, FMT)?;
    let mut sets = Vec::new();
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let row = fields(line);
        if row.len() < 3 {
            return Err(GsaError::parse(
                FMT,
                lineno,
                format!("expected name, description and at least one gene, found {} fields", row.len()),
            ));
        }
        let name = row[0];
        if name.is_empty() {
            return Err(GsaError::parse(FMT, lineno, "empty gene set name"));
        }
        if let Some(first) = names.insert(name.to_string(), lineno) {
            return Err(GsaError::parse(
                FMT,
                lineno,
                format!("duplicate gene set name `{name}` (first defined on line {first})"),
            ));
        }
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        let mut dropped = Vec::new();
        for gene in row[2..].iter().filter(|g| !g.is_empty()) {
            if seen.insert(*gene) {
                members.push(gene.to_string());
            } else {
                dropped.push(*gene);
            }
        }
        if members.is_empty() {
            return Err(GsaError::parse(FMT, lineno, format!("gene set `{name}` lists no genes")));
        }
        if !dropped.is_empty() {
            let msg = format!(
                "line {lineno}: gene set `{name}` lists {} duplicate member(s): {}",
                dropped.len(),
                dropped.join(", ")
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        sets.push(GeneSet::new(name, row[1], members)?);
    }
    Ok((GeneSetDatabase::new(sets)?, warnings))
}

/// Parses phenotype labels for `samples`, either as `sample TAB label` lines or
/// as a single line of 0/1 tokens in sample order.
pub fn parse_phenotype(input: impl Read, samples: &[SampleId]) -> Result<PhenotypeLabels> {
    const FMT: &str = "phenotype";
    let text = read_text(input, FMT)?;
    let lines: Vec<(usize, &str)> = data_lines(&text).collect();
    let parse_label = |lineno: usize, token: &str| -> Result<u8> {
        match token {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(GsaError::parse(FMT, lineno, format!("label `{other}` is not 0 or 1"))),
        }
    };

    if let [(lineno, line)] = lines.as_slice() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let positional = tokens.len() == samples.len()
            && tokens.iter().all(|t| t.chars().all(|c| c.is_ascii_digit()));
        if positional {
            let labels = tokens
                .iter()
                .map(|t| parse_label(*lineno, t))
                .collect::<Result<Vec<_>>>()?;
            return PhenotypeLabels::new(samples.to_vec(), labels);
        }
    }

    let wanted: HashSet<&str> = samples.iter().map(String::as_str).collect();
    let mut assigned: BTreeMap<&str, u8> = BTreeMap::new();
    for (lineno, line) in &lines {
        let row = fields(line);
        if row.len() != 2 {
            return Err(GsaError::parse(
                FMT,
                *lineno,
                format!("expected `sample<TAB>label`, found {} fields", row.len()),
            ));
        }
        if !wanted.contains(row[0]) {
            return Err(GsaError::parse(FMT, *lineno, format!("unknown sample `{}`", row[0])));
        }
        let label = parse_label(*lineno, row[1])?;
        if assigned.insert(row[0], label).is_some() {
            return Err(GsaError::parse(FMT, *lineno, format!("sample `{}` labelled twice", row[0])));
        }
    }
    let labels = samples
        .iter()
        .map(|s| {
            assigned
                .get(s.as_str())
                .copied()
                .ok_or_else(|| GsaError::parse(FMT, 0, format!("missing sample `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    PhenotypeLabels::new(samples.to_vec(), labels)
}

/// Many-to-many relation between two gene id namespaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneIdMapping {
    pairs: Vec<(GeneId, GeneId)>,
    unmapped: BTreeSet<GeneId>,
    forward: BTreeMap<GeneId, Vec<GeneId>>,
    backward: BTreeMap<GeneId, Vec<GeneId>>,
}

impl GeneIdMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair; returns false if it was already present.
    pub fn insert(&mut self, source: impl Into<GeneId>, target: impl Into<GeneId>) -> bool {
        let (source, target) = (source.into(), target.into());
        let targets = self.forward.entry(source.clone()).or_default();
        if targets.contains(&target) {
            return false;
        }
        targets.push(target.clone());
        self.backward.entry(target.clone()).or_default().push(source.clone());
        self.unmapped.remove(&source);
        self.pairs.push((source, target));
        true
    }

    /// Records a source id that explicitly has no counterpart.
    pub fn insert_unmapped(&mut self, source: impl Into<GeneId>) {
        let source = source.into();
        if !self.forward.contains_key(&source) {
            self.unmapped.insert(source);
        }
    }

    pub fn pairs(&self) -> &[(GeneId, GeneId)] {
        &self.pairs
    }

    pub fn targets(&self, source: &str) -> &[GeneId] {
        self.forward.get(source).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sources(&self, target: &str) -> &[GeneId] {
        self.backward.get(target).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn unmapped(&self) -> &BTreeSet<GeneId> {
        &self.unmapped
    }
}

pub fn parse_mapping(input: impl Read) -> Result<GeneIdMapping> {
    const FMT: &str = "mapping";
    let text = read_text(input, FMT)?;
    let mut mapping = GeneIdMapping::new();
    for (lineno, line) in data_lines(&text) {
        let row = fields(line);
        if row.len() != 2 || row[0].is_empty() {
            return Err(GsaError::parse(
                FMT,
                lineno,
                format!("expected `source<TAB>target`, found {} fields", row.len()),
            ));
        }
        if row[1].is_empty() {
            mapping.insert_unmapped(row[0]);
        } else {
            mapping.insert(row[0], row[1]);
        }
    }
    Ok(mapping)
}

/// Parses `gene_id TAB length` lines into positive transcript lengths.
pub fn parse_lengths(input: impl Read) -> Result<BTreeMap<GeneId, f64>> {
    const FMT: &str = "lengths";
    let text = read_text(input, FMT)?;
    let mut out = BTreeMap::new();
    for (lineno, line) in data_lines(&text) {
        let row = fields(line);
        if row.len() != 2 {
            return Err(GsaError::parse(FMT, lineno, format!("expected 2 fields, found {}", row.len())));
        }
        let len: f64 = match row[1].parse() {
            Ok(v) if v > 0.0 && f64::is_finite(v) => v,
            // tolerate a header row
            _ if out.is_empty() && lineno == 1 => continue,
            _ => return Err(GsaError::parse(FMT, lineno, format!("length `{}` is not a positive number", row[1]))),
        };
        if out.insert(row[0].to_string(), len).is_some() {
            return Err(GsaError::parse(FMT, lineno, format!("duplicate gene id `{}`", row[0])));
        }
    }
    Ok(out)
}

/// Parses a real-valued genes x samples matrix (the log-cpm output format).
pub fn parse_expression_matrix(input: impl Read) -> Result<(Vec<GeneId>, Vec<SampleId>, Vec<f64>)> {
    const FMT: &str = "expression matrix";
    let text = read_text(input, FMT)?;
    let mut lines = data_lines(&text);
    let (header_line, header) = lines.next().ok_or_else(|| GsaError::parse(FMT, 0, "empty input"))?;
    let header = fields(header);
    if header.len() < 3 {
        return Err(GsaError::parse(FMT, header_line, "header needs a gene column and at least two samples"));
    }
    let samples: Vec<SampleId> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut genes = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let row = fields(line);
        if row.len() != samples.len() + 1 {
            return Err(GsaError::parse(FMT, lineno, format!("row has {} fields, expected {}", row.len(), samples.len() + 1)));
        }
        for (j, cell) in row[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    GsaError::parse(FMT, lineno, format!("cell `{cell}` for gene `{}`, sample `{}` is not a finite number", row[0], samples[j]))
                })?;
            values.push(v);
        }
        genes.push(row[0].to_string());
    }
    Ok((genes, samples, values))
}

/// Parses a two-column `gene TAB statistic` ranking.
pub fn parse_ranking(input: impl Read) -> Result<Vec<(GeneId, f64)>> {
    const FMT: &str = "ranking";
    let text = read_text(input, FMT)?;
    let mut out = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let row = fields(line);
        if row.len() != 2 {
            return Err(GsaError::parse(FMT, lineno, format!("expected 2 fields, found {}", row.len())));
        }
        match row[1].parse::<f64>() {
            Ok(v) if v.is_finite() => out.push((row[0].to_string(), v)),
            _ if out.is_empty() && lineno == 1 => continue,
            _ => return Err(GsaError::parse(FMT, lineno, format!("statistic `{}` is not a finite number", row[1]))),
        }
    }
    Ok(out)
}
