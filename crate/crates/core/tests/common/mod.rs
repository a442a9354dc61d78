//! Synthetic RNA-Seq data with one planted gene set.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gsa_core::model::{CountMatrix, GeneSet, GeneSetDatabase, PhenotypeLabels};
use gsa_core::pipeline::{InputPaths, Inputs};
use gsa_core::preprocess::TransformedMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub const PLANTED: &str = "PLANTED";

#[derive(Debug, Clone, Copy)]
pub struct Design {
    pub n_genes: usize,
    pub per_group: usize,
    pub n_sets: usize,
    pub set_size: usize,
    /// Shift of planted genes in group 1, in pooled standard deviations of
    /// the log expression.
    pub shift_sd: f64,
    pub seed: u64,
}

impl Default for Design {
    fn default() -> Self {
        Design { n_genes: 1000, per_group: 10, n_sets: 50, set_size: 20, shift_sd: 2.0, seed: 1 }
    }
}

pub struct Synthetic {
    pub counts: CountMatrix,
    pub phenotype: PhenotypeLabels,
    pub db: GeneSetDatabase,
    pub lengths: BTreeMap<String, f64>,
}

/// Biological log-scale noise (natural log).
const SIGMA: f64 = 0.25;

pub fn gene_id(i: usize) -> String {
    format!("G{i:05}")
}

pub fn synthetic(d: &Design) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let m = 2 * d.per_group;
    let genes: Vec<String> = (0..d.n_genes).map(gene_id).collect();
    let samples: Vec<String> = (0..m).map(|j| format!("S{j:02}")).collect();
    let labels: Vec<u8> = (0..m).map(|j| u8::from(j >= d.per_group)).collect();

    let mut sets = Vec::with_capacity(d.n_sets);
    for s in 0..d.n_sets {
        let mut members: Vec<String> = sample(&mut rng, d.n_genes, d.set_size).into_iter().map(gene_id).collect();
        members.sort();
        let name = if s == 0 { PLANTED.to_string() } else { format!("SET{s:03}") };
        sets.push(GeneSet::new(name, "synthetic", members).unwrap());
    }
    let planted: std::collections::HashSet<&str> = sets[0].members().iter().map(String::as_str).collect();

    let noise = Normal::new(0.0, SIGMA).unwrap();
    let depth = Normal::new(0.0, 0.1).unwrap();
    let sample_scale: Vec<f64> = (0..m).map(|_| f64::exp(depth.sample(&mut rng))).collect();
    let mut counts = Vec::with_capacity(d.n_genes * m);
    let mut lengths = BTreeMap::new();
    for g in &genes {
        let mu = f64::exp(rng.random_range(f64::ln(100.0)..f64::ln(2000.0)));
        // Poisson noise adds about 1/mu to the log-scale variance.
        let sd = (SIGMA * SIGMA + 1.0 / mu).sqrt();
        let shift = if planted.contains(g.as_str()) { d.shift_sd * sd } else { 0.0 };
        for j in 0..m {
            let up = if labels[j] == 1 { shift } else { 0.0 };
            let lambda = mu * sample_scale[j] * f64::exp(noise.sample(&mut rng) + up);
            counts.push(Poisson::new(lambda).unwrap().sample(&mut rng) as u64);
        }
        lengths.insert(g.clone(), rng.random_range(500.0..5000.0_f64).round());
    }
    Synthetic {
        counts: CountMatrix::new(genes, samples.clone(), counts).unwrap(),
        phenotype: PhenotypeLabels::new(samples, labels).unwrap(),
        db: GeneSetDatabase::new(sets).unwrap(),
        lengths,
    }
}

pub fn inputs(s: &Synthetic) -> Inputs {
    Inputs {
        counts: Some(s.counts.clone()),
        phenotype: Some(s.phenotype.clone()),
        db: s.db.clone(),
        mapping: None,
        lengths: Some(s.lengths.clone()),
        ranking: None,
        records: Vec::new(),
        warnings: Vec::new(),
    }
}

/// Writes counts, phenotype, GMT and lengths files into `dir`.
pub fn write_files(s: &Synthetic, dir: &Path) -> InputPaths {
    let mut counts = String::from("gene_id");
    for sm in s.counts.sample_ids() {
        write!(counts, "\t{sm}").unwrap();
    }
    counts.push('\n');
    for (g, row) in s.counts.rows() {
        counts.push_str(g);
        for c in row {
            write!(counts, "\t{c}").unwrap();
        }
        counts.push('\n');
    }
    let mut pheno = String::new();
    for (sm, l) in s.phenotype.sample_ids().iter().zip(s.phenotype.labels()) {
        writeln!(pheno, "{sm}\t{l}").unwrap();
    }
    let mut gmt = String::new();
    for set in s.db.sets() {
        writeln!(gmt, "{}\t{}\t{}", set.name, set.description, set.members().join("\t")).unwrap();
    }
    let mut lengths = String::new();
    for (g, l) in &s.lengths {
        writeln!(lengths, "{g}\t{l}").unwrap();
    }
    let paths = InputPaths {
        counts: Some(dir.join("counts.tsv")),
        phenotype: Some(dir.join("phenotype.tsv")),
        gmt: dir.join("sets.gmt"),
        mapping: None,
        lengths: Some(dir.join("lengths.tsv")),
        ranking: None,
    };
    fs::write(paths.counts.as_ref().unwrap(), counts).unwrap();
    fs::write(paths.phenotype.as_ref().unwrap(), pheno).unwrap();
    fs::write(&paths.gmt, gmt).unwrap();
    fs::write(paths.lengths.as_ref().unwrap(), lengths).unwrap();
    paths
}

/// Gaussian expression matrix (already on the log scale) with planted shift.
pub fn gaussian_matrix(n_genes: usize, per_group: usize, planted: &[usize], shift: f64, seed: u64) -> (TransformedMatrix, PhenotypeLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * per_group;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let samples: Vec<String> = (0..m).map(|j| format!("S{j:02}")).collect();
    let labels: Vec<u8> = (0..m).map(|j| u8::from(j >= per_group)).collect();
    let mut values = Vec::with_capacity(n_genes * m);
    for i in 0..n_genes {
        let up = if planted.contains(&i) { shift } else { 0.0 };
        for &l in &labels {
            values.push(normal.sample(&mut rng) + if l == 1 { up } else { 0.0 });
        }
    }
    (
        TransformedMatrix::new((0..n_genes).map(gene_id).collect(), samples.clone(), values).unwrap(),
        PhenotypeLabels::new(samples, labels).unwrap(),
    )
}
