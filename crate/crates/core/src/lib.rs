//! Gene set analysis engine.
//!
//! Takes an RNA-Seq count matrix, a binary phenotype and a gene set database
//! and runs the practical enrichment workflow end to end: pre-filtering, gene
//! id conversion and duplicate removal, normalization, log-cpm
//! transformation, differential expression, over-representation tests
//! (Fisher, EASE, Wallenius with bias correction) and functional class
//! scoring (GSEA with phenotype, gene-set and gene-label permutation; PADOG).
//! The [`multiverse`] module runs factorial grids of pipeline choices and
//! reports how much the results agree.

pub mod diffexpr;
pub mod error;
pub mod fcs;
pub mod ingest;
pub mod kernel;
pub mod model;
pub mod multiverse;
pub mod ora;
pub mod pipeline;
pub mod preprocess;
pub mod report;

pub use error::{GsaError, Result};
