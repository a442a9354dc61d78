//! Configuration files and flag overrides.
//!
//! A config file is TOML with up to three tables:
//!
//! ```toml
//! [inputs]
//! counts = "counts.tsv"
//! phenotype = "phenotype.tsv"
//! gmt = "sets.gmt"
//!
//! [pipeline]
//! method = "gsea"
//! n_perm = 1000
//!
//! [grid]
//! dedupe = ["keep-first", "mean"]
//! method = ["fisher", "ease"]
//! ```
//!
//! Relative input paths are resolved against the config file's directory.
//! Command-line flags override anything read from the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gsa_core::pipeline::{InputPaths, PipelineSpec};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Default)]
pub struct FileConfig {
    pub inputs: Map<String, Value>,
    pub pipeline: Map<String, Value>,
    pub grid: BTreeMap<String, Vec<Value>>,
    pub base_dir: PathBuf,
}

fn table(v: &Value, name: &str) -> Result<Map<String, Value>, CliError> {
    match v.get(name) {
        None => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m.clone()),
        Some(_) => Err(CliError::usage(format!("config section [{name}] must be a table"))),
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let parsed: toml::Value =
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let value = serde_json::to_value(parsed).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(unknown) = value.as_object().and_then(|o| o.keys().find(|k| !["inputs", "pipeline", "grid"].contains(&k.as_str()))) {
        return Err(CliError::usage(format!("unknown config section [{unknown}]")));
    }
    let mut grid = BTreeMap::new();
    for (axis, values) in table(&value, "grid")? {
        match values {
            Value::Array(v) => {
                grid.insert(axis, v);
            }
            other => {
                grid.insert(axis, vec![other]);
            }
        }
    }
    Ok(FileConfig {
        inputs: table(&value, "inputs")?,
        pipeline: table(&value, "pipeline")?,
        grid,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

impl FileConfig {
    /// Input paths from the file, overridden by `flags` where given.
    pub fn inputs(&self, flags: &InputFlags) -> Result<InputPaths, CliError> {
        let from_file = |key: &str| -> Result<Option<PathBuf>, CliError> {
            match self.inputs.get(key) {
                None => Ok(None),
                Some(Value::String(s)) => Ok(Some(self.base_dir.join(s))),
                Some(_) => Err(CliError::usage(format!("config input `{key}` must be a path string"))),
            }
        };
        if let Some(k) = self.inputs.keys().find(|k| !INPUT_KEYS.contains(&k.as_str())) {
            return Err(CliError::usage(format!("unknown config input `{k}`")));
        }
        let pick = |flag: &Option<PathBuf>, key: &str| -> Result<Option<PathBuf>, CliError> {
            Ok(flag.clone().or(from_file(key)?))
        };
        let gmt = pick(&flags.gmt, "gmt")?.ok_or_else(|| CliError::usage("a gene set database (--gmt) is required"))?;
        Ok(InputPaths {
            counts: pick(&flags.counts, "counts")?,
            phenotype: pick(&flags.phenotype, "phenotype")?,
            gmt,
            mapping: pick(&flags.mapping, "mapping")?,
            lengths: pick(&flags.lengths, "lengths")?,
            ranking: pick(&flags.ranking, "ranking")?,
        })
    }

    /// The pipeline table overlaid with `overrides` and `method`.
    pub fn spec(&self, overrides: &Map<String, Value>) -> Result<PipelineSpec, CliError> {
        let mut merged = self.pipeline.clone();
        for (k, v) in overrides {
            merged.insert(k.clone(), v.clone());
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("pipeline options: {e}")))
    }
}

const INPUT_KEYS: [&str; 6] = ["counts", "phenotype", "gmt", "mapping", "lengths", "ranking"];

#[derive(Debug, Default, Clone)]
pub struct InputFlags {
    pub counts: Option<PathBuf>,
    pub phenotype: Option<PathBuf>,
    pub gmt: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub lengths: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
}

/// Parses a `--grid axis=v1,v2` flag. Values that read as JSON keep their
/// type; anything else is a string.
pub fn parse_grid_flag(s: &str) -> Result<(String, Vec<Value>), CliError> {
    let (axis, values) = s
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("grid axis `{s}` must look like name=value1,value2")))?;
    let values = values
        .split(',')
        .map(|v| serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string())))
        .collect();
    Ok((axis.trim().replace('-', "_"), values))
}
