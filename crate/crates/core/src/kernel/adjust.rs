use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    BenjaminiHochberg,
    Bonferroni,
}

impl Adjustment {
    pub fn apply(self, p: &[f64]) -> Result<Vec<f64>> {
        match self {
            Adjustment::BenjaminiHochberg => adjust_bh(p),
            Adjustment::Bonferroni => adjust_bonferroni(p),
        }
    }
}

fn check(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(GsaError::invalid(format!("p-value {} at position {i} is outside [0, 1]", p[i]))),
        None => Ok(()),
    }
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn adjust_bh(p: &[f64]) -> Result<Vec<f64>> {
    check(p)?;
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let candidate = p[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        q[i] = running;
    }
    Ok(q)
}

pub fn adjust_bonferroni(p: &[f64]) -> Result<Vec<f64>> {
    check(p)?;
    let m = p.len() as f64;
    Ok(p.iter().map(|&v| (v * m).min(1.0)).collect())
}
