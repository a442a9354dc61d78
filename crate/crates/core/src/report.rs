//! Tab-separated writers for every intermediate and final table.
//!
//! Numbers use the shortest representation that reads back to the same
//! double, switching to exponent notation for very small or large values, so
//! repeated runs produce byte-identical files.

use std::io::Write;

use crate::error::Result;
use crate::model::{CountMatrix, DeResultTable, EnrichmentResultTable, RankedGeneList, RowDetail, TableKind};
use crate::preprocess::{ConversionReport, NormalizationFactors, TransformedMatrix};

/// Deterministic round-trip formatting of a double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || a.is_infinite() {
        format!("{}", v + 0.0)
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

pub fn write_count_matrix(mut w: impl Write, cm: &CountMatrix) -> Result<()> {
    writeln!(w, "gene_id\t{}", cm.sample_ids().join("\t"))?;
    for (g, row) in cm.rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(w, "{g}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_transformed(mut w: impl Write, tm: &TransformedMatrix) -> Result<()> {
    writeln!(w, "gene_id\t{}", tm.sample_ids().join("\t"))?;
    for i in 0..tm.n_genes() {
        let cells: Vec<String> = tm.row(i).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}\t{}", tm.gene_ids()[i], cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_factors(mut w: impl Write, nf: &NormalizationFactors) -> Result<()> {
    writeln!(w, "sample_id\tlibrary_size\tfactor\teffective_library_size")?;
    for (j, eff) in nf.effective_library_sizes().into_iter().enumerate() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            nf.sample_ids[j],
            fmt_f64(nf.library_sizes[j]),
            fmt_f64(nf.factors[j]),
            fmt_f64(eff)
        )?;
    }
    Ok(())
}

pub fn write_conversion_report(mut w: impl Write, report: &ConversionReport) -> Result<()> {
    writeln!(w, "kind\tgene_id\tcount")?;
    for g in &report.unmapped {
        writeln!(w, "unmapped\t{g}\t0")?;
    }
    for (g, c) in &report.one_to_many {
        writeln!(w, "one-to-many\t{g}\t{c}")?;
    }
    for (g, c) in &report.many_to_one {
        writeln!(w, "many-to-one\t{g}\t{c}")?;
    }
    Ok(())
}

/// The fixed five columns plus a `flag` column marking floored variances.
pub fn write_de(mut w: impl Write, de: &DeResultTable) -> Result<()> {
    writeln!(w, "gene_id\tlogFC\tstatistic\tp_value\tadjusted_p\tflag")?;
    for r in de.rows() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.gene_id,
            fmt_f64(r.log_fold_change),
            fmt_f64(r.statistic),
            fmt_f64(r.p_value),
            fmt_f64(r.adjusted_p),
            if r.degenerate { "floored_sd" } else { "" }
        )?;
    }
    Ok(())
}

pub fn write_ranking(mut w: impl Write, rl: &RankedGeneList) -> Result<()> {
    writeln!(w, "gene_id\tstatistic")?;
    for (g, v) in rl.iter() {
        writeln!(w, "{g}\t{}", fmt_f64(v))?;
    }
    Ok(())
}

/// Rows are written in [`EnrichmentResultTable::ranked`] order.
pub fn write_enrichment(mut w: impl Write, table: &EnrichmentResultTable) -> Result<()> {
    match table.kind {
        TableKind::Ora => writeln!(w, "set_name\tN\tG\tL\tH\todds\traw_p\tadjusted_p\tmethod")?,
        TableKind::Fcs if table.method == "padog" => writeln!(
            w,
            "set_name\tsize\traw_score\tstandardized_score\traw_p\tadjusted_p\tscheme\tn_perm\tseed"
        )?,
        TableKind::Fcs => writeln!(w, "set_name\tsize\tES\tNES\traw_p\tadjusted_p\tscheme\tn_perm\tseed")?,
    }
    for r in table.ranked() {
        match &r.detail {
            RowDetail::Ora { universe, set_size, de_count, hits, odds } => writeln!(
                w,
                "{}\t{universe}\t{set_size}\t{de_count}\t{hits}\t{}\t{}\t{}\t{}",
                r.set_name,
                odds.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.raw_p),
                fmt_f64(r.adjusted_p),
                r.method
            )?,
            RowDetail::Fcs { scheme, n_perm, seed } => writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{scheme}\t{n_perm}\t{seed}",
                r.set_name,
                r.set_size,
                fmt_f64(r.score),
                fmt_opt(r.normalized_score),
                fmt_f64(r.raw_p),
                fmt_f64(r.adjusted_p)
            )?,
        }
    }
    Ok(())
}
