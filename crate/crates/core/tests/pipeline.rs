mod common;

use common::{inputs, synthetic, write_files, Design, PLANTED};
use gsa_core::fcs::PermutationScheme;
use gsa_core::pipeline::{
    render_outputs, replay, run_pipeline, run_to_dir, GsaMethod, PipelineSpec, RankingMetric, PROVENANCE_FILE,
    RESULT_FILE,
};
use gsa_core::GsaError;

fn top_set(spec: &PipelineSpec, design: &Design) -> String {
    let out = run_pipeline(spec, &inputs(&synthetic(design)), None).unwrap();
    out.table.ranked()[0].set_name.clone()
}

#[test]
fn fisher_finds_planted_set() {
    let spec = PipelineSpec::default();
    assert_eq!(top_set(&spec, &Design::default()), PLANTED);
}

#[test]
fn gsea_phenotype_finds_planted_set() {
    let spec = PipelineSpec { method: GsaMethod::Gsea, n_perm: 200, ..Default::default() };
    assert_eq!(top_set(&spec, &Design::default()), PLANTED);
}

#[test]
fn every_method_runs_end_to_end() {
    let data = inputs(&synthetic(&Design::default()));
    let specs = [
        PipelineSpec { method: GsaMethod::Ease, ..Default::default() },
        PipelineSpec { method: GsaMethod::Goseq, ..Default::default() },
        PipelineSpec { method: GsaMethod::Padog, n_perm: 100, ..Default::default() },
        PipelineSpec {
            method: GsaMethod::Gsea,
            scheme: PermutationScheme::GeneSet,
            statistic: RankingMetric::SignedLogp,
            n_perm: 100,
            ..Default::default()
        },
        PipelineSpec { method: GsaMethod::Gsea, scheme: PermutationScheme::GeneLabel, n_perm: 100, ..Default::default() },
    ];
    for spec in &specs {
        let out = run_pipeline(spec, &data, Some(2)).unwrap();
        assert!(!out.table.rows.is_empty(), "{spec:?}");
        assert!(out.table.rows.iter().all(|r| (0.0..=1.0).contains(&r.raw_p) && r.adjusted_p >= r.raw_p));
        let stages: Vec<&str> = out.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(&stages[..5], ["prefilter", "convert-ids", "dedupe", "normalize", "transform"]);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let data = inputs(&synthetic(&Design::default()));
    let spec = PipelineSpec { method: GsaMethod::Gsea, n_perm: 100, ..Default::default() };
    let a = render_outputs(&run_pipeline(&spec, &data, Some(1)).unwrap()).unwrap();
    let b = render_outputs(&run_pipeline(&spec, &data, Some(3)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ranking_input_rejects_phenotype_scheme() {
    let mut data = inputs(&synthetic(&Design::default()));
    let ranking = gsa_core::model::RankedGeneList::from_unsorted(
        data.counts.as_ref().unwrap().gene_ids().iter().enumerate().map(|(i, g)| (g.clone(), i as f64)).collect(),
    )
    .unwrap();
    data.counts = None;
    data.phenotype = None;
    data.ranking = Some(ranking);
    let spec = PipelineSpec { method: GsaMethod::Gsea, n_perm: 50, ..Default::default() };
    assert!(matches!(run_pipeline(&spec, &data, None), Err(GsaError::Invalid(_))));
    let ok = PipelineSpec { scheme: PermutationScheme::GeneLabel, ..spec };
    assert!(run_pipeline(&ok, &data, None).is_ok());
    assert!(run_pipeline(&PipelineSpec::default(), &data, None).is_err());
}

#[test]
fn provenance_replays_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(&synthetic(&Design::default()), dir.path());
    let out_dir = dir.path().join("run");
    let spec = PipelineSpec { method: GsaMethod::Goseq, ..Default::default() };
    let (_, prov) = run_to_dir(&spec, &paths, &out_dir, None).unwrap();
    assert!(prov.outputs.iter().any(|o| o.file == RESULT_FILE));
    let report = replay(&out_dir.join(PROVENANCE_FILE), &dir.path().join("again"), Some(2)).unwrap();
    assert!(report.reproduced(), "{:?}", report.mismatched);
    for o in &prov.outputs {
        assert_eq!(std::fs::read(out_dir.join(&o.file)).unwrap(), std::fs::read(dir.path().join("again").join(&o.file)).unwrap());
    }
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(&synthetic(&Design::default()), dir.path());
    let out_dir = dir.path().join("run");
    run_to_dir(&PipelineSpec::default(), &paths, &out_dir, None).unwrap();
    std::fs::write(&paths.gmt, "ONLY\tx\tG00001\tG00002\tG00003\tG00004\tG00005\n").unwrap();
    assert!(replay(&out_dir.join(PROVENANCE_FILE), &dir.path().join("again"), None).is_err());
}
