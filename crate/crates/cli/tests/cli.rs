mod common;

use common::{regression_csv, tiny_setup};
use std::process::Command;
use tabcurate_cli::stages::{Groups, Registry, Selection};
use tabcurate_cli::{CliError, ExportKind, PipelineConfig, Runner, Stage, StageStatus};

fn config_for(dir: &std::path::Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.data_dir = dir.join("data");
    cfg.paths.artifact_dir = dir.join("artifacts");
    cfg
}

#[test]
fn ingest_rejects_wide_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_for(dir.path());
    std::fs::create_dir_all(&cfg.paths.data_dir).unwrap();
    std::fs::write(cfg.paths.data_dir.join("wide.csv"), regression_csv(50, 110, 1)).unwrap();
    let runner = Runner::new(cfg, None).unwrap();
    runner.run_stage(Stage::Ingest).unwrap();
    let reg: Registry = runner.store().read_json("datasets/registry.json").unwrap();
    assert!(reg.datasets.is_empty());
    assert_eq!(reg.rejected.len(), 1);
    assert!(reg.rejected[0].reason.contains("too many features"), "{}", reg.rejected[0].reason);
}

#[test]
fn ingest_dedupes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_for(dir.path());
    std::fs::create_dir_all(&cfg.paths.data_dir).unwrap();
    let csv = regression_csv(60, 3, 5);
    std::fs::write(cfg.paths.data_dir.join("a.csv"), &csv).unwrap();
    std::fs::write(cfg.paths.data_dir.join("b.csv"), &csv).unwrap();
    let first = {
        let runner = Runner::new(cfg.clone(), None).unwrap();
        assert_eq!(runner.run_stage(Stage::Ingest).unwrap(), StageStatus::Ran);
        let reg: Registry = runner.store().read_json("datasets/registry.json").unwrap();
        assert_eq!(reg.datasets.len(), 1);
        assert_eq!(reg.duplicates.len(), 1);
        assert_eq!(reg.duplicates[0].duplicate_of, "a.csv");
        assert_eq!(runner.run_stage(Stage::Ingest).unwrap(), StageStatus::Skipped);
        runner.store().manifest("ingest").unwrap().unwrap()
    };
    let runner = Runner::new(cfg, Some(Stage::Ingest)).unwrap();
    assert_eq!(runner.run_stage(Stage::Ingest).unwrap(), StageStatus::Ran);
    let second = runner.store().manifest("ingest").unwrap().unwrap();
    assert_eq!(first.outputs, second.outputs);
    assert!(second.real_data_read);
}

#[test]
fn ingest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_for(dir.path());
    std::fs::create_dir_all(&cfg.paths.data_dir).unwrap();
    {
        let runner = Runner::new(cfg.clone(), None).unwrap();
        assert!(matches!(runner.run_stage(Stage::Ingest), Err(CliError::Invalid(m)) if m.contains("no CSV")));
    }
    std::fs::write(cfg.paths.data_dir.join("a.csv"), regression_csv(30, 3, 5)).unwrap();
    std::fs::write(cfg.paths.data_dir.join("a.schema.json"), "{ not json").unwrap();
    let runner = Runner::new(cfg, None).unwrap();
    assert!(matches!(runner.run_stage(Stage::Ingest), Err(CliError::Invalid(m)) if m.contains("sidecar")));
}

#[test]
fn export_on_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(config_for(dir.path()), None).unwrap();
    for what in [ExportKind::Embeddings, ExportKind::Curves, ExportKind::Efficiency, ExportKind::Selection] {
        let err = runner.export(what).unwrap_err();
        assert!(err.to_string().contains("no artifact"), "{err}");
    }
    let toml = runner.export(ExportKind::Config).unwrap();
    assert_eq!(PipelineConfig::parse(&toml).unwrap(), *runner.config());
}

#[test]
fn downstream_stage_needs_upstream() {
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(config_for(dir.path()), None).unwrap();
    assert!(matches!(runner.run_stage(Stage::Embed), Err(CliError::MissingArtifact(_))));
}

#[test]
fn tiny_pipeline_runs_resumes_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = tiny_setup(dir.path());
    let runner = Runner::new(cfg.clone(), None).unwrap();
    let statuses = runner.pipeline().unwrap();
    assert_eq!(statuses.len(), Stage::ALL.len());
    assert!(statuses.iter().all(|(_, s)| *s == StageStatus::Ran));

    let store = runner.store();
    let groups: Groups = store.read_json("embeddings/groups.json").unwrap();
    assert_eq!(groups.synthetic.len(), 40);
    assert_eq!(groups.real.len(), 9);
    assert_eq!(groups.control.len(), 6);
    let csv = runner.export(ExportKind::Embeddings).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("dataset,model_id,e0,") && header.ends_with(",e15"));
    assert_eq!(csv.lines().count(), 1 + 40 + 9 + 6);

    let sel: Selection = store.read_json("curation/selection.json").unwrap();
    assert_eq!(sel.report.selected_ids.len(), 10);
    assert_eq!(sel.target_count, 6);
    let sel_csv = runner.export(ExportKind::Selection).unwrap();
    assert_eq!(sel_csv.lines().filter(|l| l.ends_with(",true")).count(), 10);

    for stage in ["pretrain", "finetune"] {
        let m = store.manifest(stage).unwrap().unwrap();
        assert!(!m.real_data_read, "{stage}");
        assert!(m.files_read.iter().all(|f| !f.starts_with("datasets/")), "{stage}: {:?}", m.files_read);
    }
    assert!(store.manifest("eval").unwrap().unwrap().real_data_read);

    // E_add = D_ref - D_new holds exactly in the exported rows.
    let eff = runner.export(ExportKind::Efficiency).unwrap();
    let mut rows = 0;
    for line in eff.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        let (d_ref, d_new, e_add): (f64, f64, f64) = (c[3].parse().unwrap(), c[4].parse().unwrap(), c[5].parse().unwrap());
        assert_eq!(e_add, d_ref - d_new);
        rows += 1;
    }
    assert_eq!(rows, 6 * 4);

    assert!(runner.pipeline().unwrap().iter().all(|(_, s)| *s == StageStatus::Skipped));

    // Lose everything after embedding: the first five stages are skipped.
    for s in ["curate", "distinguish", "finetune", "eval", "efficiency"] {
        std::fs::remove_file(store.path(&format!("manifests/{s}.json"))).unwrap();
    }
    let wm_before = std::fs::read(store.path("eval/win_matrix.json")).unwrap();
    let statuses = runner.pipeline().unwrap();
    for (stage, status) in &statuses {
        let expect = if *stage <= Stage::Embed { StageStatus::Skipped } else { StageStatus::Ran };
        assert_eq!(*status, expect, "{stage}");
    }
    assert_eq!(std::fs::read(store.path("eval/win_matrix.json")).unwrap(), wm_before);

    // A changed output invalidates its stage.
    std::fs::write(store.path("models/adapted_losses.csv"), "tampered").unwrap();
    assert_eq!(runner.run_stage(Stage::Finetune).unwrap(), StageStatus::Ran);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_tabcurate");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pfn]\nheads = 5\n").unwrap();
    let out = Command::new(exe).args(["--config", bad.to_str().unwrap(), "ingest"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[paths]\ndata_dir = \"data\"\nartifact_dir = \"art\"\n").unwrap();
    let out = Command::new(exe).args(["--config", good.to_str().unwrap(), "embed"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage embed failed"), "{err}");

    let out = Command::new(exe)
        .args(["--config", good.to_str().unwrap(), "export", "config"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("master_seed = 0"));
}
