use std::path::Path;

use fuelsurrogate_core::error::Error;
use fuelsurrogate_core::pipeline::*;
use fuelsurrogate_core::QoiId;

const SMALL: &str = r#"
seed = 11

[cores]
synthetic = 3
rods_per_core = 24

[design]
n_clusters = 2
samples_per_cluster = 20
maximin_trials = 5

[lut]
lhgr_grid = [5.0, 15.0, 30.0]
burnup_grid = [0.0, 30000.0, 75000.0]

[training]
cv_folds = 3

[training.models]
default = [{ kind = "nn", widths = [8], epochs = 20 }]
hoop_strain = [{ kind = "pls", n_components = 3 }, { kind = "gbt", n_rounds = 10, max_depth = 2 }]

[benchmark]
n_rods = 3
repeats = 3
"#;

fn pipeline(out: &Path) -> Pipeline {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.out_dir = out.to_path_buf();
    Pipeline::new(cfg).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn full_run_is_reproducible_and_staged_runs_match() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = pipeline(a.path());
    let (report, runtime) = pa.run_all().unwrap();

    let pb = pipeline(b.path());
    for s in STAGES {
        pb.run_stage(s).unwrap();
    }

    // every deterministic artifact agrees byte for byte
    for rel in [
        "simulate/core_0.csv",
        "simulate/core_2.csv",
        "luts/hoop_stress_ifba.csv",
        "features/core_1.csv",
        "design/design.csv",
        "design/labeled.csv",
        "models/fuel_temperature.json",
        "models/hoop_strain.json",
        "models/selection.json",
        "reports/metrics.json",
        "reports/core_2/plenum_pressure_predictions.csv",
        "screen/core_2.csv",
        "manifest/train.json",
    ] {
        assert_eq!(read(&a.path().join(rel)), read(&b.path().join(rel)), "{rel}");
    }

    assert_eq!(report.qois.len(), 8);
    for q in QoiId::ALL {
        assert!(report.qoi(q).is_some(), "{q} missing from report");
    }
    assert_eq!(report.test_cores, vec!["core_2"]);
    assert_eq!(report.train_cores, vec!["core_0", "core_1"]);
    assert_eq!(report.leaked_rows, 0);
    assert!(report.qoi(QoiId::HoopStress).unwrap().uses_lut);
    assert!(report.qoi(QoiId::HoopStrain).unwrap().model == "pls" || report.qoi(QoiId::HoopStrain).unwrap().model == "gbt");
    assert_eq!(runtime.surrogates[0].name, "combined");
    assert_eq!(runtime.surrogates.len(), 9);
}

#[test]
fn models_evaluate_identically_in_another_run() {
    let a = tempfile::tempdir().unwrap();
    let pa = pipeline(a.path());
    for s in &STAGES[..6] {
        pa.run_stage(s).unwrap();
    }
    let first = read(&a.path().join("reports/metrics.json"));
    let b = tempfile::tempdir().unwrap();
    let pb = pipeline(b.path());
    for s in &STAGES[..4] {
        pb.run_stage(s).unwrap();
    }
    // labels and models come from run A
    for d in ["models", "design"] {
        std::fs::create_dir_all(b.path().join(d)).unwrap();
        for f in std::fs::read_dir(a.path().join(d)).unwrap() {
            let f = f.unwrap();
            std::fs::copy(f.path(), b.path().join(d).join(f.file_name())).unwrap();
        }
    }
    pb.run_stage("evaluate").unwrap();
    assert_eq!(first, read(&b.path().join("reports/metrics.json")));
}

#[test]
fn stage_errors_carry_stage_and_hash() {
    let a = tempfile::tempdir().unwrap();
    let p = pipeline(a.path());
    let err = p.run_stage("design").unwrap_err();
    match err {
        Error::Stage { stage, input_hash, .. } => {
            assert_eq!(stage, "design");
            assert_eq!(input_hash.len(), 64);
        }
        other => panic!("unexpected {other}"),
    }
    assert!(p.run_stage("nope").is_err());
}

#[test]
fn held_out_core_in_design_is_rejected() {
    let a = tempfile::tempdir().unwrap();
    let p = pipeline(a.path());
    for s in &STAGES[..5] {
        p.run_stage(s).unwrap();
    }
    let path = a.path().join("design/sources.json");
    let mut src: DesignSources = serde_json::from_slice(&read(&path)).unwrap();
    src.train_cores.push("core_2".into());
    std::fs::write(&path, serde_json::to_string(&src).unwrap()).unwrap();
    let err = p.run_stage("evaluate").unwrap_err().to_string();
    assert!(err.contains("evaluate") && err.contains("held-out core core_2"), "{err}");
}

#[test]
fn config_validation() {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.cores.test_cores = vec![0, 1, 2];
    assert!(Pipeline::new(cfg.clone()).is_err());
    cfg.cores.test_cores = vec![5];
    assert!(Pipeline::new(cfg.clone()).is_err());
    cfg.cores.test_cores = vec![];
    cfg.sim_config = Some("/definitely/not/here.toml".into());
    assert!(Pipeline::new(cfg.clone()).is_err());
    cfg.sim_config = None;
    cfg.lut.augmented_qois = vec![QoiId::PciSccRisk];
    assert!(Pipeline::new(cfg).is_err());
}

#[test]
fn exported_core_directory_feeds_the_pipeline() {
    let a = tempfile::tempdir().unwrap();
    let core = generate_synthetic_core(99, 10, &Default::default()).unwrap();
    let dir = a.path().join("exported");
    core.save_dir(&dir).unwrap();
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.cores.synthetic = 2;
    cfg.cores.dirs = vec![dir];
    cfg.out_dir = a.path().join("out");
    let p = Pipeline::new(cfg).unwrap();
    assert_eq!(p.core(2).unwrap().rods, core.rods);
    p.run_stage("simulate").unwrap();
    let labels = CoreLabels::read_csv(&a.path().join("out/simulate/core_2.csv")).unwrap();
    assert_eq!(labels.rod_ids.len(), 10);
}

#[test]
fn example_config_is_the_default() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    let cfg = RunConfig::load(&path).unwrap();
    let mut want = RunConfig::default();
    want.out_dir = cfg.out_dir.clone();
    assert_eq!(cfg.to_toml().unwrap(), want.to_toml().unwrap());
    cfg.validate().unwrap();
}
