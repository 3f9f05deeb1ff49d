use std::path::Path;
use std::process::Command;

use seann_harness::io::{read_dataset, ModelFile};
use seann_harness::pipeline::explain_dataset;
use seann_harness::report::{read_results, RESULTS_FILE, SUMMARY_FILE};
use seann_harness::{emit_reports, run_grid, ExperimentConfig, ExperimentKind, Summary};

fn two_seed_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(ExperimentKind::Exp2Src);
    c.seeds = vec![0, 1];
    c.train.max_epochs = 60;
    c
}

fn pes_nn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pes-nn")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn one_row_per_model_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_grid(&two_seed_config(), 1).unwrap();
    emit_reports(&outcome, dir.path()).unwrap();
    let (features, rows) = read_results(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(features, ["mercury", "fish_intake", "perceived_stress", "bmi"]);
    for seed in [0, 1] {
        let tags: Vec<_> = rows.iter().filter(|r| r.seed == seed).map(|r| r.model_tag).collect();
        assert_eq!(tags, [seann_harness::ModelTag::Agnostic, seann_harness::ModelTag::Seann]);
    }
    for name in ["shap_exp2_src_agnostic.csv", "shap_exp2_src_seann.csv", "config.lock.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let shap = std::fs::read_to_string(dir.path().join("shap_exp2_src_seann.csv")).unwrap();
    // header plus 2 seeds x 200 test rows x 4 features
    assert_eq!(shap.lines().count(), 1 + 2 * 200 * 4);
    assert!(dir.path().join("histories/seann_level0_seed1.csv").exists());
}

#[test]
fn summary_recomputes_from_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_grid(&two_seed_config(), 1).unwrap();
    emit_reports(&outcome, dir.path()).unwrap();
    let (_, rows) = read_results(&dir.path().join(RESULTS_FILE)).unwrap();
    let written: Summary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(Summary::new(&outcome.config, &rows).unwrap(), written);

    let level = &written.levels[0];
    let mut auc: Vec<f64> = rows.iter().filter(|r| r.model_tag == seann_harness::ModelTag::Seann).map(|r| r.metric.value).collect();
    auc.sort_by(f64::total_cmp);
    assert_eq!(level.seann.metric.median, (auc[0] + auc[1]) / 2.0);
}

#[test]
fn rerun_from_lock_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    std::fs::write(
        dir.path().join("exp.toml"),
        "experiment = \"exp2_src\"\nseeds = [3, 4]\n[train]\nmax_epochs = 40\n",
    )
    .unwrap();
    let out = pes_nn(&["run", arg(&dir.path().join("exp.toml")), "--out", arg(&first)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pes_nn(&["run", arg(&first.join("config.lock.json")), "--out", arg(&second), "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(first.join(RESULTS_FILE)).unwrap();
    let b = std::fs::read(second.join(RESULTS_FILE)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gen_data_then_shap_matches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "experiment = \"exp3_src\"\nseeds = [2]\n[train]\nmax_epochs = 30\n").unwrap();
    let (run_dir, data_dir) = (dir.path().join("run"), dir.path().join("data"));
    assert!(pes_nn(&["run", arg(&cfg), "--out", arg(&run_dir)]).status.success());
    assert!(pes_nn(&["gen-data", arg(&cfg), "--out", arg(&data_dir)]).status.success());

    let test = data_dir.join("level0_seed2_test.csv");
    let header = std::fs::read_to_string(&test).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "mercury,fish_intake,perceived_stress,bmi,target");

    let file = ModelFile::load(&run_dir.join("models/seann_level0_seed2.json")).unwrap();
    let (report, _) = explain_dataset(&file, &read_dataset(&test).unwrap()).unwrap();
    let (_, rows) = read_results(&run_dir.join(RESULTS_FILE)).unwrap();
    assert_eq!(report.delta_shap, rows[1].delta_shap);

    let shap_csv = dir.path().join("shap.csv");
    let out = pes_nn(&["shap", arg(&run_dir.join("models/seann_level0_seed2.json")), arg(&test), "--out", arg(&shap_csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(shap_csv).unwrap();
    assert!(text.starts_with("test_row,feature,x,phi_model,phi_reference\n0,mercury,"));
    assert_eq!(text.lines().count(), 1 + 200 * 4);
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = pes_nn(&["run", arg(&dir.path().join("missing.toml"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("pes-nn: error:") && err.contains("missing.toml"), "{err}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"exp2_src\"\nseeds = []\n").unwrap();
    let out = pes_nn(&["run", arg(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no seeds"));
}
