use std::path::Path;
use std::process::{Command, Output};

use rantwin::cli::{file_digest, PipelineConfig, RunManifest};
use rantwin::mlp::MlpModel;

const SMALL: &str = "[sim]\nn_ticks = 300\n[dataset]\nn_samples = 240\n[train]\nepochs = 5\n";

fn rantwin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rantwin")).current_dir(dir).args(args).output().expect("spawn rantwin")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small dataset, model and stats in `dir`.
fn small_pipeline(dir: &Path) {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    let gen = rantwin(dir, &["--config", "small.toml", "gen-dataset"]);
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let train = rantwin(dir, &["--config", "small.toml", "train"]);
    assert_eq!(code(&train), 0, "{}", stderr(&train));
}

#[test]
fn print_default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = rantwin(dir.path(), &["--print-default-config"]);
    assert_eq!(code(&out), 0);
    let cfg = PipelineConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn zero_samples_is_a_config_error_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = rantwin(dir.path(), &["gen-dataset", "--n-samples", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_samples must be positive"), "{}", stderr(&out));
    let m = manifest(&dir.path().join("gen-dataset.manifest.json"));
    assert_eq!(m.exit_code, 2);
    assert!(m.error.unwrap().contains("n_samples must be positive"));
    assert_eq!(m.config.dataset.n_samples, 0);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[sim]\nwarp_drive = true\n").unwrap();
    let out = rantwin(dir.path(), &["--config", "bad.toml", "gen-dataset"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("warp_drive"), "{}", stderr(&out));
    assert!(dir.path().join("gen-dataset.manifest.json").exists());
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = rantwin(
        dir.path(),
        &["--config", "small.toml", "--manifest", "m.json", "gen-dataset", "--out", "blocker/dataset.csv"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(manifest(&dir.path().join("m.json")).exit_code, 3);
}

#[test]
fn corrupt_dataset_row_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[5] = lines[5].replacen(',', ",oops", 1);
    std::fs::write(dir.path().join("bad.csv"), lines.join("\n") + "\n").unwrap();
    let out = rantwin(dir.path(), &["train", "--dataset", "bad.csv", "--model-out", "m2.txt"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 6"), "{}", stderr(&out));
}

#[test]
fn divergent_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    std::fs::write(dir.path().join("hot.toml"), format!("{SMALL}learning_rate = 1e12\n")).unwrap();
    let out = rantwin(dir.path(), &["--config", "hot.toml", "train", "--model-out", "hot.txt"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn eval_writes_metrics_and_rejects_wrong_dims() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    let out = rantwin(dir.path(), &["eval"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let confusion = std::fs::read_to_string(dir.path().join("eval/confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 5);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["per_class"].as_array().unwrap().len(), 4);

    let mut nine = MlpModel::zeros(&[3]).unwrap();
    nine.layers[0].n_in = 9;
    nine.layers[0].weights = vec![0.0; 27];
    nine.save(&dir.path().join("nine.txt")).unwrap();
    let out = rantwin(dir.path(), &["eval", "--model", "nine.txt"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tsne_rejects_infeasible_perplexity() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    let out = rantwin(dir.path(), &["tsne", "--perplexity", "1000"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("perplexity"), "{}", stderr(&out));
}

#[test]
fn closed_loop_needs_model_and_handles_empty_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = rantwin(dir.path(), &["closed-loop", "--model", "missing.txt"]);
    assert_eq!(code(&out), 2);

    small_pipeline(dir.path());
    std::fs::write(dir.path().join("none.json"), "[]").unwrap();
    let out = rantwin(dir.path(), &["--config", "small.toml", "closed-loop", "--schedule", "none.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = std::fs::read_to_string(dir.path().join("closed_loop/summary.csv")).unwrap();
    assert_eq!(summary, "fault_id,ue_id,class,onset_tick,detect_tick,action_tick,restore_tick\n");
}

#[test]
fn manifests_list_digests_and_inputs_stay_untouched() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    let before = file_digest(&dir.path().join("dataset.csv")).unwrap();
    let model_before = file_digest(&dir.path().join("model.txt")).unwrap();
    let out = rantwin(dir.path(), &["--config", "small.toml", "tsne", "--perplexity", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("silhouette"));
    assert_eq!(file_digest(&dir.path().join("dataset.csv")).unwrap(), before);
    assert_eq!(file_digest(&dir.path().join("model.txt")).unwrap(), model_before);

    let m = manifest(&dir.path().join("tsne.manifest.json"));
    assert_eq!(m.exit_code, 0);
    assert_eq!(m.seeds["tsne"], 3);
    assert!(m.timings_ms.contains_key("tsne"));
    for rec in m.inputs.iter().chain(&m.outputs) {
        assert_eq!(rec.sha256.as_deref(), Some(file_digest(&dir.path().join(&rec.path)).unwrap().as_str()));
    }
    let header = std::fs::read_to_string(dir.path().join("tsne.csv")).unwrap();
    assert!(header.starts_with("ue_id,tick,label,x,y\n"));
}
