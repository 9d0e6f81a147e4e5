//! End-to-end smoke tests for the `latflow` binary: a miniature run of
//! the whole pipeline in a scratch directory, plus the failure modes a
//! user will actually hit (bad flags, missing prerequisites, unknown
//! config keys).

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_latflow");

const TINY_CONFIG: &str = "\
[dataset]
n_train = 60
n_id = 12
n_ood = 12

[vae]
corpus_size = 120
epochs = 2
batch_size = 32

[flow]
epochs = 2
batch_size = 32

[baseline]
epochs = 2
batch_size = 32

[nav]
episodes = 2
";

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &[]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "expected usage text, got: {text}");
}

#[test]
fn unknown_subcommand_is_named_in_the_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["frobnicate"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("frobnicate"), "got: {text}");
}

#[test]
fn bad_flag_values_are_rejected_with_the_valid_choices() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["train-vae", "--kind", "global"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("global") && text.contains("extended"), "got: {text}");

    let out = run_in(tmp.path(), &["eval-nav", "--scenario", "maze_medium"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("maze_medium") && text.contains("maze_hard"), "got: {text}");
}

#[test]
fn unknown_config_keys_fail_before_any_work_happens() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[dataset]\nn_trian = 5\n").unwrap();
    let out = run_in(tmp.path(), &["--config", "bad.toml", "train-vae", "--kind", "local"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("n_trian"), "error should name the bad key, got: {text}");
    assert!(
        !tmp.path().join("artifacts").exists(),
        "no artifacts should be written on a config error"
    );
}

#[test]
fn commands_with_missing_prerequisites_say_what_to_run_first() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("tiny.toml"), TINY_CONFIG).unwrap();
    let out = run_in(tmp.path(), &["--config", "tiny.toml", "gen-data"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("train-vae"), "got: {text}");

    let out = run_in(tmp.path(), &["--config", "tiny.toml", "train-flow"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("gen-data"), "got: {text}");
}

#[test]
fn tiny_pipeline_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("tiny.toml"), TINY_CONFIG).unwrap();
    let cfg = ["--config", "tiny.toml"];

    for args in [
        vec!["train-vae", "--kind", "local"],
        vec!["train-vae", "--kind", "extended"],
        vec!["gen-data"],
        vec!["train-flow"],
        vec!["train-baseline", "--kind", "mlp"],
        vec!["eval-latent"],
        vec![
            "eval-nav",
            "--scenario",
            "maze_easy",
            "--source",
            "observed_only",
        ],
        vec!["report"],
    ] {
        let mut full: Vec<&str> = cfg.to_vec();
        full.extend(args);
        run_ok(dir, &full);
    }

    let store = dir.join("artifacts");
    for name in [
        "local_vae.lfva",
        "extended_vae.lfva",
        "train.lfds",
        "test_id.lfds",
        "test_ood.lfds",
        "flow.lfvf",
        "mlp.lfmp",
        "latent_eval.csv",
        "timing.csv",
        "nav_eval.csv",
        "report.md",
    ] {
        assert!(store.join(name).exists(), "missing artifact {name}");
    }

    let latent = std::fs::read_to_string(store.join("latent_eval.csv")).unwrap();
    assert!(latent.starts_with("predictor,split,cosine_mean,cosine_std,count\n"));
    assert!(latent.contains("flow,test_id,") && latent.contains("mlp,test_ood,"));

    let report = std::fs::read_to_string(store.join("report.md")).unwrap();
    assert!(report.contains("| flow |") && report.contains("maze_easy"));

    // Every command left a run directory with its audit trail.
    let runs: Vec<_> = std::fs::read_dir(dir.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 8, "one run directory per command");
    let first = runs[0].as_ref().unwrap().path();
    assert!(first.join("version.txt").exists());
    assert!(first.join("config.resolved.toml").exists());
}

#[test]
fn rerunning_a_trainer_overwrites_the_checkpoint_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("tiny.toml"), TINY_CONFIG).unwrap();
    run_ok(dir, &["--config", "tiny.toml", "train-vae", "--kind", "local"]);
    let first = std::fs::read(dir.join("artifacts/local_vae.lfva")).unwrap();
    run_ok(dir, &["--config", "tiny.toml", "train-vae", "--kind", "local"]);
    let second = std::fs::read(dir.join("artifacts/local_vae.lfva")).unwrap();
    assert_eq!(first, second);

    // A different seed must actually change the weights.
    run_ok(
        dir,
        &["--config", "tiny.toml", "--seed", "7", "train-vae", "--kind", "local"],
    );
    let reseeded = std::fs::read(dir.join("artifacts/local_vae.lfva")).unwrap();
    assert_ne!(first, reseeded);
}
