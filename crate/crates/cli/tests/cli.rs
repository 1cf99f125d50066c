use std::path::Path;
use std::process::{Command, Output};

fn rlsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlsp"))
        .args(args)
        .env_remove("RLSP_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gridworld_parity_passes_on_every_case() {
    let out = rlsp(&["gridworld-parity", "--seed", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
}

#[test]
fn gridworld_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = rlsp(&["run", "--env", "room_vase", "--method", "rlsp_exact", "--seeds", "0,1", "--out", out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("room_vase rlsp_exact states=1"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("room_vase_rlsp_exact_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(dir.path().join("room_vase_rlsp_exact_1.jsonl").exists());
}

#[test]
fn seed_variable_overrides_the_seed_list() {
    let out = Command::new(env!("CARGO_BIN_EXE_rlsp"))
        .args(["run", "--env", "apples", "--method", "average_features", "--seeds", "0,1,2"])
        .env("RLSP_SEED", "7")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("seed 7:") && !text.contains("seed 0:"), "{text}");
}

#[test]
fn exact_rlsp_on_a_continuous_env_is_rejected() {
    let out = rlsp(&["run", "--env", "pendulum", "--method", "rlsp_exact"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_with_unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "env = \"room_vase\"\nmethod = \"rlsp_exact\"\nlearning_rate = 0.1\n").unwrap();
    let out = rlsp(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn config_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ok.toml");
    std::fs::write(&path, "env = \"batteries\"\nmethod = \"rlsp_exact\"\nseeds = [3]\n").unwrap();
    let out = rlsp(&["run", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("seed 3:"));
}

#[test]
fn balancer_evaluates_to_a_full_episode() {
    let out = rlsp(&["eval", "--env", "pendulum", "--policy", "balancer", "--episodes", "3"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("return 200.00 (0.00)"), "{}", stdout(&out));
    assert!(!rlsp(&["eval", "--env", "runner_forward", "--policy", "balancer"]).status.success());
    assert!(!rlsp(&["eval", "--env", "pendulum", "--policy", "constant:x"]).status.success());
}

#[test]
fn collect_then_train_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("runner.jsonl");
    let out = rlsp(&[
        "collect-data",
        "--env",
        "runner_forward",
        "--rollouts",
        "10",
        "--rollout-len",
        "20",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("200 transitions"));
    let ckpt = dir.path().join("ckpt");
    let out = rlsp(&["train-models", "--data", data.to_str().unwrap(), "--out", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "encoder.mlp",
        "decoder.mlp",
        "encoder_input.nrm",
        "inverse_dynamics.mlp",
        "inverse_dynamics_input.nrm",
        "inverse_dynamics_target.nrm",
    ] {
        assert!(Path::new(&ckpt.join(f)).exists(), "missing {f}");
    }
}

#[test]
fn discriminator_curves_are_written_as_csv() {
    let out = rlsp(&[
        "discriminate",
        "--env",
        "runner_forward",
        "--policy-a",
        "constant:1",
        "--policy-b",
        "constant:-1",
        "--seeds",
        "2",
        "--steps",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().count() >= 2, "{text}");
}
