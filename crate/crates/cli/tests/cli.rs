use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[model]
latent_dim = 3

[model.decoder]
layers = 2
filters_per_layer = 3
hidden_width = 6

[model.pnode]
hidden_layers = 1
width = 8

[grid]
nx = 10
nt = 8

[train]
epochs = 4
seed = 5

[train.weights]
data = 100.0

[params]
mu_train = [20.0, 40.0]
mu_test = [15.0]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnf-rom")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pretrain_finetune_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = tmp.path().join("out");

    ok(&["pretrain", "--config", s(&cfg), "--out-dir", s(&out)]);
    let ckpt = out.join("pretrained.ckpt");
    assert!(ckpt.exists());
    let history = std::fs::read_to_string(out.join("pretrain_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);

    ok(&[
        "finetune",
        "--checkpoint",
        s(&ckpt),
        "--mu",
        "110",
        "--steps",
        "3",
        "--out-dir",
        s(&out),
    ]);
    let ft = std::fs::read_to_string(out.join("finetune_mu110_history.csv")).unwrap();
    assert_eq!(ft.lines().count(), 4);
    assert!(out.join("finetune_mu110.ckpt").exists());

    let stdout = ok(&[
        "evaluate",
        "--checkpoint",
        s(&ckpt),
        "--mu",
        "15,40",
        "--t-max",
        "1.25",
        "--out-dir",
        s(&out),
    ]);
    assert!(stdout.starts_with("mu,in_training_set,rel_l2_t_le_T,rel_l2_t_gt_T\n"));
    let report = std::fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert!(out.join("heatmap_mu15.csv").exists() && out.join("heatmap_mu40.csv").exists());

    // defaults to mu_train and mu_test stored in the checkpoint
    let eval = tmp.path().join("eval");
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--out-dir", s(&eval)]);
    let report = std::fs::read_to_string(eval.join("evaluation.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn seed_flag_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("pretrain_history.csv")).unwrap();
    for d in ["a", "b", "c"] {
        let seed = if d == "c" { "6" } else { "9" };
        ok(&[
            "pretrain",
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--out-dir",
            s(&tmp.path().join(d)),
        ]);
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn fom_and_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let stdout = ok(&["fom", "--mu", "20", "--nx", "17", "--nt", "10", "--out-dir", s(out)]);
    assert!(stdout.contains("relative L2"));
    assert!(out.join("fom_mu20.csv").exists());
    ok(&[
        "exact",
        "--mu",
        "20,100",
        "--nx",
        "9",
        "--nt",
        "4",
        "--t-max",
        "1.25",
        "--out-dir",
        s(out),
    ]);
    let csv = std::fs::read_to_string(out.join("exact_mu100.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(out.join("exact_mu20.csv").exists());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[train]\n[params]\nmu_train = [20.0]\n").unwrap();
    let out = run(&["pretrain", "--config", s(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epochs") && err.contains("bad.toml"), "{err}");

    let out = run(&["exact", "--mu", "-2", "--out-dir", s(tmp.path())]);
    assert!(!out.status.success());
    let out = run(&[
        "finetune",
        "--checkpoint",
        s(&tmp.path().join("missing.ckpt")),
        "--mu",
        "15",
    ]);
    assert!(!out.status.success());
    assert!(!run(&["frobnicate"]).status.success());
}
