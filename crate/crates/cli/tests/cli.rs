use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[dataset]
modalities = 3
n_total = 120

[train]
epochs = 2
pretrain_epochs = 1
batch_size = 32

[eval]
probe_epochs = 2

[run]
seeds = [5, 6]
backbones = ["random", "pretrained"]
methods = ["none", "fabind:1", "centrobind", "wavg:0.5,0.5,1"]
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_centrobind"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_exits_1() {
    let out = cli(&["--config", "/definitely/not/here.toml", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("here.toml"));
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[dataset]\nmodalities = 4\nbogus = 1\n").unwrap();
    let out = cli(&["--config", s(&p), "gen-data", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_method_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = cli(&["--config", &cfg, "bind", "--method", "fabind:7", "--backbone", "random"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cli(&["--config", &cfg, "bind", "--method", "nonsense", "--backbone", "random"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn theory_check_reports_failures_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["theory-check", "--out", s(dir.path())]);
    // the stated bound and reverse Hölder inequality both have counterexamples
    assert_eq!(out.status.code(), Some(3));
    let csv = std::fs::read_to_string(dir.path().join("theory.csv")).unwrap();
    assert!(csv.starts_with("check,instance,params,lhs,rhs,slack,pass\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("bound,")).count(), 100);
    assert_eq!(csv.lines().filter(|l| l.starts_with("reverse_holder,")).count(), 1000);
}

#[test]
fn single_cell_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let pre = dir.path().join("pre");
    let bound = dir.path().join("bound");
    let eval = dir.path().join("eval");

    let out = cli(&["--config", &cfg, "--seed", "3", "gen-data", "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli(&["--config", &cfg, "pretrain", "--data", s(&data), "--out", s(&pre)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pre.join("encoder_3.cbm").exists());
    assert!(pre.join("pretrain_loss.csv").exists());

    let out = cli(&[
        "--config", &cfg, "bind", "--method", "centrobind", "--backbone", s(&pre), "--data", s(&data), "--out",
        s(&bound),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(bound.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 3);

    let export = dir.path().join("emb.csv");
    let out = cli(&[
        "--config", &cfg, "eval", "--encoders", s(&bound), "--data", s(&data), "--out", s(&eval), "--export",
        s(&export),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("acc(All)"));
    assert!(eval.join("report.json").exists());
    assert_eq!(std::fs::read_to_string(&export).unwrap().lines().count(), 1 + 120 * 3);
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = cli(&["--config", &cfg, "--threads", "2", "run", "--out", s(&run_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("16 cells (16 computed, 0 reused)"));
    let summary = std::fs::read(run_dir.join("summary.csv")).unwrap();

    let out = cli(&["--config", &cfg, "run", "--out", s(&run_dir)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("(0 computed, 16 reused)"));

    let out = cli(&["summarize", "--out", s(&run_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("centrobind") && table.contains("wavg:0.5,0.5,1"));
    assert_eq!(std::fs::read(run_dir.join("summary.csv")).unwrap(), summary);
    let text = String::from_utf8_lossy(&summary);
    assert!(text.contains("\"wavg:0.5,0.5,1\""));
}
