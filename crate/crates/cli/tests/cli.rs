use std::path::Path;
use std::process::{Command, Output};

fn neat(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neat"))
        .args(args)
        .env("NEAT_RUNS_DIR", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(o: &Output) -> std::path::PathBuf {
    let text = stdout(o);
    let line = text.lines().find_map(|l| l.strip_prefix("run directory: ")).expect("run directory line");
    line.into()
}

const TINY: &[&str] = &[
    "--set", "pretrain_epochs=2", "--set", "pretrain_batch=8", "--set", "finetune_epochs=2",
    "--set", "finetune_batch=8", "--set", "attr_rows=32", "--set", "top_k=3",
];

fn tiny(cmd: &str, data: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![cmd.into()];
    v.extend(data.iter().map(|s| s.to_string()));
    v.extend(TINY.iter().map(|s| s.to_string()));
    v
}

#[test]
fn collect_counts_records_and_reruns_are_noops() {
    let root = tempfile::tempdir().unwrap();
    let args = ["collect", "--episodes", "2", "--steps", "2"];
    let first = neat(root.path(), &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let records = std::fs::read_to_string(run_dir(&first).join("records.tsv")).unwrap();
    assert!(records.starts_with("# "));
    assert_eq!(records.lines().count(), 1 + 4);
    let again = neat(root.path(), &args);
    assert_eq!(again.status.code(), Some(0));
    assert!(stdout(&again).contains("collect: up to date"));
    let forced = neat(root.path(), &["collect", "--episodes", "2", "--steps", "2", "--force"]);
    assert!(stdout(&forced).contains("collect: done"));
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(neat(root.path(), &["collect", "--set", "tau=-1"]).status.code(), Some(2));
    assert_eq!(neat(root.path(), &["collect", "--set", "nonsense=1"]).status.code(), Some(2));
    assert_eq!(neat(root.path(), &["collect", "--data", "/no/such/file.csv"]).status.code(), Some(2));
    assert_eq!(neat(root.path(), &["finetune", "--episodes", "2"]).status.code(), Some(3));
}

#[test]
fn pipeline_writes_every_artifact_deterministically() {
    let wine = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/winequality_red.csv");
    let data = ["--data", wine, "--target", "quality", "--task", "c", "--seed", "7", "--episodes", "2", "--steps", "3"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = tiny("pipeline", &data);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out_a = neat(a.path(), &args);
    assert!(out_a.status.success(), "{}", String::from_utf8_lossy(&out_a.stderr));
    let out_b = neat(b.path(), &args);
    let (da, db) = (run_dir(&out_a), run_dir(&out_b));
    for f in ["records.tsv", "encoder.ckpt", "joint.ckpt", "transformed.csv", "eval.tsv", "eval_summary.txt"] {
        let x = std::fs::read(da.join(f)).unwrap_or_else(|_| panic!("{f} written"));
        assert_eq!(x, std::fs::read(db.join(f)).unwrap(), "{f} differs between runs");
    }
    let summary = std::fs::read_to_string(da.join("eval_summary.txt")).unwrap();
    assert!(summary.contains("metric=f1_macro"));
    assert!(summary.contains("seed=7"));
    let csv = std::fs::read_to_string(da.join("transformed.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("quality"));
    let rerun = neat(a.path(), &args);
    assert_eq!(stdout(&rerun).matches("up to date").count(), 5);
}

#[test]
fn stages_chain_across_invocations() {
    let root = tempfile::tempdir().unwrap();
    let data = ["--episodes", "2", "--steps", "2", "--variant", "no_pretrain"];
    for cmd in ["collect", "pretrain", "finetune", "transform", "eval"] {
        let args = tiny(cmd, &data);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = neat(root.path(), &args);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        if cmd == "pretrain" {
            assert!(stdout(&o).contains("pretrain: skipped"));
        }
    }
}

#[test]
fn score_prints_utility_and_importances() {
    let root = tempfile::tempdir().unwrap();
    let o = neat(root.path(), &["score", "--data", "pima", "--utility", "mdcg"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("mdcg\t"));
    assert_eq!(text.lines().count(), 2 + 7);
    let r = neat(root.path(), &["score", "--data", "pima", "--utility", "redundancy"]);
    let v: f64 = stdout(&r).trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&v));
}
