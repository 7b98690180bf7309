use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use soed_agent::checkpoint::Checkpoint;

fn soed(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soed"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn soed")
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

const SMALL: &[&str] = &[
    "--grid",
    "32",
    "--set",
    "data.n_per_shape=2",
    "--set",
    "env.max_steps=3",
    "--set",
    "env.sirt_iterations=20",
    "--set",
    "train.checkpoint_every=0",
];

fn trace_episodes(dir: &Path) -> Vec<u64> {
    fs::read_to_string(dir.join("trace.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn train_writes_checkpoint_and_resume_continues_numbering() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let mut args = vec!["train", "--episodes", "10", "--seed", "3"];
    args.extend_from_slice(SMALL);
    let o = soed(&first, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(&first)[0];
    for f in ["config.toml", "run.txt", "trace.tsv", "windows.tsv", "checkpoint.ckpt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    assert!(fs::read_to_string(dir.join("run.txt")).unwrap().contains("seed = 3"));
    let ck = Checkpoint::load(&dir.join("checkpoint.ckpt")).unwrap();
    assert_eq!(ck.episodes_done, 10);
    let again = tmp.path().join("again.ckpt");
    ck.save(&again).unwrap();
    assert_eq!(Checkpoint::load(&again).unwrap(), ck);
    assert_eq!(trace_episodes(dir), (0..10).collect::<Vec<_>>());

    let second = tmp.path().join("b");
    let ckpt = dir.join("checkpoint.ckpt");
    let mut args = vec!["train", "--episodes", "14", "--seed", "3", "--resume", ckpt.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = soed(&second, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir2 = &run_dirs(&second)[0];
    assert_eq!(trace_episodes(dir2), (10..14).collect::<Vec<_>>());
    assert_eq!(Checkpoint::load(&dir2.join("checkpoint.ckpt")).unwrap().episodes_done, 14);

    // The resumed run reproduces an uninterrupted one.
    let third = tmp.path().join("c");
    let mut args = vec!["train", "--episodes", "14", "--seed", "3"];
    args.extend_from_slice(SMALL);
    assert!(soed(&third, &args).status.success());
    let full = fs::read_to_string(run_dirs(&third)[0].join("trace.tsv")).unwrap();
    let resumed = fs::read_to_string(dir2.join("trace.tsv")).unwrap();
    let tail: Vec<&str> = full.lines().skip(11).collect();
    assert_eq!(tail, resumed.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "consts_b = 0.4\n").unwrap();
    let o = soed(tmp.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("consts_b") && err.contains("env.cost_b"), "{err}");

    fs::write(&cfg, "env.eta = \"loud\"\n").unwrap();
    assert_eq!(soed(tmp.path(), &["gen-data", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(soed(tmp.path(), &["eval"]).status.code(), Some(2));
}

#[test]
fn missing_data_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = soed(&tmp.path().join("out"), &["ingest", "--input-dir", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = soed(&tmp.path().join("out"), &["eval", "--checkpoint", tmp.path().join("nope.ckpt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn file_values_are_overridden_by_flags_and_lists_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "env.cost_b = 0.5\ndata.grid = 32\ndata.n_per_shape = 1\nenv.eta = [0.03, 0.07]\n").unwrap();
    let o = soed(tmp.path(), &["gen-data", "--config", cfg.to_str().unwrap(), "--cost-b", "0.9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dirs: Vec<PathBuf> = run_dirs(tmp.path()).into_iter().filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 2);
    let mut etas = Vec::new();
    for d in &dirs {
        let text = fs::read_to_string(d.join("config.toml")).unwrap();
        assert!(text.contains("env.cost_b = 0.9"));
        etas.push(text.lines().find(|l| l.starts_with("env.eta =")).unwrap().to_string());
        assert_eq!(fs::read_to_string(d.join("manifest.tsv")).unwrap().lines().count(), 4);
    }
    etas.sort();
    assert_eq!(etas, vec!["env.eta = 0.03", "env.eta = 0.07"]);
}

#[test]
fn oracle_subcommand_succeeds_when_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let o = soed(tmp.path(), &["oracle", "--set", "oracle.n_mdps=3", "--set", "oracle.trajectories=20000"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn eval_and_baseline_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let train_out = tmp.path().join("t");
    let mut args = vec!["train", "--episodes", "3"];
    args.extend_from_slice(SMALL);
    assert!(soed(&train_out, &args).status.success());
    let ckpt = run_dirs(&train_out)[0].join("checkpoint.ckpt");
    let eval_out = tmp.path().join("e");
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--set", "eval.n_per_shape=2", "--set", "eval.etas=[0.03, 0.07]"];
    args.extend_from_slice(SMALL);
    let o = soed(&eval_out, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(&eval_out)[0];
    let summary = fs::read_to_string(dir.join("summary.tsv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
    assert_eq!(fs::read_to_string(dir.join("episodes.tsv")).unwrap().lines().count(), 1 + 12);
    assert!(dir.join("scatter_eta_0.03.svg").exists());

    let base_out = tmp.path().join("b");
    let mut args = vec!["baseline", "--n-angles", "4", "--set", "eval.n_per_shape=1"];
    args.extend_from_slice(SMALL);
    let o = soed(&base_out, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(run_dirs(&base_out)[0].join("baseline.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 * 4);
    assert!(table.lines().nth(2).unwrap().contains("\t111\t"));
}
