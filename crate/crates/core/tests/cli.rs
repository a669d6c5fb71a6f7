use std::path::Path;
use std::process::{Command, Output};

fn appendmem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_appendmem"))
        .args(args)
        .current_dir(dir)
        .env_remove("APPENDMEM_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const TINY: &[&str] = &["--hidden", "8", "--batch", "16", "--seed", "4"];

fn tiny_train(dir: &Path, task: &str, n: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--task", task, "--n", n, "--max-epochs", "3"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    appendmem(dir, &args)
}

#[test]
fn train_writes_checkpoint_and_metrics_and_exits_3_without_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem", "--metrics", "kv.csv"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stdout(&out).contains("stop_reason=max_epochs"));
    assert!(stderr(&out).starts_with("resolved train: task=kv mode=randomized n=2 hidden=8 batch=16"));
    let metrics = std::fs::read_to_string(dir.path().join("kv.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.starts_with("epoch,loss,train_acc,val_acc\n1,"));
    assert!(dir.path().join("kv.amem").exists());
}

#[test]
fn zero_learning_rate_never_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(dir.path(), "kv", "2", &["--lr", "0", "--stop-acc", "0.99"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn reaching_the_threshold_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(dir.path(), "kv", "2", &["--stop-acc", "0.01"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("epochs_run=1\nstop_reason=threshold"));
}

#[test]
fn invalid_flag_combinations_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(dir.path(), "kv", "2", &["--mode", "standard", "--stop-on", "val_acc"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("standard mode stops on train_acc"));
    assert_eq!(code(&appendmem(dir.path(), &["train", "--n", "zero"])), 2);
    assert_eq!(code(&appendmem(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&tiny_train(dir.path(), "sort", "11", &[])), 2);
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = appendmem(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["train", "eval", "memorize", "recall", "sort", "gradcheck"] {
        assert!(stdout(&out).contains(sub));
    }
}

#[test]
fn fixed_seed_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_train(dir.path(), "kv", "2", &["--checkpoint", "a.amem", "--metrics", "a.csv"]);
    let b = tiny_train(dir.path(), "kv", "2", &["--checkpoint", "b.amem", "--metrics", "b.csv"]);
    let strip = |s: String| s.replace("a.amem", "X").replace("a.csv", "Y").replace("b.amem", "X").replace("b.csv", "Y");
    assert_eq!(strip(stdout(&a)), strip(stdout(&b)));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.amem"), read("b.amem"));
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "# desk run\nhidden = 8\nbatch=16\nn=3\nmax-epochs=2\nseed=9\n").unwrap();
    let out = appendmem(dir.path(), &["train", "--config", "run.conf", "--n", "2"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let audit = stderr(&out);
    assert!(audit.contains(" n=2 hidden=8 batch=16 "), "{audit}");
    assert!(audit.contains("max_epochs=2") && audit.contains("seed=9"), "{audit}");

    std::fs::write(dir.path().join("bad.conf"), "hiden=8\n").unwrap();
    let out = appendmem(dir.path(), &["train", "--config", "bad.conf"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown key"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_appendmem"))
        .args(["gradcheck", "--trials", "1"])
        .env("APPENDMEM_SEED", "77")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("seed=77"));
    let out = Command::new(env!("CARGO_BIN_EXE_appendmem"))
        .args(["gradcheck", "--trials", "1", "--seed", "5"])
        .env("APPENDMEM_SEED", "77")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(stderr(&out).contains("seed=5"));
}

#[test]
fn memorize_then_recall() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem"]);
    let key = "1,2,3,4,5,6,7,8,0.5,1.5,2.5,3.5,4.5,5.5,6.5,7.5";
    std::fs::write(dir.path().join("pairs.tsv"), format!("{key}\t3\n{}\t7\n", ["0.25"; 16].join(","))).unwrap();
    let out = appendmem(dir.path(), &["memorize", "--checkpoint", "kv.amem", "--memory", "m.amv", "--in", "pairs.tsv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "appended=2 append_count=2\n");

    let recall = || appendmem(dir.path(), &["recall", "--checkpoint", "kv.amem", "--memory", "m.amv", "--key", key]);
    let before = std::fs::read(dir.path().join("m.amv")).unwrap();
    let first = recall();
    let second = recall();
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(std::fs::read(dir.path().join("m.amv")).unwrap(), before);
    let text = stdout(&first);
    let probs: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .strip_prefix("probabilities=")
        .unwrap()
        .split(',')
        .map(|p| p.parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 10);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);

    let more = appendmem(dir.path(), &["memorize", "--checkpoint", "kv.amem", "--memory", "m.amv", "--in", "pairs.tsv"]);
    assert_eq!(stdout(&more), "appended=2 append_count=4\n");
}

#[test]
fn recall_on_an_empty_session_is_defined() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem"]);
    std::fs::write(dir.path().join("empty.tsv"), "").unwrap();
    let out = appendmem(dir.path(), &["memorize", "--checkpoint", "kv.amem", "--memory", "m.amv", "--in", "empty.tsv"]);
    assert_eq!(stdout(&out), "appended=0 append_count=0\n");
    let key = ["1"; 16].join(",");
    let out = appendmem(dir.path(), &["recall", "--checkpoint", "kv.amem", "--memory", "m.amv", "--key", &key]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("class="));
}

#[test]
fn malformed_input_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem"]);
    let good = format!("{}\t1", ["1"; 16].join(","));
    std::fs::write(dir.path().join("pairs.tsv"), format!("{good}\n{good}\nnot a pair\n")).unwrap();
    let out = appendmem(dir.path(), &["memorize", "--checkpoint", "kv.amem", "--memory", "m.amv", "--in", "pairs.tsv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(!dir.path().join("m.amv").exists());

    std::fs::write(dir.path().join("short.tsv"), "1,2,3\t1\n").unwrap();
    let out = appendmem(dir.path(), &["memorize", "--checkpoint", "kv.amem", "--memory", "m.amv", "--in", "short.tsv"]);
    assert_eq!(code(&out), 2);
    let out = appendmem(dir.path(), &["recall", "--checkpoint", "kv.amem", "--memory", "none.amv", "--key", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sort_command() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), "sort", "5", &["--checkpoint", "sort.amem"]);
    let out = appendmem(dir.path(), &["sort", "--checkpoint", "sort.amem", "--numbers", "1.2,0.3,4.4,2.5,3.1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    for line in &lines {
        assert!(["1.2", "0.3", "4.4", "2.5", "3.1"].contains(line), "{line}");
    }

    let out = appendmem(dir.path(), &["sort", "--checkpoint", "sort.amem", "--numbers", "2.5"]);
    assert_eq!(stdout(&out), "2.5\n");

    let out = appendmem(dir.path(), &["sort", "--checkpoint", "sort.amem", "--numbers", "1,2,3,4,5,6"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("trained to sort 5"));

    tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem"]);
    let out = appendmem(dir.path(), &["sort", "--checkpoint", "kv.amem", "--numbers", "1,2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_experiments() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), "kv", "2", &["--checkpoint", "kv.amem"]);
    tiny_train(dir.path(), "sort", "3", &["--checkpoint", "sort.amem"]);

    let out = appendmem(dir.path(), &["eval", "--checkpoint", "kv.amem", "--experiment", "capacity", "--trials", "8", "--counts", "2,4", "--out", "cap.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("cap.csv")).unwrap();
    let parsed = appendable_memory::experiments::SweepResult::from_csv(&csv).unwrap();
    assert_eq!(parsed.experiment, "capacity");
    assert_eq!(parsed.rows.iter().map(|r| r.param).collect::<Vec<_>>(), [2, 4]);
    assert!(csv.starts_with("# experiment=capacity checkpoint=kv.amem\nparam,accuracy,trials\n"));

    let out = appendmem(dir.path(), &["eval", "--checkpoint", "kv.amem", "--experiment", "test", "--trials", "1"]);
    assert_eq!(code(&out), 0);
    let acc: f64 = stdout(&out).split_whitespace().next().unwrap().strip_prefix("accuracy=").unwrap().parse().unwrap();
    assert!([0.0, 0.5, 1.0].contains(&acc));

    let out = appendmem(dir.path(), &["eval", "--checkpoint", "kv.amem", "--experiment", "positional", "--trials", "4"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("position=2 accuracy="));

    let out = appendmem(dir.path(), &["eval", "--checkpoint", "sort.amem", "--experiment", "sort-exact", "--trials", "4"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("exact_match="));

    let out = appendmem(dir.path(), &["eval", "--checkpoint", "kv.amem", "--experiment", "overfit", "--n-values", "1,2", "--max-epochs", "2", "--batch", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 2);

    for (ck, exp) in [("kv.amem", "sort-exact"), ("sort.amem", "capacity"), ("sort.amem", "test")] {
        let out = appendmem(dir.path(), &["eval", "--checkpoint", ck, "--experiment", exp]);
        assert_eq!(code(&out), 2, "{ck} {exp}");
    }
    let out = appendmem(dir.path(), &["eval", "--checkpoint", "kv.amem", "--experiment", "test", "--trials", "0"]);
    assert_eq!(code(&out), 2);
    let out = appendmem(dir.path(), &["eval", "--checkpoint", "missing.amem", "--experiment", "test"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = appendmem(dir.path(), &["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).trim_end().ends_with("PASS"));
    let out = appendmem(dir.path(), &["gradcheck", "--eps", "1e-9"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("32-bit"));
    assert_eq!(code(&appendmem(dir.path(), &["gradcheck", "--trials", "0"])), 2);
}
