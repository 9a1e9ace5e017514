use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sepacvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepacvae")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthetic_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = sepacvae(&["gen-synthetic", "--output", path(out), "--contexts", "40"]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn verify_theory_succeeds_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("theory.csv");
    let run = sepacvae(&["verify-theory", "--instances", "20", "--output", path(&csv)]);
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 21);
}

#[test]
fn impossible_tolerance_exits_with_four() {
    let run = sepacvae(&["verify-theory", "--instances", "5", "--tolerance=-1"]);
    assert_eq!(run.status.code(), Some(4));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sepacvae(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(sepacvae(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.tsv");
    let set = format!("corpus={}", path(&missing));
    assert_eq!(sepacvae(&["train", "--set", &set]).status.code(), Some(1));
    assert_eq!(sepacvae(&["train", "--set", "groups=1"]).status.code(), Some(1));

    let junk = dir.path().join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(sepacvae(&["evaluate", "--checkpoint", path(&junk)]).status.code(), Some(2));
}

#[test]
fn train_evaluate_generate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let run = sepacvae(&["gen-synthetic", "--output", path(&corpus), "--contexts", "40"]);
    assert!(run.status.success());
    let out = dir.path().join("run");
    let sets = [
        format!("corpus={}", path(&corpus.join("pairs.tsv"))),
        format!("output={}", path(&out)),
        "epochs=1".to_string(),
        "hidden=16".to_string(),
        "latent=4".to_string(),
    ];
    let mut args = vec!["train"];
    for s in &sets {
        args.extend(["--set", s.as_str()]);
    }
    let run = sepacvae(&args);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let ckpt = out.join("best.ckpt");
    assert!(out.join("config.txt").exists() && out.join("train_report.csv").exists());

    let run = sepacvae(&["evaluate", "--checkpoint", path(&ckpt), "--split", "test"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("eval_test.json").exists() && out.join("generations_test.tsv").exists());

    let run = sepacvae(&["generate", "--checkpoint", path(&ckpt), "--context", "hello there", "--group", "1"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let line = String::from_utf8(run.stdout).unwrap();
    assert_eq!(line.trim_end().rsplit('\t').next(), Some("1"));

    let run = sepacvae(&["generate", "--checkpoint", path(&ckpt), "--context", "hello", "--group", "99"]);
    assert_eq!(run.status.code(), Some(1));

    let run = sepacvae(&["analyze-latent", "--checkpoint", path(&ckpt), "--probe-pairs", "3"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}
