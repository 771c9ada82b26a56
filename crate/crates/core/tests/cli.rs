use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aclb::corpus::write_utterances;
use aclb::eval::{generate, SyntheticConfig};

fn aclb(args: &[&str]) -> Output {
    aclb_env(args, None)
}

fn aclb_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aclb"));
    cmd.args(args).env_remove("ACLB_SEED");
    if let Some(s) = seed_env {
        cmd.env("ACLB_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let bench = generate(&SyntheticConfig {
            train: 120,
            test: 40,
            general: 150,
            seed: 2,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let write = |name: &str, utts: &[aclb::corpus::Utterance]| {
            let mut buf = Vec::new();
            write_utterances(&mut buf, utts).unwrap();
            fs::write(root.join(name), buf).unwrap();
        };
        write("general.jsonl", &bench.general.utterances);
        write("train.jsonl", &bench.train.utterances);
        write("test.jsonl", &bench.test.utterances);
        let spec = serde_json::json!({
            "confusions": bench.confusions,
            "p_sub": 0.25,
            "n_best": 3,
            "seed": 4
        });
        fs::write(root.join("noise.json"), spec.to_string()).unwrap();
        fs::write(root.join("lm.conf"), "embed_dim = 6\nhidden_dim = 6\nepochs = 2\nlr = 0.01\n").unwrap();
        fs::write(root.join("slu.conf"), "hidden_dim = 6\nepochs = 3\nlr = 0.01\n").unwrap();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn full_pipeline_through_the_binary() {
    let ws = Workspace::new();
    let f = |n: &str| ws.path(n);

    ok(&aclb(&[
        "synthesize", "--corpus", p(&f("train.jsonl")), "--spec", p(&f("noise.json")),
        "--out-pairs", p(&f("pairs.jsonl")), "--out-nbest", p(&f("train.nbest")),
    ]));
    let stdout = ok(&aclb(&["align", "--pairs", p(&f("pairs.jsonl"))]));
    assert!(stdout.contains("WER"));

    ok(&aclb(&["extract-confusions", "--pairs", p(&f("pairs.jsonl")), "--out", p(&f("sup.tsv"))]));
    ok(&aclb(&["extract-confusions", "--mode", "unsupervised", "--nbest", p(&f("train.nbest")), "--max-hyps", "3", "--out", p(&f("unsup.tsv"))]));
    let mismatch = aclb(&["extract-confusions", "--mode", "unsupervised", "--pairs", p(&f("pairs.jsonl")), "--out", p(&f("x.tsv"))]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(fs::read_to_string(f("sup.tsv")).unwrap().lines().count() > 0);
    assert!(fs::read_to_string(f("unsup.tsv")).unwrap().contains("#2"));

    let wcn = ok(&aclb(&["build-wcn", "--nbest", p(&f("train.nbest"))]));
    assert!(!wcn.is_empty());

    ok(&aclb(&[
        "pretrain", "--corpus", p(&f("general.jsonl")), "--config", p(&f("lm.conf")),
        "--seed", "3", "--out", p(&f("lm.ckpt")),
    ]));
    ok(&aclb(&[
        "finetune", "--ckpt", p(&f("lm.ckpt")), "--pairs", p(&f("sup.tsv")),
        "--transcripts", p(&f("pairs.jsonl")), "--beta", "0.1", "--out", p(&f("sup.ckpt")),
    ]));
    ok(&aclb(&[
        "finetune", "--ckpt", p(&f("lm.ckpt")), "--pairs", p(&f("unsup.tsv")),
        "--nbest", p(&f("train.nbest")), "--out", p(&f("unsup.ckpt")),
    ]));
    ok(&aclb(&[
        "train-slu", "--lm", p(&f("sup.ckpt")), "--train", p(&f("train.jsonl")),
        "--config", p(&f("slu.conf")), "--out", p(&f("slu.ckpt")),
    ]));
    ok(&aclb(&[
        "predict", "--lm", p(&f("sup.ckpt")), "--slu", p(&f("slu.ckpt")),
        "--in", p(&f("test.jsonl")), "--out", p(&f("pred.jsonl")),
    ]));
    let preds = fs::read_to_string(f("pred.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 40);
    for line in preds.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let probs = v["probs"].as_array().unwrap();
        assert_eq!(probs.len(), 5);
        let s: f64 = probs.iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(v["intent"].is_string() && v["id"].is_string());
    }

    let info = ok(&aclb(&["inspect-ckpt", p(&f("slu.ckpt"))]));
    assert!(info.contains("layout: slu"), "{info}");
    let info = ok(&aclb(&["inspect-ckpt", p(&f("lm.ckpt"))]));
    assert!(info.contains("layout: bilm") && info.contains("lm.embed"), "{info}");
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let ws = Workspace::new();
    let conf = ws.path("seeded.conf");
    fs::write(&conf, "seed = 3\nembed_dim = 4\nhidden_dim = 4\nepochs = 1\n").unwrap();
    let out = ws.path("lm.ckpt");
    let corpus = ws.path("general.jsonl");
    let run = |flag: Option<&str>, env: Option<&str>| -> String {
        let mut args = vec!["pretrain", "--corpus", p(&corpus), "--config", p(&conf), "--out", p(&out)];
        if let Some(s) = flag {
            args.extend(["--seed", s]);
        }
        ok(&aclb_env(&args, env));
        ok(&aclb(&["inspect-ckpt", p(&out)]))
    };
    assert!(run(None, None).contains("seed: 3"));
    assert!(run(None, Some("5")).contains("seed: 5"));
    assert!(run(Some("9"), Some("5")).contains("seed: 9"));
}

#[test]
fn exit_codes() {
    assert_eq!(aclb(&[]).status.code(), Some(1));
    assert_eq!(aclb(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(aclb(&["--threads", "0", "inspect-ckpt", "x"]).status.code(), Some(1));
    assert_eq!(aclb(&["inspect-ckpt", "/nonexistent/model.ckpt"]).status.code(), Some(2));
    assert_eq!(
        aclb(&["experiment", "--config", "/nonexistent.conf", "--out", "/tmp/x.json"]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("bad.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(aclb(&["inspect-ckpt", p(&garbage)]).status.code(), Some(2));

    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "learning_rate = 1\n").unwrap();
    let out = aclb(&["experiment", "--config", p(&conf), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn help_for_every_subcommand() {
    let top = ok(&aclb(&["--help"]));
    let subcommands = [
        "align", "build-wcn", "extract-confusions", "pretrain", "finetune", "train-slu", "predict",
        "synthesize", "experiment", "inspect-ckpt",
    ];
    for s in subcommands {
        assert!(top.contains(s), "{s} missing from top-level help");
        let help = ok(&aclb(&[s, "--help"]));
        assert!(help.contains("Usage"), "{s}: {help}");
    }
    assert!(ok(&aclb(&["--version"])).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn align_inline() {
    let out = ok(&aclb(&["align", "--reference", "book a flight", "--hyp", "book flight"]));
    assert!(out.contains("book a flight"));
    assert!(out.contains("WER 0.3333"), "{out}");
}
