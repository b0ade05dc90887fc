use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use xsum::train::TraceRow;

const BASE: &str = "\
run.seed=3
synth.size=6
synth.n_words=6
synth.m_frames=4
synth.d=8
synth.shared_signal_dim=2
model.d=8
model.heads=2
model.max_len=16
decode.max_words=3
train.epochs=2
train.batch_size=3
loss.fluency=0.1
";

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{BASE}{extra}")).unwrap();
    path
}

fn xsum(cmd: &str, config: &Path, out: &Path, sets: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xsum"));
    c.arg(cmd).arg("--config").arg(config).arg("--out").arg(out);
    for s in sets {
        c.arg("--set").arg(s);
    }
    c.output().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn err_line(out: &Output) -> String {
    assert!(!out.status.success());
    let s = String::from_utf8_lossy(&out.stderr).trim().to_string();
    assert_eq!(s.lines().count(), 1, "{s}");
    s
}

fn gen(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let cfg = write_config(tmp.path(), "");
    let corpus = tmp.path().join("corpus");
    ok(xsum("gen", &cfg, &corpus, &[]));
    (cfg, corpus)
}

fn corpus_set(corpus: &Path) -> String {
    format!("corpus.dir={}", corpus.display())
}

fn manifest_entries(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(String::from)
        .collect()
}

#[test]
fn gen_writes_records_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "synth.size=100\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(xsum("gen", &cfg, &a, &[]));
    ok(xsum("gen", &cfg, &b, &[]));
    let entries = manifest_entries(&a);
    assert_eq!(entries.len(), 100);
    for name in &entries {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
    assert_eq!(entries, manifest_entries(&b));
}

#[test]
fn gen_rejects_zero_size_and_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = xsum("gen", &cfg, &tmp.path().join("x"), &["synth.size=0"]);
    assert!(err_line(&out).starts_with("error: config:"));
    let out = xsum("gen", &cfg, &tmp.path().join("x"), &["synth.sizes=3"]);
    let line = err_line(&out);
    assert!(line.starts_with("error: config:"));
    assert!(line.contains("synth.sizes") && line.contains("synth.size"), "{line}");
}

fn read_trace(path: &Path) -> Vec<TraceRow> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TraceRow::HEADER));
    lines.map(|l| TraceRow::parse(l).unwrap()).collect()
}

#[test]
fn train_writes_trace_and_checkpoints() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let out = tmp.path().join("train");
    ok(xsum("train", &cfg, &out, &[&corpus_set(&corpus), "train.epochs=3", "loss.text=0.5", "loss.cross=2"]));
    let trace = read_trace(&out.join("trace.csv"));
    assert_eq!(trace.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    for r in &trace {
        let t = &r.terms;
        let sum = 0.5 * t.text + t.video + 2.0 * t.cross + 0.1 * t.fluency;
        assert!((r.total - sum).abs() < 1e-9, "{} vs {sum}", r.total);
    }
    for e in 1..=3 {
        assert!(out.join(format!("epoch-{e:04}.ckpt")).is_file());
    }
    assert!(out.join("model.ckpt").is_file());
}

#[test]
fn resume_continues_the_trace_and_matches_a_straight_run() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let c = corpus_set(&corpus);
    let straight = tmp.path().join("straight");
    ok(xsum("train", &cfg, &straight, &[&c, "train.epochs=4"]));
    let resumed = tmp.path().join("resumed");
    let from = format!("train.resume={}", straight.join("epoch-0002.ckpt").display());
    ok(xsum("train", &cfg, &resumed, &[&c, "train.epochs=4", &from]));
    let tail = read_trace(&resumed.join("trace.csv"));
    assert_eq!(tail.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![3, 4]);
    assert_eq!(tail, read_trace(&straight.join("trace.csv"))[2..]);
    assert_eq!(fs::read(resumed.join("model.ckpt")).unwrap(), fs::read(straight.join("model.ckpt")).unwrap());
}

#[test]
fn train_without_corpus_is_a_path_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = xsum("train", &cfg, &tmp.path().join("t"), &["corpus.dir=/nonexistent/corpus"]);
    assert!(err_line(&out).starts_with("error: path:"));
}

#[test]
fn eval_is_deterministic_and_complete() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let c = corpus_set(&corpus);
    let train = tmp.path().join("train");
    ok(xsum("train", &cfg, &train, &[&c]));
    let ck = format!("eval.checkpoint={}", train.join("model.ckpt").display());
    let a = tmp.path().join("eval-a");
    let b = tmp.path().join("eval-b");
    ok(xsum("eval", &cfg, &a, &[&c, &ck]));
    ok(xsum("eval", &cfg, &b, &[&c, &ck]));
    for f in ["report.csv", "report.txt", "per_pair.csv", "summaries.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    let line = report.lines().nth(1).unwrap();
    assert!(line.starts_with("full,"));
    for v in line.split(',').skip(1) {
        let v: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&v), "{line}");
    }
    assert_eq!(fs::read_to_string(a.join("per_pair.csv")).unwrap().lines().count(), 1 + 6);
    let summaries = fs::read_to_string(a.join("summaries.txt")).unwrap();
    assert_eq!(summaries.lines().filter(|l| l.starts_with("FRAME ")).count(), 6);
    assert_eq!(summaries.lines().filter(|l| l.starts_with("SENT ")).count(), 6);
}

#[test]
fn eval_with_mismatched_config_is_a_version_error() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let c = corpus_set(&corpus);
    let train = tmp.path().join("train");
    ok(xsum("train", &cfg, &train, &[&c, "train.epochs=1"]));
    let ck = format!("eval.checkpoint={}", train.join("model.ckpt").display());
    let out = xsum("eval", &cfg, &tmp.path().join("e"), &[&c, &ck, "model.layers=3"]);
    assert!(err_line(&out).starts_with("error: version:"));
}

#[test]
fn ablate_reports_each_variant() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let out = tmp.path().join("ablate");
    ok(xsum("ablate", &cfg, &out, &[&corpus_set(&corpus), "train.epochs=1", "ablate.variants=full,no-gate,cosine"]));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, vec!["full", "no-gate", "cosine"]);
    assert!(out.join("no-gate").join("trace.csv").is_file());
}

#[test]
fn sweep_echoes_ratios_in_order() {
    let tmp = TempDir::new().unwrap();
    let (cfg, corpus) = gen(&tmp);
    let c = corpus_set(&corpus);
    let out = tmp.path().join("sweep");
    ok(xsum("sweep-k", &cfg, &out, &[&c, "train.epochs=1", "sweep.ratios=0.75,0.25,0.5,1.0"]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("ratio,fa,iou,r1,r2,rl"));
    let ratios: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ratios, vec!["0.75", "0.25", "0.5", "1.0"]);
    let bad = xsum("sweep-k", &cfg, &out, &[&c, "sweep.ratios=0.5,1.5"]);
    assert!(err_line(&bad).starts_with("error: config:"));
}
