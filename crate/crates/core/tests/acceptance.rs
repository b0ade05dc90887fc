//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line.
//!
//! Run with `cargo test --test acceptance`; the lines bypass output capture.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use xsum::diffcore::{grad_check, ops, Tensor2};
use xsum::embed::{synth_corpus, EmbeddedPair, SynthConfig};
use xsum::eval::{evaluate, frame_hit, rouge_l, rouge_n, temporal_iou, EvalConfig, EvalReport};
use xsum::loss::{ot_exact, ot_sinkhorn, LossWeights, Pmf, SinkhornConfig};
use xsum::model::{Fluency, ForwardOptions, Model, ModelConfig, Variant};
use xsum::nfdt::gumbel_noise;
use xsum::rng;
use xsum::train::{self, TraceRow, TrainConfig};

/// Written straight to stderr so the line shows even under output capture.
fn report(criterion: u32, passed: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_gradient_fidelity() {
    let start = Instant::now();
    let mut cfg = ModelConfig::with_dim(8);
    cfg.stack.heads = 2;
    cfg.max_words = 2;
    cfg.sinkhorn = SinkhornConfig { epsilon: 0.05, max_iters: 200, tol: 0.0 };
    let model = Model::new(cfg, 11).unwrap();
    let scfg = SynthConfig { n_words: 4, m_frames: 3, d: 8, shared_signal_dim: 2, seed: 5, ..SynthConfig::default() };
    let pair = synth_corpus(&scfg, 1).unwrap().remove(0);
    let fluency = Fluency::from_corpus(std::slice::from_ref(&pair)).unwrap();

    let base = ForwardOptions { noise: model.sample_noise(&pair, 0), ..ForwardOptions::default() };
    let selection = model.frozen_selection(&pair, &base).unwrap();
    let opts = ForwardOptions { selection: Some(selection), ..base };
    let check = grad_check(&model.store, 1e-5, 1e-4, |s, t| {
        Ok(model.forward_with(s, t, &pair, &opts, Some(&fluency))?.loss)
    })
    .unwrap();
    let straight_through = |name: &str| name.starts_with("nfdt.text_score") || name.starts_with("nfdt.video_score");
    let soft = check.max_rel_error_where(|n| !straight_through(n));
    let st = check.max_rel_error_where(straight_through);
    let elapsed = start.elapsed();
    let passed = soft < 1e-4 && st < 1e-3 && elapsed < Duration::from_secs(10);
    report(
        1,
        passed,
        &format!("soft max rel err {soft:.2e} (< 1e-4), straight-through {st:.2e} (< 1e-3), {:.2}s (< 10s)", elapsed.as_secs_f64()),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- 2

fn random_pmf(g: &mut impl Rng, max_points: usize, scale: f64) -> Pmf {
    let k = g.random_range(1..=max_points);
    let raw: Vec<f64> = (0..k).map(|_| g.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..2).map(|_| g.random_range(0.0..scale)).collect()).collect();
    Pmf::new(weights, Tensor2::from_rows(&rows).unwrap()).unwrap()
}

#[test]
fn criterion_2_ot_correctness() {
    let start = Instant::now();
    let cfg = SinkhornConfig { epsilon: 0.01, max_iters: 200_000, tol: 1e-12 };
    let mut g = rng::stream(2, "acceptance-ot", 0);
    let mut worst_rel: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let mut worst_id: f64 = 0.0;
    let mut worst_tri: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let p = random_pmf(&mut g, 6, 10.0);
        let q = random_pmf(&mut g, 6, 10.0);
        let r = random_pmf(&mut g, 6, 10.0);
        let exact = ot_exact(&p, &q).unwrap().total_cost;
        let approx = ot_sinkhorn(&p, &q, &cfg).unwrap().distance;
        worst_rel = worst_rel.max((approx - exact).abs() / exact);

        let back = ot_exact(&q, &p).unwrap().total_cost;
        worst_sym = worst_sym.max((exact - back).abs());
        worst_id = worst_id.max(ot_exact(&p, &p).unwrap().total_cost.abs());
        let pr = ot_exact(&p, &r).unwrap().total_cost;
        let rq = ot_exact(&r, &q).unwrap().total_cost;
        worst_tri = worst_tri.max(exact - (pr + rq));
    }
    let elapsed = start.elapsed();
    let passed =
        worst_rel < 0.01 && worst_sym < 1e-9 && worst_id < 1e-9 && worst_tri <= 1e-9 && elapsed < Duration::from_secs(30);
    report(
        2,
        passed,
        &format!(
            "max rel err {worst_rel:.2e} (< 1e-2), symmetry {worst_sym:.1e}, identity {worst_id:.1e}, triangle slack {worst_tri:.2e}, {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_gumbel_max() {
    let start = Instant::now();
    let scores = [1.0, 0.2, -0.5, 1.6];
    let target = ops::softmax_vec(&scores);
    let samples = 100_000;
    let mut counts = [0usize; 4];
    let mut g = rng::stream(3, "acceptance-gumbel", 0);
    for _ in 0..samples {
        let noise = gumbel_noise(4, &mut g);
        let perturbed: Vec<f64> = scores.iter().zip(&noise).map(|(s, z)| s + z).collect();
        let best = (0..4).max_by(|&a, &b| perturbed[a].total_cmp(&perturbed[b])).unwrap();
        counts[best] += 1;
    }
    let worst = counts
        .iter()
        .zip(&target)
        .map(|(&c, t)| (c as f64 / samples as f64 - t).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let passed = worst <= 0.01 && elapsed < Duration::from_secs(5);
    report(3, passed, &format!("max |freq - softmax| {worst:.4} (<= 0.01), {:.2}s (< 5s)", elapsed.as_secs_f64()));
    assert!(passed);
}

// ---------------------------------------------------------------- 4, 5, 8

const SEEDS: [u64; 3] = [0, 1, 2];

struct Run {
    report: EvalReport,
    trace: Vec<TraceRow>,
    seconds: f64,
}

fn planted_corpus(seed: u64) -> Vec<EmbeddedPair> {
    let cfg = SynthConfig { n_words: 20, m_frames: 12, d: 64, noise_scale: 0.1, seed, ..SynthConfig::default() };
    synth_corpus(&cfg, 200).unwrap()
}

fn planted_run(seed: u64, variant: Variant) -> Run {
    let start = Instant::now();
    let data = planted_corpus(seed);
    let fluency = Fluency::from_corpus(&data).unwrap();
    let mut cfg = ModelConfig::with_dim(64);
    cfg.variant = variant;
    let model = Model::new(cfg, seed).unwrap();
    let tcfg = TrainConfig { seed, epochs: 30, ..TrainConfig::default() };
    let (model, trace) = train::fit(model, &data, &tcfg, Some(&fluency)).unwrap();
    let eval = EvalConfig { fa_window: 0, ..EvalConfig::default() };
    let (report, _) = evaluate(&model, &data, &eval).unwrap();
    Run { report, trace, seconds: start.elapsed().as_secs_f64() }
}

fn full_runs() -> &'static Vec<Run> {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| SEEDS.iter().map(|&s| planted_run(s, Variant::Full)).collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_4_planted_signal_recovery() {
    let runs = full_runs();
    let fa = median(runs.iter().map(|r| r.report.fa).collect());
    let iou = median(runs.iter().map(|r| r.report.iou).collect());
    let seconds: f64 = runs.iter().map(|r| r.seconds).sum();
    let per_seed: Vec<String> = runs.iter().map(|r| format!("{:.3}/{:.3}", r.report.fa, r.report.iou)).collect();
    let passed = fa >= 0.8 && iou >= 0.6 && seconds < 15.0 * 60.0;
    report(
        4,
        passed,
        &format!(
            "median FA {fa:.3} (>= 0.8), median IoU {iou:.3} (>= 0.6), per seed FA/IoU [{}], {seconds:.0}s (< 900s)",
            per_seed.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_5_ablation_ordering() {
    let runs = full_runs();
    let mut wins = 0;
    let mut rows = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        let full = runs[i].report.fa;
        let random = planted_run(seed, Variant::RandomSelector).report.fa;
        let no_gate = planted_run(seed, Variant::NoGate).report.fa;
        if full >= random && full >= no_gate {
            wins += 1;
        }
        rows.push(format!("seed {seed}: full {full:.3} random {random:.3} no-gate {no_gate:.3}"));
    }
    let passed = wins >= 2;
    report(5, passed, &format!("{wins}/3 seeds with full >= both (need 2); {}", rows.join("; ")));
    assert!(passed);
}

#[test]
fn desk_training_lowers_total_loss() {
    for (run, seed) in full_runs().iter().zip(SEEDS) {
        let first = run.trace.first().unwrap().total;
        let last = run.trace.last().unwrap().total;
        assert!(last < first, "seed {seed}: final total {last} >= initial {first}");
    }
}

fn recombination_error(trace: &[TraceRow], w: &LossWeights) -> f64 {
    trace.iter().map(|r| (r.total - r.terms.weighted(w)).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_8_loss_accounting() {
    let default = LossWeights::default();
    let mut worst = full_runs().iter().map(|r| recombination_error(&r.trace, &default)).fold(0.0, f64::max);

    let data = small_corpus();
    let fluency = Fluency::from_corpus(&data).unwrap();
    let weights = LossWeights { text: 0.5, video: 2.0, cross: 1.5, fluency: 0.3 };
    let mut cfg = small_model_config();
    cfg.weights = weights.clone();
    let tcfg = TrainConfig { seed: 8, epochs: 3, ..TrainConfig::default() };
    let (_, trace) = train::fit(Model::new(cfg, 8).unwrap(), &data, &tcfg, Some(&fluency)).unwrap();
    // parse the rendered lines back, as a reader of the trace file would
    let parsed: Vec<TraceRow> = trace.iter().map(|r| TraceRow::parse(&r.line()).unwrap()).collect();
    worst = worst.max(recombination_error(&parsed, &weights));
    let passed = worst <= 1e-9;
    report(8, passed, &format!("max |total - weighted terms| {worst:.2e} (<= 1e-9) over every epoch"));
    assert!(passed);
}

// ---------------------------------------------------------------- 6

fn rouge_n_oracle(c: &[String], r: &[String], n: usize) -> f64 {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let (cg, rg) = (grams(c), grams(r));
    // greedy one-to-one matching of equal grams is maximal for equality
    let mut used = vec![false; rg.len()];
    let mut overlap = 0;
    for g in &cg {
        if let Some(j) = (0..rg.len()).find(|&j| !used[j] && &rg[j] == g) {
            used[j] = true;
            overlap += 1;
        }
    }
    f_measure(overlap, cg.len(), rg.len())
}

fn f_measure(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    2.0 * p * r / (p + r)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

fn rouge_l_oracle(c: &[String], r: &[String]) -> f64 {
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len()).filter(|i| mask & (1 << i) != 0).map(|i| &c[i]).collect();
        if sub.len() > best && is_subsequence(&sub, r) {
            best = sub.len();
        }
    }
    f_measure(best, c.len(), r.len())
}

fn iou_oracle(pred: usize, gt: usize, h: usize, m: usize) -> f64 {
    let interval = |i: usize| {
        let lo = (i as f64 - h as f64).max(0.0);
        let hi = (i as f64 + h as f64 + 1.0).min(m as f64);
        (lo, hi)
    };
    let (a0, a1) = interval(pred);
    let (b0, b1) = interval(gt);
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let union = (a1 - a0) + (b1 - b0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[test]
fn criterion_6_metric_oracles() {
    let vocab = ["a", "b", "c", "d", "E", "f"];
    let mut g = rng::stream(6, "acceptance-metrics", 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let lc = g.random_range(0..=10);
        let lr = g.random_range(0..=12);
        let mut sample = |len: usize| -> Vec<String> { (0..len).map(|_| vocab[g.random_range(0..vocab.len())].to_string()).collect() };
        let c = sample(lc);
        let r = sample(lr);
        let cl: Vec<String> = c.iter().map(|t| t.to_lowercase()).collect();
        let rl: Vec<String> = r.iter().map(|t| t.to_lowercase()).collect();
        let cs: Vec<&str> = c.iter().map(String::as_str).collect();
        let rs: Vec<&str> = r.iter().map(String::as_str).collect();
        for n in 1..=2 {
            if rouge_n(&cs, &rs, n).unwrap() != rouge_n_oracle(&cl, &rl, n) {
                mismatches += 1;
            }
        }
        if rouge_l(&cs, &rs) != rouge_l_oracle(&cl, &rl) {
            mismatches += 1;
        }
    }
    let mut frame_mismatches = 0;
    for m in 1..=14usize {
        for pred in 0..m {
            for gt in 0..m {
                for w in 0..4usize {
                    let oracle = (pred as i64 - gt as i64).abs() <= w as i64;
                    if frame_hit(pred, gt, w) != oracle {
                        frame_mismatches += 1;
                    }
                    if (temporal_iou(pred, gt, w, m) - iou_oracle(pred, gt, w, m)).abs() > 1e-12 {
                        frame_mismatches += 1;
                    }
                }
            }
        }
    }
    let passed = mismatches == 0 && frame_mismatches == 0;
    report(
        6,
        passed,
        &format!("ROUGE mismatches {mismatches}/3000, FA/IoU mismatches {frame_mismatches} over all windows with m <= 14"),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- 7

fn small_corpus() -> Vec<EmbeddedPair> {
    let cfg = SynthConfig { seed: 7, ..SynthConfig::default() };
    synth_corpus(&cfg, 40).unwrap()
}

fn small_model_config() -> ModelConfig {
    ModelConfig::with_dim(64)
}

fn train_and_eval(seed: u64) -> (Vec<String>, String, Vec<String>) {
    let data = small_corpus();
    let fluency = Fluency::from_corpus(&data).unwrap();
    let tcfg = TrainConfig { seed, epochs: 3, ..TrainConfig::default() };
    let (model, trace) = train::fit(Model::new(small_model_config(), seed).unwrap(), &data, &tcfg, Some(&fluency)).unwrap();
    let (report, summaries) = evaluate(&model, &data, &EvalConfig::default()).unwrap();
    let records = summaries.iter().zip(&data).map(|(s, p)| s.record(&p.tokens)).collect();
    (trace.iter().map(TraceRow::line).collect(), format!("{}\n{:?}", report.line("full"), report.per_pair), records)
}

#[test]
fn criterion_7_determinism() {
    let a = train_and_eval(17);
    let b = train_and_eval(17);
    let c = train_and_eval(18);
    let passed = a == b && a.0 != c.0;
    report(7, passed, "two train+eval runs with seed 17 give identical trace lines, reports and summaries; seed 18 differs");
    assert!(passed);
}
