//! Command line front end: corpus generation, training, evaluation,
//! ablations and the shared-information ratio sweep.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, KEYS};

use crate::embed::{read_record_file, synth_corpus, write_record_file, EmbeddedPair};
use crate::error::{Error, Result};
use crate::eval::{ablation_run, evaluate, render_table, EvalReport};
use crate::loss::UnigramTable;
use crate::model::{Fluency, Model};
use crate::train::{self, Checkpoint, CheckpointSink, TraceRow, Trainer};

pub const MANIFEST: &str = "manifest.txt";
pub const TRACE: &str = "trace.csv";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "xsum", version, about = "Extreme multimodal summarization on embedding sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-signal corpus.
    Gen(Common),
    /// Train a model on a corpus.
    Train(Common),
    /// Evaluate a checkpoint on a corpus.
    Eval(Common),
    /// Train and evaluate each model variant.
    Ablate(Common),
    /// Train and evaluate across shared-information ratios.
    SweepK(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `section.key=value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut text = fs::read_to_string(&self.config)
            .map_err(|e| Error::Path(format!("{}: {e}", self.config.display())))?;
        for s in &self.set {
            text.push('\n');
            text.push_str(s);
        }
        RunConfig::from_text(&text)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let (common, f): (&Common, fn(&RunConfig, &Path) -> Result<()>) = match &cli.command {
        Command::Gen(c) => (c, cmd_gen),
        Command::Train(c) => (c, cmd_train),
        Command::Eval(c) => (c, cmd_eval),
        Command::Ablate(c) => (c, cmd_ablate),
        Command::SweepK(c) => (c, cmd_sweep_k),
    };
    let cfg = common.load()?;
    create_dir(&common.out)?;
    f(&cfg, &common.out)
}

/// One-line `error: <category>: <message>` rendering.
pub fn error_line(e: &Error) -> String {
    let cat = e.category();
    let msg = e.to_string();
    let msg = msg.strip_prefix(&format!("{cat} error: ")).unwrap_or(&msg).replace('\n', " ");
    format!("error: {cat}: {msg}")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Path(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Path(format!("{}: {e}", path.display())))
}

fn record_name(index: usize) -> String {
    format!("pair-{index:05}.rec")
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pairs = synth_corpus(&cfg.synth, cfg.corpus_size)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let s = &cfg.synth;
    let mut manifest = format!(
        "# created_unix={stamp}\n# seed={} n_words={} m_frames={} d={} shared_signal_dim={} noise_scale={:?}\n",
        s.seed, s.n_words, s.m_frames, s.d, s.shared_signal_dim, s.noise_scale
    );
    for (i, pair) in pairs.iter().enumerate() {
        let name = record_name(i);
        write_record_file(pair, &out.join(&name))?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    write_file(&out.join(MANIFEST), &manifest)?;
    println!("wrote {} records to {}", pairs.len(), out.display());
    Ok(())
}

/// Reads every record listed in `dir/manifest.txt`, in manifest order.
pub fn load_corpus(dir: &Path) -> Result<Vec<EmbeddedPair>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Path(format!("corpus manifest {}: {e}", path.display())))?;
    let pairs = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|name| read_record_file(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::Ingestion(format!("corpus manifest {} lists no records", path.display())));
    }
    Ok(pairs)
}

fn corpus(cfg: &RunConfig) -> Result<Vec<EmbeddedPair>> {
    let dir = cfg.corpus_dir.as_ref().ok_or_else(|| Error::Path("corpus.dir is not set".into()))?;
    load_corpus(dir)
}

fn fluency(cfg: &RunConfig, data: &[EmbeddedPair]) -> Result<Fluency> {
    let mut f = Fluency::from_corpus(data)?;
    if let Some(path) = &cfg.unigram {
        f.unigram = UnigramTable::load(path)?;
    }
    Ok(f)
}

fn trace_text(rows: &[TraceRow]) -> String {
    let mut out = format!("{}\n", TraceRow::HEADER);
    for r in rows {
        out.push_str(&r.line());
        out.push('\n');
    }
    out
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = corpus(cfg)?;
    let fl = fluency(cfg, &data)?;
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut trainer = match &cfg.resume {
        Some(path) => Trainer::from_checkpoint(model, &Checkpoint::load(path)?, cfg.train.clone(), Some(&fl))?,
        None => Trainer::new(model, cfg.train.clone(), Some(&fl))?,
    };
    let mut rows = Vec::new();
    while trainer.epoch < cfg.train.epochs {
        let row = trainer.run_epoch(&data)?;
        trainer.checkpoint().save(&CheckpointSink::path_for(out, trainer.epoch))?;
        println!("{}", row.line());
        rows.push(row);
    }
    trainer.checkpoint().save(&out.join(FINAL_CHECKPOINT))?;
    write_file(&out.join(TRACE), &trace_text(&rows))?;
    write_file(&out.join("unigram.txt"), &fl.unigram.to_text())?;
    Ok(())
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Model> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    Checkpoint::load(path)?.apply(&mut model)?;
    Ok(model)
}

fn per_pair_text(report: &EvalReport) -> String {
    let mut out = String::from("pair,frame,gt_frame,hit,iou,r1,r2,rl\n");
    for (i, p) in report.per_pair.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            p.frame,
            p.gt_frame,
            u8::from(p.hit),
            p.iou,
            p.rouge1,
            p.rouge2,
            p.rougel
        );
    }
    out
}

fn report_text(label: &str, report: &EvalReport) -> String {
    format!("{}\n{}\n", EvalReport::HEADER, report.line(label))
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| Error::Config("eval.checkpoint is not set".into()))?;
    let data = corpus(cfg)?;
    let model = load_model(cfg, path)?;
    let (report, summaries) = evaluate(&model, &data, &cfg.eval)?;
    let mut text = String::new();
    for (i, (s, pair)) in summaries.iter().zip(&data).enumerate() {
        let _ = writeln!(text, "# pair {i}");
        text.push_str(&s.record(&pair.tokens));
    }
    let label = cfg.model.variant.name();
    write_file(&out.join("summaries.txt"), &text)?;
    write_file(&out.join("per_pair.csv"), &per_pair_text(&report))?;
    write_file(&out.join("report.csv"), &report_text(label, &report))?;
    let table = render_table("variant", &[(label.to_string(), &report)]);
    write_file(&out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = corpus(cfg)?;
    let fl = fluency(cfg, &data)?;
    let rows = ablation_run(&data, &cfg.variants, &cfg.model, cfg.seed, &cfg.train, &cfg.eval, Some(&fl))?;
    let mut csv = format!("{}\n", EvalReport::HEADER);
    for row in &rows {
        let name = row.variant.name();
        let dir = out.join(name);
        create_dir(&dir)?;
        write_file(&dir.join(TRACE), &trace_text(&row.trace))?;
        write_file(&dir.join("report.csv"), &report_text(name, &row.report))?;
        write_file(&dir.join("per_pair.csv"), &per_pair_text(&row.report))?;
        csv.push_str(&row.report.line(name));
        csv.push('\n');
    }
    let labeled: Vec<(String, &EvalReport)> = rows.iter().map(|r| (r.variant.name().to_string(), &r.report)).collect();
    let table = render_table("variant", &labeled);
    write_file(&out.join("ablation.csv"), &csv)?;
    write_file(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_sweep_k(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = corpus(cfg)?;
    let fl = fluency(cfg, &data)?;
    let mut csv = String::from("ratio,fa,iou,r1,r2,rl\n");
    let mut reports = Vec::with_capacity(cfg.ratios.len());
    for &ratio in &cfg.ratios {
        let mut mc = cfg.model.clone();
        mc.nfdt.k_ratio = ratio;
        let model = Model::new(mc, cfg.seed)?;
        let (model, _) = train::fit(model, &data, &cfg.train, Some(&fl))?;
        let (report, _) = evaluate(&model, &data, &cfg.eval)?;
        csv.push_str(&report.line(&format!("{ratio:?}")));
        csv.push('\n');
        reports.push((format!("{ratio:?}"), report));
    }
    let labeled: Vec<(String, &EvalReport)> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let table = render_table("ratio", &labeled);
    write_file(&out.join("sweep.csv"), &csv)?;
    write_file(&out.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}
