//! Unsupervised training: AdamW, mini-batch epochs, per-epoch checkpoints.
//!
//! Every random draw is taken from a stream named by purpose and indexed by
//! `(epoch, position)`, so a run resumed from a checkpoint replays exactly the
//! same noise and batch order as an uninterrupted one.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::diffcore::{Gradients, ParamStore, Tape, Tensor2};
use crate::embed::EmbeddedPair;
use crate::error::{Error, Result};
use crate::loss::LossTerms;
use crate::model::{Fluency, ForwardOptions, Model};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; zero disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("train.lr must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.clip_norm >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("train.weight_decay and train.clip must be >= 0, train.eps > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("train.{name} must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor2> = store.iter().map(|(_, _, t)| Tensor2::zeros(t.rows(), t.cols())).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One decoupled-weight-decay Adam update.
pub fn adamw_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::dim("adamw_step", "gradients or moments do not match the parameters"));
    }
    for (id, g) in grads.iter() {
        if g.shape() != store.get(id).shape() {
            return Err(Error::dim("adamw_step", format!("gradient shape for {}", store.name(id))));
        }
        if !g.is_finite() {
            return Err(Error::Divergence { param: store.name(id).to_string() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let g = grads.get(id).data();
        let i = id.index();
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let p = store.get_mut(id).data_mut();
        for k in 0..p.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= cfg.learning_rate * (cfg.weight_decay * p[k] + m_hat / (v_hat.sqrt() + cfg.eps));
        }
    }
    Ok(())
}

/// Mean loss terms over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    /// 1-based.
    pub epoch: usize,
    pub terms: LossTerms,
    pub total: f64,
}

impl TraceRow {
    pub const HEADER: &'static str = "epoch,L_T,L_V,L_O,L_f,total";

    pub fn line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?}",
            self.epoch, self.terms.text, self.terms.video, self.terms.cross, self.terms.fluency, self.total
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(Error::Ingestion(format!("trace line needs 6 fields: {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Ingestion(format!("bad trace value {s:?}")));
        Ok(Self {
            epoch: f[0].parse().map_err(|_| Error::Ingestion(format!("bad epoch {:?}", f[0])))?,
            terms: LossTerms { text: num(f[1])?, video: num(f[2])?, cross: num(f[3])?, fluency: num(f[4])? },
            total: num(f[5])?,
        })
    }
}

/// Where per-epoch checkpoints go; `None` keeps training in memory.
#[derive(Clone, Debug, Default)]
pub struct CheckpointSink {
    pub dir: Option<PathBuf>,
}

impl CheckpointSink {
    pub fn path_for(dir: &Path, epoch: usize) -> PathBuf {
        dir.join(format!("epoch-{epoch:04}.ckpt"))
    }
}

pub struct Trainer<'a> {
    pub model: Model,
    pub adam: AdamState,
    /// Epochs already completed.
    pub epoch: usize,
    pub cfg: TrainConfig,
    pub fluency: Option<&'a Fluency>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, cfg: TrainConfig, fluency: Option<&'a Fluency>) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(&model.store);
        Ok(Self { model, adam, epoch: 0, cfg, fluency })
    }

    pub fn from_checkpoint(model: Model, ck: &Checkpoint, cfg: TrainConfig, fluency: Option<&'a Fluency>) -> Result<Self> {
        cfg.validate()?;
        let mut model = model;
        ck.apply(&mut model)?;
        Ok(Self { adam: ck.adam.clone(), epoch: ck.epoch, model, cfg, fluency })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.model, &self.adam, self.epoch)
    }

    /// One pass over `data` in a seeded order.
    pub fn run_epoch(&mut self, data: &[EmbeddedPair]) -> Result<TraceRow> {
        if data.is_empty() {
            return Err(Error::Config("training corpus is empty".into()));
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(self.cfg.seed, "shuffle", epoch as u64));
        let mut sum = LossTerms::default();
        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&self.model.store);
            for &idx in batch {
                let draw = (epoch * data.len() + idx) as u64;
                let pair = &data[idx];
                let opts = ForwardOptions { noise: self.model.sample_noise(pair, draw), selection: None, draw };
                let mut tape = Tape::new();
                let out = self.model.forward_with(&self.model.store, &mut tape, pair, &opts, self.fluency)?;
                if !out.total.is_finite() {
                    return Err(Error::Divergence { param: "loss".into() });
                }
                grads.add_assign(&tape.backward(out.loss, &self.model.store)?);
                sum.text += out.terms.text;
                sum.video += out.terms.video;
                sum.cross += out.terms.cross;
                sum.fluency += out.terms.fluency;
                total += out.total;
            }
            grads.scale(1.0 / batch.len() as f64);
            let norm = grads.global_norm();
            if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
                grads.scale(self.cfg.clip_norm / norm);
            }
            adamw_step(&mut self.model.store, &grads, &mut self.adam, &self.cfg)?;
        }
        self.epoch += 1;
        let n = data.len() as f64;
        let terms = LossTerms { text: sum.text / n, video: sum.video / n, cross: sum.cross / n, fluency: sum.fluency / n };
        Ok(TraceRow { epoch: self.epoch, terms, total: total / n })
    }

    /// Trains until `cfg.epochs` epochs are complete, writing a checkpoint
    /// after each one when `sink` has a directory.
    pub fn fit(&mut self, data: &[EmbeddedPair], sink: &CheckpointSink) -> Result<Vec<TraceRow>> {
        if data.is_empty() {
            return Err(Error::Config("training corpus is empty".into()));
        }
        let mut trace = Vec::new();
        while self.epoch < self.cfg.epochs {
            let row = self.run_epoch(data)?;
            if let Some(dir) = &sink.dir {
                self.checkpoint().save(&CheckpointSink::path_for(dir, self.epoch))?;
            }
            trace.push(row);
        }
        Ok(trace)
    }
}

/// Builds a model, trains it on `data` and returns it with the trace.
pub fn fit(model: Model, data: &[EmbeddedPair], cfg: &TrainConfig, fluency: Option<&Fluency>) -> Result<(Model, Vec<TraceRow>)> {
    let mut trainer = Trainer::new(model, cfg.clone(), fluency)?;
    let trace = trainer.fit(data, &CheckpointSink::default())?;
    Ok((trainer.model, trace))
}
