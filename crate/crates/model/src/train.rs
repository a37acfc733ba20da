//! Losses, batched gradients, the training loop and evaluation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use usvsthem_core::aggregate::LabeledComment;
use usvsthem_core::stats::numeric::pearson;
use usvsthem_core::Emotion;

use crate::config::{schedule_weights, validate_tasks, EncoderConfig, TaskKind, TaskSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::net::{sigmoid, stream_rng, Network, Trace};
use crate::vocab::{build_vocab, Encoded, Vocabulary};
use crate::{EMOTION_DIM, GROUP_DIM};

const CHUNK: usize = 4;
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1 << 32;
const DROPOUT_SALT: u64 = 0x5DEE_CE66_D1CE_5EED;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Targets of the 8-way emotion task: the seven auxiliary emotions, then
/// Neutral.
pub fn emotion_targets(c: &LabeledComment) -> [f64; EMOTION_DIM] {
    let mut t = [0.0; EMOTION_DIM];
    for (slot, e) in t.iter_mut().zip(Emotion::AUXILIARY) {
        *slot = f64::from(u8::from(c.has_emotion(e)));
    }
    t[EMOTION_DIM - 1] = f64::from(u8::from(c.neutral_emotion));
    t
}

/// One encoded comment with every target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub score: f64,
    pub binary: u8,
    pub emotions: [f64; EMOTION_DIM],
    pub group: usize,
}

impl Example {
    pub fn new(ids: Vec<u32>, c: &LabeledComment) -> Self {
        Example { ids, score: c.usvsthem, binary: c.binary, emotions: emotion_targets(c), group: c.group.index() }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-item loss of one task and its derivative with respect to the logits.
pub fn task_loss(kind: TaskKind, z: &[f64], ex: &Example) -> (f64, Vec<f64>) {
    match kind {
        TaskKind::RegressionMain => {
            let p = sigmoid(z[0]);
            let r = p - ex.score;
            (r * r, vec![2.0 * r * p * (1.0 - p)])
        }
        TaskKind::ClassificationMain => {
            let y = f64::from(ex.binary);
            (softplus(z[0]) - y * z[0], vec![sigmoid(z[0]) - y])
        }
        TaskKind::EmotionAux => {
            let k = EMOTION_DIM as f64;
            let loss = z.iter().zip(&ex.emotions).map(|(z, y)| softplus(*z) - y * z).sum::<f64>() / k;
            (loss, z.iter().zip(&ex.emotions).map(|(z, y)| (sigmoid(*z) - y) / k).collect())
        }
        TaskKind::GroupAux => {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let grad = z.iter().enumerate().map(|(i, v)| (v - lse).exp() - f64::from(u8::from(i == ex.group))).collect();
            (lse - z[ex.group], grad)
        }
    }
}

/// Task outputs from logits: probabilities for the main and emotion tasks,
/// raw logits for the group task.
pub fn activate(kind: TaskKind, z: &[f64]) -> Vec<f64> {
    match kind {
        TaskKind::GroupAux => z.to_vec(),
        _ => z.iter().map(|&v| sigmoid(v)).collect(),
    }
}

/// Where the dropout masks of a training step come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutStream {
    pub seed: u64,
    pub step: u64,
}

/// Mean per-task losses, the weighted total and its gradient over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub task_losses: Vec<f64>,
    pub total: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderConfig,
    pub tasks: Vec<TaskSpec>,
    pub vocab: Vocabulary,
    pub net: Network,
    pub params: Vec<f64>,
}

impl Model {
    pub fn new(encoder: EncoderConfig, tasks: Vec<TaskSpec>, vocab: Vocabulary, seed: u64) -> Result<Self> {
        encoder.validate()?;
        validate_tasks(&tasks)?;
        let net = Network::new(&encoder, vocab.len(), &tasks);
        let params = net.layout.init(&mut stream_rng(seed, INIT_STREAM));
        Ok(Model { encoder, tasks, vocab, net, params })
    }

    pub fn encode(&self, text: &str) -> Encoded {
        self.vocab.encode(text, self.encoder.max_len)
    }

    pub fn trace(&self, ids: &[u32]) -> Trace {
        self.net.forward(&self.params, ids, None)
    }

    /// Outputs of every task for one sequence, in task order.
    pub fn forward(&self, ids: &[u32]) -> Vec<Vec<f64>> {
        let tr = self.trace(ids);
        self.tasks.iter().zip(&tr.tasks).map(|(t, tt)| activate(t.kind, &tt.logits)).collect()
    }

    /// [`Model::forward`] over padded rows; PAD positions are masked.
    pub fn forward_batch(&self, batch: &[Vec<u32>]) -> Vec<Vec<Vec<f64>>> {
        batch.par_iter().map(|ids| self.forward(ids)).collect()
    }

    /// Main-task output (score or positive-class probability) per comment.
    pub fn predict(&self, comments: &[LabeledComment]) -> Vec<f64> {
        comments.par_iter().map(|c| self.forward(&self.encode(&c.body).ids)[0][0]).collect()
    }

    pub fn loss_and_grad(&self, batch: &[Example], lambdas: &[f64], dropout: Option<DropoutStream>) -> BatchGradient {
        loss_and_grad(&self.net, &self.params, &self.tasks, batch, lambdas, dropout)
    }

    /// SHA-256 of the parameters' little-endian bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Weighted batch loss `Σ_t λ_t · mean_i ℓ_t(i)` and its gradient. Items are
/// processed in fixed chunks whose partial gradients are summed in order,
/// so the result does not depend on the thread count. Tasks with λ = 0
/// contribute their loss value but no gradient.
pub fn loss_and_grad(
    net: &Network,
    params: &[f64],
    tasks: &[TaskSpec],
    batch: &[Example],
    lambdas: &[f64],
    dropout: Option<DropoutStream>,
) -> BatchGradient {
    let n = batch.len().max(1) as f64;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, items)| {
            let mut grad = vec![0.0; params.len()];
            let mut losses = vec![0.0; tasks.len()];
            for (k, ex) in items.iter().enumerate() {
                let mut rng = dropout.map(|d| stream_rng(d.seed ^ DROPOUT_SALT, (d.step << 24) | (c * CHUNK + k) as u64));
                let tr = net.forward(params, &ex.ids, rng.as_mut());
                let dz: Vec<Option<Vec<f64>>> = tasks
                    .iter()
                    .zip(&tr.tasks)
                    .zip(lambdas)
                    .zip(losses.iter_mut())
                    .map(|(((t, tt), &lam), acc)| {
                        let (l, g) = task_loss(t.kind, &tt.logits, ex);
                        *acc += l;
                        (lam != 0.0).then(|| g.into_iter().map(|v| v * lam / n).collect())
                    })
                    .collect();
                net.backward(params, &tr, &dz, &mut grad);
            }
            (losses, grad)
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    let mut task_losses = vec![0.0; tasks.len()];
    for (l, g) in &partials {
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        task_losses.iter_mut().zip(l).for_each(|(a, b)| *a += b);
    }
    task_losses.iter_mut().for_each(|l| *l /= n);
    let total = task_losses.iter().zip(lambdas).map(|(l, w)| l * w).sum();
    BatchGradient { task_losses, total, grad }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub task: TaskKind,
    pub lambda: f64,
    pub loss: f64,
    pub dev_metric: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("epoch,task,lambda,loss,dev_metric\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.task, r.lambda, r.loss, r.dev_metric);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub pearson_r: f64,
    /// Set when the predictions (or gold scores) are constant, in which case
    /// `pearson_r` is reported as 0.
    pub pearson_undefined: bool,
    pub accuracy: f64,
    pub emotion_accuracy: Option<f64>,
    pub group_accuracy: Option<f64>,
}

/// Pearson R against the gold scores and accuracy against the binary labels
/// at a 0.5 threshold.
pub fn main_metrics(pred: &[f64], gold: &[f64], binary: &[u8]) -> (f64, bool, f64) {
    let r = pearson(pred, gold);
    let correct = pred.iter().zip(binary).filter(|(p, b)| u8::from(**p >= 0.5) == **b).count();
    (r.unwrap_or(0.0), r.is_none(), correct as f64 / pred.len().max(1) as f64)
}

/// All task outputs for `split`, in input order.
fn outputs(model: &Model, split: &[Example]) -> Vec<Vec<Vec<f64>>> {
    split.par_iter().map(|ex| model.forward(&ex.ids)).collect()
}

fn metrics_from(model: &Model, split: &[Example], out: &[Vec<Vec<f64>>]) -> Metrics {
    let pred: Vec<f64> = out.iter().map(|o| o[0][0]).collect();
    let gold: Vec<f64> = split.iter().map(|e| e.score).collect();
    let binary: Vec<u8> = split.iter().map(|e| e.binary).collect();
    let (pearson_r, pearson_undefined, accuracy) = main_metrics(&pred, &gold, &binary);
    let mut m = Metrics { n: split.len(), pearson_r, pearson_undefined, accuracy, emotion_accuracy: None, group_accuracy: None };
    for (t, spec) in model.tasks.iter().enumerate() {
        match spec.kind {
            TaskKind::EmotionAux => {
                let hits: usize = out
                    .iter()
                    .zip(split)
                    .map(|(o, e)| o[t].iter().zip(&e.emotions).filter(|(p, y)| f64::from(u8::from(**p >= 0.5)) == **y).count())
                    .sum();
                m.emotion_accuracy = Some(hits as f64 / (split.len() * EMOTION_DIM).max(1) as f64);
            }
            TaskKind::GroupAux => {
                let hits = out
                    .iter()
                    .zip(split)
                    .filter(|(o, e)| {
                        let best = (0..GROUP_DIM).max_by(|&a, &b| o[t][a].total_cmp(&o[t][b])).unwrap();
                        best == e.group
                    })
                    .count();
                m.group_accuracy = Some(hits as f64 / split.len().max(1) as f64);
            }
            _ => {}
        }
    }
    m
}

pub fn evaluate(model: &Model, split: &[LabeledComment]) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty split".into()));
    }
    let ex = encode_all(model, split).0;
    Ok(metrics_from(model, &ex, &outputs(model, &ex)))
}

fn encode_all(model: &Model, split: &[LabeledComment]) -> (Vec<Example>, usize) {
    let mut truncated = 0;
    let ex = split
        .iter()
        .map(|c| {
            let e = model.encode(&c.body);
            truncated += usize::from(e.truncated);
            Example::new(e.ids, c)
        })
        .collect();
    (ex, truncated)
}

fn selection_metric(kind: TaskKind, m: &Metrics) -> f64 {
    match kind {
        TaskKind::ClassificationMain => m.accuracy,
        _ => m.pearson_r,
    }
}

fn task_metric(kind: TaskKind, m: &Metrics) -> f64 {
    match kind {
        TaskKind::EmotionAux => m.emotion_accuracy.unwrap_or(f64::NAN),
        TaskKind::GroupAux => m.group_accuracy.unwrap_or(f64::NAN),
        main => selection_metric(main, m),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// Parameters of the epoch with the best dev main-task metric.
    pub model: Model,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_dev: Metrics,
    pub log: Vec<LogRow>,
    /// Training and dev comments cut to `max_len`.
    pub truncated: usize,
}

impl TrainedModel {
    pub fn write_log(&self, mut w: impl Write) -> Result<()> {
        w.write_all(log_csv(&self.log).as_bytes())?;
        Ok(())
    }
}

/// Mini-batch Adam with a linear learning-rate warm-up, scheduled task
/// weights and best-dev model selection. The vocabulary is built from
/// `train` only.
pub fn train(train: &[LabeledComment], dev: &[LabeledComment], tasks: &[TaskSpec], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    validate_tasks(tasks)?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config("train and dev splits must be non-empty".into()));
    }
    let train_ids: HashSet<&str> = train.iter().map(|c| c.unit_id.as_str()).collect();
    if let Some(c) = dev.iter().find(|c| train_ids.contains(c.unit_id.as_str())) {
        return Err(Error::Config(format!("comment {} is in both train and dev", c.unit_id)));
    }
    let bodies: Vec<&str> = train.iter().map(|c| c.body.as_str()).collect();
    let vocab = build_vocab(&bodies, cfg.vocab_size)?;
    let mut model = Model::new(cfg.encoder.clone(), tasks.to_vec(), vocab, cfg.seed)?;
    let (train_ex, t1) = encode_all(&model, train);
    let (dev_ex, t2) = encode_all(&model, dev);
    let main = tasks[0].kind;

    let steps_per_epoch = train_ex.len().div_ceil(cfg.batch_size);
    let warmup_steps = cfg.lr_warmup_epochs * steps_per_epoch;
    let mut adam = Adam::new(model.params.len());
    let mut shuffle = stream_rng(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut step = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs * tasks.len());
    let mut best: Option<(usize, Metrics, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        let lambdas = schedule_weights(epoch, &cfg.schedule, tasks)?;
        order.shuffle(&mut shuffle);
        let mut epoch_loss = vec![0.0; tasks.len()];
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = idx.iter().map(|&i| train_ex[i].clone()).collect();
            let bg = model.loss_and_grad(&batch, &lambdas, Some(DropoutStream { seed: cfg.seed, step: step as u64 }));
            for (t, l) in bg.task_losses.iter().enumerate() {
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, step, task: tasks[t].kind.to_string(), value: *l });
                }
                epoch_loss[t] += l * batch.len() as f64;
            }
            if bg.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, task: "gradient".into(), value: f64::NAN });
            }
            let lr = if warmup_steps == 0 {
                cfg.learning_rate
            } else {
                cfg.learning_rate * ((step + 1) as f64 / warmup_steps as f64).min(1.0)
            };
            adam.step(&mut model.params, &bg.grad, lr);
            step += 1;
        }
        let m = metrics_from(&model, &dev_ex, &outputs(&model, &dev_ex));
        for (t, spec) in tasks.iter().enumerate() {
            log.push(LogRow {
                epoch,
                task: spec.kind,
                lambda: lambdas[t],
                loss: epoch_loss[t] / train_ex.len() as f64,
                dev_metric: task_metric(spec.kind, &m),
            });
        }
        let score = selection_metric(main, &m);
        debug!("epoch {epoch}: dev {} = {score:.4}", main);
        if best.as_ref().is_none_or(|(_, b, _)| score > selection_metric(main, b)) {
            best = Some((epoch, m, model.params.clone()));
        }
    }
    let (best_epoch, best_dev, params) = best.expect("at least one epoch");
    model.params = params;
    info!("best epoch {best_epoch}: dev {} {:.4}", main, selection_metric(main, &best_dev));
    Ok(TrainedModel { model, config: cfg.clone(), best_epoch, best_dev, log, truncated: t1 + t2 })
}
