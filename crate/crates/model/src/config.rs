//! Encoder, task, schedule and training configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SHARED_LAYERS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers_shared: usize,
    pub layers_task: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Dropout on the SEQ_START representation right before each head.
    pub extra_dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers_shared: 3,
            layers_task: 1,
            model_dim: 64,
            heads: 4,
            ff_dim: 256,
            max_len: 256,
            dropout: 0.15,
            extra_dropout: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!("model_dim {} must be a positive multiple of heads {}", self.model_dim, self.heads));
        }
        if !(1..=MAX_SHARED_LAYERS).contains(&self.layers_shared) {
            return bad(format!("layers_shared must lie in 1..={MAX_SHARED_LAYERS}, got {}", self.layers_shared));
        }
        if self.layers_task != 1 {
            return bad(format!("layers_task must be 1, got {}", self.layers_task));
        }
        if self.ff_dim == 0 || self.max_len < 2 {
            return bad("ff_dim must be positive and max_len at least 2".into());
        }
        for (name, p) in [("dropout", self.dropout), ("extra_dropout", self.extra_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    RegressionMain,
    ClassificationMain,
    EmotionAux,
    GroupAux,
}

impl TaskKind {
    pub fn is_main(self) -> bool {
        matches!(self, TaskKind::RegressionMain | TaskKind::ClassificationMain)
    }

    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::RegressionMain | TaskKind::ClassificationMain => 1,
            TaskKind::EmotionAux => crate::EMOTION_DIM,
            TaskKind::GroupAux => crate::GROUP_DIM,
        }
    }

    pub fn default_loss(self) -> LossKind {
        match self {
            TaskKind::RegressionMain => LossKind::Mse,
            TaskKind::ClassificationMain | TaskKind::EmotionAux => LossKind::Bce,
            TaskKind::GroupAux => LossKind::Ce,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::RegressionMain => "regression",
            TaskKind::ClassificationMain => "classification",
            TaskKind::EmotionAux => "emotion",
            TaskKind::GroupAux => "group",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Bce,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub loss: LossKind,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        TaskSpec { kind, loss: kind.default_loss() }
    }
}

/// Check that `tasks` holds exactly one main task, first, followed by
/// distinct auxiliary tasks with their matching losses.
pub fn validate_tasks(tasks: &[TaskSpec]) -> Result<()> {
    let Some(first) = tasks.first() else {
        return Err(Error::Config("no tasks given".into()));
    };
    if !first.kind.is_main() {
        return Err(Error::Config("the first task must be the main task".into()));
    }
    for (i, t) in tasks.iter().enumerate() {
        if i > 0 && t.kind.is_main() {
            return Err(Error::Config("exactly one main task is allowed".into()));
        }
        if tasks[..i].iter().any(|u| u.kind == t.kind) {
            return Err(Error::Config(format!("task `{}` listed twice", t.kind)));
        }
        if t.loss != t.kind.default_loss() {
            return Err(Error::Config(format!("task `{}` cannot use loss {:?}", t.kind, t.loss)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MainTask {
    Regression,
    Classification,
}

impl MainTask {
    pub fn kind(self) -> TaskKind {
        match self {
            MainTask::Regression => TaskKind::RegressionMain,
            MainTask::Classification => TaskKind::ClassificationMain,
        }
    }
}

impl FromStr for MainTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(MainTask::Regression),
            "classification" => Ok(MainTask::Classification),
            _ => Err(Error::Config(format!("unknown main task `{s}`"))),
        }
    }
}

impl fmt::Display for MainTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    #[serde(rename = "STL")]
    Stl,
    #[serde(rename = "MTL-E")]
    MtlE,
    #[serde(rename = "MTL-G")]
    MtlG,
    #[serde(rename = "MTL-EG")]
    MtlEg,
}

impl Setup {
    pub const ALL: [Setup; 4] = [Setup::Stl, Setup::MtlE, Setup::MtlG, Setup::MtlEg];

    pub fn as_str(self) -> &'static str {
        match self {
            Setup::Stl => "STL",
            Setup::MtlE => "MTL-E",
            Setup::MtlG => "MTL-G",
            Setup::MtlEg => "MTL-EG",
        }
    }

    pub fn tasks(self, main: MainTask) -> Vec<TaskSpec> {
        let mut t = vec![TaskSpec::new(main.kind())];
        if matches!(self, Setup::MtlE | Setup::MtlEg) {
            t.push(TaskSpec::new(TaskKind::EmotionAux));
        }
        if matches!(self, Setup::MtlG | Setup::MtlEg) {
            t.push(TaskSpec::new(TaskKind::GroupAux));
        }
        t
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setup::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown setup `{s}`")))
    }
}

/// Auxiliary loss weights before and after the warm-up of `omega` epochs.
/// The main-task weight is always the remainder of the weight budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSchedule {
    pub omega: usize,
    pub lambda_e_warm: f64,
    pub lambda_g_warm: f64,
    pub lambda_e_after: f64,
    pub lambda_g_after: f64,
}

impl Default for LossSchedule {
    fn default() -> Self {
        LossSchedule { omega: 0, lambda_e_warm: 0.0, lambda_g_warm: 0.0, lambda_e_after: 0.0, lambda_g_after: 0.0 }
    }
}

impl LossSchedule {
    pub fn preset(main: MainTask, setup: Setup) -> Self {
        let (omega, e, g) = match (main, setup) {
            (_, Setup::Stl) => return LossSchedule::default(),
            (MainTask::Regression, Setup::MtlE) => (8, 0.15, 0.0),
            (MainTask::Regression, Setup::MtlG) => (5, 0.0, 0.15),
            (MainTask::Regression, Setup::MtlEg) => (8, 0.073, 0.073),
            (MainTask::Classification, Setup::MtlE) => (8, 0.2, 0.0),
            (MainTask::Classification, Setup::MtlG) => (5, 0.0, 0.25),
            (MainTask::Classification, Setup::MtlEg) => (8, 0.95, 0.25),
        };
        let (e_after, g_after) = match (main, setup) {
            (_, Setup::MtlEg) => (1e-5, 1e-5),
            (MainTask::Regression, _) => (1e-5, 1e-2),
            (MainTask::Classification, _) => (1e-2, 1e-2),
        };
        LossSchedule { omega, lambda_e_warm: e, lambda_g_warm: g, lambda_e_after: e_after, lambda_g_after: g_after }
    }
}

/// Per-task loss weights for `epoch`, in the order of `tasks`. The main
/// weight plus the sum of the auxiliary weights equals the number of tasks
/// exactly in floating point.
pub fn schedule_weights(epoch: usize, schedule: &LossSchedule, tasks: &[TaskSpec]) -> Result<Vec<f64>> {
    validate_tasks(tasks)?;
    let warm = epoch < schedule.omega;
    let aux: Vec<f64> = tasks[1..]
        .iter()
        .map(|t| match (t.kind, warm) {
            (TaskKind::EmotionAux, true) => schedule.lambda_e_warm,
            (TaskKind::EmotionAux, false) => schedule.lambda_e_after,
            (TaskKind::GroupAux, true) => schedule.lambda_g_warm,
            (TaskKind::GroupAux, false) => schedule.lambda_g_after,
            _ => unreachable!("validated"),
        })
        .collect();
    if let Some(l) = aux.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::Config(format!("loss weight {l} must be a non-negative number")));
    }
    let budget = tasks.len() as f64;
    let aux_sum: f64 = aux.iter().sum();
    let mut main = budget - aux_sum;
    if main < 0.0 {
        return Err(Error::Config(format!("auxiliary weights {aux:?} exceed the budget of {budget}")));
    }
    for _ in 0..8 {
        match (main + aux_sum).total_cmp(&budget) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Greater => main = main.next_down(),
            std::cmp::Ordering::Less => main = main.next_up(),
        }
    }
    if main + aux_sum != budget {
        return Err(Error::Config(format!("cannot balance weights {aux:?} to {budget}")));
    }
    Ok(std::iter::once(main).chain(aux).collect())
}

/// `λ_m + Σ λ_aux`, summed the way [`schedule_weights`] balances it.
pub fn weight_total(weights: &[f64]) -> f64 {
    weights[0] + weights[1..].iter().sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_warmup_epochs: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub schedule: LossSchedule,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(MainTask::Regression, Setup::Stl)
    }
}

impl TrainConfig {
    /// Hyperparameters tuned for the fine-tuned 12-layer encoder, by main
    /// task and setup.
    pub fn preset(main: MainTask, setup: Setup) -> Self {
        let (learning_rate, extra_dropout) = match main {
            MainTask::Regression => (3e-5, 0.0),
            MainTask::Classification => (5e-5, 0.2),
        };
        TrainConfig {
            learning_rate,
            lr_warmup_epochs: 2,
            batch_size: 128,
            epochs: 15,
            seed: 0,
            vocab_size: 20_000,
            schedule: LossSchedule::preset(main, setup),
            encoder: EncoderConfig { dropout: 0.15, extra_dropout, ..EncoderConfig::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must leave room for at least one word".into()));
        }
        Ok(())
    }
}
