//! A small transformer encoder trained on Us-vs-Them scores, optionally
//! together with emotion detection and group identification.
//!
//! A shared trunk (token and position embeddings plus `layers_shared`
//! pre-LN self-attention blocks) feeds one extra block per task. Each task
//! reads the SEQ_START position of its own block through a layer norm and
//! an affine head. Task losses are mixed with per-epoch weights from a
//! [`LossSchedule`](config::LossSchedule).

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod hidden;
pub mod net;
pub mod synthetic;
pub mod train;
pub mod vocab;

/// Output width of the emotion task: seven emotions plus Neutral.
pub const EMOTION_DIM: usize = 8;
/// Output width of the group task.
pub const GROUP_DIM: usize = 6;

pub use config::{schedule_weights, EncoderConfig, LossSchedule, MainTask, Setup, TaskKind, TaskSpec, TrainConfig};
pub use error::{Error, Result};
pub use hidden::{export_all_hidden, export_hidden, layer_tags};
pub use train::{evaluate, train, Metrics, Model, TrainedModel};
pub use vocab::{build_vocab, Vocabulary};
