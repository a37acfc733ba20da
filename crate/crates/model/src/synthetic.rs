//! Synthetic comments whose score is driven by the targeted group and the
//! expressed emotions.
//!
//! Every comment names its group through one of several synonyms and each
//! emotion through its own synonyms, padded with filler words. The score
//! is a group base plus per-emotion shifts plus Gaussian noise, so the
//! group and emotion labels carry clean information the noisy score only
//! hints at.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use usvsthem_core::aggregate::{binary_label, LabeledComment, Split};
use usvsthem_core::stats::williams::williams_test;
use usvsthem_core::stats::TestResult;
use usvsthem_core::{BiasLabel, Emotion, Group};

use crate::config::{EncoderConfig, LossSchedule, MainTask, Setup, TrainConfig};
use crate::error::{Error, Result};
use crate::net::stream_rng;
use crate::train::train;

/// Score offset per group, in `Group::ALL` order.
pub const GROUP_BASE: [f64; 6] = [0.70, 0.62, 0.66, 0.34, 0.42, 0.30];
/// Score shift per emotion, in `Emotion::AUXILIARY` order.
pub const EMOTION_SHIFT: [f64; 7] = [0.14, 0.16, 0.12, 0.10, -0.12, -0.08, -0.16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub group_synonyms: usize,
    pub emotion_synonyms: usize,
    pub filler_words: usize,
    /// Filler words per comment, drawn uniformly from this inclusive range.
    pub filler_len: (usize, usize),
    /// Largest number of emotions in one comment.
    pub max_emotions: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_train: 600,
            n_dev: 400,
            n_test: 200,
            group_synonyms: 8,
            emotion_synonyms: 4,
            filler_words: 20,
            filler_len: (4, 10),
            max_emotions: 2,
            noise_sd: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<LabeledComment>,
    pub dev: Vec<LabeledComment>,
    pub test: Vec<LabeledComment>,
}

pub fn group_word(g: usize, k: usize) -> String {
    format!("grp{g}x{k}")
}

pub fn emotion_word(e: usize, k: usize) -> String {
    format!("emo{e}x{k}")
}

pub fn filler_word(k: usize) -> String {
    format!("w{k}")
}

/// Noise-free score of a comment about group `g` with emotions `emotions`
/// (indices into `Emotion::AUXILIARY`), clipped to [0, 1].
pub fn clean_score(g: usize, emotions: &[usize]) -> f64 {
    (GROUP_BASE[g] + emotions.iter().map(|&e| EMOTION_SHIFT[e]).sum::<f64>()).clamp(0.0, 1.0)
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.group_synonyms == 0 || cfg.emotion_synonyms == 0 || cfg.filler_words == 0 {
        return Err(Error::Config("synthetic vocabularies must be non-empty".into()));
    }
    if cfg.filler_len.0 > cfg.filler_len.1 || cfg.max_emotions > Emotion::AUXILIARY.len() {
        return Err(Error::Config("invalid filler length range or emotion count".into()));
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(format!("noise_sd: {e}")))?;
    let mut rng = stream_rng(cfg.seed, 0);
    let aux: Vec<usize> = (0..Emotion::AUXILIARY.len()).collect();
    let mut make = |split: Split, i: usize| {
        let g = rng.random_range(0..Group::ALL.len());
        let k = rng.random_range(0..=cfg.max_emotions);
        let mut emo: Vec<usize> = aux.choose_multiple(&mut rng, k).copied().collect();
        emo.sort_unstable();
        let n_fill = rng.random_range(cfg.filler_len.0..=cfg.filler_len.1);
        let mut words: Vec<String> = (0..n_fill).map(|_| filler_word(rng.random_range(0..cfg.filler_words))).collect();
        let mut insert = |w: String, rng: &mut rand_chacha::ChaCha8Rng| {
            let at = rng.random_range(0..=words.len());
            words.insert(at, w);
        };
        insert(group_word(g, rng.random_range(0..cfg.group_synonyms)), &mut rng);
        for &e in &emo {
            insert(emotion_word(e, rng.random_range(0..cfg.emotion_synonyms)), &mut rng);
        }
        let score = (clean_score(g, &emo) + noise.sample(&mut rng)).clamp(0.0, 1.0);
        LabeledComment {
            unit_id: format!("syn-{}-{i}", split.as_str()),
            body: words.join(" "),
            group: Group::ALL[g],
            bias: BiasLabel::ALL[rng.random_range(0..BiasLabel::ALL.len())],
            usvsthem: score,
            binary: binary_label(score),
            emotions: emo.iter().map(|&e| Emotion::AUXILIARY[e]).collect::<BTreeSet<_>>(),
            neutral_emotion: emo.is_empty(),
            split,
        }
    };
    let train = (0..cfg.n_train).map(|i| make(Split::Train, i)).collect();
    let dev = (0..cfg.n_dev).map(|i| make(Split::Dev, i)).collect();
    let test = (0..cfg.n_test).map(|i| make(Split::Test, i)).collect();
    Ok(SyntheticCorpus { train, dev, test })
}

/// Regression training setup sized for the synthetic corpus: a one-layer
/// trunk of width 32 and constant auxiliary weights of 0.5 for 15 epochs
/// followed by 0.1.
pub fn desk_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::preset(MainTask::Regression, Setup::MtlEg);
    cfg.encoder = EncoderConfig {
        layers_shared: 1,
        layers_task: 1,
        model_dim: 32,
        heads: 4,
        ff_dim: 64,
        max_len: 16,
        dropout: 0.1,
        extra_dropout: 0.0,
    };
    cfg.learning_rate = 3e-3;
    cfg.lr_warmup_epochs = 1;
    cfg.batch_size = 16;
    cfg.epochs = 25;
    cfg.seed = seed;
    cfg.schedule = LossSchedule { omega: 15, lambda_e_warm: 0.5, lambda_g_warm: 0.5, lambda_e_after: 0.1, lambda_g_after: 0.1 };
    cfg
}

/// Dev results of one setup against another over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupComparison {
    pub baseline: Setup,
    pub candidate: Setup,
    pub seeds: Vec<u64>,
    pub baseline_r: Vec<f64>,
    pub candidate_r: Vec<f64>,
    /// Williams test on the dev predictions of all seeds concatenated,
    /// positive when the candidate correlates better.
    pub williams: TestResult,
}

impl SetupComparison {
    pub fn mean_gap(&self) -> f64 {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        mean(&self.candidate_r) - mean(&self.baseline_r)
    }
}

/// Train `baseline` and `candidate` on `corpus` for every seed with the
/// configuration returned by `config` and compare their dev predictions.
pub fn compare_setups(
    corpus: &SyntheticCorpus,
    baseline: Setup,
    candidate: Setup,
    seeds: &[u64],
    config: impl Fn(u64) -> TrainConfig,
) -> Result<SetupComparison> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is needed".into()));
    }
    let gold: Vec<f64> = corpus.dev.iter().map(|c| c.usvsthem).collect();
    let mut r = [Vec::new(), Vec::new()];
    let mut pooled = [Vec::new(), Vec::new()];
    for &seed in seeds {
        for (k, setup) in [baseline, candidate].into_iter().enumerate() {
            let tm = train(&corpus.train, &corpus.dev, &setup.tasks(MainTask::Regression), &config(seed))?;
            r[k].push(tm.best_dev.pearson_r);
            pooled[k].extend(tm.model.predict(&corpus.dev));
        }
    }
    let gold_all: Vec<f64> = seeds.iter().flat_map(|_| gold.iter().copied()).collect();
    let williams = williams_test(&pooled[1], &pooled[0], &gold_all)?;
    let [baseline_r, candidate_r] = r;
    Ok(SetupComparison { baseline, candidate, seeds: seeds.to_vec(), baseline_r, candidate_r, williams })
}
