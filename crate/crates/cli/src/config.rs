//! Declarative pipeline configuration read from TOML.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The output directory is taken from `--out`, then `USVSTHEM_OUT`,
//! then `out_dir`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use usvsthem_core::aggregate::Split;
use usvsthem_core::embedviz::{FigureStyle, TsneConfig};
use usvsthem_core::stats::permutation::MIN_PERMUTATIONS;
use usvsthem_model::synthetic::SyntheticConfig;
use usvsthem_model::{EncoderConfig, MainTask, Setup};

use crate::error::{CliError, Result};

pub const OUT_ENV: &str = "USVSTHEM_OUT";
pub const DEFAULT_ENDPOINT: &str = "https://api.pushshift.io/reddit/search/comment/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Upper bound on concurrently running training jobs.
    pub jobs: usize,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub filter: FilterSection,
    pub quality: QualitySection,
    pub aggregate: AggregateSection,
    pub train: TrainSection,
    pub compare: CompareSection,
    pub embed: EmbedSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            seeds: (0..10).collect(),
            jobs: 1,
            paths: Paths::default(),
            ingest: IngestSection::default(),
            filter: FilterSection::default(),
            quality: QualitySection::default(),
            aggregate: AggregateSection::default(),
            train: TrainSection::default(),
            compare: CompareSection::default(),
            embed: EmbedSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of recorded archive responses; when set, `ingest` reads it
    /// instead of the network.
    pub archive_dir: Option<PathBuf>,
    pub bias_map: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub attitude_annotations: Option<PathBuf>,
    pub emotion_annotations: Option<PathBuf>,
    pub worker_blocklist: Option<PathBuf>,
    /// A ready-made dataset (JSON Lines or CSV) used instead of the output
    /// of `aggregate`.
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub start: i64,
    pub end: i64,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub subreddit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub endpoint: String,
    pub page_size: u32,
    pub queries: Vec<QuerySpec>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { endpoint: DEFAULT_ENDPOINT.into(), page_size: 500, queries: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub per_cell: usize,
    pub seed: u64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection { per_cell: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitySection {
    pub wqs_min: f64,
    pub uqs_min: f64,
    pub min_annotators: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QualitySection {
    fn default() -> Self {
        QualitySection { wqs_min: 0.1, uqs_min: 0.2, min_annotators: 2, tol: 1e-6, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateSection {
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSource {
    #[default]
    Dataset,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub source: TrainSource,
    pub mains: Vec<MainTask>,
    pub setups: Vec<Setup>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub vocab_size: Option<usize>,
    pub encoder: Option<EncoderConfig>,
    pub synthetic: SyntheticConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            source: TrainSource::Dataset,
            mains: vec![MainTask::Regression, MainTask::Classification],
            setups: Setup::ALL.to_vec(),
            epochs: None,
            learning_rate: None,
            batch_size: None,
            vocab_size: None,
            encoder: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub baseline: Setup,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { baseline: Setup::Stl, permutations: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub main: MainTask,
    pub setups: Vec<Setup>,
    /// Training seed of the model to visualise; the first configured seed
    /// when absent.
    pub model_seed: Option<u64>,
    pub split: Split,
    pub max_points: Option<usize>,
    pub styles: Vec<FigureStyle>,
    pub tsne: TsneConfig,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            main: MainTask::Regression,
            setups: vec![Setup::Stl, Setup::MtlEg],
            model_seed: None,
            split: Split::Test,
            max_points: None,
            styles: vec![FigureStyle::Scale, FigureStyle::Group, FigureStyle::Emotion],
            tsne: TsneConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML file; relative paths inside are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::missing(path, e.to_string()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let unique: HashSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            return bad(format!("seeds must be unique: {:?}", self.seeds));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.filter.per_cell == 0 {
            return bad("filter.per_cell must be at least 1".into());
        }
        let q = &self.quality;
        if !(0.0..=1.0).contains(&q.wqs_min) || !(0.0..=1.0).contains(&q.uqs_min) {
            return bad("quality thresholds must lie in [0, 1]".into());
        }
        if q.tol.is_nan() || q.tol <= 0.0 || q.max_iter == 0 {
            return bad("quality.tol must be positive and quality.max_iter at least 1".into());
        }
        for query in &self.ingest.queries {
            if query.start >= query.end {
                return bad(format!("ingest query range [{}, {}) is empty", query.start, query.end));
            }
        }
        if self.train.mains.is_empty() || self.train.setups.is_empty() {
            return bad("train.mains and train.setups must be non-empty".into());
        }
        if let Some(enc) = &self.train.encoder {
            enc.validate()?;
        }
        if self.compare.permutations < MIN_PERMUTATIONS {
            return bad(format!("compare.permutations must be at least {MIN_PERMUTATIONS}"));
        }
        if self.embed.setups.is_empty() || self.embed.styles.is_empty() {
            return bad("embed.setups and embed.styles must be non-empty".into());
        }
        if let Some(seed) = self.embed.model_seed {
            if !self.seeds.contains(&seed) {
                return bad(format!("embed.model_seed {seed} is not among the configured seeds"));
            }
        }
        for p in [&self.paths.archive_dir, &self.paths.bias_map, &self.paths.keywords, &self.paths.worker_blocklist]
            .into_iter()
            .flatten()
        {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(CliError::missing(full, "referenced by the configuration"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model_seed(&self) -> u64 {
        self.embed.model_seed.unwrap_or(self.seeds[0])
    }

    /// Canonical JSON of every setting except the output directory.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("configuration serialises");
        if let Some(map) = v.as_object_mut() {
            map.remove("out_dir");
        }
        v.to_string()
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
