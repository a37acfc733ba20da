//! The batch commands. Each reads its upstream artifacts from the output
//! directory, writes its own, and records both in a manifest.

mod data;
mod embed;
mod learn;

use std::fs;
use std::path::{Path, PathBuf};

use usvsthem_core::aggregate::{read_dataset_csv, read_dataset_jsonl, LabeledComment};

use crate::config::{PipelineConfig, TrainSource};
use crate::error::{CliError, Result};
use crate::manifest::Recorder;

pub use data::{aggregate, analyze, filter, ingest, quality, DatasetSummary};
pub use embed::embed;
pub use learn::{compare, results_table, train, JobResult, SeedSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Filter,
    Quality,
    Aggregate,
    Analyze,
    Train,
    Compare,
    Embed,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Filter => "filter",
            Command::Quality => "quality",
            Command::Aggregate => "aggregate",
            Command::Analyze => "analyze",
            Command::Train => "train",
            Command::Compare => "compare",
            Command::Embed => "embed",
        }
    }
}

/// Configuration plus the resolved output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: PipelineConfig, out: PathBuf) -> Self {
        Context { cfg, out }
    }

    pub fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    pub fn recorder(&self) -> Recorder {
        Recorder::new(&self.out, &self.cfg.base_dir)
    }

    /// A configured input path, resolved; a config error when unset.
    pub fn configured(&self, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let p = p.as_ref().ok_or_else(|| CliError::Config(format!("paths.{key} is not set")))?;
        require(&self.cfg.resolve(p), &format!("paths.{key}"))
    }

    pub fn raw_comments(&self) -> PathBuf {
        self.out.join("raw").join("comments.jsonl")
    }

    pub fn dataset_path(&self) -> PathBuf {
        match &self.cfg.paths.dataset {
            Some(p) => self.cfg.resolve(p),
            None => self.out.join("dataset").join("dataset.jsonl"),
        }
    }

    /// The labelled comments used for analysis, training and embedding.
    pub fn load_dataset(&self, rec: &mut Recorder) -> Result<Vec<LabeledComment>> {
        let path = require(&self.dataset_path(), "run `aggregate` first or set paths.dataset")?;
        rec.input(&path);
        let data = if path.extension().is_some_and(|e| e == "csv") { read_dataset_csv(&path)? } else { read_dataset_jsonl(&path)? };
        if data.is_empty() {
            return Err(CliError::Runtime(format!("{} holds no comments", path.display())));
        }
        Ok(data)
    }

    pub fn train_source(&self) -> TrainSource {
        self.cfg.train.source
    }
}

pub fn require(path: &Path, hint: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::missing(path, hint))
    }
}

/// Run one command and write its manifest; returns the manifest path.
pub fn run(cmd: Command, ctx: &Context) -> Result<PathBuf> {
    ctx.cfg.validate()?;
    fs::create_dir_all(&ctx.out)?;
    let rec = match cmd {
        Command::Ingest => ingest(ctx)?,
        Command::Filter => filter(ctx)?,
        Command::Quality => quality(ctx)?,
        Command::Aggregate => aggregate(ctx)?,
        Command::Analyze => analyze(ctx)?,
        Command::Train => train(ctx)?,
        Command::Compare => compare(ctx)?,
        Command::Embed => embed(ctx)?,
    };
    rec.finish(cmd.name(), &ctx.cfg)
}
