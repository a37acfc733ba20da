use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use usvsthem_core::aggregate::{split_of, LabeledComment, Split};
use usvsthem_core::stats::permutation::paired_permutation_test;
use usvsthem_core::stats::williams::williams_test;
use usvsthem_core::stats::TestResult;
use usvsthem_model::checkpoint::save;
use usvsthem_model::synthetic::{desk_config, generate};
use usvsthem_model::{evaluate, MainTask, Metrics, Setup, TrainConfig};

use super::{require, Context};
use crate::config::TrainSource;
use crate::error::{CliError, Result};
use crate::manifest::Recorder;

/// Train, dev and test comments for the configured source.
pub(super) fn splits(ctx: &Context, rec: &mut Recorder) -> Result<[Vec<LabeledComment>; 3]> {
    match ctx.train_source() {
        TrainSource::Dataset => {
            let data = ctx.load_dataset(rec)?;
            Ok([Split::Train, Split::Dev, Split::Test].map(|s| split_of(&data, s)))
        }
        TrainSource::Synthetic => {
            let c = generate(&ctx.cfg.train.synthetic)?;
            Ok([c.train, c.dev, c.test])
        }
    }
}

pub(super) fn run_dir(out: &Path, main: MainTask, setup: Setup, seed: u64) -> PathBuf {
    out.join("train").join(main.to_string()).join(setup.as_str()).join(format!("seed_{seed}"))
}

fn job_config(ctx: &Context, main: MainTask, setup: Setup, seed: u64) -> TrainConfig {
    let t = &ctx.cfg.train;
    let mut cfg = match t.source {
        TrainSource::Dataset => TrainConfig::preset(main, setup),
        TrainSource::Synthetic => desk_config(seed),
    };
    cfg.seed = seed;
    if let Some(e) = t.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = t.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = t.batch_size {
        cfg.batch_size = b;
    }
    if let Some(v) = t.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(enc) = &t.encoder {
        cfg.encoder = enc.clone();
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub main: MainTask,
    pub setup: Setup,
    pub seed: u64,
    pub best_epoch: usize,
    pub dev: Metrics,
    pub test: Metrics,
    pub truncated: usize,
}

impl JobResult {
    /// Pearson R for regression, accuracy for classification, on test.
    pub fn headline(&self) -> f64 {
        match self.main {
            MainTask::Regression => self.test.pearson_r,
            MainTask::Classification => self.test.accuracy,
        }
    }
}

fn predictions_csv(data: &[LabeledComment], pred: &[f64]) -> String {
    let mut s = String::from("unit_id,gold,binary,prediction\n");
    for (c, p) in data.iter().zip(pred) {
        let _ = writeln!(s, "{},{},{},{}", c.unit_id, c.usvsthem, c.binary, p);
    }
    s
}

fn run_job(ctx: &Context, data: &[Vec<LabeledComment>; 3], main: MainTask, setup: Setup, seed: u64) -> Result<JobResult> {
    let [train_set, dev_set, test_set] = data;
    let cfg = job_config(ctx, main, setup, seed);
    let tm = usvsthem_model::train(train_set, dev_set, &setup.tasks(main), &cfg)?;
    let test = if test_set.is_empty() { tm.best_dev.clone() } else { evaluate(&tm.model, test_set)? };
    let dir = run_dir(&ctx.out, main, setup, seed);
    fs::create_dir_all(&dir)?;
    tm.write_log(fs::File::create(dir.join("log.csv"))?)?;
    save(&tm.model, &dir.join("model.ckpt"))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    fs::write(dir.join("predictions_dev.csv"), predictions_csv(dev_set, &tm.model.predict(dev_set)))?;
    if !test_set.is_empty() {
        fs::write(dir.join("predictions_test.csv"), predictions_csv(test_set, &tm.model.predict(test_set)))?;
    }
    let result = JobResult { main, setup, seed, best_epoch: tm.best_epoch, dev: tm.best_dev, test, truncated: tm.truncated };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    info!("{main} {setup} seed {seed}: test {:.4} (best epoch {})", result.headline(), result.best_epoch);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub main: MainTask,
    pub setup: Setup,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for a single seed).
    pub std: f64,
}

impl SeedSummary {
    pub fn new(main: MainTask, setup: Setup, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
        SeedSummary { main, setup, values, mean, std }
    }
}

/// Rows per setup, one `mean ± std` column per main task.
pub fn results_table(summaries: &[SeedSummary], mains: &[MainTask], setups: &[Setup]) -> String {
    let mut s = String::from("setup");
    for m in mains {
        let _ = write!(s, ",{}", match m {
            MainTask::Regression => "regression_pearson_r",
            MainTask::Classification => "classification_accuracy",
        });
    }
    s.push('\n');
    for &setup in setups {
        s.push_str(setup.as_str());
        for &m in mains {
            s.push(',');
            if let Some(x) = summaries.iter().find(|x| x.main == m && x.setup == setup) {
                let _ = write!(s, "{:.3} ± {:.3}", x.mean, x.std);
            }
        }
        s.push('\n');
    }
    s
}

pub fn train(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let data = splits(ctx, &mut rec)?;
    if data[0].is_empty() || data[1].is_empty() {
        return Err(CliError::Runtime("train and dev splits must both be non-empty".into()));
    }
    let t = &ctx.cfg.train;
    let jobs: Vec<(MainTask, Setup, u64)> = t
        .mains
        .iter()
        .flat_map(|&m| t.setups.iter().flat_map(move |&s| ctx.cfg.seeds.iter().map(move |&seed| (m, s, seed))))
        .collect();
    info!("{} training jobs on {} worker(s)", jobs.len(), ctx.cfg.jobs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start the job pool: {e}")))?;
    let results: Vec<JobResult> =
        pool.install(|| jobs.par_iter().map(|&(m, s, seed)| run_job(ctx, &data, m, s, seed)).collect::<Result<_>>())?;

    let mut summaries = Vec::new();
    for &m in &t.mains {
        for &s in &t.setups {
            let values = results.iter().filter(|r| r.main == m && r.setup == s).map(JobResult::headline).collect();
            summaries.push(SeedSummary::new(m, s, values));
        }
    }
    let dir = ctx.out.join("train");
    fs::write(dir.join("results.csv"), results_table(&summaries, &t.mains, &t.setups))?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&summaries)? + "\n")?;
    rec.output(dir);
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub main: MainTask,
    pub baseline: Setup,
    pub candidate: Setup,
    pub n: usize,
    pub baseline_metric: f64,
    pub candidate_metric: f64,
    pub test: TestResult,
}

struct Predictions {
    gold: Vec<f64>,
    binary: Vec<u8>,
    pred: Vec<f64>,
}

fn read_predictions(path: &Path) -> Result<Predictions> {
    let text = fs::read_to_string(path)?;
    let mut p = Predictions { gold: Vec::new(), binary: Vec::new(), pred: Vec::new() };
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.rsplitn(4, ',').collect();
        let bad = || CliError::Runtime(format!("{}:{}: malformed prediction row", path.display(), i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        p.pred.push(f[0].parse().map_err(|_| bad())?);
        p.binary.push(f[1].parse().map_err(|_| bad())?);
        p.gold.push(f[2].parse().map_err(|_| bad())?);
    }
    Ok(p)
}

/// Test predictions of every seed, concatenated in seed order.
fn pooled(ctx: &Context, main: MainTask, setup: Setup, split_file: &str) -> Result<Predictions> {
    let mut all = Predictions { gold: Vec::new(), binary: Vec::new(), pred: Vec::new() };
    for &seed in &ctx.cfg.seeds {
        let path = require(&run_dir(&ctx.out, main, setup, seed).join(split_file), "run `train` first")?;
        let p = read_predictions(&path)?;
        all.gold.extend(p.gold);
        all.binary.extend(p.binary);
        all.pred.extend(p.pred);
    }
    Ok(all)
}

fn correct(p: &Predictions) -> Vec<bool> {
    p.pred.iter().zip(&p.binary).map(|(x, &b)| u8::from(*x >= 0.5) == b).collect()
}

pub fn compare(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let c = &ctx.cfg.compare;
    let split_file = match ctx.train_source() {
        TrainSource::Synthetic => "predictions_dev.csv",
        TrainSource::Dataset => "predictions_test.csv",
    };
    let mut rows = Vec::new();
    for &main in &ctx.cfg.train.mains {
        let base = pooled(ctx, main, c.baseline, split_file)?;
        for &setup in ctx.cfg.train.setups.iter().filter(|&&s| s != c.baseline) {
            let cand = pooled(ctx, main, setup, split_file)?;
            if cand.gold != base.gold {
                return Err(CliError::Runtime(format!("{main}: {setup} and {} were scored on different items", c.baseline)));
            }
            let row = match main {
                MainTask::Regression => Comparison {
                    main,
                    baseline: c.baseline,
                    candidate: setup,
                    n: base.gold.len(),
                    baseline_metric: usvsthem_core::stats::numeric::pearson(&base.pred, &base.gold).unwrap_or(0.0),
                    candidate_metric: usvsthem_core::stats::numeric::pearson(&cand.pred, &cand.gold).unwrap_or(0.0),
                    test: williams_test(&cand.pred, &base.pred, &base.gold)?,
                },
                MainTask::Classification => {
                    let (cb, cc) = (correct(&base), correct(&cand));
                    let acc = |v: &[bool]| v.iter().filter(|&&x| x).count() as f64 / v.len().max(1) as f64;
                    Comparison {
                        main,
                        baseline: c.baseline,
                        candidate: setup,
                        n: base.gold.len(),
                        baseline_metric: acc(&cb),
                        candidate_metric: acc(&cc),
                        test: paired_permutation_test(&cc, &cb, c.permutations, c.seed)?,
                    }
                }
            };
            rows.push(row);
        }
    }
    rec.input(ctx.out.join("train"));
    let dir = ctx.dir("compare")?;
    let mut s = String::from("main,baseline,candidate,n,baseline_metric,candidate_metric,method,statistic,p_value\n");
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{},{:.6},{:.6e}",
            r.main, r.baseline, r.candidate, r.n, r.baseline_metric, r.candidate_metric, r.test.method, r.test.statistic, r.test.p_value
        );
    }
    fs::write(dir.join("compare.csv"), s)?;
    let by_main: BTreeMap<String, Vec<&Comparison>> = rows.iter().fold(BTreeMap::new(), |mut m, r| {
        m.entry(r.main.to_string()).or_default().push(r);
        m
    });
    fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&by_main)? + "\n")?;
    rec.output(dir);
    Ok(rec)
}
