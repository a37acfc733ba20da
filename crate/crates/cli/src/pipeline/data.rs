use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use usvsthem_core::aggregate::{assign_splits, build_dataset, write_dataset_csv, write_dataset_jsonl, LabeledComment, Split};
use usvsthem_core::archive_client::{ArchiveClient, ArchiveQuery, Clock, HttpTransport, LocalArchive, ManualClock, RawComment, Transport};
use usvsthem_core::corpus::{default_keyword_specs, filter_candidates, load_bias_map, load_keyword_specs, stratified_sample, CandidateComment};
use usvsthem_core::crowdtruth::{
    compute_quality_with, filter_annotations, read_annotations_csv, write_annotations_csv, ClosedTask, FilterConfig, QualityConfig, QualityScores, UpdateOrder,
};
use usvsthem_core::io::{read_jsonl, write_jsonl};
use usvsthem_core::stats::report::reliability;
use usvsthem_core::Emotion;

use super::{require, Context};
use crate::error::{CliError, Result};
use crate::manifest::Recorder;

fn fetch_all<T: Transport, C: Clock>(client: &mut ArchiveClient<T, C>, ctx: &Context) -> Result<Vec<RawComment>> {
    let ing = &ctx.cfg.ingest;
    let mut out = Vec::new();
    for q in &ing.queries {
        let query = ArchiveQuery {
            subreddit_filter: q.subreddit.clone(),
            time_range: (q.start, q.end),
            keyword_terms: q.keywords.clone(),
            page_size: ing.page_size,
            endpoint_url: ing.endpoint.clone(),
        };
        let got = client.fetch_range(&query)?;
        info!("query [{}, {}): {} comments", q.start, q.end, got.len());
        out.extend(got);
    }
    Ok(out)
}

pub fn ingest(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    if ctx.cfg.ingest.queries.is_empty() {
        return Err(CliError::Config("ingest.queries is empty".into()));
    }
    let fetched = match &ctx.cfg.paths.archive_dir {
        Some(dir) => {
            let dir = ctx.configured(&Some(dir.clone()), "archive_dir")?;
            rec.input(&dir);
            let mut client = ArchiveClient::with_clock(LocalArchive::from_dir(&dir)?, ManualClock::new());
            fetch_all(&mut client, ctx)?
        }
        None => fetch_all(&mut ArchiveClient::new(HttpTransport::default()), ctx)?,
    };
    let mut seen = HashSet::new();
    let mut comments: Vec<RawComment> = fetched.into_iter().filter(|c| seen.insert(c.id.clone())).collect();
    comments.sort_by(|a, b| a.created_utc.cmp(&b.created_utc).then_with(|| a.id.cmp(&b.id)));
    let path = ctx.raw_comments();
    fs::create_dir_all(path.parent().unwrap())?;
    write_jsonl(&path, &comments)?;
    info!("{} unique comments written to {}", comments.len(), path.display());
    rec.output(path);
    Ok(rec)
}

pub fn filter(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let raw_path = require(&ctx.raw_comments(), "run `ingest` first")?;
    rec.input(&raw_path);
    let raw: Vec<RawComment> = read_jsonl(&raw_path)?;
    let bias_path = ctx.configured(&ctx.cfg.paths.bias_map, "bias_map")?;
    rec.input(&bias_path);
    let bias = load_bias_map(&bias_path)?;
    let specs = match &ctx.cfg.paths.keywords {
        Some(_) => {
            let p = ctx.configured(&ctx.cfg.paths.keywords, "keywords")?;
            rec.input(&p);
            load_keyword_specs(&p)?
        }
        None => default_keyword_specs(),
    };
    let (candidates, report) = filter_candidates(&raw, &bias, &specs);
    let (sample, shortfalls) = stratified_sample(&candidates, ctx.cfg.filter.per_cell, ctx.cfg.filter.seed)?;
    info!("{} candidates, {} sampled", candidates.len(), sample.len());

    let dir = ctx.dir("corpus")?;
    write_jsonl(&dir.join("candidates.jsonl"), &candidates)?;
    write_jsonl(&dir.join("sample.jsonl"), &sample)?;
    report.write_csv(fs::File::create(dir.join("drop_report.csv"))?)?;
    let mut s = String::from("group,bias,available,requested\n");
    for c in &shortfalls {
        s.push_str(&format!("{},{},{},{}\n", c.group, c.bias, c.available, c.requested));
    }
    fs::write(dir.join("shortfalls.csv"), s)?;
    rec.output(dir);
    Ok(rec)
}

fn read_blocklist(path: &Path) -> Result<BTreeSet<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

/// Score, filter and rescore one annotation file; writes
/// `<name>_{initial_,}{wqs,uqs,uas}.csv`, summaries, the removal report,
/// the kept annotations and the final scores.
fn quality_pass(ctx: &Context, path: &Path, task: ClosedTask, name: &str, filter_cfg: &FilterConfig, out: &Path) -> Result<()> {
    let (labels, annotations) = read_annotations_csv(path)?;
    if labels != task.labels {
        return Err(CliError::Config(format!("{}: columns {labels:?} do not match the {name} labels {:?}", path.display(), task.labels)));
    }
    for a in &annotations {
        a.validate(&task)?;
    }
    let initial = compute_quality_with(&annotations, &task, &filter_cfg.quality)?;
    if !initial.converged {
        log::warn!("{name}: no convergence within {} iterations", ctx.cfg.quality.max_iter);
    }
    let (kept, report) = filter_annotations(&initial, &annotations, &task, filter_cfg)?;
    info!(
        "{name}: {} of {} annotations kept, {} workers and {} units removed",
        report.annotations_out,
        report.annotations_in,
        report.removed_workers.len() + report.blocklisted_workers.len(),
        report.removed_units_few_annotators.len() + report.removed_units_low_uqs.len()
    );
    initial.write_tables(out, &format!("{name}_initial_"))?;
    report.final_scores.write_tables(out, &format!("{name}_"))?;
    fs::write(out.join(format!("{name}_removed.json")), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(out.join(format!("{name}_scores.json")), serde_json::to_string(&report.final_scores)? + "\n")?;
    write_annotations_csv(&out.join(format!("{name}_kept.csv")), &labels, &kept)?;
    Ok(())
}

pub fn quality(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let q = &ctx.cfg.quality;
    let mut filter_cfg = FilterConfig {
        wqs_min: q.wqs_min,
        uqs_min: q.uqs_min,
        min_annotators: q.min_annotators,
        blocklist: BTreeSet::new(),
        quality: QualityConfig { tol: q.tol, max_iter: q.max_iter, order: UpdateOrder::Jacobi },
    };
    if ctx.cfg.paths.worker_blocklist.is_some() {
        let p = ctx.configured(&ctx.cfg.paths.worker_blocklist, "worker_blocklist")?;
        rec.input(&p);
        filter_cfg.blocklist = read_blocklist(&p)?;
    }
    let out = ctx.dir("quality")?;
    let attitude = ctx.configured(&ctx.cfg.paths.attitude_annotations, "attitude_annotations")?;
    rec.input(&attitude);
    quality_pass(ctx, &attitude, ClosedTask::attitude(), "attitude", &filter_cfg, &out)?;
    if ctx.cfg.paths.emotion_annotations.is_some() {
        let emotion = ctx.configured(&ctx.cfg.paths.emotion_annotations, "emotion_annotations")?;
        rec.input(&emotion);
        quality_pass(ctx, &emotion, ClosedTask::emotions(), "emotion", &filter_cfg, &out)?;
    }
    rec.output(out);
    Ok(rec)
}

pub fn aggregate(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let sample_path = require(&ctx.out.join("corpus").join("sample.jsonl"), "run `filter` first")?;
    let scores_path = require(&ctx.out.join("quality").join("attitude_scores.json"), "run `quality` first")?;
    rec.input(&sample_path);
    rec.input(&scores_path);
    let sample: Vec<CandidateComment> = read_jsonl(&sample_path)?;
    let scores: QualityScores = serde_json::from_slice(&fs::read(&scores_path)?)?;
    let emotion_path = ctx.out.join("quality").join("emotion_kept.csv");
    let emotions = if emotion_path.exists() {
        rec.input(&emotion_path);
        read_annotations_csv(&emotion_path)?.1
    } else {
        log::warn!("no emotion annotations; every comment gets an empty emotion set");
        Vec::new()
    };
    let data = assign_splits(build_dataset(&sample, &scores, &emotions)?, ctx.cfg.aggregate.split_seed);
    let dir = ctx.dir("dataset")?;
    write_dataset_jsonl(&dir.join("dataset.jsonl"), &data)?;
    write_dataset_csv(&dir.join("dataset.csv"), &data)?;
    info!("{} labelled comments", data.len());
    rec.output(dir);
    Ok(rec)
}

/// Headline numbers of a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub mean_usvsthem: f64,
    pub positive_rate: f64,
    pub emotion_counts: BTreeMap<String, usize>,
    pub neutral: usize,
    pub split_sizes: BTreeMap<Split, usize>,
    /// Accuracy of always predicting the majority class of the train split,
    /// measured on the test split.
    pub majority_baseline_test: Option<f64>,
}

impl DatasetSummary {
    pub fn of(data: &[LabeledComment]) -> Self {
        let n = data.len();
        let mean_usvsthem = data.iter().map(|c| c.usvsthem).sum::<f64>() / n as f64;
        let positives = data.iter().filter(|c| c.binary == 1).count();
        let emotion_counts = Emotion::ALL.iter().map(|&e| (e.as_str().to_string(), data.iter().filter(|c| c.has_emotion(e)).count())).collect();
        let mut split_sizes = BTreeMap::new();
        for c in data {
            *split_sizes.entry(c.split).or_default() += 1;
        }
        let in_split = |s: Split| data.iter().filter(move |c| c.split == s);
        let train_pos = in_split(Split::Train).filter(|c| c.binary == 1).count();
        let majority = u8::from(2 * train_pos >= in_split(Split::Train).count());
        let test_n = in_split(Split::Test).count();
        let majority_baseline_test =
            (test_n > 0).then(|| in_split(Split::Test).filter(|c| c.binary == majority).count() as f64 / test_n as f64);
        DatasetSummary {
            n,
            mean_usvsthem,
            positive_rate: positives as f64 / n as f64,
            emotion_counts,
            neutral: data.iter().filter(|c| c.neutral_emotion).count(),
            split_sizes,
            majority_baseline_test,
        }
    }
}

pub fn analyze(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let data = ctx.load_dataset(&mut rec)?;
    let dir = ctx.dir("analysis")?;
    usvsthem_core::stats::report::analyze(&data)?.write(&dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&DatasetSummary::of(&data))? + "\n")?;
    let kept = ctx.out.join("quality").join("emotion_kept.csv");
    let emotion_annotations = if kept.exists() {
        Some(kept)
    } else {
        ctx.cfg.paths.emotion_annotations.as_ref().map(|p| ctx.cfg.resolve(p)).filter(|p| p.exists())
    };
    if let Some(p) = emotion_annotations {
        rec.input(&p);
        let (_, annotations) = read_annotations_csv(&p)?;
        reliability(&annotations)?.write(&dir.join("reliability"))?;
    }
    rec.output(dir);
    Ok(rec)
}
