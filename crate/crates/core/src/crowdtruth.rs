//! Disagreement-aware quality metrics for closed annotation tasks.
//!
//! Worker quality (WQS), unit quality (UQS) and unit-annotation scores (UAS)
//! are defined in terms of each other and solved by fixed-point iteration,
//! starting from all scores equal to 1:
//!
//! * `UAS(u,a) = Σ_w WQS(w)·v_w(u)[a] / Σ_w WQS(w)`
//! * `UQS(u)` is the WQS-pair-weighted mean cosine between the vectors of
//!   distinct workers on `u` (1 for a single annotator).
//! * `WUA(w)` is the UQS-weighted mean cosine between `v_w(u)` and the unit
//!   vector with `w`'s own contribution removed.
//! * `WWA(w)` is the WQS·UQS-weighted mean cosine between `w` and every other
//!   worker on the units they share.
//! * `WQS(w) = WUA(w)·WWA(w)`.
//!
//! Sums are taken over workers and units in sorted-id order with pairwise
//! summation, so results do not depend on input order or thread count.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::numeric::pairwise_sum;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedTask {
    pub labels: Vec<String>,
    /// Exactly one label per worker (attitude question). Otherwise at least one.
    pub exclusive: bool,
    /// Label that, when selected, must be the only selection (emotional Neutral).
    pub sole_label: Option<usize>,
}

impl ClosedTask {
    pub fn attitude() -> Self {
        ClosedTask { labels: crate::types::attitude_task_labels(), exclusive: true, sole_label: None }
    }

    pub fn emotions() -> Self {
        let labels = crate::types::emotion_task_labels();
        let neutral = labels.len() - 1;
        ClosedTask { labels, exclusive: false, sole_label: Some(neutral) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::Config("a closed task needs at least 2 labels".into()));
        }
        let unique: HashSet<&String> = self.labels.iter().collect();
        if unique.len() != self.labels.len() {
            return Err(Error::Config("task labels must be unique".into()));
        }
        if self.sole_label.is_some_and(|i| i >= self.labels.len()) {
            return Err(Error::Config("sole_label out of range".into()));
        }
        Ok(())
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerVector {
    pub worker_id: String,
    pub unit_id: String,
    pub selections: Vec<u8>,
}

impl WorkerVector {
    pub fn new(worker_id: impl Into<String>, unit_id: impl Into<String>, selections: Vec<u8>) -> Self {
        WorkerVector { worker_id: worker_id.into(), unit_id: unit_id.into(), selections }
    }

    /// One-hot vector for label `index` of a `k`-label task.
    pub fn one_hot(worker_id: impl Into<String>, unit_id: impl Into<String>, k: usize, index: usize) -> Self {
        let mut sel = vec![0u8; k];
        sel[index] = 1;
        Self::new(worker_id, unit_id, sel)
    }

    pub fn validate(&self, task: &ClosedTask) -> Result<()> {
        let ctx = || format!("worker `{}` on unit `{}`", self.worker_id, self.unit_id);
        if self.selections.len() != task.labels.len() {
            return Err(Error::domain(format!("{}: expected {} labels", ctx(), task.labels.len())));
        }
        if self.selections.iter().any(|&s| s > 1) {
            return Err(Error::domain(format!("{}: selections must be 0/1", ctx())));
        }
        let ones = self.selections.iter().filter(|&&s| s == 1).count();
        if task.exclusive && ones != 1 {
            return Err(Error::domain(format!("{}: exclusive task needs exactly one label", ctx())));
        }
        if ones == 0 {
            return Err(Error::domain(format!("{}: no label selected", ctx())));
        }
        if let Some(sole) = task.sole_label {
            if self.selections[sole] == 1 && ones > 1 {
                return Err(Error::domain(format!("{}: `{}` must be selected alone", ctx(), task.labels[sole])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub labels: Vec<String>,
    pub wqs: BTreeMap<String, f64>,
    pub uqs: BTreeMap<String, f64>,
    /// Per unit, one score per label in task order.
    pub uas: BTreeMap<String, Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Workers that share no unit with anyone; their WWA falls back to WUA.
    pub isolated_workers: Vec<String>,
}

impl QualityScores {
    pub fn uas_of(&self, unit: &str, label: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == label)?;
        self.uas.get(unit).map(|v| v[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UpdateOrder {
    /// Units then workers are each recomputed from the previous sweep's worker scores.
    #[default]
    Jacobi,
    /// Workers are updated one at a time and immediately reused.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub order: UpdateOrder,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig { tol: 1e-6, max_iter: 100, order: UpdateOrder::Jacobi }
    }
}

/// Cosine similarity; 0 when either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let na = pairwise_sum(&a.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let nb = pairwise_sum(&b.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Annotation set indexed by sorted unit and worker ids.
struct Indexed {
    units: Vec<String>,
    workers: Vec<String>,
    /// Per unit: (worker index, selection vector), sorted by worker index.
    by_unit: Vec<Vec<(usize, Vec<f64>)>>,
    /// Per worker: (unit index, position in `by_unit[unit]`), sorted by unit.
    by_worker: Vec<Vec<(usize, usize)>>,
    /// Per worker: other workers with at least one shared unit.
    neighbours: Vec<Vec<usize>>,
}

impl Indexed {
    fn build(annotations: &[WorkerVector], task: &ClosedTask) -> Result<Self> {
        task.validate()?;
        if annotations.is_empty() {
            return Err(Error::domain("no annotations"));
        }
        for a in annotations {
            a.validate(task)?;
        }
        let units: Vec<String> = annotations.iter().map(|a| a.unit_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let workers: Vec<String> =
            annotations.iter().map(|a| a.worker_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let unit_ix: BTreeMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let worker_ix: BTreeMap<&str, usize> = workers.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

        let mut by_unit: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); units.len()];
        for a in annotations {
            let u = unit_ix[a.unit_id.as_str()];
            let w = worker_ix[a.worker_id.as_str()];
            by_unit[u].push((w, a.selections.iter().map(|&s| f64::from(s)).collect()));
        }
        for (u, list) in by_unit.iter_mut().enumerate() {
            list.sort_by_key(|(w, _)| *w);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::domain(format!("duplicate annotation on unit `{}`", units[u])));
            }
        }
        let mut by_worker: Vec<Vec<(usize, usize)>> = vec![Vec::new(); workers.len()];
        for (u, list) in by_unit.iter().enumerate() {
            for (pos, (w, _)) in list.iter().enumerate() {
                by_worker[*w].push((u, pos));
            }
        }
        let neighbours = by_worker
            .iter()
            .enumerate()
            .map(|(w, units_of_w)| {
                units_of_w
                    .iter()
                    .flat_map(|&(u, _)| by_unit[u].iter().map(|(o, _)| *o))
                    .filter(|&o| o != w)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        Ok(Indexed { units, workers, by_unit, by_worker, neighbours })
    }
}

struct UnitScores {
    uqs: f64,
    uas: Vec<f64>,
}

fn score_unit(list: &[(usize, Vec<f64>)], wqs: &[f64], k: usize) -> UnitScores {
    let weight_total = pairwise_sum(&list.iter().map(|(w, _)| wqs[*w]).collect::<Vec<_>>());
    let weighted: Vec<f64> = (0..k)
        .map(|a| pairwise_sum(&list.iter().map(|(w, v)| wqs[*w] * v[a]).collect::<Vec<_>>()))
        .collect();
    let uas = if weight_total > 0.0 {
        weighted.iter().map(|x| x / weight_total).collect()
    } else {
        // every annotator has zero quality: fall back to raw frequencies
        let n = list.len() as f64;
        (0..k).map(|a| list.iter().map(|(_, v)| v[a]).sum::<f64>() / n).collect()
    };
    let uqs = if list.len() < 2 {
        1.0
    } else {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (i, (wi, vi)) in list.iter().enumerate() {
            for (j, (wj, vj)) in list.iter().enumerate() {
                if i != j {
                    let pw = wqs[*wi] * wqs[*wj];
                    num.push(pw * cosine(vi, vj));
                    den.push(pw);
                }
            }
        }
        let d = pairwise_sum(&den);
        if d > 0.0 {
            (pairwise_sum(&num) / d).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    UnitScores { uqs, uas }
}

/// Returns (WQS, WUA, WWA, isolated) for one worker.
fn score_worker(idx: &Indexed, w: usize, wqs: &[f64], uqs: &[f64], k: usize) -> (f64, f64, f64, bool) {
    let mut ua_num = Vec::new();
    let mut ua_den = Vec::new();
    for &(u, pos) in &idx.by_worker[w] {
        let list = &idx.by_unit[u];
        let own = &list[pos].1;
        let rest: Vec<f64> = (0..k)
            .map(|a| {
                pairwise_sum(
                    &list.iter().filter(|(o, _)| *o != w).map(|(o, v)| wqs[*o] * v[a]).collect::<Vec<_>>(),
                )
            })
            .collect();
        ua_num.push(uqs[u] * cosine(own, &rest));
        ua_den.push(uqs[u]);
    }
    let d = pairwise_sum(&ua_den);
    let wua = if d > 0.0 { pairwise_sum(&ua_num) / d } else { 0.0 };

    let mut wa_num = Vec::new();
    let mut wa_den = Vec::new();
    for &other in &idx.neighbours[w] {
        // units shared by w and other, in unit order
        for &(u, pos) in &idx.by_worker[w] {
            let list = &idx.by_unit[u];
            if let Some((_, vo)) = list.iter().find(|(o, _)| *o == other) {
                let weight = wqs[other] * uqs[u];
                wa_num.push(weight * cosine(&list[pos].1, vo));
                wa_den.push(weight);
            }
        }
    }
    let isolated = idx.neighbours[w].is_empty();
    let d = pairwise_sum(&wa_den);
    let wwa = if isolated {
        wua
    } else if d > 0.0 {
        pairwise_sum(&wa_num) / d
    } else {
        0.0
    };
    ((wua * wwa).clamp(0.0, 1.0), wua, wwa, isolated)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compute WQS/UQS/UAS with default schedule.
pub fn compute_quality(annotations: &[WorkerVector], task: &ClosedTask, tol: f64, max_iter: usize) -> Result<QualityScores> {
    compute_quality_with(annotations, task, &QualityConfig { tol, max_iter, order: UpdateOrder::Jacobi })
}

pub fn compute_quality_with(annotations: &[WorkerVector], task: &ClosedTask, cfg: &QualityConfig) -> Result<QualityScores> {
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::Config("tol must be > 0 and max_iter >= 1".into()));
    }
    let idx = Indexed::build(annotations, task)?;
    let k = task.labels.len();
    let nu = idx.units.len();
    let nw = idx.workers.len();

    let mut wqs = vec![1.0; nw];
    let mut uqs = vec![1.0; nu];
    let mut uas = vec![vec![1.0; k]; nu];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let units: Vec<UnitScores> = idx.by_unit.par_iter().map(|list| score_unit(list, &wqs, k)).collect();
        let new_uqs: Vec<f64> = units.iter().map(|s| s.uqs).collect();
        let new_uas: Vec<Vec<f64>> = units.into_iter().map(|s| s.uas).collect();

        let new_wqs: Vec<f64> = match cfg.order {
            UpdateOrder::Jacobi => {
                (0..nw).into_par_iter().map(|w| score_worker(&idx, w, &wqs, &new_uqs, k).0).collect()
            }
            UpdateOrder::GaussSeidel => {
                let mut cur = wqs.clone();
                for w in 0..nw {
                    cur[w] = score_worker(&idx, w, &cur, &new_uqs, k).0;
                }
                cur
            }
        };

        let delta = max_abs_diff(&wqs, &new_wqs)
            .max(max_abs_diff(&uqs, &new_uqs))
            .max(uas.iter().zip(&new_uas).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max));
        wqs = new_wqs;
        uqs = new_uqs;
        uas = new_uas;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let isolated_workers = (0..nw).filter(|&w| idx.neighbours[w].is_empty()).map(|w| idx.workers[w].clone()).collect();
    Ok(QualityScores {
        labels: task.labels.clone(),
        wqs: idx.workers.iter().cloned().zip(wqs).collect(),
        uqs: idx.units.iter().cloned().zip(uqs).collect(),
        uas: idx.units.iter().cloned().zip(uas).collect(),
        iterations,
        converged,
        isolated_workers,
    })
}

/// UAS of one unit for fixed worker qualities (no iteration).
pub fn unit_annotation_scores(vectors: &[(f64, Vec<u8>)]) -> Vec<f64> {
    let k = vectors.first().map_or(0, |(_, v)| v.len());
    let list: Vec<(usize, Vec<f64>)> =
        vectors.iter().enumerate().map(|(i, (_, v))| (i, v.iter().map(|&s| f64::from(s)).collect())).collect();
    let wqs: Vec<f64> = vectors.iter().map(|(q, _)| *q).collect();
    score_unit(&list, &wqs, k).uas
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub wqs_min: f64,
    pub uqs_min: f64,
    pub min_annotators: usize,
    /// Workers removed regardless of score.
    pub blocklist: BTreeSet<String>,
    pub quality: QualityConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            wqs_min: 0.1,
            uqs_min: 0.2,
            min_annotators: 2,
            blocklist: BTreeSet::new(),
            quality: QualityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedReport {
    pub removed_workers: Vec<String>,
    pub blocklisted_workers: Vec<String>,
    pub removed_units_few_annotators: Vec<String>,
    pub removed_units_low_uqs: Vec<String>,
    pub annotations_in: usize,
    pub annotations_out: usize,
    /// Scores recomputed after worker removal (pass 1).
    pub pass1_scores: QualityScores,
    /// Scores recomputed on the kept annotations (pass 2).
    pub final_scores: QualityScores,
}

/// Two-pass removal: drop low-WQS (and blocklisted) workers and recompute,
/// then drop units with too few annotators or low UQS.
pub fn filter_annotations(
    scores: &QualityScores,
    annotations: &[WorkerVector],
    task: &ClosedTask,
    cfg: &FilterConfig,
) -> Result<(Vec<WorkerVector>, RemovedReport)> {
    let removed_workers: Vec<String> =
        scores.wqs.iter().filter(|(_, &q)| q < cfg.wqs_min).map(|(w, _)| w.clone()).collect();
    let blocklisted_workers: Vec<String> =
        scores.wqs.keys().filter(|w| cfg.blocklist.contains(*w)).cloned().collect();
    let drop: HashSet<&String> = removed_workers.iter().chain(&blocklisted_workers).collect();
    let pass1: Vec<WorkerVector> = annotations.iter().filter(|a| !drop.contains(&a.worker_id)).cloned().collect();
    if pass1.is_empty() {
        return Err(Error::domain("worker filter removed every annotation"));
    }
    let pass1_scores = compute_quality_with(&pass1, task, &cfg.quality)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &pass1 {
        *counts.entry(a.unit_id.as_str()).or_default() += 1;
    }
    let few: BTreeSet<String> =
        counts.iter().filter(|(_, &n)| n < cfg.min_annotators).map(|(u, _)| u.to_string()).collect();
    let low: BTreeSet<String> = pass1_scores
        .uqs
        .iter()
        .filter(|(u, &q)| q < cfg.uqs_min && !few.contains(*u))
        .map(|(u, _)| u.clone())
        .collect();
    let kept: Vec<WorkerVector> =
        pass1.iter().filter(|a| !few.contains(&a.unit_id) && !low.contains(&a.unit_id)).cloned().collect();
    if kept.is_empty() {
        return Err(Error::domain("unit filter removed every annotation"));
    }
    let final_scores = compute_quality_with(&kept, task, &cfg.quality)?;
    let report = RemovedReport {
        removed_workers,
        blocklisted_workers,
        removed_units_few_annotators: few.into_iter().collect(),
        removed_units_low_uqs: low.into_iter().collect(),
        annotations_in: annotations.len(),
        annotations_out: kept.len(),
        pass1_scores,
        final_scores,
    };
    Ok((kept, report))
}

/// Read `unit_id,worker_id,<label_1>,…,<label_k>` with 0/1 cells. Label
/// names come from the header.
pub fn read_annotations_csv(path: &Path) -> Result<(Vec<String>, Vec<WorkerVector>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "unit_id" || &headers[1] != "worker_id" {
        return Err(Error::Parse(format!(
            "{}: header must be unit_id,worker_id,<labels...>",
            path.display()
        )));
    }
    let labels: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let selections = rec
            .iter()
            .skip(2)
            .map(|c| match c.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Parse(format!("{}: row {}: cell `{other}` is not 0/1", path.display(), row + 2))),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(WorkerVector::new(&rec[1], &rec[0], selections));
    }
    Ok((labels, out))
}

pub fn write_annotations_csv(path: &Path, labels: &[String], annotations: &[WorkerVector]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_id".to_string(), "worker_id".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for a in annotations {
        let mut rec = vec![a.unit_id.clone(), a.worker_id.clone()];
        rec.extend(a.selections.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub iterations: usize,
    pub converged: bool,
    pub workers: usize,
    pub units: usize,
    pub isolated_workers: Vec<String>,
    pub mean_wqs: f64,
    pub mean_uqs: f64,
}

impl QualityScores {
    pub fn summary(&self) -> QualitySummary {
        let mean = |m: &BTreeMap<String, f64>| {
            if m.is_empty() {
                0.0
            } else {
                m.values().sum::<f64>() / m.len() as f64
            }
        };
        QualitySummary {
            iterations: self.iterations,
            converged: self.converged,
            workers: self.wqs.len(),
            units: self.uqs.len(),
            isolated_workers: self.isolated_workers.clone(),
            mean_wqs: mean(&self.wqs),
            mean_uqs: mean(&self.uqs),
        }
    }

    /// Write `wqs.csv`, `uqs.csv`, `uas.csv` and `summary.json` with the given prefix.
    pub fn write_tables(&self, dir: &Path, prefix: &str) -> Result<()> {
        let fmt = |x: f64| format!("{x:.12}");
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}wqs.csv")))?;
        w.write_record(["worker_id", "wqs"])?;
        for (k, v) in &self.wqs {
            w.write_record([k.clone(), fmt(*v)])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}uqs.csv")))?;
        w.write_record(["unit_id", "uqs"])?;
        for (k, v) in &self.uqs {
            w.write_record([k.clone(), fmt(*v)])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}uas.csv")))?;
        let mut header = vec!["unit_id".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (k, v) in &self.uas {
            let mut rec = vec![k.clone()];
            rec.extend(v.iter().map(|x| fmt(*x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        std::fs::write(
            dir.join(format!("{prefix}summary.json")),
            serde_json::to_vec_pretty(&self.summary())?,
        )?;
        Ok(())
    }
}
