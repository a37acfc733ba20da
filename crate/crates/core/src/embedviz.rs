//! Exact t-SNE and scatter-plot output for hidden representations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Emotion, Group};

pub const MIN_POINTS: usize = 5;
const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_BISECTION: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            step_size: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < MIN_POINTS {
            return Err(Error::domain(format!("t-SNE needs at least {MIN_POINTS} points, got {n}")));
        }
        if !(self.perplexity > 1.0 && self.perplexity < n as f64 / 3.0) {
            return Err(Error::Config(format!("perplexity {} must lie in (1, n/3) for n = {n}", self.perplexity)));
        }
        if self.iterations < self.exaggeration_iters || self.iterations < 250 {
            return Err(Error::Config("t-SNE needs at least 250 iterations".into()));
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(Error::Config("step size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// KL(P || Q) of the un-exaggerated P at each iteration, measured
    /// before that iteration's update; the last entry is the final cost.
    pub kl_trace: Vec<f64>,
}

/// Squared distances rounded to 30 significant bits, so inputs that differ
/// only by floating-point noise (e.g. a global translation) give identical
/// affinities.
fn squared_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    const DROP: u32 = 22;
    let quantise = |d: f64| {
        let bits = d.to_bits();
        f64::from_bits((bits + (1u64 << (DROP - 1))) & !((1u64 << DROP) - 1))
    };
    points
        .par_iter()
        .map(|a| points.iter().map(|b| quantise(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())).collect())
        .collect()
}

/// Row-wise Gaussian conditional affinities `p(j|i)` with each row's
/// perplexity calibrated by bisection on the precision.
pub fn conditional_affinities(points: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let d2 = squared_distances(points);
    let target = perplexity.ln();
    d2.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let dmin = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
            let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
            let mut p = vec![0.0; row.len()];
            for _ in 0..MAX_BISECTION {
                let mut sum = 0.0;
                for (j, d) in row.iter().enumerate() {
                    p[j] = if j == i { 0.0 } else { (-beta * (d - dmin)).exp() };
                    sum += p[j];
                }
                let mut h = 0.0;
                for (j, d) in row.iter().enumerate() {
                    if j != i {
                        p[j] /= sum;
                        h += beta * (d - dmin) * p[j];
                    }
                }
                h += sum.ln();
                if (h.exp() - perplexity).abs() < PERPLEXITY_TOL || (h - target).abs() < 1e-12 {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            p
        })
        .collect()
}

/// Symmetrised joint affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_affinities(points: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let cond = conditional_affinities(points, perplexity);
    let n = cond.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12) }).collect())
        .collect()
}

/// Student-t kernel values, their sum and KL(P || Q) for one layout.
struct Layout {
    num: Vec<Vec<f64>>,
    z: f64,
    kl: f64,
    /// `-Σ p_ij ln num_ij`
    cross: f64,
}

impl Layout {
    fn new(y: &[[f64; 2]], p: &[Vec<f64>]) -> Self {
        let num: Vec<Vec<f64>> = y
            .par_iter()
            .enumerate()
            .map(|(i, yi)| {
                y.iter()
                    .enumerate()
                    .map(|(j, yj)| {
                        if i == j {
                            0.0
                        } else {
                            let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
                            1.0 / (1.0 + dx * dx + dy * dy)
                        }
                    })
                    .collect()
            })
            .collect();
        let z: f64 = num.iter().map(|r| r.iter().sum::<f64>()).sum();
        let kl: f64 = p
            .iter()
            .zip(&num)
            .map(|(pr, nr)| {
                pr.iter().zip(nr).filter(|(pij, _)| **pij > 0.0).map(|(pij, nij)| pij * (pij / (nij / z).max(1e-300)).ln()).sum::<f64>()
            })
            .sum();
        let cross: f64 = p
            .iter()
            .zip(&num)
            .map(|(pr, nr)| pr.iter().zip(nr).filter(|(pij, _)| **pij > 0.0).map(|(pij, nij)| -pij * nij.max(1e-300).ln()).sum::<f64>())
            .sum();
        Layout { num, z, kl, cross }
    }

    /// Objective whose gradient is [`Layout::gradient`] at exaggeration
    /// `exag`, up to an additive constant; equals KL(P || Q) minus the
    /// entropy of P when `exag` is 1.
    fn cost(&self, exag: f64) -> f64 {
        exag * self.cross + self.z.ln()
    }

    fn gradient(&self, y: &[[f64; 2]], p: &[Vec<f64>], exag: f64) -> Vec<[f64; 2]> {
        let n = y.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = (exag * p[i][j] - self.num[i][j] / self.z) * self.num[i][j];
                    g[0] += w * (y[i][0] - y[j][0]);
                    g[1] += w * (y[i][1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect()
    }
}

fn centre(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    for k in 0..2 {
        let m = y.iter().map(|p| p[k]).sum::<f64>() / n;
        y.iter_mut().for_each(|p| p[k] -= m);
    }
}

/// Exact O(n²) t-SNE to two dimensions.
///
/// A momentum step that would raise the current objective (KL(P || Q), with
/// P scaled by the exaggeration factor during the early phase) is rejected:
/// velocity and gains are reset and a plain gradient step is backtracked
/// until the objective does not increase.
pub fn tsne(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    const MAX_BACKTRACK: usize = 40;
    let n = points.len();
    cfg.validate(n)?;
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::domain("t-SNE: rows have different widths"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::domain("t-SNE: non-finite input"));
    }
    let p = joint_affinities(points, cfg.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).unwrap();
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations + 1);
    let mut layout = Layout::new(&y, &p);

    for iter in 0..cfg.iterations {
        kl_trace.push(layout.kl);
        let early = iter < cfg.exaggeration_iters;
        let exag = if early { cfg.exaggeration } else { 1.0 };
        let momentum = if early { cfg.momentum } else { cfg.final_momentum };
        let grad = layout.gradient(&y, &p, exag);

        let mut next_velocity = velocity.clone();
        let mut next_gains = gains.clone();
        let mut next = y.clone();
        for i in 0..n {
            for k in 0..2 {
                // delta-bar-delta gains
                let g = &mut next_gains[i][k];
                *g = if (grad[i][k] > 0.0) != (velocity[i][k] > 0.0) { *g + 0.2 } else { (*g * 0.8).max(0.01) };
                next_velocity[i][k] = momentum * velocity[i][k] - cfg.step_size * *g * grad[i][k];
                next[i][k] += next_velocity[i][k];
            }
        }
        centre(&mut next);
        let candidate = Layout::new(&next, &p);
        if candidate.cost(exag) <= layout.cost(exag) {
            (y, velocity, gains, layout) = (next, next_velocity, next_gains, candidate);
            continue;
        }

        velocity.iter_mut().for_each(|v| *v = [0.0; 2]);
        gains.iter_mut().for_each(|g| *g = [1.0; 2]);
        let mut eta = cfg.step_size;
        for _ in 0..MAX_BACKTRACK {
            let mut trial = y.clone();
            for (t, g) in trial.iter_mut().zip(&grad) {
                t[0] -= eta * g[0];
                t[1] -= eta * g[1];
            }
            centre(&mut trial);
            let tl = Layout::new(&trial, &p);
            if tl.cost(exag) <= layout.cost(exag) {
                (y, layout) = (trial, tl);
                break;
            }
            eta /= 2.0;
        }
    }
    kl_trace.push(layout.kl);
    Ok(TsneResult { embedding: y, kl_trace })
}

/// Labels attached to one embedded point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLabel {
    pub id: String,
    pub usvsthem: f64,
    pub group: Group,
    pub emotions: BTreeSet<Emotion>,
}

/// Hidden representations of one layer, as exported by a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    pub tag: String,
    pub labels: Vec<PointLabel>,
    pub rows: Vec<Vec<f64>>,
}

impl HiddenMatrix {
    /// CSV with `id,group,usvsthem,emotions,h0..h{d-1}`; emotions are
    /// joined by `|`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.rows.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "group".into(), "usvsthem".into(), "emotions".into()];
        header.extend((0..d).map(|k| format!("h{k}")));
        w.write_record(&header)?;
        for (l, row) in self.labels.iter().zip(&self.rows) {
            let mut rec = vec![l.id.clone(), l.group.to_string(), format!("{}", l.usvsthem), emotions_field(&l.emotions)];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let (mut labels, mut rows) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 4 {
                return Err(Error::Parse(format!("{}: row {} too short", path.display(), i + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("{}: row {}: bad number `{s}`", path.display(), i + 2)));
            let emotions = rec[3].split('|').filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
            labels.push(PointLabel { id: rec[0].to_string(), group: rec[1].parse()?, usvsthem: num(&rec[2])?, emotions });
            rows.push(rec.iter().skip(4).map(num).collect::<Result<Vec<_>>>()?);
        }
        let tag = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_start_matches("hidden_").to_string())
            .unwrap_or_default();
        Ok(HiddenMatrix { tag, labels, rows })
    }
}

fn emotions_field(e: &BTreeSet<Emotion>) -> String {
    e.iter().map(|e| e.as_str()).collect::<Vec<_>>().join("|")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureStyle {
    Scale,
    Emotion,
    Group,
}

pub type Rgb = [u8; 3];

pub const NO_EMOTION_GRAY: Rgb = [0x80, 0x80, 0x80];

pub fn emotion_color(e: Emotion) -> Rgb {
    match e {
        Emotion::Anger => [0xd6, 0x27, 0x28],
        Emotion::Contempt => [0x8c, 0x56, 0x4b],
        Emotion::Disgust => [0x2c, 0xa0, 0x2c],
        Emotion::Fear => [0x94, 0x67, 0xbd],
        Emotion::Gratitude => [0xbc, 0xbd, 0x22],
        Emotion::Guilt => [0x7f, 0x3c, 0x8d],
        Emotion::Happiness => [0xff, 0xd7, 0x00],
        Emotion::Hope => [0x17, 0xbe, 0xcf],
        Emotion::Pride => [0xff, 0x7f, 0x0e],
        Emotion::Relief => [0x98, 0xdf, 0x8a],
        Emotion::Sadness => [0x1f, 0x77, 0xb4],
        Emotion::Sympathy => [0xe3, 0x77, 0xc2],
    }
}

pub fn group_color(g: Group) -> Rgb {
    match g {
        Group::Immigrants => [0x1f, 0x77, 0xb4],
        Group::Refugees => [0xff, 0x7f, 0x0e],
        Group::Muslims => [0x2c, 0xa0, 0x2c],
        Group::Jews => [0xd6, 0x27, 0x28],
        Group::Liberals => [0x94, 0x67, 0xbd],
        Group::Conservatives => [0x8c, 0x56, 0x4b],
    }
}

/// Blue at 0 to red at 1.
pub fn scale_color(v: f64) -> Rgb {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    [lerp(0x1f as f64, 0xd6 as f64), lerp(0x4e as f64, 0x27 as f64), lerp(0xd8 as f64, 0x28 as f64)]
}

/// Arithmetic mean of the member emotions' colours; gray when empty.
pub fn blend_emotions(emotions: &BTreeSet<Emotion>) -> Rgb {
    if emotions.is_empty() {
        return NO_EMOTION_GRAY;
    }
    let mut acc = [0.0f64; 3];
    for &e in emotions {
        let c = emotion_color(e);
        for k in 0..3 {
            acc[k] += f64::from(c[k]);
        }
    }
    let n = emotions.len() as f64;
    acc.map(|v| (v / n).round() as u8)
}

pub fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub x: f64,
    pub y: f64,
    pub color_value: f64,
    pub color: Rgb,
    pub group: Group,
    pub emotions: String,
}

pub fn figure_rows(embedding: &[[f64; 2]], labels: &[PointLabel], style: FigureStyle) -> Result<Vec<FigureRow>> {
    if embedding.len() != labels.len() {
        return Err(Error::domain(format!("{} points but {} labels", embedding.len(), labels.len())));
    }
    Ok(embedding
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let (color_value, color) = match style {
                FigureStyle::Scale => (l.usvsthem, scale_color(l.usvsthem)),
                FigureStyle::Emotion => (l.emotions.len() as f64, blend_emotions(&l.emotions)),
                FigureStyle::Group => (l.group.index() as f64, group_color(l.group)),
            };
            FigureRow { x: p[0], y: p[1], color_value, color, group: l.group, emotions: emotions_field(&l.emotions) }
        })
        .collect())
}

pub fn figure_csv(rows: &[FigureRow]) -> String {
    let mut s = String::from("x,y,color_value,color,group,emotions\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.x, r.y, r.color_value, hex(r.color), r.group, r.emotions);
    }
    s
}

pub fn figure_svg(rows: &[FigureRow], title: &str) -> String {
    const SIZE: f64 = 600.0;
    const MARGIN: f64 = 20.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        x0 = x0.min(r.x);
        x1 = x1.max(r.x);
        y0 = y0.min(r.y);
        y1 = y1.max(r.y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let sx = |x: f64| MARGIN + (x - x0) / span * (SIZE - 2.0 * MARGIN);
    let sy = |y: f64| SIZE - MARGIN - (y - y0) / span * (SIZE - 2.0 * MARGIN);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<title>{}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        title.replace('&', "&amp;").replace('<', "&lt;")
    );
    for r in rows {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>", sx(r.x), sy(r.y), hex(r.color));
    }
    s.push_str("</svg>\n");
    s
}

/// Write `layer_<tag>.svg` and `layer_<tag>.csv` into `dir`.
pub fn emit_figure_data(
    dir: &Path,
    tag: &str,
    embedding: &[[f64; 2]],
    labels: &[PointLabel],
    style: FigureStyle,
) -> Result<(PathBuf, PathBuf)> {
    let rows = figure_rows(embedding, labels, style)?;
    fs::create_dir_all(dir)?;
    let svg = dir.join(format!("layer_{tag}.svg"));
    let csv = dir.join(format!("layer_{tag}.csv"));
    fs::write(&svg, figure_svg(&rows, &format!("layer {tag}")))?;
    fs::write(&csv, figure_csv(&rows))?;
    Ok((svg, csv))
}
