//! Labelled-dataset construction: continuous UsVsThem score, binary label,
//! emotion set and train/dev/test splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CandidateComment;
use crate::crowdtruth::{QualityScores, WorkerVector};
use crate::error::{Error, Result};
use crate::types::{AttitudeLabel, BiasLabel, Emotion, Group};

pub const TEST_FRACTION: f64 = 0.33;
pub const DEV_FRACTION: f64 = 0.134;
pub const BINARY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledComment {
    pub unit_id: String,
    pub body: String,
    pub group: Group,
    pub bias: BiasLabel,
    pub usvsthem: f64,
    pub binary: u8,
    pub emotions: BTreeSet<Emotion>,
    pub neutral_emotion: bool,
    #[serde(default)]
    pub split: Split,
}

impl LabeledComment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.usvsthem) {
            return Err(Error::domain(format!("{}: score {} outside [0,1]", self.unit_id, self.usvsthem)));
        }
        if self.neutral_emotion && !self.emotions.is_empty() {
            return Err(Error::domain(format!("{}: neutral comment with emotions", self.unit_id)));
        }
        Ok(())
    }

    pub fn has_emotion(&self, e: Emotion) -> bool {
        self.emotions.contains(&e)
    }
}

/// Weighted sum of the four attitude UAS values (Supportive, Neutral,
/// Critical, Discriminatory) with weights 0, 1/3, 2/3, 1.
pub fn usvsthem_score(uas: &[f64]) -> Result<f64> {
    if uas.len() != 4 {
        return Err(Error::domain(format!("expected 4 attitude scores, got {}", uas.len())));
    }
    if uas.iter().any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::domain("attitude scores must be non-negative"));
    }
    let total: f64 = uas.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("attitude scores sum to {total}, not 1")));
    }
    let score: f64 = AttitudeLabel::ALL.iter().zip(uas).map(|(l, &p)| l.weight() * p).sum();
    Ok(score.clamp(0.0, 1.0))
}

/// 1 (Critical or Discriminatory) iff `score >= 0.5`.
pub fn binary_label(score: f64) -> u8 {
    u8::from(score >= BINARY_THRESHOLD)
}

/// Emotion set of one comment from its 13-dimensional annotations (twelve
/// emotions then Neutral). Neutral wins when more than half the annotators
/// chose it; otherwise an emotion is present when at least a quarter did.
pub fn emotion_labels(annotations: &[WorkerVector]) -> (BTreeSet<Emotion>, bool) {
    let n = annotations.len();
    if n == 0 {
        return (BTreeSet::new(), false);
    }
    let votes = |i: usize| annotations.iter().filter(|a| a.selections.get(i) == Some(&1)).count();
    let neutral_votes = votes(Emotion::ALL.len());
    if 2 * neutral_votes > n {
        return (BTreeSet::new(), true);
    }
    let emotions = Emotion::ALL.iter().copied().filter(|e| 4 * votes(e.index()) >= n).collect();
    (emotions, false)
}

/// Join candidates with attitude scores and emotion annotations. Only units
/// present in `attitude` are emitted; units without emotion annotations get
/// an empty emotion set.
pub fn build_dataset(
    candidates: &[CandidateComment],
    attitude: &QualityScores,
    emotion_annotations: &[WorkerVector],
) -> Result<Vec<LabeledComment>> {
    let mut by_unit: HashMap<&str, Vec<WorkerVector>> = HashMap::new();
    for a in emotion_annotations {
        by_unit.entry(a.unit_id.as_str()).or_default().push(a.clone());
    }
    let cand: HashMap<&str, &CandidateComment> = candidates.iter().map(|c| (c.comment.id.as_str(), c)).collect();
    let mut out = Vec::new();
    for (unit, uas) in &attitude.uas {
        let Some(c) = cand.get(unit.as_str()) else {
            log::warn!("unit `{unit}` has annotations but no candidate record; skipped");
            continue;
        };
        let score = usvsthem_score(uas)?;
        let (emotions, neutral_emotion) =
            emotion_labels(by_unit.get(unit.as_str()).map(Vec::as_slice).unwrap_or(&[]));
        out.push(LabeledComment {
            unit_id: unit.clone(),
            body: c.comment.body.clone(),
            group: c.group,
            bias: c.bias,
            usvsthem: score,
            binary: binary_label(score),
            emotions,
            neutral_emotion,
            split: Split::Train,
        });
    }
    Ok(out)
}

/// Largest-remainder apportionment of `n` items over `fractions`
/// (ties go to the earlier entry).
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Seeded split assignment stratified by (group, binary label): 33% test,
/// 13.4% dev, the rest train, apportioned per stratum by largest remainder.
pub fn assign_splits(mut data: Vec<LabeledComment>, seed: u64) -> Vec<LabeledComment> {
    let mut strata: BTreeMap<(Group, u8), Vec<usize>> = BTreeMap::new();
    for (i, c) in data.iter().enumerate() {
        strata.entry((c.group, c.binary)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fractions = [TEST_FRACTION, DEV_FRACTION, 1.0 - TEST_FRACTION - DEV_FRACTION];
    for (_, mut members) in strata {
        members.sort_by(|&a, &b| data[a].unit_id.cmp(&data[b].unit_id));
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), &fractions);
        for (pos, &i) in members.iter().enumerate() {
            data[i].split = if pos < counts[0] {
                Split::Test
            } else if pos < counts[0] + counts[1] {
                Split::Dev
            } else {
                Split::Train
            };
        }
    }
    data
}

pub fn split_of(data: &[LabeledComment], split: Split) -> Vec<LabeledComment> {
    data.iter().filter(|c| c.split == split).cloned().collect()
}

/// One JSON object per line, in input order.
pub fn write_dataset_jsonl(path: &Path, data: &[LabeledComment]) -> Result<()> {
    let mut out = Vec::new();
    for c in data {
        serde_json::to_writer(&mut out, c)?;
        out.push(b'\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset_jsonl(path: &Path) -> Result<Vec<LabeledComment>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: LabeledComment = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), n + 1)))?;
        c.validate()?;
        out.push(c);
    }
    Ok(out)
}

const SCORE_COLUMN: &str = "usVSthem_scale";

/// CSV export: `id,body,bias,group,usVSthem_scale,binary,<12 emotions>,Neutral,split`.
pub fn write_dataset_csv(path: &Path, data: &[LabeledComment]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        ["id", "body", "bias", "group", SCORE_COLUMN, "binary"].iter().map(|s| s.to_string()).collect();
    header.extend(Emotion::ALL.iter().map(|e| e.as_str().to_string()));
    header.push("Neutral".into());
    header.push("split".into());
    w.write_record(&header)?;
    for c in data {
        let mut rec = vec![
            c.unit_id.clone(),
            c.body.clone(),
            c.bias.as_str().to_string(),
            c.group.as_str().to_string(),
            format!("{:.12}", c.usvsthem),
            c.binary.to_string(),
        ];
        rec.extend(Emotion::ALL.iter().map(|e| u8::from(c.has_emotion(*e)).to_string()));
        rec.push(u8::from(c.neutral_emotion).to_string());
        rec.push(c.split.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_flag(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "1" | "1.0" | "true" | "yes")
}

/// Read a dataset CSV. Header names are matched case-insensitively, so both
/// this crate's export and the public release layout (`body`, `bias`,
/// `group`, `usVSthem_scale`, one 0/1 column per emotion, `Neutral`) load.
/// Missing `binary` is derived from the score; missing `split` means train.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<LabeledComment>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let col = |names: &[&str]| names.iter().find_map(|n| headers.iter().position(|h| h == n));
    let body_c = col(&["body", "text", "comment"]).ok_or_else(|| Error::Parse("missing body column".into()))?;
    let score_c = col(&["usvsthem_scale", "usvsthem", "score"])
        .ok_or_else(|| Error::Parse("missing usVSthem_scale column".into()))?;
    let group_c = col(&["group"]).ok_or_else(|| Error::Parse("missing group column".into()))?;
    let bias_c = col(&["bias"]).ok_or_else(|| Error::Parse("missing bias column".into()))?;
    let id_c = col(&["id", "unit_id"]);
    let bin_c = col(&["binary"]);
    let split_c = col(&["split"]);
    let neutral_c = col(&["neutral"]);
    let emo_c: Vec<(Emotion, Option<usize>)> =
        Emotion::ALL.iter().map(|e| (*e, col(&[&e.as_str().to_ascii_lowercase()]))).collect();

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let usvsthem: f64 = get(score_c)
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad score `{}`", row + 2, get(score_c))))?;
        let emotions = emo_c.iter().filter(|(_, c)| c.is_some_and(|c| parse_flag(get(c)))).map(|(e, _)| *e).collect();
        let split = match split_c.map(|c| get(c).trim().to_ascii_lowercase()) {
            Some(s) if s == "test" => Split::Test,
            Some(s) if s == "dev" || s == "validation" || s == "valid" => Split::Dev,
            _ => Split::Train,
        };
        out.push(LabeledComment {
            unit_id: id_c.map(|c| get(c).to_string()).unwrap_or_else(|| format!("row{}", row + 1)),
            body: get(body_c).to_string(),
            group: get(group_c).parse()?,
            bias: get(bias_c).parse()?,
            usvsthem,
            binary: bin_c.map(|c| u8::from(parse_flag(get(c)))).unwrap_or_else(|| binary_label(usvsthem)),
            emotions,
            neutral_emotion: neutral_c.is_some_and(|c| parse_flag(get(c))),
            split,
        });
    }
    Ok(out)
}
