//! Bundles the dataset-level analyses into reports that the command line
//! writes out as JSON and CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anova::{two_way_anova, AnovaTable};
use super::heatmap::{emotion_correlation_heatmap, Heatmap};
use super::interrater::{interrater_spearman, ratings_for_dimension, InterraterResult};
use super::ppca::{loro_ppca, ratings_from_annotations, PpcaResult};
use super::tukey::{tukey_hsd, tukey_to_csv, TukeyComparison};
use super::ztest::two_proportion_ztest;
use super::TestResult;
use crate::aggregate::LabeledComment;
use crate::crowdtruth::WorkerVector;
use crate::error::{Error, Result};
use crate::types::{emotion_task_labels, BiasLabel, Emotion, Group};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCell {
    pub group: Group,
    pub bias: BiasLabel,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub emotion: String,
    pub level_a: String,
    pub level_b: String,
    pub proportion_a: f64,
    pub proportion_b: f64,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub mean_table: Vec<MeanCell>,
    pub anova: AnovaTable,
    pub tukey_groups: Vec<TukeyComparison>,
    pub tukey_bias: Vec<TukeyComparison>,
    pub tukey_bias_within_group: BTreeMap<Group, Vec<TukeyComparison>>,
    /// emotion name -> group -> share of the group's comments with it
    pub emotion_by_group: BTreeMap<String, BTreeMap<Group, f64>>,
    pub emotion_by_bias: BTreeMap<String, BTreeMap<BiasLabel, f64>>,
    pub group_proportion_tests: Vec<ProportionTest>,
    pub heatmap: Heatmap,
}

type Indicator = Box<dyn Fn(&LabeledComment) -> bool>;

fn emotion_columns() -> Vec<(String, Indicator)> {
    let mut cols: Vec<(String, Indicator)> = Emotion::ALL
        .iter()
        .map(|&e| (e.as_str().to_string(), Box::new(move |c: &LabeledComment| c.has_emotion(e)) as Indicator))
        .collect();
    cols.push(("Neutral".into(), Box::new(|c: &LabeledComment| c.neutral_emotion)));
    cols
}

pub fn analyze(data: &[LabeledComment]) -> Result<AnalysisReport> {
    if data.len() < 2 {
        return Err(Error::domain("analysis needs at least two comments"));
    }
    let mut cells: BTreeMap<(Group, BiasLabel), Vec<f64>> = BTreeMap::new();
    let mut by_group: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    let mut by_bias: BTreeMap<BiasLabel, Vec<f64>> = BTreeMap::new();
    for c in data {
        cells.entry((c.group, c.bias)).or_default().push(c.usvsthem);
        by_group.entry(c.group).or_default().push(c.usvsthem);
        by_bias.entry(c.bias).or_default().push(c.usvsthem);
    }
    let mean_table = cells
        .iter()
        .map(|(&(group, bias), ys)| MeanCell { group, bias, mean: ys.iter().sum::<f64>() / ys.len() as f64, n: ys.len() })
        .collect();
    let obs: Vec<(Group, BiasLabel, f64)> = data.iter().map(|c| (c.group, c.bias, c.usvsthem)).collect();
    let anova = two_way_anova(&obs, "Groups", "Bias")?;
    let tukey_groups = tukey_hsd(&by_group.into_iter().collect::<Vec<_>>(), ALPHA)?;
    let tukey_bias = tukey_hsd(&by_bias.into_iter().collect::<Vec<_>>(), ALPHA)?;
    let mut tukey_bias_within_group = BTreeMap::new();
    for g in Group::ALL {
        let levels: Vec<(BiasLabel, Vec<f64>)> =
            BiasLabel::ALL.iter().filter_map(|&b| cells.get(&(g, b)).map(|ys| (b, ys.clone()))).collect();
        if levels.len() >= 2 && levels.iter().all(|(_, ys)| ys.len() >= 2) {
            tukey_bias_within_group.insert(g, tukey_hsd(&levels, ALPHA)?);
        }
    }

    let mut emotion_by_group = BTreeMap::new();
    let mut emotion_by_bias = BTreeMap::new();
    let mut group_proportion_tests = Vec::new();
    for (name, has) in emotion_columns() {
        let mut gcount: BTreeMap<Group, (u64, u64)> = BTreeMap::new();
        let mut bcount: BTreeMap<BiasLabel, (u64, u64)> = BTreeMap::new();
        for c in data {
            let hit = u64::from(has(c));
            let g = gcount.entry(c.group).or_default();
            g.0 += hit;
            g.1 += 1;
            let b = bcount.entry(c.bias).or_default();
            b.0 += hit;
            b.1 += 1;
        }
        emotion_by_group.insert(name.clone(), gcount.iter().map(|(&g, &(h, n))| (g, h as f64 / n as f64)).collect());
        emotion_by_bias.insert(name.clone(), bcount.iter().map(|(&b, &(h, n))| (b, h as f64 / n as f64)).collect());
        let groups: Vec<(Group, (u64, u64))> = gcount.into_iter().collect();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let (ga, (ca, na)) = groups[i];
                let (gb, (cb, nb)) = groups[j];
                group_proportion_tests.push(ProportionTest {
                    emotion: name.clone(),
                    level_a: ga.to_string(),
                    level_b: gb.to_string(),
                    proportion_a: ca as f64 / na as f64,
                    proportion_b: cb as f64 / nb as f64,
                    test: two_proportion_ztest(ca, na, cb, nb)?,
                });
            }
        }
    }

    Ok(AnalysisReport {
        n: data.len(),
        mean_table,
        anova,
        tukey_groups,
        tukey_bias,
        tukey_bias_within_group,
        emotion_by_group,
        emotion_by_bias,
        group_proportion_tests,
        heatmap: emotion_correlation_heatmap(data)?,
    })
}

impl AnalysisReport {
    /// Group × bias matrix of mean scores with row and column margins.
    pub fn mean_table_csv(&self) -> String {
        let mut s = String::from("group");
        for b in BiasLabel::ALL {
            s.push(',');
            s.push_str(b.as_str());
        }
        s.push_str(",all\n");
        let lookup: BTreeMap<(Group, BiasLabel), &MeanCell> = self.mean_table.iter().map(|c| ((c.group, c.bias), c)).collect();
        for g in Group::ALL {
            s.push_str(g.as_str());
            let (mut sum, mut n) = (0.0, 0usize);
            for b in BiasLabel::ALL {
                s.push(',');
                if let Some(c) = lookup.get(&(g, b)) {
                    s.push_str(&format!("{:.4}", c.mean));
                    sum += c.mean * c.n as f64;
                    n += c.n;
                }
            }
            if n > 0 {
                s.push_str(&format!(",{:.4}", sum / n as f64));
            } else {
                s.push(',');
            }
            s.push('\n');
        }
        s.push_str("all");
        for b in BiasLabel::ALL {
            let (sum, n) = self
                .mean_table
                .iter()
                .filter(|c| c.bias == b)
                .fold((0.0, 0usize), |(s, n), c| (s + c.mean * c.n as f64, n + c.n));
            if n > 0 {
                s.push_str(&format!(",{:.4}", sum / n as f64));
            } else {
                s.push(',');
            }
        }
        let total: f64 = self.mean_table.iter().map(|c| c.mean * c.n as f64).sum();
        s.push_str(&format!(",{:.4}\n", total / self.n as f64));
        s
    }

    fn proportions_csv<K: Ord + std::fmt::Display + Copy>(table: &BTreeMap<String, BTreeMap<K, f64>>, keys: &[K]) -> String {
        let mut s = String::from("emotion");
        for k in keys {
            s.push_str(&format!(",{k}"));
        }
        s.push('\n');
        for name in emotion_task_labels() {
            if let Some(row) = table.get(&name) {
                s.push_str(&name);
                for k in keys {
                    s.push(',');
                    if let Some(v) = row.get(k) {
                        s.push_str(&format!("{v:.4}"));
                    }
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("mean_usvsthem.csv"), self.mean_table_csv())?;
        fs::write(dir.join("anova.csv"), self.anova.to_csv())?;
        fs::write(dir.join("tukey_groups.csv"), tukey_to_csv(&self.tukey_groups))?;
        fs::write(dir.join("tukey_bias.csv"), tukey_to_csv(&self.tukey_bias))?;
        fs::write(dir.join("emotion_by_group.csv"), Self::proportions_csv(&self.emotion_by_group, &Group::ALL))?;
        fs::write(dir.join("emotion_by_bias.csv"), Self::proportions_csv(&self.emotion_by_bias, &BiasLabel::ALL))?;
        let mut z = String::from("emotion,group1,group2,prop1,prop2,z,p_value\n");
        for t in &self.group_proportion_tests {
            z.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6e}\n",
                t.emotion, t.level_a, t.level_b, t.proportion_a, t.proportion_b, t.test.statistic, t.test.p_value
            ));
        }
        fs::write(dir.join("emotion_ztests.csv"), z)?;
        fs::write(dir.join("heatmap.csv"), self.heatmap.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    /// label -> leave-one-rater-out Spearman summary
    pub interrater: BTreeMap<String, InterraterResult>,
    pub ppca: Option<PpcaResult>,
}

/// Inter-rater Spearman per emotion dimension and leave-one-rater-out PPCA
/// over the 13-dimensional emotion annotations.
pub fn reliability(annotations: &[WorkerVector]) -> Result<ReliabilityReport> {
    let labels = emotion_task_labels();
    let mut interrater = BTreeMap::new();
    for (d, name) in labels.iter().enumerate() {
        interrater.insert(name.clone(), interrater_spearman(&ratings_for_dimension(annotations, d)));
    }
    let by_rater = ratings_from_annotations(annotations);
    let ppca = if by_rater.len() >= super::ppca::MIN_RATERS { Some(loro_ppca(&by_rater)?) } else { None };
    Ok(ReliabilityReport { interrater, ppca })
}

impl ReliabilityReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("reliability.json"), serde_json::to_string_pretty(self)?)?;
        let mut s = String::from("label,mean_spearman,raters,skipped_zero_variance,skipped_too_few_items\n");
        for (label, r) in &self.interrater {
            s.push_str(&format!(
                "{label},{},{},{},{}\n",
                r.mean.map(|m| format!("{m:.4}")).unwrap_or_default(),
                r.per_rater.len(),
                r.skipped_zero_variance,
                r.skipped_too_few_items
            ));
        }
        fs::write(dir.join("interrater.csv"), s)?;
        if let Some(p) = &self.ppca {
            let mut s = String::from("component,n_raters,mean_correlation,w_plus,p_value,p_bonferroni\n");
            for t in &p.tests {
                s.push_str(&format!(
                    "{},{},{:.4},{},{:.6e},{:.6e}\n",
                    t.index, t.n_raters, t.mean_correlation, t.w_plus, t.p_value, t.p_bonferroni
                ));
            }
            fs::write(dir.join("ppca.csv"), s)?;
        }
        Ok(())
    }
}
