use serde::{Deserialize, Serialize};

use super::numeric::pearson;
use crate::aggregate::LabeledComment;
use crate::error::{Error, Result};
use crate::types::Emotion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Columns with no variance; their correlations are reported as 0.
    pub constant_columns: Vec<String>,
    /// Agglomeration steps; cluster ids `< n` are leaves, `n + i` is the
    /// cluster created by step `i`.
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<String>,
}

impl Heatmap {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.matrix[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("label,{}\n", self.labels.join(","));
        for (l, row) in self.labels.iter().zip(&self.matrix) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            s.push_str(&format!("{l},{}\n", cells.join(",")));
        }
        s
    }
}

/// Correlation matrix of the named columns plus average-linkage clustering
/// on `1 - r`.
pub fn correlation_heatmap(labels: Vec<String>, columns: &[Vec<f64>]) -> Result<Heatmap> {
    let k = columns.len();
    if k != labels.len() {
        return Err(Error::domain("heatmap: label count mismatch"));
    }
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::domain("heatmap needs at least 2 rows of equal length"));
    }
    let mut constant = vec![false; k];
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        matrix[i][i] = 1.0;
        for j in i + 1..k {
            let r = match pearson(&columns[i], &columns[j]) {
                Some(r) => r,
                None => {
                    if columns[i].iter().all(|v| *v == columns[i][0]) {
                        constant[i] = true;
                    }
                    if columns[j].iter().all(|v| *v == columns[j][0]) {
                        constant[j] = true;
                    }
                    0.0
                }
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    let (merges, leaves) = average_linkage(&matrix);
    Ok(Heatmap {
        constant_columns: labels.iter().zip(&constant).filter(|(_, c)| **c).map(|(l, _)| l.clone()).collect(),
        leaf_order: leaves.into_iter().map(|i| labels[i].clone()).collect(),
        labels,
        matrix,
        merges,
    })
}

/// UPGMA on distance `1 - r`. Returns merge steps and the dendrogram leaf
/// order (left subtree first, left = smaller cluster id).
fn average_linkage(corr: &[Vec<f64>]) -> (Vec<Merge>, Vec<usize>) {
    let n = corr.len();
    let mut dist: Vec<Vec<f64>> = corr.iter().map(|row| row.iter().map(|r| 1.0 - r).collect()).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while active.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                if dist[a][b] < best.2 {
                    best = (a, b, dist[a][b]);
                }
            }
        }
        let (a, b, d) = best;
        let (sa, sb) = (members[a].len() as f64, members[b].len() as f64);
        for &c in &active {
            if c != a && c != b {
                let v = (sa * dist[a][c] + sb * dist[b][c]) / (sa + sb);
                dist[a][c] = v;
                dist[c][a] = v;
            }
        }
        let (left, right) = if ids[a] < ids[b] { (a, b) } else { (b, a) };
        let mut joined = members[left].clone();
        joined.extend(members[right].iter().copied());
        merges.push(Merge { left: ids[left], right: ids[right], distance: d, size: joined.len() });
        members[a] = joined;
        ids[a] = n + merges.len() - 1;
        active.retain(|&c| c != b);
    }
    let order = active.first().map(|&a| members[a].clone()).unwrap_or_default();
    (merges, order)
}

/// Heatmap over the twelve emotions, `Neutral` and the UsVsThem score.
pub fn emotion_correlation_heatmap(data: &[LabeledComment]) -> Result<Heatmap> {
    let mut labels: Vec<String> = Emotion::ALL.iter().map(|e| e.as_str().to_string()).collect();
    labels.push("Neutral".into());
    labels.push("UsVsThem".into());
    let mut columns: Vec<Vec<f64>> = Emotion::ALL
        .iter()
        .map(|e| data.iter().map(|c| f64::from(u8::from(c.has_emotion(*e)))).collect())
        .collect();
    columns.push(data.iter().map(|c| f64::from(u8::from(c.neutral_emotion))).collect());
    columns.push(data.iter().map(|c| c.usvsthem).collect());
    correlation_heatmap(labels, &columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_and_exclusive_columns() {
        let a = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let b: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
        let score = vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3];
        let flat = vec![1.0; 6];
        let h = correlation_heatmap(vec!["a".into(), "b".into(), "s".into(), "flat".into()], &[a, b, score, flat]).unwrap();
        assert!(h.get("a", "s").unwrap() > 0.9);
        assert!(h.get("a", "b").unwrap() < 0.0);
        assert_eq!(h.get("flat", "a").unwrap(), 0.0);
        assert_eq!(h.constant_columns, vec!["flat".to_string()]);
        assert_eq!(h.merges.len(), 3);
        // a and s are merged first
        assert_eq!((h.merges[0].left, h.merges[0].right), (0, 2));
        assert_eq!(h.leaf_order.len(), 4);
    }
}
