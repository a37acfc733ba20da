use std::fmt::Display;

use serde::{Deserialize, Serialize};

use super::dist::studentized_range_sf;
use super::numeric::{mean, pairwise_sum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyComparison {
    pub level_a: String,
    pub level_b: String,
    pub mean_diff: f64,
    pub q: f64,
    pub p_adj: f64,
    pub reject: bool,
    /// Zero pooled variance with unequal means.
    pub degenerate: bool,
}

/// Tukey-Kramer honest significant difference test over all pairs of
/// groups, at family-wise level `alpha`. Pairs come out in input order
/// (`(0,1), (0,2), ..., (1,2), ...`), with `mean_diff = mean_b - mean_a`.
pub fn tukey_hsd<L: Display>(groups: &[(L, Vec<f64>)], alpha: f64) -> Result<Vec<TukeyComparison>> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::domain("Tukey HSD needs at least two groups"));
    }
    if let Some((l, _)) = groups.iter().find(|(_, ys)| ys.len() < 2) {
        return Err(Error::domain(format!("group `{l}` has fewer than two observations")));
    }
    let n_total: usize = groups.iter().map(|(_, ys)| ys.len()).sum();
    let df = (n_total - k) as f64;
    if df < 1.0 {
        return Err(Error::domain("Tukey HSD needs residual degrees of freedom"));
    }
    let means: Vec<f64> = groups.iter().map(|(_, ys)| mean(ys)).collect();
    let ss: Vec<f64> = groups
        .iter()
        .zip(&means)
        .map(|((_, ys), m)| pairwise_sum(&ys.iter().map(|y| (y - m) * (y - m)).collect::<Vec<_>>()))
        .collect();
    let mse = pairwise_sum(&ss) / df;

    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[j] - means[i];
            let (ni, nj) = (groups[i].1.len() as f64, groups[j].1.len() as f64);
            let se = (mse / 2.0 * (1.0 / ni + 1.0 / nj)).sqrt();
            let (q, p) = if diff == 0.0 {
                (0.0, 1.0)
            } else if se == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let q = diff.abs() / se;
                (q, studentized_range_sf(q, k, df))
            };
            out.push(TukeyComparison {
                level_a: groups[i].0.to_string(),
                level_b: groups[j].0.to_string(),
                mean_diff: diff,
                q,
                p_adj: p,
                reject: p < alpha,
                degenerate: se == 0.0 && diff != 0.0,
            });
        }
    }
    Ok(out)
}

pub fn tukey_to_csv(rows: &[TukeyComparison]) -> String {
    let mut s = String::from("group1,group2,meandiff,q,p_adj,reject\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.10},{:.10},{:.10},{}\n", r.level_a, r.level_b, r.mean_diff, r.q, r.p_adj, r.reject));
    }
    s
}
