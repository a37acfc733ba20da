//! Leave-one-rater-out agreement: each rater's labels against the mean of
//! the other raters on the same items.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::numeric::spearman;
use crate::crowdtruth::WorkerVector;

/// Minimum number of shared items for a rater to be scored.
pub const MIN_SHARED_ITEMS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub rater: String,
    pub item: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterraterResult {
    /// Spearman correlation per scored rater, sorted by rater id.
    pub per_rater: Vec<(String, f64)>,
    pub mean: Option<f64>,
    /// Raters whose own labels or the others' means were constant.
    pub skipped_zero_variance: usize,
    pub skipped_too_few_items: usize,
}

/// One dimension of a set of multi-label annotations as real ratings.
pub fn ratings_for_dimension(annotations: &[WorkerVector], dim: usize) -> Vec<Rating> {
    annotations
        .iter()
        .map(|a| Rating {
            rater: a.worker_id.clone(),
            item: a.unit_id.clone(),
            value: f64::from(a.selections[dim]),
        })
        .collect()
}

pub fn interrater_spearman(ratings: &[Rating]) -> InterraterResult {
    let mut totals: HashMap<&str, (f64, usize)> = HashMap::new();
    for r in ratings {
        let t = totals.entry(&r.item).or_default();
        t.0 += r.value;
        t.1 += 1;
    }
    let mut by_rater: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
    for r in ratings {
        by_rater.entry(&r.rater).or_default().push(r);
    }
    let mut out = InterraterResult { per_rater: Vec::new(), mean: None, skipped_zero_variance: 0, skipped_too_few_items: 0 };
    for (rater, mut rs) in by_rater {
        rs.sort_by(|a, b| a.item.cmp(&b.item));
        let (mut own, mut others) = (Vec::new(), Vec::new());
        for r in rs {
            let (sum, count) = totals[r.item.as_str()];
            if count < 2 {
                continue;
            }
            own.push(r.value);
            others.push((sum - r.value) / (count - 1) as f64);
        }
        if own.len() < MIN_SHARED_ITEMS {
            out.skipped_too_few_items += 1;
            continue;
        }
        match spearman(&own, &others) {
            Some(rho) => out.per_rater.push((rater.to_string(), rho)),
            None => out.skipped_zero_variance += 1,
        }
    }
    if !out.per_rater.is_empty() {
        out.mean = Some(out.per_rater.iter().map(|p| p.1).sum::<f64>() / out.per_rater.len() as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(rater: &str, item: usize, value: f64) -> Rating {
        Rating { rater: rater.into(), item: format!("i{item}"), value }
    }

    #[test]
    fn perfect_agreement() {
        let mut rs = Vec::new();
        for item in 0..6 {
            for rater in ["a", "b", "c"] {
                rs.push(r(rater, item, item as f64));
            }
        }
        let out = interrater_spearman(&rs);
        assert_eq!(out.per_rater.len(), 3);
        assert!((out.mean.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rater_is_skipped() {
        let mut rs = Vec::new();
        for item in 0..6 {
            rs.push(r("a", item, 1.0));
            rs.push(r("b", item, item as f64));
            rs.push(r("c", item, (item % 2) as f64));
        }
        rs.push(r("d", 0, 1.0));
        let out = interrater_spearman(&rs);
        assert_eq!(out.skipped_zero_variance, 1);
        assert_eq!(out.skipped_too_few_items, 1);
        assert_eq!(out.per_rater.len(), 2);
    }
}
