//! Two-way ANOVA with interaction and Type II sums of squares.

use std::collections::BTreeMap;
use std::fmt::Display;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::f_sf;
use super::numeric::pairwise_sum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub term: String,
    pub sum_sq: f64,
    pub df: f64,
    pub mean_sq: f64,
    pub f: Option<f64>,
    pub p_value: Option<f64>,
    pub partial_eta_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
}

impl AnovaTable {
    pub fn row(&self, term: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.term == term)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        let mut s = String::from("term,sum_sq,df,mean_sq,F,p_value,partial_eta_sq\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.10},{},{:.10},{},{},{}\n",
                r.term,
                r.sum_sq,
                r.df,
                r.mean_sq,
                opt(r.f),
                opt(r.p_value),
                opt(r.partial_eta_sq)
            ));
        }
        s
    }
}

struct Cell {
    n: f64,
    sum: f64,
    mean: f64,
    ss_within: f64,
}

fn ss_about_mean(ys: &[f64]) -> (f64, f64) {
    let mean = pairwise_sum(ys) / ys.len() as f64;
    let sq: Vec<f64> = ys.iter().map(|y| (y - mean) * (y - mean)).collect();
    (mean, pairwise_sum(&sq))
}

/// Residual sum of squares of the main-effects model `y ~ A + B`, fitted by
/// least squares on treatment-coded dummies.
fn additive_rss(cells: &BTreeMap<(usize, usize), Cell>, na: usize, nb: usize) -> Result<f64> {
    let p = 1 + (na - 1) + (nb - 1);
    let col_a = |i: usize| (i > 0).then_some(i);
    let col_b = |j: usize| (j > 0).then(|| na - 1 + j);
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (&(i, j), c) in cells {
        let cols: Vec<usize> = std::iter::once(0).chain(col_a(i)).chain(col_b(j)).collect();
        for &r in &cols {
            xty[r] += c.sum;
            for &s in &cols {
                xtx[(r, s)] += c.n;
            }
        }
    }
    let beta = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx
            .lu()
            .solve(&xty)
            .ok_or_else(|| Error::domain("additive model is not identifiable"))?,
    };
    let mut parts = Vec::with_capacity(cells.len());
    for (&(i, j), c) in cells {
        let fitted = beta[0] + col_a(i).map_or(0.0, |k| beta[k]) + col_b(j).map_or(0.0, |k| beta[k]);
        parts.push(c.ss_within + c.n * (c.mean - fitted).powi(2));
    }
    Ok(pairwise_sum(&parts))
}

/// Two-way ANOVA of `y ~ A * B` with Type II sums of squares. Rows are
/// `Intercept` (`N * mean^2`), `name_a`, `name_b`, `name_a:name_b` and
/// `Residual`. Every cell of the observed level grid must be non-empty.
pub fn two_way_anova<A, B>(obs: &[(A, B, f64)], name_a: &str, name_b: &str) -> Result<AnovaTable>
where
    A: Ord + Clone + Display,
    B: Ord + Clone + Display,
{
    if obs.iter().any(|o| !o.2.is_finite()) {
        return Err(Error::domain("non-finite observation"));
    }
    let levels_a: Vec<A> = obs.iter().map(|o| o.0.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let levels_b: Vec<B> = obs.iter().map(|o| o.1.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let (na, nb) = (levels_a.len(), levels_b.len());
    if na < 2 || nb < 2 {
        return Err(Error::domain("each factor needs at least two levels"));
    }
    let mut grouped: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut by_a: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut by_b: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (a, b, y) in obs {
        let i = levels_a.binary_search(a).unwrap();
        let j = levels_b.binary_search(b).unwrap();
        grouped.entry((i, j)).or_default().push(*y);
        by_a.entry(i).or_default().push(*y);
        by_b.entry(j).or_default().push(*y);
    }
    for (i, a) in levels_a.iter().enumerate() {
        for (j, b) in levels_b.iter().enumerate() {
            if !grouped.contains_key(&(i, j)) {
                return Err(Error::domain(format!("empty cell ({a}, {b})")));
            }
        }
    }
    let n = obs.len() as f64;
    let df_a = (na - 1) as f64;
    let df_b = (nb - 1) as f64;
    let df_ab = df_a * df_b;
    let df_e = n - (na * nb) as f64;
    if df_e < 1.0 {
        return Err(Error::domain("no residual degrees of freedom"));
    }

    let cells: BTreeMap<(usize, usize), Cell> = grouped
        .iter()
        .map(|(&k, ys)| {
            let (mean, ss_within) = ss_about_mean(ys);
            (k, Cell { n: ys.len() as f64, sum: pairwise_sum(ys), mean, ss_within })
        })
        .collect();
    let rss_full = pairwise_sum(&cells.values().map(|c| c.ss_within).collect::<Vec<_>>());
    let rss_only = |m: &BTreeMap<usize, Vec<f64>>| pairwise_sum(&m.values().map(|ys| ss_about_mean(ys).1).collect::<Vec<_>>());
    let rss_a = rss_only(&by_a);
    let rss_b = rss_only(&by_b);
    let rss_add = additive_rss(&cells, na, nb)?;

    let ys: Vec<f64> = obs.iter().map(|o| o.2).collect();
    let grand = pairwise_sum(&ys) / n;
    // differences of residual sums below this are rounding noise
    let eps = 1e-12 * pairwise_sum(&ys.iter().map(|y| y * y).collect::<Vec<_>>());
    let snap = |x: f64| if x <= eps { 0.0 } else { x };
    let ss_a = snap(rss_b - rss_add);
    let ss_b = snap(rss_a - rss_add);
    let ss_ab = snap(rss_add - rss_full);
    let ss_e = snap(rss_full);
    let mse = ss_e / df_e;

    let effect = |term: String, ss: f64, df: f64, with_eta: bool| {
        let (f, p) = if ss == 0.0 {
            (0.0, 1.0)
        } else if mse == 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            let f = (ss / df) / mse;
            (f, f_sf(f, df, df_e))
        };
        let eta = with_eta.then(|| if ss + ss_e > 0.0 { ss / (ss + ss_e) } else { 0.0 });
        AnovaRow { term, sum_sq: ss, df, mean_sq: ss / df, f: Some(f), p_value: Some(p), partial_eta_sq: eta }
    };
    let rows = vec![
        effect("Intercept".into(), n * grand * grand, 1.0, false),
        effect(name_a.to_string(), ss_a, df_a, true),
        effect(name_b.to_string(), ss_b, df_b, true),
        effect(format!("{name_a}:{name_b}"), ss_ab, df_ab, true),
        AnovaRow {
            term: "Residual".into(),
            sum_sq: ss_e,
            df: df_e,
            mean_sq: mse,
            f: None,
            p_value: None,
            partial_eta_sq: None,
        },
    ];
    Ok(AnovaTable { rows })
}
