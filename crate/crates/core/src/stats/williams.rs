use super::dist::t_sf;
use super::numeric::pearson;
use super::TestResult;
use crate::error::{Error, Result};

/// Williams' test for the difference between two dependent correlations
/// `r(pred1, gold)` and `r(pred2, gold)` that share the `gold` variable.
/// Returns the t statistic (positive when `pred1` correlates better) and
/// its two-sided p-value on `n - 3` degrees of freedom.
pub fn williams_test(pred1: &[f64], pred2: &[f64], gold: &[f64]) -> Result<TestResult> {
    let n = gold.len();
    if pred1.len() != n || pred2.len() != n {
        return Err(Error::domain("Williams test: length mismatch"));
    }
    if n < 4 {
        return Err(Error::domain("Williams test needs at least 4 observations"));
    }
    if pred1 == pred2 {
        if pearson(pred1, gold).is_none() {
            return Err(Error::domain("Williams test: constant vector"));
        }
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, df: Some(n as f64 - 3.0), method: "Williams t".into() });
    }
    let corr = |a: &[f64], b: &[f64], what: &str| {
        pearson(a, b).ok_or_else(|| Error::domain(format!("Williams test: constant vector in {what}")))
    };
    let r12 = corr(pred1, gold, "pred1/gold")?;
    let r13 = corr(pred2, gold, "pred2/gold")?;
    let r23 = corr(pred1, pred2, "pred1/pred2")?;
    williams_from_correlations(r12, r13, r23, n)
}

/// Williams' t from the three correlations: `r12`, `r13` are the
/// correlations of the two predictors with the shared variable and `r23`
/// the correlation between the predictors.
pub fn williams_from_correlations(r12: f64, r13: f64, r23: f64, n: usize) -> Result<TestResult> {
    if n < 4 {
        return Err(Error::domain("Williams test needs at least 4 observations"));
    }
    if [r12, r13, r23].iter().any(|r| r.abs() >= 1.0) {
        return Err(Error::domain("Williams test undefined for perfectly correlated inputs"));
    }
    let nf = n as f64;
    let k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
    let rbar = (r12 + r13) / 2.0;
    let denom = 2.0 * k * (nf - 1.0) / (nf - 3.0) + rbar * rbar * (1.0 - r23).powi(3);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::domain("Williams test: degenerate correlation matrix"));
    }
    let t = (r12 - r13) * ((nf - 1.0) * (1.0 + r23) / denom).sqrt();
    let df = nf - 3.0;
    Ok(TestResult { statistic: t, p_value: (2.0 * t_sf(t.abs(), df)).min(1.0), df: Some(df), method: "Williams t".into() })
}
