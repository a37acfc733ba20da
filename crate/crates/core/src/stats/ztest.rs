use super::dist::normal_two_sided;
use super::TestResult;
use crate::error::{Error, Result};

const METHOD: &str = "two-proportion z-test";

/// Two-sided pooled z-test for the difference of two proportions
/// `c1/n1` and `c2/n2`.
pub fn two_proportion_ztest(c1: u64, n1: u64, c2: u64, n2: u64) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::domain("z-test needs non-empty samples"));
    }
    if c1 > n1 || c2 > n2 {
        return Err(Error::domain(format!("counts exceed sample sizes ({c1}/{n1}, {c2}/{n2})")));
    }
    let (p1, p2) = (c1 as f64 / n1 as f64, c2 as f64 / n2 as f64);
    let pooled = (c1 + c2) as f64 / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    if var == 0.0 {
        // pooled proportion is 0 or 1, so both samples agree exactly
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, df: None, method: METHOD.into() });
    }
    let z = (p1 - p2) / var.sqrt();
    Ok(TestResult { statistic: z, p_value: normal_two_sided(z), df: None, method: METHOD.into() })
}
