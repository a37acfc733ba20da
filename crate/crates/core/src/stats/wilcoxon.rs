use super::dist::normal_cdf;
use super::numeric::average_ranks;
use super::TestResult;

/// Largest sample handled by the exact null distribution.
pub const EXACT_MAX_N: usize = 50;

/// One-sided Wilcoxon signed-rank test of `H1: median(xs) > 0`.
///
/// Zeros are dropped. Tied magnitudes get average ranks. For up to
/// [`EXACT_MAX_N`] non-zero values the p-value comes from the exact
/// permutation distribution of `W+` given the observed ranks; beyond that a
/// tie-corrected normal approximation with continuity correction is used.
pub fn wilcoxon_signed_rank_greater(xs: &[f64]) -> TestResult {
    let d: Vec<f64> = xs.iter().copied().filter(|x| *x != 0.0 && x.is_finite()).collect();
    let n = d.len();
    if n == 0 {
        return TestResult { statistic: 0.0, p_value: 1.0, df: None, method: "Wilcoxon signed-rank".into() };
    }
    let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();

    let p = if n <= EXACT_MAX_N {
        // doubled ranks are integers even with ties
        let r2: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = r2.iter().sum();
        let mut dist = vec![0.0f64; total + 1];
        dist[0] = 1.0;
        let mut reach = 0;
        for &r in &r2 {
            for s in (0..=reach).rev() {
                let v = dist[s] * 0.5;
                dist[s] = v;
                dist[s + r] += v;
            }
            reach += r;
        }
        let w2 = (2.0 * w_plus).round() as usize;
        dist[w2..].iter().sum::<f64>()
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w_plus - mean - 0.5) / var.sqrt();
            normal_cdf(-z)
        }
    };
    TestResult { statistic: w_plus, p_value: p.clamp(0.0, 1.0), df: None, method: "Wilcoxon signed-rank".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_positive_small() {
        // only one of the 2^5 sign patterns reaches W+ = 15
        let r = wilcoxon_signed_rank_greater(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(r.statistic, 15.0);
        assert_abs_diff_eq!(r.p_value, 1.0 / 32.0, epsilon = 1e-15);
    }

    #[test]
    fn zeros_dropped_and_empty() {
        assert_eq!(wilcoxon_signed_rank_greater(&[0.0, 0.0]).p_value, 1.0);
        let r = wilcoxon_signed_rank_greater(&[0.0, 1.0]);
        assert_abs_diff_eq!(r.p_value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exact_and_normal_agree_roughly() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37 % 50) as f64 - 20.0) / 10.0 + 0.05).collect();
        let exact = wilcoxon_signed_rank_greater(&xs).p_value;
        let mut more = xs.clone();
        more.push(0.001);
        more.push(-0.001);
        let approx = wilcoxon_signed_rank_greater(&more).p_value;
        assert!((exact - approx).abs() < 0.05, "{exact} vs {approx}");
    }
}
