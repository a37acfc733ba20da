//! Distribution functions not covered by `statrs`: the standard normal
//! tails in erfc form and the studentized range distribution.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use libm::erfc;
use statrs::function::gamma::ln_gamma;

use super::numeric::integrate;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Two-sided normal p-value `2 * (1 - Phi(|z|))`, computed without
/// cancellation.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / SQRT_2)
}

/// Upper tail of Student's t with `df` degrees of freedom.
pub fn t_sf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("df > 0").sf(t)
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    FisherSnedecor::new(d1, d2).expect("positive degrees of freedom").sf(f)
}

/// Probability that the range of `k` iid standard normals is below `w`:
/// `k * int phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz`.
pub fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let f = |z: f64| {
        let inner = normal_cdf(z) - normal_cdf(z - w);
        normal_pdf(z) * inner.max(0.0).powi(km1)
    };
    // The integrand is negligible outside [-8.5, 8.5 + w]; split at the
    // peak region so the adaptive rule starts on smooth pieces.
    let hi = 8.5 + w.min(10.0);
    let mid = 0.5 * w;
    let v = integrate(f, -8.5, mid, 1e-13) + integrate(f, mid, hi, 1e-13);
    (k as f64 * v).clamp(0.0, 1.0)
}

fn log_chi_scale_pdf(s: f64, df: f64) -> f64 {
    // density of s = sqrt(chi2_df / df)
    let h = df / 2.0;
    h * df.ln() + (df - 1.0) * s.ln() - df * s * s / 2.0 - ln_gamma(h) - (h - 1.0) * 2f64.ln()
}

/// CDF of the studentized range statistic `Q(k, df)`, by integrating the
/// normal-range CDF against the density of `sqrt(chi2_df / df)`.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs k >= 2");
    assert!(df > 0.0, "studentized range needs df > 0");
    if q <= 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return 1.0;
    }
    if df > 1e5 {
        return normal_range_cdf(q, k);
    }
    let spread = 40.0 / (2.0 * df).sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread;
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        log_chi_scale_pdf(s, df).exp() * normal_range_cdf(q * s, k)
    };
    let mode = ((df - 1.0).max(0.0) / df).sqrt();
    let sd = 1.0 / (2.0 * df).sqrt();
    let mut knots = vec![lo];
    for c in [mode - 4.0 * sd, mode - sd, mode + sd, mode + 4.0 * sd] {
        if c > *knots.last().unwrap() && c < hi {
            knots.push(c);
        }
    }
    knots.push(hi);
    let total: f64 = knots.windows(2).map(|w| integrate(f, w[0], w[1], 1e-11)).sum();
    total.clamp(0.0, 1.0)
}

/// Upper tail `P(Q >= q)` of the studentized range.
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> f64 {
    (1.0 - studentized_range_cdf(q, k, df)).clamp(0.0, 1.0)
}
