use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use usvsthem_core::stats::dist::{normal_cdf, normal_two_sided, studentized_range_sf};
use usvsthem_core::stats::heatmap::correlation_heatmap;
use usvsthem_core::stats::interrater::{interrater_spearman, Rating};
use usvsthem_core::stats::numeric::spearman;
use usvsthem_core::stats::ppca::{loro_ppca, loro_ppca_with, ppca_components, PpcaConfig, RatingsByRater};
use usvsthem_core::stats::wilcoxon::wilcoxon_signed_rank_greater;
use usvsthem_core::stats::williams::williams_from_correlations;
use usvsthem_core::stats::{paired_permutation_test, tukey_hsd, two_proportion_ztest, two_way_anova, williams_test};

/// Adaptive Simpson on the standard normal density; independent of erf.
fn simpson_cdf(z: f64) -> f64 {
    fn pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
    fn simpson(a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (pdf(a) + 4.0 * pdf(m) + pdf(b))
    }
    fn rec(a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(a, m), simpson(m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            rec(a, m, l, tol / 2.0, depth - 1) + rec(m, b, r, tol / 2.0, depth - 1)
        }
    }
    let half = rec(0.0, z.abs(), simpson(0.0, z.abs()), 1e-17, 50);
    if z >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

#[test]
fn normal_cdf_within_1e12_of_quadrature() {
    for z in [-6.0, -3.3, -2.0, -1.0, -0.25, 0.0, 0.5, 1.0, 1.96, 2.5, 4.0] {
        assert_abs_diff_eq!(normal_cdf(z), simpson_cdf(z), epsilon = 1e-12);
    }
}

#[test]
fn ztest_equal_proportions() {
    let r = two_proportion_ztest(30, 100, 30, 100).unwrap();
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
}

#[test]
fn ztest_fifty_vs_thirty() {
    let r = two_proportion_ztest(50, 100, 30, 100).unwrap();
    // 40-digit closed form
    assert_abs_diff_eq!(r.statistic, 2.8867513459481288, epsilon = 1e-12);
    assert_abs_diff_eq!(r.p_value, 0.0038924171227786295, epsilon = 1e-12);
    assert_abs_diff_eq!(r.p_value, 2.0 * (1.0 - simpson_cdf(r.statistic)), epsilon = 1e-12);
}

#[test]
fn ztest_degenerate_pooled_proportion() {
    let r = two_proportion_ztest(0, 10, 0, 20).unwrap();
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    assert!(two_proportion_ztest(5, 4, 1, 2).is_err());
    assert!(two_proportion_ztest(0, 0, 1, 2).is_err());
}

#[test]
fn anova_constant_response() {
    let obs: Vec<(u8, u8, f64)> = (0..24).map(|i| ((i % 3) as u8, (i % 2) as u8, 4.2)).collect();
    let t = two_way_anova(&obs, "A", "B").unwrap();
    for term in ["A", "B", "A:B"] {
        let row = t.row(term).unwrap();
        assert_eq!(row.sum_sq, 0.0);
        assert_eq!(row.f, Some(0.0));
        assert_eq!(row.p_value, Some(1.0));
    }
}

fn unbalanced() -> Vec<(&'static str, &'static str, f64)> {
    let ys = [
        2.75, 0.5, 4.0, 3.05, 6.55, 4.3, 2.05, 5.55, 2.7, 6.2, 3.95, 1.7, 7.4, 5.15, 1.4, 4.9, 2.65, 6.15, 3.9, 1.65,
        8.25, 6.0, 9.5,
    ];
    let cells = [("g1", "b1", 3), ("g1", "b2", 5), ("g2", "b1", 4), ("g2", "b2", 2), ("g3", "b1", 6), ("g3", "b2", 3)];
    let mut out = Vec::new();
    let mut it = ys.iter();
    for (a, b, n) in cells {
        for _ in 0..n {
            out.push((a, b, *it.next().unwrap()));
        }
    }
    out
}

#[test]
fn anova_unbalanced_type_ii_reference() {
    // reference: OLS y ~ C(a)*C(b), Type II table
    let t = two_way_anova(&unbalanced(), "a", "b").unwrap();
    let a = t.row("a").unwrap();
    let b = t.row("b").unwrap();
    let ab = t.row("a:b").unwrap();
    let e = t.row("Residual").unwrap();
    assert_abs_diff_eq!(a.sum_sq, 21.20160307692311, epsilon = 1e-9);
    assert_abs_diff_eq!(b.sum_sq, 49.13920083333327, epsilon = 1e-9);
    assert_abs_diff_eq!(ab.sum_sq, 6.837778333333334, epsilon = 1e-9);
    assert_abs_diff_eq!(e.sum_sq, 57.338541666666664, epsilon = 1e-9);
    assert_eq!((a.df, b.df, ab.df, e.df), (2.0, 1.0, 2.0, 17.0));
    assert_abs_diff_eq!(a.f.unwrap(), 3.1429754039003104, epsilon = 1e-9);
    assert_abs_diff_eq!(b.f.unwrap(), 14.56902093923152, epsilon = 1e-9);
    assert_abs_diff_eq!(ab.f.unwrap(), 1.0136483095649016, epsilon = 1e-9);
    assert_abs_diff_eq!(a.p_value.unwrap(), 0.06894726425307464, epsilon = 1e-9);
    assert_abs_diff_eq!(b.p_value.unwrap(), 0.001379186043824993, epsilon = 1e-9);
    assert_abs_diff_eq!(ab.p_value.unwrap(), 0.38380495688405725, epsilon = 1e-9);
    assert_abs_diff_eq!(ab.partial_eta_sq.unwrap(), 6.837778333333334 / (6.837778333333334 + 57.338541666666664), epsilon = 1e-12);
}

#[test]
fn anova_empty_cell_is_named() {
    let mut obs = unbalanced();
    obs.retain(|o| !(o.0 == "g2" && o.1 == "b2"));
    let err = two_way_anova(&obs, "a", "b").unwrap_err().to_string();
    assert!(err.contains("g2") && err.contains("b2"), "{err}");
}

#[test]
fn anova_ignores_observation_order() {
    let obs = unbalanced();
    let mut rev = obs.clone();
    rev.reverse();
    let (x, y) = (two_way_anova(&obs, "a", "b").unwrap(), two_way_anova(&rev, "a", "b").unwrap());
    for (r, s) in x.rows.iter().zip(&y.rows) {
        assert_abs_diff_eq!(r.sum_sq, s.sum_sq, epsilon = 1e-9);
    }
}

fn spread(mean: f64) -> Vec<f64> {
    [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|d| mean + d).collect()
}

#[test]
fn tukey_matches_published_table() {
    // k = 3, n = 5 each: MSE = 2.5 on df 12, so q = diff / sqrt(0.5)
    let se = 0.5f64.sqrt();
    for (q_table, alpha) in [(3.773, 0.05), (5.046, 0.01)] {
        let groups = vec![("a", spread(10.0)), ("b", spread(10.0)), ("c", spread(10.0 + q_table * se))];
        let out = tukey_hsd(&groups, 0.05).unwrap();
        assert_eq!((out[0].q, out[0].p_adj), (0.0, 1.0));
        assert_abs_diff_eq!(out[1].q, q_table, epsilon = 1e-9);
        assert_abs_diff_eq!(out[1].p_adj, alpha, epsilon = 1e-3);
        assert_abs_diff_eq!(out[2].p_adj, alpha, epsilon = 1e-3);
    }
}

#[test]
fn tukey_reference_p_values() {
    let groups = vec![
        ("x", vec![2.0, 3.0, 4.0, 5.0, 6.0]),
        ("y", vec![3.0, 4.0, 5.0, 6.0, 7.0]),
        ("z", vec![6.0, 7.0, 8.0, 9.0, 10.5]),
    ];
    let out = tukey_hsd(&groups, 0.05).unwrap();
    let want = [0.6114846155247673, 0.004995925758147113, 0.028110153604554045];
    for (c, w) in out.iter().zip(want) {
        assert_abs_diff_eq!(c.p_adj, w, epsilon = 1e-4);
    }
    assert_eq!(out.iter().map(|c| c.reject).collect::<Vec<_>>(), [false, true, true]);
    assert_abs_diff_eq!(out[1].mean_diff, 4.1, epsilon = 1e-12);
}

#[test]
fn tukey_identical_and_degenerate() {
    let out = tukey_hsd(&[("a", vec![1.0, 2.0, 3.0]), ("b", vec![1.0, 2.0, 3.0])], 0.05).unwrap();
    assert_eq!((out[0].q, out[0].p_adj), (0.0, 1.0));
    let out = tukey_hsd(&[("a", vec![1.0, 1.0]), ("b", vec![2.0, 2.0])], 0.05).unwrap();
    assert!(out[0].degenerate);
    assert_eq!(out[0].p_adj, 0.0);
    assert!(tukey_hsd(&[("a", vec![1.0]), ("b", vec![2.0, 3.0])], 0.05).is_err());
}

#[test]
fn studentized_range_reference_values() {
    let cases = [
        (3.773, 3, 12.0, 0.04999558517972025),
        (5.046, 3, 12.0, 0.009999172846356208),
        (3.958, 4, 20.0, 0.050021211135152455),
        (4.654, 5, 10.0, 0.050016081913713095),
        (2.0, 3, 12.0, 0.36477201436894036),
        (1.0, 2, 5.0, 0.5110840804302805),
        (6.0, 6, 30.0, 0.0024551705888746778),
        (3.5, 10, 1000.0, 0.2833474423622997),
        (4.0, 3, 2.0, 0.18572153742340736),
    ];
    for (q, k, df, want) in cases {
        let got = studentized_range_sf(q, k, df);
        assert!((got - want).abs() <= 1e-4, "q={q} k={k} df={df}: {got} vs {want}");
    }
}

#[test]
fn williams_identical_predictions() {
    let gold = [1.0, 2.0, 4.0, 3.0, 6.0, 5.0];
    let pred = [1.5, 2.5, 3.0, 3.5, 5.0, 5.5];
    let r = williams_test(&pred, &pred, &gold).unwrap();
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
}

#[test]
fn williams_reference_formula() {
    let r = williams_from_correlations(0.8, 0.6, 0.5, 100).unwrap();
    assert_abs_diff_eq!(r.statistic, 3.345450034810471893, epsilon = 1e-6);
    assert_abs_diff_eq!(r.p_value, 0.0011693683686030117, epsilon = 1e-9);
    assert_eq!(r.df, Some(97.0));
    assert!(williams_from_correlations(0.8, 0.6, 1.0, 100).is_err());
    assert!(williams_from_correlations(0.8, 0.6, 0.5, 3).is_err());
}

#[test]
fn williams_on_vectors() {
    let gold = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 8.0, 7.0, 9.0, 12.0, 10.0, 11.0];
    let noise = [0.5, -0.3, 0.2, -0.8, 0.1, 0.4, -0.6, 0.9, -0.2, 0.3, -0.5, 0.7];
    let a: Vec<f64> = gold.iter().zip(noise).map(|(g, e)| g + e).collect();
    let b = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 7.0, 9.0, 8.0, 10.0, 12.0, 11.0];
    let r = williams_test(&a, &b, &gold).unwrap();
    assert_abs_diff_eq!(r.statistic, 4.5833136427816259617, epsilon = 1e-6);
    assert_abs_diff_eq!(r.p_value, 0.0013215597096642264, epsilon = 1e-9);
    assert!(williams_test(&a, &[1.0; 12], &gold).is_err());
    assert!(williams_test(&a[..3], &b[..3], &gold[..3]).is_err());
}

/// Exact p over all 2^n pair swaps.
fn exhaustive_permutation_p(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len();
    let stat = |mask: u32| {
        let mut d = 0i64;
        for i in 0..n {
            let (x, y) = if mask >> i & 1 == 1 { (b[i], a[i]) } else { (a[i], b[i]) };
            d += i64::from(x) - i64::from(y);
        }
        d.abs()
    };
    let observed = stat(0);
    let hits = (0..1u32 << n).filter(|&m| stat(m) >= observed).count();
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn permutation_matches_exhaustive_enumeration() {
    let a = [true, true, true, true, false, true, false, true, true, false];
    let b = [true, false, false, true, false, false, false, true, true, false];
    let exact = exhaustive_permutation_p(&a, &b);
    assert_abs_diff_eq!(exact, 0.25, epsilon = 1e-15);
    let r = paired_permutation_test(&a, &b, 10_000, 17).unwrap();
    assert!((r.p_value - exact).abs() <= 0.02, "{} vs {exact}", r.p_value);

    let c = [true, true, false, true, false, true, false, true, true, false];
    let d = [true, false, true, true, false, false, false, true, true, false];
    let exact = exhaustive_permutation_p(&c, &d);
    let r = paired_permutation_test(&c, &d, 10_000, 17).unwrap();
    assert!((r.p_value - exact).abs() <= 0.02, "{} vs {exact}", r.p_value);
}

#[test]
fn permutation_extremes() {
    let v: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
    assert_eq!(paired_permutation_test(&v, &v, 1000, 1).unwrap().p_value, 1.0);
    let a = vec![true; 1000];
    let b = vec![false; 1000];
    let r = paired_permutation_test(&a, &b, 10_000, 5).unwrap();
    assert!(r.p_value <= 1e-3);
    assert_eq!(r.statistic, 1.0);
    assert!(paired_permutation_test(&a, &b, 999, 5).is_err());
    assert!(paired_permutation_test(&a, &b[..10], 1000, 5).is_err());
}

#[test]
fn permutation_is_deterministic_per_seed() {
    let a: Vec<bool> = (0..200).map(|i| i % 3 != 0).collect();
    let b: Vec<bool> = (0..200).map(|i| i % 4 != 0).collect();
    let x = paired_permutation_test(&a, &b, 5000, 9).unwrap();
    let y = paired_permutation_test(&a, &b, 5000, 9).unwrap();
    assert_eq!(x, y);
}

/// Exact upper tail of W+ over all sign assignments of the (tied) ranks.
fn exhaustive_wilcoxon(xs: &[f64]) -> f64 {
    let nz: Vec<f64> = xs.iter().copied().filter(|x| *x != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|x| x.abs()).collect();
    let ranks = usvsthem_core::stats::numeric::average_ranks(&abs);
    let w: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let hits = (0..1u32 << n)
        .filter(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum::<f64>() >= w - 1e-9)
        .count();
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn wilcoxon_exact_against_enumeration() {
    let xs = [0.3, -0.1, 0.5, 0.2, 0.4, -0.2, 0.6, 0.1, 0.35, 0.25];
    let r = wilcoxon_signed_rank_greater(&xs);
    assert_abs_diff_eq!(r.p_value, 0.0107421875, epsilon = 1e-12);
    assert_abs_diff_eq!(r.p_value, exhaustive_wilcoxon(&xs), epsilon = 1e-12);

    let ties = [1.0, 2.0, 2.0, 3.0, -1.0, 3.0, 4.0, -2.0, 5.0, 5.0, 6.0, 0.0];
    assert_abs_diff_eq!(wilcoxon_signed_rank_greater(&ties).p_value, exhaustive_wilcoxon(&ties), epsilon = 1e-12);
}

#[test]
fn spearman_average_ranks_reference() {
    let u = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let v = [0.2, 0.8, 0.6, 0.2, 0.9, 0.1, 0.5, 0.7];
    assert_abs_diff_eq!(spearman(&u, &v).unwrap(), 0.8502303018977035, epsilon = 1e-12);
}

fn rating(rater: &str, item: usize, value: f64) -> Rating {
    Rating { rater: rater.into(), item: format!("i{item:02}"), value }
}

#[test]
fn interrater_perfect_and_anti() {
    let pattern = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
    let mut rs = Vec::new();
    for (i, &v) in pattern.iter().enumerate() {
        for rater in ["a", "b", "c", "d"] {
            rs.push(rating(rater, i, v));
        }
    }
    let out = interrater_spearman(&rs);
    assert_eq!(out.per_rater.len(), 4);
    assert_abs_diff_eq!(out.mean.unwrap(), 1.0, epsilon = 1e-12);

    let mut rs = Vec::new();
    for (i, &v) in pattern.iter().enumerate() {
        rs.push(rating("contrarian", i, 1.0 - v));
        for rater in ["a", "b", "c"] {
            rs.push(rating(rater, i, v));
        }
    }
    let out = interrater_spearman(&rs);
    let per: BTreeMap<_, _> = out.per_rater.iter().cloned().collect();
    assert_abs_diff_eq!(per["contrarian"], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(per["a"], 1.0, epsilon = 1e-12);
}

#[test]
fn ppca_on_identical_pair_is_pca() {
    // covariance [[4, 1.5], [1.5, 1]]: eigenvalues (5 ± sqrt(9 + 9)) / 2
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 400;
    let mut rows = Vec::new();
    for _ in 0..n {
        let (a, b): (f64, f64) = (normal.sample(&mut rng), normal.sample(&mut rng));
        rows.push([2.0 * a, 0.75 * a + b * (1.0f64 - 0.5625).sqrt()]);
    }
    let x = DMatrix::from_fn(n, 2, |i, j| rows[i][j]);
    let c = ppca_components(&x, &x).unwrap();
    // sample covariance, computed directly
    let mean = [rows.iter().map(|r| r[0]).sum::<f64>() / n as f64, rows.iter().map(|r| r[1]).sum::<f64>() / n as f64];
    let cov = |i: usize, j: usize| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
    let (sxx, sxy, syy) = (cov(0, 0), cov(0, 1), cov(1, 1));
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let l1 = (sxx + syy + disc) / 2.0;
    let l2 = (sxx + syy - disc) / 2.0;
    assert_abs_diff_eq!(c.values[0], l1, epsilon = 1e-9);
    assert_abs_diff_eq!(c.values[1], l2, epsilon = 1e-9);
    let v = [sxy, l1 - sxx];
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let dot = (c.vectors[0][0] * v[0] + c.vectors[0][1] * v[1]) / norm;
    assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-9);
}

/// Raters share one latent dimension along `direction`; every other
/// direction carries independent noise only.
fn one_shared_dimension(seed: u64) -> RatingsByRater {
    let dim = 13;
    let (raters, items) = (12, 320);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let direction: Vec<f64> = (0..dim).map(|d| if d < 4 { 0.5 } else { 0.0 }).collect();
    let latent: Vec<f64> = (0..items).map(|_| normal.sample(&mut rng)).collect();
    let mut out = RatingsByRater::new();
    for r in 0..raters {
        let mut by_item = BTreeMap::new();
        for (i, z) in latent.iter().enumerate() {
            let row = direction.iter().map(|d| 2.0 * z * d + normal.sample(&mut rng)).collect();
            by_item.insert(format!("item{i:03}"), row);
        }
        out.insert(format!("rater{r:02}"), by_item);
    }
    out
}

fn pure_noise(seed: u64, items: usize) -> RatingsByRater {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..12)
        .map(|r| {
            let rated = (0..items).map(|i| (format!("item{i:03}"), (0..13).map(|_| normal.sample(&mut rng)).collect())).collect();
            (format!("rater{r:02}"), rated)
        })
        .collect()
}

#[test]
fn ppca_recovers_exactly_one_shared_dimension() {
    let result = loro_ppca(&one_shared_dimension(2024)).unwrap();
    assert_eq!(result.raters_used, 12);
    assert_eq!(result.significant(0.05), vec![0]);
    let top = &result.components.vectors[0];
    let overlap: f64 = top[..4].iter().map(|v| v * 0.5).sum();
    assert!(overlap.abs() > 0.95, "top component overlap {overlap}");
    for t in &result.tests {
        assert!((0.0..=1.0).contains(&t.p_bonferroni) && t.p_bonferroni >= t.p_value);
    }
}

#[test]
fn ppca_finds_nothing_in_pure_noise() {
    let result = loro_ppca(&pure_noise(7, 320)).unwrap();
    assert!(result.significant(0.05).is_empty(), "{:?}", result.tests);
}

#[test]
fn ppca_is_deterministic_per_seed() {
    let data = pure_noise(3, 60);
    let cfg = PpcaConfig { n_perm: 500, seed: 42 };
    assert_eq!(loro_ppca_with(&data, &cfg).unwrap(), loro_ppca_with(&data, &cfg).unwrap());
}

#[test]
fn ppca_needs_five_raters() {
    let mut data = one_shared_dimension(1);
    while data.len() > 4 {
        let last = data.keys().next_back().unwrap().clone();
        data.remove(&last);
    }
    assert!(loro_ppca(&data).is_err());
}

#[test]
fn heatmap_duplicate_and_exclusive_columns() {
    let scale: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect();
    let same: Vec<f64> = scale.iter().map(|s| if *s > 0.5 { 1.0 } else { 0.0 }).collect();
    let opposite: Vec<f64> = same.iter().map(|x| 1.0 - x).collect();
    let flat = vec![0.0; 20];
    let labels = ["Scale", "Same", "Opposite", "Flat"].map(String::from).to_vec();
    let h = correlation_heatmap(labels, &[scale, same, opposite, flat]).unwrap();
    assert_abs_diff_eq!(h.get("Scale", "Same").unwrap(), 1.0, epsilon = 1e-12);
    assert!(h.get("Same", "Opposite").unwrap() < 0.0);
    assert_eq!(h.get("Flat", "Scale"), Some(0.0));
    assert_eq!(h.constant_columns, vec!["Flat".to_string()]);
    assert_eq!(h.merges.len(), 3);
    assert_abs_diff_eq!(h.merges[0].distance, 0.0, epsilon = 1e-12);
    assert_eq!(h.leaf_order.len(), 4);
    let first: Vec<&str> = [h.merges[0].left, h.merges[0].right].iter().map(|&i| h.labels[i].as_str()).collect();
    assert!(first.contains(&"Scale") && first.contains(&"Same"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ztest_swap_negates_z(n1 in 1u64..500, n2 in 1u64..500, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let (c1, c2) = ((f1 * n1 as f64) as u64, (f2 * n2 as f64) as u64);
        let a = two_proportion_ztest(c1, n1, c2, n2).unwrap();
        let b = two_proportion_ztest(c2, n2, c1, n1).unwrap();
        prop_assert_eq!(a.statistic, -b.statistic);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
        prop_assert!((a.p_value - normal_two_sided(a.statistic)).abs() < 1e-15);
    }

    #[test]
    fn balanced_anova_decomposes_total(cells in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 6)) {
        let mut obs = Vec::new();
        for (c, ys) in cells.iter().enumerate() {
            for y in ys {
                obs.push(((c / 2) as u8, (c % 2) as u8, *y));
            }
        }
        let t = two_way_anova(&obs, "A", "B").unwrap();
        let n = obs.len() as f64;
        let grand = obs.iter().map(|o| o.2).sum::<f64>() / n;
        let total: f64 = obs.iter().map(|o| (o.2 - grand).powi(2)).sum();
        let parts: f64 = ["A", "B", "A:B", "Residual"].iter().map(|r| t.row(r).unwrap().sum_sq).sum();
        prop_assert!((parts - total).abs() <= 1e-6 * total.max(1e-12));
        prop_assert_eq!(t.row("Residual").unwrap().df, n - 6.0);
        for r in &t.rows {
            if let Some(p) = r.p_value { prop_assert!((0.0..=1.0).contains(&p)); }
            if let Some(e) = r.partial_eta_sq { prop_assert!((0.0..=1.0).contains(&e)); }
        }
    }

    #[test]
    fn williams_swap_negates_t(gold in prop::collection::vec(-5.0f64..5.0, 6..30), na in prop::collection::vec(-1.0f64..1.0, 30), nb in prop::collection::vec(-3.0f64..3.0, 30)) {
        let a: Vec<f64> = gold.iter().zip(&na).map(|(g, e)| g + e).collect();
        let b: Vec<f64> = gold.iter().zip(&nb).map(|(g, e)| g + e).collect();
        let (Ok(x), Ok(y)) = (williams_test(&a, &b, &gold), williams_test(&b, &a, &gold)) else {
            return Err(TestCaseError::reject("degenerate correlation"));
        };
        prop_assert!((x.statistic + y.statistic).abs() <= 1e-9 * x.statistic.abs().max(1.0));
        prop_assert!((x.p_value - y.p_value).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.p_value));
    }

    #[test]
    fn tukey_p_falls_as_difference_grows(d1 in 0.01f64..5.0, extra in 0.01f64..5.0, n in 2usize..8) {
        let base: Vec<f64> = (0..n).map(|i| i as f64 * 0.7).collect();
        let shifted = |d: f64| base.iter().map(|x| x + d).collect::<Vec<_>>();
        let p = |d: f64| tukey_hsd(&[("a", base.clone()), ("b", shifted(d)), ("c", shifted(-1.0))], 0.05).unwrap()[0].p_adj;
        prop_assert!(p(d1 + extra) <= p(d1) + 1e-12);
    }

    #[test]
    fn tukey_ignores_order_within_groups(mut xs in prop::collection::vec(-5.0f64..5.0, 3..10), ys in prop::collection::vec(-5.0f64..5.0, 3..10)) {
        let a = tukey_hsd(&[("x", xs.clone()), ("y", ys.clone())], 0.05).unwrap();
        xs.reverse();
        let b = tukey_hsd(&[("x", xs), ("y", ys)], 0.05).unwrap();
        prop_assert!((a[0].p_adj - b[0].p_adj).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a[0].p_adj));
    }
}

