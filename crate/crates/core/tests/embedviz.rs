use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use usvsthem_core::embedviz::{
    blend_emotions, conditional_affinities, emit_figure_data, emotion_color, figure_csv, figure_rows, hex,
    joint_affinities, tsne, FigureStyle, HiddenMatrix, PointLabel, TsneConfig, NO_EMOTION_GRAY,
};
use usvsthem_core::{Emotion, Group};

fn clusters(per: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut member = Vec::new();
    for c in 0..3 {
        let mut centre = vec![0.0; d];
        centre[c] = 20.0;
        for _ in 0..per {
            pts.push(centre.iter().map(|m| m + noise.sample(&mut rng)).collect());
            member.push(c);
        }
    }
    (pts, member)
}

fn knn_purity(y: &[[f64; 2]], member: &[usize], k: usize) -> f64 {
    let mut agree = 0usize;
    for i in 0..y.len() {
        let mut d: Vec<(f64, usize)> = (0..y.len())
            .filter(|&j| j != i)
            .map(|j| ((y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        agree += d[..k].iter().filter(|(_, j)| member[*j] == member[i]).count();
    }
    agree as f64 / (y.len() * k) as f64
}

/// Least-squares residual after the best rotation or reflection of `b` onto
/// `a`, both centred; normalised by the spread of `a`.
fn procrustes_residual(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let centre = |m: &[[f64; 2]]| {
        let n = m.len() as f64;
        let c = [m.iter().map(|p| p[0]).sum::<f64>() / n, m.iter().map(|p| p[1]).sum::<f64>() / n];
        m.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect::<Vec<_>>()
    };
    let (a, b) = (centre(a), centre(b));
    let mut h = nalgebra::Matrix2::zeros();
    for (p, q) in a.iter().zip(&b) {
        h += nalgebra::Vector2::new(q[0], q[1]) * nalgebra::Vector2::new(p[0], p[1]).transpose();
    }
    let svd = h.svd(true, true);
    let r = svd.v_t.unwrap().transpose() * svd.u.unwrap().transpose();
    let (mut err, mut scale) = (0.0, 0.0);
    for (p, q) in a.iter().zip(&b) {
        let rq = r * nalgebra::Vector2::new(q[0], q[1]);
        err += (rq[0] - p[0]).powi(2) + (rq[1] - p[1]).powi(2);
        scale += p[0] * p[0] + p[1] * p[1];
    }
    (err / scale).sqrt()
}

fn label(id: &str, score: f64, emotions: &[Emotion]) -> PointLabel {
    PointLabel { id: id.into(), usvsthem: score, group: Group::Refugees, emotions: emotions.iter().copied().collect() }
}

#[test]
fn too_few_points_rejected() {
    assert!(tsne(&[vec![0.0, 1.0]], &TsneConfig::default()).is_err());
    let four = vec![vec![0.0]; 4];
    assert!(tsne(&four, &TsneConfig { perplexity: 1.2, ..TsneConfig::default() }).is_err());
}

#[test]
fn invalid_config_and_input_rejected() {
    let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
    assert!(tsne(&pts, &TsneConfig { perplexity: 10.0, ..TsneConfig::default() }).is_err());
    assert!(tsne(&pts, &TsneConfig { perplexity: 5.0, iterations: 100, exaggeration_iters: 50, ..TsneConfig::default() }).is_err());
    let mut bad = pts.clone();
    bad[3][0] = f64::NAN;
    assert!(tsne(&bad, &TsneConfig { perplexity: 5.0, ..TsneConfig::default() }).is_err());
}

#[test]
fn identical_points_collapse() {
    let pts = vec![vec![1.0, -2.0, 3.0]; 5];
    let out = tsne(&pts, &TsneConfig { perplexity: 1.5, ..TsneConfig::default() }).unwrap();
    for a in &out.embedding {
        for b in &out.embedding {
            assert!(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() < 1e-2);
        }
    }
}

#[test]
fn separated_clusters_stay_pure() {
    let (pts, member) = clusters(50, 10, 3);
    let out = tsne(&pts, &TsneConfig::default()).unwrap();
    let purity = knn_purity(&out.embedding, &member, 5);
    assert!(purity > 0.9, "purity {purity}");
}

#[test]
fn kl_settles_monotonically() {
    let (pts, _) = clusters(50, 10, 5);
    let out = tsne(&pts, &TsneConfig { seed: 9, ..TsneConfig::default() }).unwrap();
    let tail = &out.kl_trace[out.kl_trace.len() - 501..];
    for (i, w) in tail.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-6, "step {i}: {} -> {}", w[0], w[1]);
    }
    assert!(out.kl_trace.last().unwrap() < &out.kl_trace[0]);
}

#[test]
fn translation_moves_nothing() {
    let (pts, _) = clusters(30, 6, 11);
    let shifted: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().enumerate().map(|(k, x)| x + 7.5 - k as f64).collect()).collect();
    let cfg = TsneConfig { perplexity: 20.0, ..TsneConfig::default() };
    let a = tsne(&pts, &cfg).unwrap();
    let b = tsne(&shifted, &cfg).unwrap();
    let r = procrustes_residual(&a.embedding, &b.embedding);
    assert!(r < 1e-6, "residual {r}");
}

#[test]
fn deterministic_per_seed() {
    let (pts, _) = clusters(10, 4, 1);
    let cfg = TsneConfig { perplexity: 5.0, iterations: 300, ..TsneConfig::default() };
    let a = tsne(&pts, &cfg).unwrap();
    assert_eq!(a, tsne(&pts, &cfg).unwrap());
    assert_ne!(a.embedding, tsne(&pts, &TsneConfig { seed: 1, ..cfg }).unwrap().embedding);
}

#[test]
fn affinities_are_calibrated() {
    let (mut pts, _) = clusters(20, 5, 2);
    pts.push(pts[0].clone());
    let perplexity = 12.0;
    let cond = conditional_affinities(&pts, perplexity);
    for (i, row) in cond.iter().enumerate() {
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-8);
        assert_eq!(row[i], 0.0);
        let h: f64 = -row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        assert!((h.exp() - perplexity).abs() < 1e-5, "row {i}: perplexity {}", h.exp());
    }
    let joint = joint_affinities(&pts, perplexity);
    let mut total = 0.0;
    for i in 0..joint.len() {
        for j in 0..joint.len() {
            assert_eq!(joint[i][j], joint[j][i]);
            total += joint[i][j];
        }
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
}

#[test]
fn scale_colour_values() {
    let labels = [label("a", 0.0, &[]), label("b", 0.5, &[]), label("c", 1.0, &[])];
    let rows = figure_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &labels, FigureStyle::Scale).unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.color_value).collect();
    assert_eq!(values, [0.0, 0.5, 1.0]);
    let csv = figure_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,y,color_value,color,group,emotions");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("1,0,0.5,#"));
    assert_eq!(hex(rows[0].color), "#1f4ed8");
    assert_eq!(hex(rows[2].color), "#d62728");
}

#[test]
fn two_emotions_blend_to_the_mean() {
    let pair = BTreeSet::from([Emotion::Anger, Emotion::Sadness]);
    let (a, s) = (emotion_color(Emotion::Anger), emotion_color(Emotion::Sadness));
    let mean: [u8; 3] = std::array::from_fn(|k| ((f64::from(a[k]) + f64::from(s[k])) / 2.0).round() as u8);
    assert_eq!(blend_emotions(&pair), mean);
    assert_eq!(blend_emotions(&BTreeSet::from([Emotion::Fear])), emotion_color(Emotion::Fear));
}

#[test]
fn no_emotion_is_gray() {
    assert_eq!(blend_emotions(&BTreeSet::new()), NO_EMOTION_GRAY);
    assert_eq!(hex(NO_EMOTION_GRAY), "#808080");
    let rows = figure_rows(&[[0.0, 0.0]], &[label("a", 0.3, &[])], FigureStyle::Emotion).unwrap();
    assert_eq!(rows[0].color, NO_EMOTION_GRAY);
}

#[test]
fn misaligned_labels_rejected() {
    let labels = [label("a", 0.0, &[])];
    assert!(figure_rows(&[[0.0, 0.0], [1.0, 1.0]], &labels, FigureStyle::Group).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_figure_data(dir.path(), "x", &[], &labels, FigureStyle::Scale).is_err());
}

#[test]
fn figure_files_are_named_by_layer() {
    let dir = tempfile::tempdir().unwrap();
    let labels = [label("a", 0.1, &[Emotion::Hope]), label("b", 0.9, &[Emotion::Anger, Emotion::Fear])];
    let (svg, csv) = emit_figure_data(dir.path(), "4", &[[0.0, 1.0], [2.0, 3.0]], &labels, FigureStyle::Emotion).unwrap();
    assert_eq!(svg.file_name().unwrap(), "layer_4.svg");
    assert_eq!(csv.file_name().unwrap(), "layer_4.csv");
    let svg = std::fs::read_to_string(svg).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<circle").count() == 2);
    let csv = std::fs::read_to_string(csv).unwrap();
    assert!(csv.lines().nth(2).unwrap().ends_with(&format!("{}|{}", Emotion::Anger.as_str(), Emotion::Fear.as_str())));
}

#[test]
fn hidden_matrix_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let m = HiddenMatrix {
        tag: "12".into(),
        labels: vec![label("x", 0.25, &[Emotion::Pride, Emotion::Guilt]), label("y", 1.0, &[])],
        rows: vec![vec![0.1, -2.5, 1e-300], vec![3.0, 0.0, -0.0]],
    };
    let path = dir.path().join("hidden_12.csv");
    m.write_csv(&path).unwrap();
    assert_eq!(HiddenMatrix::read_csv(&path).unwrap(), m);
}
