//! Principal preserved component analysis (PPCA) and its
//! leave-one-rater-out significance procedure.
//!
//! PPCA finds the directions that maximise the cross-covariance between two
//! paired data sets `X` and `Y`: the eigenvectors of the symmetrised
//! cross-covariance `(XᵀY + YᵀX) / 2` of the centred data.
//!
//! Items are split in two by sorted id: even positions are used to fit
//! components, odd positions to evaluate them. Each rater is held out in
//! turn. Components are fitted on the remaining raters' fitting items (each
//! rater paired with the mean of the other remaining raters on the same
//! item). On the evaluation items, the held-out rater's ratings and the mean
//! of everyone else are projected onto every component and correlated.
//!
//! A component is preserved across raters when those correlations are
//! positive. The statistic is the Wilcoxon signed-rank sum `W+` of the
//! per-rater correlations. Its null distribution comes from flipping the
//! sign of each rater's evaluation-item projections independently. The
//! flips keep the dependence between raters that share items, which a plain
//! signed-rank p-value would ignore. p-values are Bonferroni-corrected by
//! the number of components.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::numeric::{average_ranks, pearson};
use crate::crowdtruth::WorkerVector;
use crate::error::{Error, Result};

pub const MIN_RATERS: usize = 5;
const MIN_HELD_OUT_ITEMS: usize = 3;
const BATCH: usize = 256;

/// rater -> item -> rating vector
pub type RatingsByRater = BTreeMap<String, BTreeMap<String, Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Components {
    /// Eigenvalues in descending order (positive ones only).
    pub values: Vec<f64>,
    /// Unit eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
    /// Fewer positive-eigenvalue components than dimensions.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTest {
    pub index: usize,
    pub n_raters: usize,
    pub mean_correlation: f64,
    pub w_plus: f64,
    pub p_value: f64,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpcaConfig {
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for PpcaConfig {
    fn default() -> Self {
        PpcaConfig { n_perm: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcaResult {
    /// Components of the pooled data (every rater against the others' mean).
    pub components: Components,
    pub tests: Vec<ComponentTest>,
    pub raters_used: usize,
    pub raters_skipped: usize,
    pub n_perm: usize,
}

impl PpcaResult {
    pub fn significant(&self, alpha: f64) -> Vec<usize> {
        self.tests.iter().filter(|t| t.p_bonferroni < alpha).map(|t| t.index).collect()
    }
}

fn centred(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for j in 0..c.ncols() {
        let mu = c.column(j).mean();
        c.column_mut(j).add_scalar_mut(-mu);
    }
    c
}

/// Components of the symmetrised cross-covariance of centred `x` and `y`
/// (same shape, rows paired). Directions with non-positive eigenvalue
/// preserve no covariance and are dropped.
pub fn ppca_components(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Components> {
    if x.shape() != y.shape() {
        return Err(Error::domain("PPCA: X and Y must have the same shape"));
    }
    let (n, d) = x.shape();
    if n < 2 || d == 0 {
        return Err(Error::domain("PPCA needs at least two paired rows"));
    }
    let (xc, yc) = (centred(x), centred(y));
    let xty = xc.transpose() * &yc;
    let c = (&xty + xty.transpose()) / (2.0 * (n - 1) as f64);
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for i in order {
        let v = eig.eigenvalues[i];
        if top == 0.0 || v <= 1e-10 * top {
            continue;
        }
        let mut vec: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // fix the sign so that the largest-magnitude entry is positive
        let lead = vec.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        if lead < 0.0 {
            vec.iter_mut().for_each(|e| *e = -*e);
        }
        values.push(v);
        vectors.push(vec);
    }
    Ok(Components { rank_deficient: values.len() < d, values, vectors })
}

/// One matrix per rater from 13-dimensional (or any width) annotations.
pub fn ratings_from_annotations(annotations: &[WorkerVector]) -> RatingsByRater {
    let mut out = RatingsByRater::new();
    for a in annotations {
        out.entry(a.worker_id.clone())
            .or_default()
            .insert(a.unit_id.clone(), a.selections.iter().map(|&s| f64::from(s)).collect());
    }
    out
}

struct ItemIndex<'a> {
    /// item -> [(rater index, ratings)], items in sorted id order
    items: Vec<Vec<(usize, &'a [f64])>>,
    dim: usize,
}

impl<'a> ItemIndex<'a> {
    fn new(data: &'a RatingsByRater) -> Result<Self> {
        let mut items: BTreeMap<&str, Vec<(usize, &[f64])>> = BTreeMap::new();
        let mut dim = None;
        for (r, (rater, rated)) in data.iter().enumerate() {
            for (item, v) in rated {
                if *dim.get_or_insert(v.len()) != v.len() {
                    return Err(Error::domain(format!("rater `{rater}` item `{item}` has inconsistent width")));
                }
                items.entry(item.as_str()).or_default().push((r, v.as_slice()));
            }
        }
        Ok(ItemIndex { items: items.into_values().collect(), dim: dim.unwrap_or(0) })
    }

    fn fitting(&self) -> impl Iterator<Item = &Vec<(usize, &'a [f64])>> {
        self.items.iter().step_by(2)
    }

    fn evaluation(&self) -> impl Iterator<Item = &Vec<(usize, &'a [f64])>> {
        self.items.iter().skip(1).step_by(2)
    }

    /// Every rater except `exclude` on the fitting items, paired with the
    /// mean of the other non-excluded raters on the same item.
    fn fitting_pairs(&self, exclude: Option<usize>) -> (Vec<f64>, Vec<f64>, usize) {
        let (mut xs, mut ys, mut rows) = (Vec::new(), Vec::new(), 0);
        for raters in self.fitting() {
            let members: Vec<&(usize, &[f64])> = raters.iter().filter(|(r, _)| Some(*r) != exclude).collect();
            if members.len() < 2 {
                continue;
            }
            let mut sum = vec![0.0; self.dim];
            for (_, v) in &members {
                sum.iter_mut().zip(v.iter()).for_each(|(s, x)| *s += x);
            }
            let others = (members.len() - 1) as f64;
            for (_, v) in &members {
                xs.extend_from_slice(v);
                ys.extend(sum.iter().zip(v.iter()).map(|(s, x)| (s - x) / others));
                rows += 1;
            }
        }
        (xs, ys, rows)
    }
}

fn matrix(values: Vec<f64>, rows: usize, dim: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, dim, &values)
}

fn project(v: &[f64], c: &[f64]) -> f64 {
    v.iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Projections of the held-out rater and of every co-rater on one fold's
/// components, over the evaluation items the held-out rater rated.
struct Fold {
    rater: usize,
    /// Per item: own projection on every component.
    own: Vec<Vec<f64>>,
    /// Per item: (co-rater, projection on every component).
    others: Vec<Vec<(usize, Vec<f64>)>>,
    n_components: usize,
}

impl Fold {
    /// Correlation between the (signed) held-out projections and the mean of
    /// the (signed) co-rater projections, per component.
    fn correlations(&self, signs: &[f64]) -> Vec<Option<f64>> {
        let s_own = signs[self.rater];
        (0..self.n_components)
            .map(|c| {
                let x: Vec<f64> = self.own.iter().map(|p| s_own * p[c]).collect();
                let y: Vec<f64> = self
                    .others
                    .iter()
                    .map(|os| os.iter().map(|(r, p)| signs[*r] * p[c]).sum::<f64>() / os.len() as f64)
                    .collect();
                pearson(&x, &y)
            })
            .collect()
    }
}

/// Wilcoxon `W+`: sum of the ranks of `|r|` over positive `r`, zeros dropped.
fn w_plus(rs: &[f64]) -> f64 {
    let nz: Vec<f64> = rs.iter().copied().filter(|r| *r != 0.0).collect();
    let ranks = average_ranks(&nz.iter().map(|r| r.abs()).collect::<Vec<_>>());
    nz.iter().zip(&ranks).filter(|(r, _)| **r > 0.0).map(|(_, k)| k).sum()
}

fn w_plus_per_component(folds: &[Fold], signs: &[f64], n_components: usize) -> Vec<(f64, Vec<f64>)> {
    let corrs: Vec<Vec<Option<f64>>> = folds.iter().map(|f| f.correlations(signs)).collect();
    (0..n_components)
        .map(|c| {
            let rs: Vec<f64> = corrs.iter().filter_map(|v| v.get(c).copied().flatten()).collect();
            (w_plus(&rs), rs)
        })
        .collect()
}

pub fn loro_ppca(data: &RatingsByRater) -> Result<PpcaResult> {
    loro_ppca_with(data, &PpcaConfig::default())
}

pub fn loro_ppca_with(data: &RatingsByRater, cfg: &PpcaConfig) -> Result<PpcaResult> {
    if data.len() < MIN_RATERS {
        return Err(Error::domain(format!("PPCA needs at least {MIN_RATERS} raters, got {}", data.len())));
    }
    if cfg.n_perm == 0 {
        return Err(Error::Config("PPCA needs at least one sign-flip permutation".into()));
    }
    let index = ItemIndex::new(data)?;
    let dim = index.dim;
    let (xs, ys, rows) = index.fitting_pairs(None);
    if rows < 2 {
        return Err(Error::domain("PPCA: no fitting items shared by two raters"));
    }
    let components = ppca_components(&matrix(xs, rows, dim), &matrix(ys, rows, dim))?;

    let folds: Vec<Fold> = (0..data.len())
        .into_par_iter()
        .filter_map(|held| {
            let (tx, ty, trows) = index.fitting_pairs(Some(held));
            if trows < 2 {
                return None;
            }
            let comps = ppca_components(&matrix(tx, trows, dim), &matrix(ty, trows, dim)).ok()?;
            let proj = |v: &[f64]| comps.vectors.iter().map(|c| project(v, c)).collect::<Vec<f64>>();
            let (mut own, mut others) = (Vec::new(), Vec::new());
            for raters in index.evaluation() {
                let Some((_, v)) = raters.iter().find(|(r, _)| *r == held) else { continue };
                let rest: Vec<(usize, Vec<f64>)> =
                    raters.iter().filter(|(r, _)| *r != held).map(|(r, w)| (*r, proj(w))).collect();
                if rest.is_empty() {
                    continue;
                }
                own.push(proj(v));
                others.push(rest);
            }
            (own.len() >= MIN_HELD_OUT_ITEMS).then_some(Fold { rater: held, own, others, n_components: comps.vectors.len() })
        })
        .collect();

    let raters_used = folds.len();
    let n_components = folds.iter().map(|f| f.n_components).max().unwrap_or(0);
    let ones = vec![1.0; data.len()];
    let observed = w_plus_per_component(&folds, &ones, n_components);

    let batches = cfg.n_perm.div_ceil(BATCH);
    let hits: Vec<usize> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let mut hits = vec![0usize; n_components];
            for _ in 0..BATCH.min(cfg.n_perm - b * BATCH) {
                let signs: Vec<f64> = (0..data.len()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                for (c, (w, _)) in w_plus_per_component(&folds, &signs, n_components).into_iter().enumerate() {
                    if w >= observed[c].0 {
                        hits[c] += 1;
                    }
                }
            }
            hits
        })
        .reduce(|| vec![0; n_components], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());

    let tests = observed
        .into_iter()
        .enumerate()
        .map(|(c, (w, rs))| {
            let p = (1 + hits[c]) as f64 / (cfg.n_perm + 1) as f64;
            ComponentTest {
                index: c,
                n_raters: rs.len(),
                mean_correlation: if rs.is_empty() { f64::NAN } else { rs.iter().sum::<f64>() / rs.len() as f64 },
                w_plus: w,
                p_value: p,
                p_bonferroni: (p * n_components as f64).min(1.0),
            }
        })
        .collect();
    Ok(PpcaResult { components, tests, raters_used, raters_skipped: data.len() - raters_used, n_perm: cfg.n_perm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn y_equal_x_gives_pca_directions() {
        let x = DMatrix::from_row_slice(5, 2, &[2.0, 0.1, -1.0, 0.0, 3.0, -0.2, -2.0, 0.1, -2.0, 0.0]);
        let c = ppca_components(&x, &x).unwrap();
        let xc = centred(&x);
        let cov = xc.transpose() * &xc / 4.0;
        let eig = SymmetricEigen::new(cov);
        let imax = if eig.eigenvalues[0] > eig.eigenvalues[1] { 0 } else { 1 };
        let pc: Vec<f64> = eig.eigenvectors.column(imax).iter().copied().collect();
        let dot: f64 = pc.iter().zip(&c.vectors[0]).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
        assert!((c.values[0] - eig.eigenvalues[imax]).abs() < 1e-10);
    }

    #[test]
    fn too_few_raters() {
        let mut data = RatingsByRater::new();
        for r in 0..4 {
            data.entry(format!("r{r}")).or_default().insert("i".into(), vec![1.0]);
        }
        assert!(loro_ppca(&data).is_err());
    }
}
