//! Pre-LN transformer encoder with per-task final blocks, written against a
//! flat parameter vector, with hand-derived reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{EncoderConfig, TaskKind, TaskSpec};
use crate::vocab::PAD;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wqkv: usize,
    pub bqkv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    pub kind: TaskKind,
    pub block: BlockLayout,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w: usize,
    pub b: usize,
    pub out: usize,
    pub end: usize,
}

/// Offsets of every parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub vocab: usize,
    pub dim: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
    pub tok: usize,
    pub pos: usize,
    pub shared: Vec<BlockLayout>,
    pub task_heads: Vec<HeadLayout>,
    pub total: usize,
}

impl BlockLayout {
    fn new(at: &mut usize, d: usize, f: usize) -> Self {
        let mut take = |n: usize| {
            let o = *at;
            *at += n;
            o
        };
        BlockLayout {
            ln1_g: take(d),
            ln1_b: take(d),
            wqkv: take(d * 3 * d),
            bqkv: take(3 * d),
            wo: take(d * d),
            bo: take(d),
            ln2_g: take(d),
            ln2_b: take(d),
            w1: take(d * f),
            b1: take(f),
            w2: take(f * d),
            b2: take(d),
            end: *at,
        }
    }
}

impl Layout {
    pub fn new(cfg: &EncoderConfig, vocab: usize, tasks: &[TaskSpec]) -> Self {
        let (d, f) = (cfg.model_dim, cfg.ff_dim);
        let mut at = 0;
        let tok = at;
        at += vocab * d;
        let pos = at;
        at += cfg.max_len * d;
        let shared = (0..cfg.layers_shared).map(|_| BlockLayout::new(&mut at, d, f)).collect();
        let task_heads = tasks
            .iter()
            .map(|t| {
                let block = BlockLayout::new(&mut at, d, f);
                let out = t.kind.output_dim();
                let lnf_g = at;
                let lnf_b = lnf_g + d;
                let w = lnf_b + d;
                let b = w + d * out;
                at = b + out;
                HeadLayout { kind: t.kind, block, lnf_g, lnf_b, w, b, out, end: at }
            })
            .collect();
        Layout { vocab, dim: d, heads: cfg.heads, ff: f, max_len: cfg.max_len, tok, pos, shared, task_heads, total: at }
    }

    /// Standard-normal embeddings, Gaussian weights (σ = 0.02), unit
    /// layer-norm gains, zero biases.
    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (unit, normal) = (Normal::new(0.0, 1.0).unwrap(), Normal::new(0.0, INIT_STD).unwrap());
        let d = self.dim;
        let embeddings = self.pos + self.max_len * d;
        let mut p: Vec<f64> =
            (0..self.total).map(|i| if i < embeddings { unit.sample(rng) } else { normal.sample(rng) }).collect();
        let mut fill = |at: usize, n: usize, v: f64| p[at..at + n].iter_mut().for_each(|x| *x = v);
        let blocks = self.shared.iter().chain(self.task_heads.iter().map(|h| &h.block));
        for b in blocks {
            fill(b.ln1_g, d, 1.0);
            fill(b.ln1_b, d, 0.0);
            fill(b.bqkv, 3 * d, 0.0);
            fill(b.bo, d, 0.0);
            fill(b.ln2_g, d, 1.0);
            fill(b.ln2_b, d, 0.0);
            fill(b.b1, self.ff, 0.0);
            fill(b.b2, d, 0.0);
        }
        for h in &self.task_heads {
            fill(h.lnf_g, d, 1.0);
            fill(h.lnf_b, d, 0.0);
            fill(h.b, h.out, 0.0);
        }
        p
    }

    /// Index range of everything that belongs to task `t` alone.
    pub fn task_range(&self, t: usize) -> std::ops::Range<usize> {
        self.task_heads[t].block.ln1_g..self.task_heads[t].end
    }
}

fn linear(x: &[f64], n: usize, din: usize, w: &[f64], b: &[f64], dout: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * dout];
    for (xi, yi) in x.chunks_exact(din).zip(y.chunks_exact_mut(dout)).take(n) {
        yi.copy_from_slice(&b[..dout]);
        for (k, &xv) in xi.iter().enumerate() {
            let wk = &w[k * dout..(k + 1) * dout];
            for (y, &wv) in yi.iter_mut().zip(wk) {
                *y += xv * wv;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn linear_back(
    x: &[f64],
    n: usize,
    din: usize,
    w: &[f64],
    dout: usize,
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    for (xi, dyi) in x.chunks_exact(din).zip(dy.chunks_exact(dout)).take(n) {
        for (b, &g) in db.iter_mut().zip(dyi) {
            *b += g;
        }
        for (k, &xv) in xi.iter().enumerate() {
            for (w, &g) in dw[k * dout..(k + 1) * dout].iter_mut().zip(dyi) {
                *w += xv * g;
            }
        }
    }
    if let Some(dx) = dx {
        for (dxi, dyi) in dx.chunks_exact_mut(din).zip(dy.chunks_exact(dout)).take(n) {
            for (k, d) in dxi.iter_mut().enumerate() {
                let wk = &w[k * dout..(k + 1) * dout];
                *d += wk.iter().zip(dyi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], n: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let mu = xi.iter().sum::<f64>() / d as f64;
        let var = xi.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for k in 0..d {
            let h = (xi[k] - mu) * r;
            xhat[i * d + k] = h;
            y[i * d + k] = h * g[k] + b[k];
        }
    }
    (y, LnCache { xhat, rstd })
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_back(c: &LnCache, n: usize, d: usize, g: &[f64], dy: &[f64], dx: &mut [f64], dg: &mut [f64], db: &mut [f64]) {
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let (xh, dyi) = (&c.xhat[i * d..(i + 1) * d], &dy[i * d..(i + 1) * d]);
        for k in 0..d {
            dxhat[k] = dyi[k] * g[k];
            dg[k] += dyi[k] * xh[k];
            db[k] += dyi[k];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for k in 0..d {
            dx[i * d + k] += c.rstd[i] * (dxhat[k] - m1 - xh[k] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dropout_mask(rng: &mut Option<&mut ChaCha8Rng>, p: f64, n: usize) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(x, k)| *x *= k);
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    nq: usize,
    x: Vec<f64>,
    ln1: LnCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    o_mask: Option<Vec<f64>>,
    ln2: LnCache,
    bn: Vec<f64>,
    f1: Vec<f64>,
    g: Vec<f64>,
    f_mask: Option<Vec<f64>>,
}

struct Dims {
    d: usize,
    heads: usize,
    ff: usize,
}

/// One pre-LN block over `l` positions, producing outputs for the first
/// `nq` positions only. Keys at invalid positions are masked out.
#[allow(clippy::too_many_arguments)]
fn block_forward(
    p: &[f64],
    bl: &BlockLayout,
    dims: &Dims,
    x: Vec<f64>,
    l: usize,
    nq: usize,
    valid: &[bool],
    dropout: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Vec<f64>, BlockCache) {
    let Dims { d, heads, ff } = *dims;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, ln1) = layer_norm(&x, l, d, &p[bl.ln1_g..], &p[bl.ln1_b..]);
    let qkv = linear(&a, l, d, &p[bl.wqkv..], &p[bl.bqkv..], 3 * d);

    let mut probs = vec![0.0; heads * nq * l];
    let mut ctx = vec![0.0; nq * d];
    for h in 0..heads {
        for i in 0..nq {
            let q = &qkv[i * 3 * d + h * dh..i * 3 * d + (h + 1) * dh];
            let row = &mut probs[(h * nq + i) * l..(h * nq + i + 1) * l];
            let mut max = f64::NEG_INFINITY;
            for j in 0..l {
                if valid[j] {
                    let k = &qkv[j * 3 * d + d + h * dh..j * 3 * d + d + (h + 1) * dh];
                    row[j] = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                    max = max.max(row[j]);
                }
            }
            let mut sum = 0.0;
            for j in 0..l {
                row[j] = if valid[j] { (row[j] - max).exp() } else { 0.0 };
                sum += row[j];
            }
            let c = &mut ctx[i * d + h * dh..i * d + (h + 1) * dh];
            for j in 0..l {
                row[j] /= sum;
                if row[j] != 0.0 {
                    let v = &qkv[j * 3 * d + 2 * d + h * dh..j * 3 * d + 2 * d + (h + 1) * dh];
                    for (c, v) in c.iter_mut().zip(v) {
                        *c += row[j] * v;
                    }
                }
            }
        }
    }
    let mut o = linear(&ctx, nq, d, &p[bl.wo..], &p[bl.bo..], d);
    let o_mask = dropout_mask(rng, dropout, nq * d);
    apply_mask(&mut o, &o_mask);
    let x1: Vec<f64> = x[..nq * d].iter().zip(&o).map(|(a, b)| a + b).collect();

    let (bn, ln2) = layer_norm(&x1, nq, d, &p[bl.ln2_g..], &p[bl.ln2_b..]);
    let f1 = linear(&bn, nq, d, &p[bl.w1..], &p[bl.b1..], ff);
    let g: Vec<f64> = f1.iter().map(|&v| gelu(v)).collect();
    let mut f2 = linear(&g, nq, ff, &p[bl.w2..], &p[bl.b2..], d);
    let f_mask = dropout_mask(rng, dropout, nq * d);
    apply_mask(&mut f2, &f_mask);
    let out: Vec<f64> = x1.iter().zip(&f2).map(|(a, b)| a + b).collect();
    (out, BlockCache { nq, x, ln1, a, qkv, probs, ctx, o_mask, ln2, bn, f1, g, f_mask })
}

/// Gradient of a block given `dout` (nq × d); returns the gradient with
/// respect to the block input (l × d).
fn block_backward(p: &[f64], bl: &BlockLayout, dims: &Dims, c: &BlockCache, l: usize, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let Dims { d, heads, ff } = *dims;
    let nq = c.nq;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dx1 = dout.to_vec();
    let mut df2 = dout.to_vec();
    apply_mask(&mut df2, &c.f_mask);
    let mut dg = vec![0.0; nq * ff];
    {
        let (dw, db) = split2(grad, bl.w2, ff * d, bl.b2, d);
        linear_back(&c.g, nq, ff, &p[bl.w2..], d, &df2, Some(&mut dg), dw, db);
    }
    for (g, &f) in dg.iter_mut().zip(&c.f1) {
        *g *= gelu_grad(f);
    }
    let mut dbn = vec![0.0; nq * d];
    {
        let (dw, db) = split2(grad, bl.w1, d * ff, bl.b1, ff);
        linear_back(&c.bn, nq, d, &p[bl.w1..], ff, &dg, Some(&mut dbn), dw, db);
    }
    {
        let (dgm, dbt) = split2(grad, bl.ln2_g, d, bl.ln2_b, d);
        layer_norm_back(&c.ln2, nq, d, &p[bl.ln2_g..], &dbn, &mut dx1, dgm, dbt);
    }

    let mut dx = vec![0.0; l * d];
    dx[..nq * d].copy_from_slice(&dx1);
    let mut do_ = dx1;
    apply_mask(&mut do_, &c.o_mask);
    let mut dctx = vec![0.0; nq * d];
    {
        let (dw, db) = split2(grad, bl.wo, d * d, bl.bo, d);
        linear_back(&c.ctx, nq, d, &p[bl.wo..], d, &do_, Some(&mut dctx), dw, db);
    }

    let mut dqkv = vec![0.0; l * 3 * d];
    let mut dp = vec![0.0; l];
    for h in 0..heads {
        for i in 0..nq {
            let row = &c.probs[(h * nq + i) * l..(h * nq + i + 1) * l];
            let dc = &dctx[i * d + h * dh..i * d + (h + 1) * dh];
            let mut dot = 0.0;
            for j in 0..l {
                if row[j] == 0.0 {
                    dp[j] = 0.0;
                    continue;
                }
                let vo = j * 3 * d + 2 * d + h * dh;
                dp[j] = dc.iter().zip(&c.qkv[vo..vo + dh]).map(|(a, b)| a * b).sum();
                for (dv, g) in dqkv[vo..vo + dh].iter_mut().zip(dc) {
                    *dv += row[j] * g;
                }
                dot += row[j] * dp[j];
            }
            let qo = i * 3 * d + h * dh;
            for j in 0..l {
                if row[j] == 0.0 {
                    continue;
                }
                let ds = row[j] * (dp[j] - dot) * scale;
                let ko = j * 3 * d + d + h * dh;
                for t in 0..dh {
                    dqkv[qo + t] += ds * c.qkv[ko + t];
                    dqkv[ko + t] += ds * c.qkv[qo + t];
                }
            }
        }
    }
    let mut da = vec![0.0; l * d];
    {
        let (dw, db) = split2(grad, bl.wqkv, d * 3 * d, bl.bqkv, 3 * d);
        linear_back(&c.a, l, d, &p[bl.wqkv..], 3 * d, &dqkv, Some(&mut da), dw, db);
    }
    {
        let (dgm, dbt) = split2(grad, bl.ln1_g, d, bl.ln1_b, d);
        layer_norm_back(&c.ln1, l, d, &p[bl.ln1_g..], &da, &mut dx, dgm, dbt);
    }
    dx
}

/// Two disjoint mutable windows into `v`, the first starting before the
/// second.
fn split2(v: &mut [f64], a: usize, na: usize, b: usize, nb: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + na <= b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a..a + na], &mut hi[..nb])
}

#[derive(Debug, Clone)]
pub struct TaskTrace {
    block: BlockCache,
    /// Task block output at SEQ_START, before the final layer norm.
    pub hidden: Vec<f64>,
    lnf: LnCache,
    extra_mask: Option<Vec<f64>>,
    head_in: Vec<f64>,
    /// Raw head outputs (logits).
    pub logits: Vec<f64>,
}

/// Everything the backward pass needs for one sequence.
#[derive(Debug, Clone)]
pub struct Trace {
    l: usize,
    ids: Vec<u32>,
    emb_mask: Option<Vec<f64>>,
    blocks: Vec<BlockCache>,
    trunk_out: Vec<f64>,
    pub tasks: Vec<TaskTrace>,
    pub truncated: bool,
}

impl Trace {
    /// SEQ_START representation after the embeddings (`0`) and after each
    /// shared layer (`1..=layers_shared`).
    pub fn trunk_hidden(&self, layer: usize, d: usize) -> Option<&[f64]> {
        if layer < self.blocks.len() {
            Some(&self.blocks[layer].x[..d])
        } else if layer == self.blocks.len() {
            Some(&self.trunk_out[..d])
        } else {
            None
        }
    }
}

/// The network topology: layout plus dropout rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layout: Layout,
    pub dropout: f64,
    pub extra_dropout: f64,
}

impl Network {
    pub fn new(cfg: &EncoderConfig, vocab: usize, tasks: &[TaskSpec]) -> Self {
        Network { layout: Layout::new(cfg, vocab, tasks), dropout: cfg.dropout, extra_dropout: cfg.extra_dropout }
    }

    fn dims(&self) -> Dims {
        Dims { d: self.layout.dim, heads: self.layout.heads, ff: self.layout.ff }
    }

    /// Forward pass for one sequence. Trailing PAD tokens are dropped (they
    /// are masked keys and their own outputs are never read); interior PAD
    /// tokens are masked. Ids past `max_len` are cut off and flagged.
    /// Dropout is active only when `rng` is given.
    pub fn forward(&self, p: &[f64], ids: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> Trace {
        let lay = &self.layout;
        let d = lay.dim;
        let truncated = ids.len() > lay.max_len;
        let mut ids = ids[..ids.len().min(lay.max_len)].to_vec();
        while ids.len() > 1 && *ids.last().unwrap() == PAD {
            ids.pop();
        }
        let l = ids.len();
        let valid: Vec<bool> = ids.iter().enumerate().map(|(i, &t)| i == 0 || t != PAD).collect();
        let mut x = vec![0.0; l * d];
        for (t, &id) in ids.iter().enumerate() {
            let id = (id as usize).min(lay.vocab - 1);
            let (te, pe) = (&p[lay.tok + id * d..lay.tok + (id + 1) * d], &p[lay.pos + t * d..lay.pos + (t + 1) * d]);
            for k in 0..d {
                x[t * d + k] = te[k] + pe[k];
            }
        }
        let emb_mask = dropout_mask(&mut rng, self.dropout, l * d);
        apply_mask(&mut x, &emb_mask);
        let dims = self.dims();
        let mut blocks = Vec::with_capacity(lay.shared.len());
        for bl in &lay.shared {
            let (out, cache) = block_forward(p, bl, &dims, x, l, l, &valid, self.dropout, &mut rng);
            blocks.push(cache);
            x = out;
        }
        let trunk_out = x;
        let tasks = lay
            .task_heads
            .iter()
            .map(|hl| {
                let (hidden, block) = block_forward(p, &hl.block, &dims, trunk_out.clone(), l, 1, &valid, self.dropout, &mut rng);
                let (mut head_in, lnf) = layer_norm(&hidden, 1, d, &p[hl.lnf_g..], &p[hl.lnf_b..]);
                let extra_mask = dropout_mask(&mut rng, self.extra_dropout, d);
                apply_mask(&mut head_in, &extra_mask);
                let logits = linear(&head_in, 1, d, &p[hl.w..], &p[hl.b..], hl.out);
                TaskTrace { block, hidden, lnf, extra_mask, head_in, logits }
            })
            .collect();
        Trace { l, ids, emb_mask, blocks, trunk_out, tasks, truncated }
    }

    /// Accumulate into `grad` the gradient for the loss whose derivative
    /// with respect to task `t`'s logits is `dlogits[t]`; tasks with `None`
    /// are skipped entirely.
    pub fn backward(&self, p: &[f64], tr: &Trace, dlogits: &[Option<Vec<f64>>], grad: &mut [f64]) {
        let lay = &self.layout;
        let d = lay.dim;
        let dims = self.dims();
        let l = tr.l;
        let mut dtrunk = vec![0.0; l * d];
        let mut any = false;
        for ((hl, tt), dz) in lay.task_heads.iter().zip(&tr.tasks).zip(dlogits) {
            let Some(dz) = dz else { continue };
            any = true;
            let mut dhead = vec![0.0; d];
            {
                let (dw, db) = split2(grad, hl.w, d * hl.out, hl.b, hl.out);
                linear_back(&tt.head_in, 1, d, &p[hl.w..], hl.out, dz, Some(&mut dhead), dw, db);
            }
            apply_mask(&mut dhead, &tt.extra_mask);
            let mut dhidden = vec![0.0; d];
            {
                let (dg, db) = split2(grad, hl.lnf_g, d, hl.lnf_b, d);
                layer_norm_back(&tt.lnf, 1, d, &p[hl.lnf_g..], &dhead, &mut dhidden, dg, db);
            }
            let dx = block_backward(p, &hl.block, &dims, &tt.block, l, &dhidden, grad);
            dtrunk.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        if !any {
            return;
        }
        let mut dx = dtrunk;
        for (bl, cache) in lay.shared.iter().zip(&tr.blocks).rev() {
            dx = block_backward(p, bl, &dims, cache, l, &dx, grad);
        }
        apply_mask(&mut dx, &tr.emb_mask);
        for (t, &id) in tr.ids.iter().enumerate() {
            let id = (id as usize).min(lay.vocab - 1);
            for k in 0..d {
                grad[lay.tok + id * d + k] += dx[t * d + k];
                grad[lay.pos + t * d + k] += dx[t * d + k];
            }
        }
    }
}

/// Deterministic generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
