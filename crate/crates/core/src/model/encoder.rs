//! Forward and backward passes. Each batch row is processed independently;
//! padding is excluded from attention by masking keys.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DualHeadParams, EncoderLayer, LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::segmenter::{Chunk, PAD_ID};

const LN_EPS: f64 = 1e-5;

/// Right-padded subword ids. `mask` is true at real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Array2<u32>,
    pub mask: Array2<bool>,
}

impl Batch {
    pub fn from_rows(rows: &[&[u32]]) -> Self {
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut ids = Array2::from_elem((rows.len(), width), PAD_ID);
        let mut mask = Array2::from_elem((rows.len(), width), false);
        for (i, row) in rows.iter().enumerate() {
            for (t, &id) in row.iter().enumerate() {
                ids[[i, t]] = id;
                mask[[i, t]] = true;
            }
        }
        Self { ids, mask }
    }

    pub fn from_chunks(chunks: &[&Chunk]) -> Self {
        let rows: Vec<&[u32]> = chunks.iter().map(|c| c.subword_ids.as_slice()).collect();
        Self::from_rows(&rows)
    }

    pub fn n_rows(&self) -> usize {
        self.ids.nrows()
    }

    pub fn width(&self) -> usize {
        self.ids.ncols()
    }

    /// Number of real tokens in row `i`.
    pub fn row_len(&self, i: usize) -> usize {
        self.mask.row(i).iter().filter(|&&m| m).count()
    }

    /// Padding added to each row.
    pub fn pad_lengths(&self) -> Vec<usize> {
        (0..self.n_rows()).map(|i| self.width() - self.row_len(i)).collect()
    }
}

/// Per-position logits for a batch (rows × width × classes).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits_a: Array3<f64>,
    pub logits_b: Array3<f64>,
    pub pad_mask: Array2<bool>,
}

impl ForwardOutput {
    pub fn n_rows(&self) -> usize {
        self.pad_mask.nrows()
    }

    /// Logits of the real tokens of row `i`.
    pub fn row(&self, i: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        let len = self.pad_mask.row(i).iter().filter(|&&m| m).count();
        (
            self.logits_a.slice(s![i, ..len, ..]),
            self.logits_b.slice(s![i, ..len, ..]),
        )
    }
}

struct NormTrace {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerTrace {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    norm1: NormTrace,
    y1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
    norm2: NormTrace,
}

struct RowTrace {
    ids: Vec<u32>,
    layers: Vec<LayerTrace>,
    head_drop: Option<Array2<f64>>,
    head_input: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct Trace {
    rows: Vec<RowTrace>,
}

impl Trace {
    /// The (post-dropout) vectors fed to both heads for row `i`.
    pub fn head_input(&self, i: usize) -> &Array2<f64> {
        &self.rows[i].head_input
    }
}

/// Runs the model. In train mode dropout masks are drawn from `dropout_seed`;
/// in eval mode no dropout is applied and the seed is ignored.
pub fn forward(params: &DualHeadParams, batch: &Batch, train: bool, dropout_seed: u64) -> Result<ForwardOutput> {
    forward_traced(params, batch, train, dropout_seed).map(|(out, _)| out)
}

pub fn forward_traced(
    params: &DualHeadParams,
    batch: &Batch,
    train: bool,
    dropout_seed: u64,
) -> Result<(ForwardOutput, Trace)> {
    let cfg = &params.config;
    if batch.width() > cfg.max_subwords {
        return Err(Error::Input(format!(
            "batch width {} exceeds max_subwords {}",
            batch.width(),
            cfg.max_subwords
        )));
    }
    if let Some(&bad) = batch.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Input(format!(
            "subword id {bad} is out of range for vocabulary size {}",
            cfg.vocab_size
        )));
    }
    let (n, width) = batch.ids.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut logits_a = Array3::zeros((n, width, 2));
    let mut logits_b = Array3::zeros((n, width, 4));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let ids: Vec<u32> = batch.ids.row(i).to_vec();
        let mask: Vec<bool> = batch.mask.row(i).to_vec();
        if !mask.iter().any(|&m| m) {
            return Err(Error::Input(format!("batch row {i} has no real tokens")));
        }
        let rng = if train { Some(&mut rng) } else { None };
        let (la, lb, trace) = forward_row(params, ids, &mask, rng);
        if la.iter().chain(lb.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits in batch row {i}")));
        }
        logits_a.slice_mut(s![i, .., ..]).assign(&la);
        logits_b.slice_mut(s![i, .., ..]).assign(&lb);
        rows.push(trace);
    }
    Ok((
        ForwardOutput {
            logits_a,
            logits_b,
            pad_mask: batch.mask.clone(),
        },
        Trace { rows },
    ))
}

fn forward_row(
    params: &DualHeadParams,
    ids: Vec<u32>,
    mask: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, Array2<f64>, RowTrace) {
    let cfg = &params.config;
    let t = ids.len();
    let mut x = Array2::zeros((t, cfg.hidden_dim));
    for (pos, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(pos);
        row.assign(&params.token_embedding.row(id as usize));
        row += &params.position_embedding.row(pos);
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (out, trace) = layer_forward(layer, cfg.n_attention_heads, x, mask, cfg.dropout_p, rng.as_deref_mut());
        layers.push(trace);
        x = out;
    }
    let head_drop = rng.and_then(|r| dropout_mask(r, x.dim(), cfg.head_dropout_p));
    let head_input = match &head_drop {
        Some(m) => &x * m,
        None => x,
    };
    let la = params.head_a.apply(&head_input);
    let lb = params.head_b.apply(&head_input);
    (
        la,
        lb,
        RowTrace {
            ids,
            layers,
            head_drop,
            head_input,
        },
    )
}

/// Inverted dropout: kept entries are scaled by 1/(1-p). `None` when p is 0.
fn dropout_mask(rng: &mut ChaCha8Rng, dim: (usize, usize), p: f64) -> Option<Array2<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    Some(Array2::from_shape_simple_fn(dim, || {
        if rng.random::<f64>() < keep {
            scale
        } else {
            0.0
        }
    }))
}

fn layer_forward(
    layer: &EncoderLayer,
    n_heads: usize,
    x: Array2<f64>,
    mask: &[bool],
    dropout_p: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, LayerTrace) {
    let (t, h) = x.dim();
    let dh = h / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = layer.query.apply(&x);
    let k = layer.key.apply(&x);
    let v = layer.value.apply(&x);
    let mut context = Array2::zeros((t, h));
    let mut probs = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        masked_softmax_rows(&mut scores, mask);
        general_mat_mul(1.0, &scores, &v.slice(cols), 0.0, &mut context.slice_mut(cols));
        probs.push(scores);
    }
    let mut attn = layer.attn_out.apply(&context);
    let attn_drop = rng.as_deref_mut().and_then(|r| dropout_mask(r, (t, h), dropout_p));
    if let Some(m) = &attn_drop {
        attn *= m;
    }
    let (y1, norm1) = layer_norm(&(&x + &attn), &layer.attn_norm);
    let pre_act = layer.ffn_in.apply(&y1);
    let act = pre_act.mapv(gelu);
    let mut ffn = layer.ffn_out.apply(&act);
    let ffn_drop = rng.and_then(|r| dropout_mask(r, (t, h), dropout_p));
    if let Some(m) = &ffn_drop {
        ffn *= m;
    }
    let (out, norm2) = layer_norm(&(&y1 + &ffn), &layer.ffn_norm);
    (
        out,
        LayerTrace {
            input: x,
            q,
            k,
            v,
            probs,
            context,
            attn_drop,
            norm1,
            y1,
            pre_act,
            act,
            ffn_drop,
            norm2,
        },
    )
}

fn masked_softmax_rows(scores: &mut Array2<f64>, mask: &[bool]) {
    for mut row in scores.rows_mut() {
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (s, &m) in row.iter_mut().zip(mask) {
            *s = if m { (*s - max).exp() } else { 0.0 };
            sum += *s;
        }
        row /= sum;
    }
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormTrace) {
    let h = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / h;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / h;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let y = &xhat * &ln.gain + &ln.offset;
    (y, NormTrace { xhat, inv_std })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Gradients of `sum(d_logits_a · logits_a) + sum(d_logits_b · logits_b)` with
/// respect to every parameter. Upstream gradients at padded positions must be 0.
pub fn backward(
    params: &DualHeadParams,
    trace: &Trace,
    d_logits_a: &Array3<f64>,
    d_logits_b: &Array3<f64>,
) -> DualHeadParams {
    let mut grads = params.zeros_like();
    for (i, row) in trace.rows.iter().enumerate() {
        let dla = d_logits_a.slice(s![i, .., ..]).to_owned();
        let dlb = d_logits_b.slice(s![i, .., ..]).to_owned();
        backward_row(params, row, &dla, &dlb, &mut grads);
    }
    grads
}

fn backward_row(
    params: &DualHeadParams,
    row: &RowTrace,
    dla: &Array2<f64>,
    dlb: &Array2<f64>,
    grads: &mut DualHeadParams,
) {
    let mut dx = linear_backward(&row.head_input, dla, &params.head_a, &mut grads.head_a);
    dx += &linear_backward(&row.head_input, dlb, &params.head_b, &mut grads.head_b);
    if let Some(m) = &row.head_drop {
        dx *= m;
    }
    let n_heads = params.config.n_attention_heads;
    for ((layer, trace), g) in params.layers.iter().zip(&row.layers).zip(grads.layers.iter_mut()).rev() {
        dx = layer_backward(layer, trace, n_heads, dx, g);
    }
    for (pos, &id) in row.ids.iter().enumerate() {
        let d = dx.row(pos);
        let mut te = grads.token_embedding.row_mut(id as usize);
        te += &d;
        let mut pe = grads.position_embedding.row_mut(pos);
        pe += &d;
    }
}

fn linear_backward(x: &Array2<f64>, dy: &Array2<f64>, lin: &Linear, g: &mut Linear) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut g.weight);
    g.bias += &dy.sum_axis(Axis(0));
    dy.dot(&lin.weight.t())
}

fn layer_norm_backward(dy: &Array2<f64>, tr: &NormTrace, ln: &LayerNorm, g: &mut LayerNorm) -> Array2<f64> {
    g.gain += &(dy * &tr.xhat).sum_axis(Axis(0));
    g.offset += &dy.sum_axis(Axis(0));
    let mut dxhat = dy * &ln.gain;
    let h = dy.ncols() as f64;
    for ((mut d, xh), &is) in dxhat.rows_mut().into_iter().zip(tr.xhat.rows()).zip(tr.inv_std.iter()) {
        let mean_d = d.sum() / h;
        let mean_dx = d.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / h;
        Zip::from(&mut d)
            .and(&xh)
            .for_each(|d, &x| *d = is * (*d - mean_d - x * mean_dx));
    }
    dxhat
}

fn layer_backward(
    layer: &EncoderLayer,
    tr: &LayerTrace,
    n_heads: usize,
    d_out: Array2<f64>,
    g: &mut EncoderLayer,
) -> Array2<f64> {
    let dr2 = layer_norm_backward(&d_out, &tr.norm2, &layer.ffn_norm, &mut g.ffn_norm);
    let mut dy1 = dr2.clone();
    let mut dffn = dr2;
    if let Some(m) = &tr.ffn_drop {
        dffn *= m;
    }
    let mut dact = linear_backward(&tr.act, &dffn, &layer.ffn_out, &mut g.ffn_out);
    Zip::from(&mut dact)
        .and(&tr.pre_act)
        .for_each(|d, &x| *d *= gelu_grad(x));
    dy1 += &linear_backward(&tr.y1, &dact, &layer.ffn_in, &mut g.ffn_in);

    let dr1 = layer_norm_backward(&dy1, &tr.norm1, &layer.attn_norm, &mut g.attn_norm);
    let mut dx = dr1.clone();
    let mut dattn = dr1;
    if let Some(m) = &tr.attn_drop {
        dattn *= m;
    }
    let dcontext = linear_backward(&tr.context, &dattn, &layer.attn_out, &mut g.attn_out);

    let (t, h) = tr.q.dim();
    let dh = h / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((t, h));
    let mut dk = Array2::zeros((t, h));
    let mut dv = Array2::zeros((t, h));
    for (head, probs) in tr.probs.iter().enumerate() {
        let cols = s![.., head * dh..(head + 1) * dh];
        let dctx = dcontext.slice(cols);
        let dprobs = dctx.dot(&tr.v.slice(cols).t());
        general_mat_mul(1.0, &probs.t(), &dctx, 0.0, &mut dv.slice_mut(cols));
        let mut dscores = probs * &dprobs;
        for (mut ds, p) in dscores.rows_mut().into_iter().zip(probs.rows()) {
            let dot: f64 = ds.sum();
            Zip::from(&mut ds).and(&p).for_each(|d, &p| *d = (*d - p * dot) * scale);
        }
        general_mat_mul(1.0, &dscores, &tr.k.slice(cols), 0.0, &mut dq.slice_mut(cols));
        general_mat_mul(1.0, &dscores.t(), &tr.q.slice(cols), 0.0, &mut dk.slice_mut(cols));
    }
    dx += &linear_backward(&tr.input, &dq, &layer.query, &mut g.query);
    dx += &linear_backward(&tr.input, &dk, &layer.key, &mut g.key);
    dx += &linear_backward(&tr.input, &dv, &layer.value, &mut g.value);
    dx
}
