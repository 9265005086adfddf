//! Joint training of both heads on the sum of their cross-entropy losses, and
//! a finite-difference gradient checker.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::{debug, info};
use ndarray::{Array3, ArrayView2, Zip};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_corpus, AggregationMode};
use crate::inference::{predict_corpus, DecodeRule, GateConfig};
use crate::model::{backward, forward_traced, init_params, Batch, DualHeadParams, EncoderConfig, ForwardOutput};
use crate::segmenter::{chunk_document, Chunk, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Window length in word tokens.
    pub window: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Train head B alone and decode without the gate.
    pub single_head_baseline: bool,
    /// Gate used when scoring the held-out split after each epoch.
    pub eval_gate: GateConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 350,
            epochs: 10,
            batch_size: 8,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            single_head_baseline: false,
            eval_gate: GateConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train config: {m}")));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} is outside [0, 1)"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!("adam_eps {} must be positive", self.adam_eps));
        }
        self.eval_gate.validate()
    }

    pub fn decode_rule(&self) -> DecodeRule {
        if self.single_head_baseline {
            DecodeRule::HeadBOnly
        } else {
            DecodeRule::Gated(self.eval_gate)
        }
    }
}

/// Human → 0, any machine label → 1.
pub fn binarize_labels(labels: &[Label]) -> Vec<u8> {
    labels.iter().map(|l| l.is_machine() as u8).collect()
}

/// Which heads contribute to the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heads {
    Both,
    MulticlassOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub head_a: f64,
    pub head_b: f64,
}

/// Mean token cross-entropy of each head over real positions, and their sum.
pub fn multitask_loss(out: &ForwardOutput, labels: &[Vec<Label>], binary: &[Vec<u8>]) -> Result<LossParts> {
    multitask_loss_grad(out, labels, binary, Heads::Both).map(|(loss, _, _)| loss)
}

/// Loss plus its gradient with respect to both logit tensors. With
/// [`Heads::MulticlassOnly`] head A contributes neither loss nor gradient.
pub fn multitask_loss_grad(
    out: &ForwardOutput,
    labels: &[Vec<Label>],
    binary: &[Vec<u8>],
    heads: Heads,
) -> Result<(LossParts, Array3<f64>, Array3<f64>)> {
    let rows = out.n_rows();
    if labels.len() != rows || binary.len() != rows {
        return Err(Error::Contract(format!(
            "{rows} rows but {} label rows and {} binary rows",
            labels.len(),
            binary.len()
        )));
    }
    let n: usize = (0..rows).map(|i| out.row(i).0.nrows()).sum();
    if n == 0 {
        return Err(Error::Contract("loss over a batch with every position masked".into()));
    }
    let scale = 1.0 / n as f64;
    let mut d_a = Array3::zeros(out.logits_a.raw_dim());
    let mut d_b = Array3::zeros(out.logits_b.raw_dim());
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    for i in 0..rows {
        let (la, lb) = out.row(i);
        if labels[i].len() != la.nrows() || binary[i].len() != la.nrows() {
            return Err(Error::Contract(format!(
                "row {i} has {} real positions but {} labels and {} binary labels",
                la.nrows(),
                labels[i].len(),
                binary[i].len()
            )));
        }
        for t in 0..la.nrows() {
            if heads == Heads::Both {
                sum_a += cross_entropy(
                    la,
                    t,
                    binary[i][t] as usize,
                    scale,
                    d_a.slice_mut(ndarray::s![i, t, ..]),
                );
            }
            sum_b += cross_entropy(lb, t, labels[i][t].index(), scale, d_b.slice_mut(ndarray::s![i, t, ..]));
        }
    }
    let head_a = sum_a * scale;
    let head_b = sum_b * scale;
    Ok((
        LossParts {
            total: head_a + head_b,
            head_a,
            head_b,
        },
        d_a,
        d_b,
    ))
}

/// `-log softmax(z)[target]` for row `t`; writes `scale·(softmax − onehot)` into `grad`.
fn cross_entropy(
    logits: ArrayView2<'_, f64>,
    t: usize,
    target: usize,
    scale: f64,
    mut grad: ndarray::ArrayViewMut1<'_, f64>,
) -> f64 {
    let z = logits.row(t);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    for (k, (g, &v)) in grad.iter_mut().zip(z.iter()).enumerate() {
        let p = (v - lse).exp();
        *g = scale * (p - if k == target { 1.0 } else { 0.0 });
    }
    lse - z[target]
}

/// Adam with bias correction; moments have the parameters' shapes.
#[derive(Debug, Clone)]
pub struct Adam {
    m: DualHeadParams,
    v: DualHeadParams,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &DualHeadParams, config: &TrainConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    pub fn step(&mut self, params: &mut DualHeadParams, grads: &DualHeadParams) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.lr;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads.tensors());
        for ((((_, p), (_, m)), (_, v)), (_, g)) in tensors {
            Zip::from(p).and(m).and(v).and(&g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    #[serde(rename = "loss_A")]
    pub loss_a: f64,
    #[serde(rename = "loss_B")]
    pub loss_b: f64,
    pub eval_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for record in &self.epochs {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn read_jsonl<R: Read>(reader: R) -> Result<Self> {
        let mut epochs = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                index: i,
                message: e.to_string(),
            })?;
            epochs.push(record);
        }
        Ok(Self { epochs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(File::open(path)?)
    }
}

/// A chunk with its per-subword supervision.
#[derive(Debug, Clone)]
pub struct TrainingChunk {
    pub chunk: Chunk,
    pub labels: Vec<Label>,
    pub binary: Vec<u8>,
}

/// Chunks every document; word labels are copied onto all subwords of the word.
pub fn training_chunks(
    docs: &[Document],
    vocab: &Vocabulary,
    window: usize,
    max_subwords: usize,
) -> Result<Vec<TrainingChunk>> {
    let mut out = Vec::new();
    for doc in docs {
        for chunk in chunk_document(doc, window, vocab, max_subwords)? {
            let labels = chunk.broadcast_word_labels(&doc.token_labels[chunk.word_range.clone()]);
            let binary = binarize_labels(&labels);
            out.push(TrainingChunk { chunk, labels, binary });
        }
    }
    Ok(out)
}

/// Splits off the last 10% of documents (by input order) for evaluation.
pub fn split_holdout(corpus: &[Document]) -> (&[Document], &[Document]) {
    let n_holdout = corpus.len() / 10;
    corpus.split_at(corpus.len() - n_holdout)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for a (run seed, epoch, step) triple.
pub fn derive_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ epoch as u64) ^ step as u64)
}

/// Shuffled mini-batches of chunk indices for one epoch. Depends only on the
/// arguments, so runs with equal seeds see identical batches.
pub fn batch_order(n_chunks: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n_chunks).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch, usize::MAX));
    idx.shuffle(&mut rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Trains from `init_params(enc_config, seed)`. `enc_config.vocab_size` is
/// replaced by the vocabulary's size. The last 10% of documents are held out
/// and scored (per-document mean macro-F1) after every epoch.
pub fn train(
    corpus: &[Document],
    vocab: &Vocabulary,
    enc_config: &EncoderConfig,
    t_config: &TrainConfig,
) -> Result<(DualHeadParams, TrainHistory)> {
    t_config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("cannot train on an empty corpus".into()));
    }
    let mut config = enc_config.clone();
    config.vocab_size = vocab.len();
    let mut params = init_params(&config, t_config.seed)?;
    let (train_docs, held_out) = split_holdout(corpus);
    let chunks = training_chunks(train_docs, vocab, t_config.window, config.max_subwords)?;
    let heads = if t_config.single_head_baseline {
        Heads::MulticlassOnly
    } else {
        Heads::Both
    };
    let rule = t_config.decode_rule();
    info!(
        "training on {} documents ({} chunks), holding out {}; {} parameters",
        train_docs.len(),
        chunks.len(),
        held_out.len(),
        params.num_parameters()
    );

    let mut adam = Adam::new(&params, t_config);
    let mut history = TrainHistory::default();
    for epoch in 0..t_config.epochs {
        let batches = batch_order(chunks.len(), t_config.batch_size, t_config.seed, epoch);
        let (mut sum_total, mut sum_a, mut sum_b) = (0.0, 0.0, 0.0);
        for (step, members) in batches.iter().enumerate() {
            let selected: Vec<&TrainingChunk> = members.iter().map(|&i| &chunks[i]).collect();
            let rows: Vec<&Chunk> = selected.iter().map(|c| &c.chunk).collect();
            let labels: Vec<Vec<Label>> = selected.iter().map(|c| c.labels.clone()).collect();
            let binary: Vec<Vec<u8>> = selected.iter().map(|c| c.binary.clone()).collect();
            let batch = Batch::from_chunks(&rows);
            let dropout_seed = derive_seed(t_config.seed, epoch, step);
            let (out, trace) = forward_traced(&params, &batch, true, dropout_seed)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
            let (loss, d_a, d_b) = multitask_loss_grad(&out, &labels, &binary, heads)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, step {step}")));
            }
            let grads = backward(&params, &trace, &d_a, &d_b);
            adam.step(&mut params, &grads);
            sum_total += loss.total;
            sum_a += loss.head_a;
            sum_b += loss.head_b;
            debug!("epoch {epoch} step {step}: loss {:.5}", loss.total);
        }
        let n = batches.len().max(1) as f64;
        let eval_macro_f1 = if held_out.is_empty() {
            None
        } else {
            let preds = predict_corpus(&params, held_out, vocab, t_config.window, &rule)?;
            Some(evaluate_corpus(held_out, &preds, AggregationMode::PerDocumentMean)?.macro_f1)
        };
        let record = EpochRecord {
            epoch,
            loss_total: sum_total / n,
            loss_a: sum_a / n,
            loss_b: sum_b / n,
            eval_macro_f1,
        };
        info!(
            "epoch {epoch}: loss {:.4} (A {:.4}, B {:.4}) held-out macro F1 {}",
            record.loss_total,
            record.loss_a,
            record.loss_b,
            eval_macro_f1.map_or("-".to_string(), |f| format!("{f:.4}"))
        );
        history.epochs.push(record);
    }
    Ok((params, history))
}

/// One compared coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_relative_error: f64,
}

/// Eval-mode loss of both heads.
pub fn batch_loss(params: &DualHeadParams, batch: &Batch, labels: &[Vec<Label>]) -> Result<LossParts> {
    let binary: Vec<Vec<u8>> = labels.iter().map(|l| binarize_labels(l)).collect();
    let (out, _) = forward_traced(params, batch, false, 0)?;
    multitask_loss(&out, labels, &binary)
}

/// Backpropagated gradient of the eval-mode total loss.
pub fn analytic_gradient(params: &DualHeadParams, batch: &Batch, labels: &[Vec<Label>]) -> Result<DualHeadParams> {
    let binary: Vec<Vec<u8>> = labels.iter().map(|l| binarize_labels(l)).collect();
    let (out, trace) = forward_traced(params, batch, false, 0)?;
    let (_, d_a, d_b) = multitask_loss_grad(&out, labels, &binary, Heads::Both)?;
    Ok(backward(params, &trace, &d_a, &d_b))
}

/// Compares `analytic` against central differences `(f(θ+ε) − f(θ−ε)) / 2ε` on
/// `n_samples` random coordinates plus every head-bias coordinate.
pub fn compare_gradients(
    params: &DualHeadParams,
    batch: &Batch,
    labels: &[Vec<Label>],
    analytic: &DualHeadParams,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if n_samples == 0 {
        return Err(Error::Contract(
            "gradient check needs at least one sampled coordinate".into(),
        ));
    }
    let names_and_sizes: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let total: usize = names_and_sizes.iter().map(|(_, s)| s).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat: Vec<usize> = index::sample(&mut rng, total, n_samples.min(total)).into_vec();
    let mut start = 0;
    for (name, size) in &names_and_sizes {
        if name == "head_a.bias" || name == "head_b.bias" {
            flat.extend(start..start + size);
        }
        start += size;
    }
    flat.sort_unstable();
    flat.dedup();

    let analytic_flat: Vec<f64> = analytic
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
        .collect();
    let mut work = params.clone();
    let mut entries = Vec::with_capacity(flat.len());
    for &coord in &flat {
        let (k, offset) = locate(&names_and_sizes, coord);
        let original = get_coord(&mut work, k, offset);
        set_coord(&mut work, k, offset, original + epsilon);
        let plus = batch_loss(&work, batch, labels)?.total;
        set_coord(&mut work, k, offset, original - epsilon);
        let minus = batch_loss(&work, batch, labels)?.total;
        set_coord(&mut work, k, offset, original);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic_flat[coord];
        let relative_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        entries.push(GradCheckEntry {
            tensor: names_and_sizes[k].0.clone(),
            index: offset,
            analytic: a,
            numeric,
            relative_error,
        });
    }
    let max_relative_error = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_relative_error,
    })
}

/// Max relative error between backprop and finite differences on 200 sampled
/// coordinates plus the head biases.
pub fn grad_check(params: &DualHeadParams, batch: &Batch, labels: &[Vec<Label>], epsilon: f64) -> Result<f64> {
    let analytic = analytic_gradient(params, batch, labels)?;
    Ok(compare_gradients(params, batch, labels, &analytic, epsilon, 200, 0)?.max_relative_error)
}

fn locate(sizes: &[(String, usize)], mut coord: usize) -> (usize, usize) {
    for (k, (_, size)) in sizes.iter().enumerate() {
        if coord < *size {
            return (k, coord);
        }
        coord -= size;
    }
    unreachable!("coordinate beyond parameter count")
}

fn get_coord(params: &mut DualHeadParams, k: usize, offset: usize) -> f64 {
    let mut tensors = params.tensors_mut();
    tensors[k].1.as_slice_mut().expect("standard layout")[offset]
}

fn set_coord(params: &mut DualHeadParams, k: usize, offset: usize, value: f64) {
    let mut tensors = params.tensors_mut();
    tensors[k].1.as_slice_mut().expect("standard layout")[offset] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderConfig;
    use ndarray::Array3;
    use rand::Rng;
    use Label::*;

    fn output(a: Array3<f64>, b: Array3<f64>) -> ForwardOutput {
        let (n, t, _) = a.dim();
        ForwardOutput {
            logits_a: a,
            logits_b: b,
            pad_mask: ndarray::Array2::from_elem((n, t), true),
        }
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(
            binarize_labels(&[Human, Chatgpt, Summarized, NltkSynonym]),
            vec![0, 1, 1, 1]
        );
        assert_eq!(binarize_labels(&[Human; 3]), vec![0; 3]);
        assert_eq!(binarize_labels(&[Chatgpt; 3]), vec![1; 3]);
        for l in Label::ALL {
            assert_eq!(binarize_labels(&[l])[0], (l.id() > 0) as u8);
        }
    }

    #[test]
    fn uniform_logits_give_ln2_plus_ln4() {
        let out = output(Array3::zeros((2, 3, 2)), Array3::zeros((2, 3, 4)));
        let labels = vec![vec![Human, Chatgpt, Summarized], vec![NltkSynonym, Human, Human]];
        let binary: Vec<Vec<u8>> = labels.iter().map(|l| binarize_labels(l)).collect();
        let loss = multitask_loss(&out, &labels, &binary).unwrap();
        assert!((loss.total - (2f64.ln() + 4f64.ln())).abs() < 1e-12);
        assert!((loss.head_a - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_logits_give_zero_loss() {
        let labels = vec![vec![Human, Chatgpt]];
        let binary = vec![binarize_labels(&labels[0])];
        let mut a = Array3::zeros((1, 2, 2));
        let mut b = Array3::zeros((1, 2, 4));
        for (t, l) in labels[0].iter().enumerate() {
            a[[0, t, binary[0][t] as usize]] = 1000.0;
            b[[0, t, l.index()]] = 1000.0;
        }
        let loss = multitask_loss(&output(a, b), &labels, &binary).unwrap();
        assert!(loss.total <= 1e-6);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Array3::from_shape_simple_fn((1, 6, 2), || rng.random_range(-3.0..3.0));
        let b = Array3::from_shape_simple_fn((1, 6, 4), || rng.random_range(-3.0..3.0));
        let labels = vec![(0..6).map(|_| Label::ALL[rng.random_range(0..4)]).collect::<Vec<_>>()];
        let binary = vec![binarize_labels(&labels[0])];
        // oracle: -ln(e^{z_y} / Σ e^{z_k}) summed and averaged per head
        let ce = |z: Vec<f64>, y: usize| -(z[y].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
        let mut oa = 0.0;
        let mut ob = 0.0;
        for t in 0..6 {
            oa += ce(vec![a[[0, t, 0]], a[[0, t, 1]]], binary[0][t] as usize);
            ob += ce((0..4).map(|k| b[[0, t, k]]).collect(), labels[0][t].index());
        }
        let expected = oa / 6.0 + ob / 6.0;
        let loss = multitask_loss(&output(a, b), &labels, &binary).unwrap();
        assert!((loss.total - expected).abs() < 1e-6);
        assert_eq!(loss.total, loss.head_a + loss.head_b);
    }

    #[test]
    fn padded_positions_do_not_count() {
        let mut out = output(Array3::zeros((1, 3, 2)), Array3::zeros((1, 3, 4)));
        out.pad_mask[[0, 2]] = false;
        out.logits_b[[0, 2, 0]] = 50.0;
        let labels = vec![vec![Chatgpt, Chatgpt]];
        let binary = vec![vec![1, 1]];
        let (loss, _, db) = multitask_loss_grad(&out, &labels, &binary, Heads::Both).unwrap();
        assert!((loss.head_b - 4f64.ln()).abs() < 1e-12);
        assert!(db.slice(ndarray::s![0, 2, ..]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn all_masked_is_error() {
        let mut out = output(Array3::zeros((1, 2, 2)), Array3::zeros((1, 2, 4)));
        out.pad_mask.fill(false);
        assert!(matches!(
            multitask_loss(&out, &[vec![]], &[vec![]]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn multiclass_only_drops_head_a() {
        let out = output(Array3::zeros((1, 2, 2)), Array3::zeros((1, 2, 4)));
        let labels = vec![vec![Human, Chatgpt]];
        let binary = vec![vec![0, 1]];
        let (loss, da, _) = multitask_loss_grad(&out, &labels, &binary, Heads::MulticlassOnly).unwrap();
        assert_eq!(loss.head_a, 0.0);
        assert_eq!(loss.total, loss.head_b);
        assert!(da.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_order_is_a_seeded_permutation() {
        let a = batch_order(23, 4, 9, 0);
        assert_eq!(a, batch_order(23, 4, 9, 0));
        assert_ne!(a, batch_order(23, 4, 9, 1));
        assert_eq!(a.len(), 6);
        let mut all: Vec<usize> = a.into_iter().flatten().collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_is_last_tenth() {
        let docs = crate::corpus::generate_synthetic(&crate::corpus::SyntheticSpec {
            n_docs: 25,
            ..Default::default()
        })
        .unwrap();
        let (train, held) = split_holdout(&docs);
        assert_eq!((train.len(), held.len()), (23, 2));
        assert_eq!(held[1].doc_id, docs[24].doc_id);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let config = EncoderConfig {
            vocab_size: 4,
            hidden_dim: 4,
            n_layers: 1,
            n_attention_heads: 1,
            ffn_dim: 4,
            max_subwords: 4,
            ..EncoderConfig::default()
        };
        let mut params = init_params(&config, 0).unwrap();
        let before = params.head_b.bias.clone();
        let mut grads = params.zeros_like();
        grads.head_b.bias[0] = 1.0;
        grads.head_b.bias[1] = -1.0;
        let mut adam = Adam::new(&params, &TrainConfig::default());
        adam.step(&mut params, &grads);
        // first Adam step moves each coordinate by ~lr in the sign direction
        assert!((params.head_b.bias[0] - (before[0] - 3e-4)).abs() < 1e-9);
        assert!((params.head_b.bias[1] - (before[1] + 3e-4)).abs() < 1e-9);
        assert_eq!(params.head_b.bias[2], before[2]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
