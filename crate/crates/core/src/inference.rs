//! Gated decoding and document-level prediction.
//!
//! For each chunk, head A gives every subword a machine probability. If the
//! largest of those exceeds the threshold, every subword of the chunk is
//! labeled by head B's argmax; otherwise the whole chunk is labeled human.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{annotation_triples, Annotation, Document, Label};
use crate::error::{Error, Result};
use crate::model::{forward, Batch, DualHeadParams, ForwardOutput};
use crate::segmenter::{align_predictions, chunk_document, reassemble, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub tau: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { tau: 0.55 }
    }
}

impl GateConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let gate = Self { tau };
        gate.validate()?;
        Ok(gate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("gate threshold {} is outside [0, 1]", self.tau)));
        }
        Ok(())
    }
}

/// How chunk logits become labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeRule {
    /// Head A gates head B.
    Gated(GateConfig),
    /// Head B argmax everywhere (single-head baseline).
    HeadBOnly,
}

fn softmax(logits: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax probability of the machine class under head A.
pub fn machine_probability(logits_a: ArrayView1<'_, f64>) -> f64 {
    softmax(logits_a)[1]
}

/// Argmax over head B scores; ties go to the smaller label id.
pub fn head_b_label(logits_b: ArrayView1<'_, f64>) -> Label {
    let mut best = 0;
    for (i, &z) in logits_b.iter().enumerate() {
        if z > logits_b[best] {
            best = i;
        }
    }
    Label::ALL[best]
}

/// True when some position's machine probability is strictly above `tau`.
pub fn gate_fires(logits_a: ArrayView2<'_, f64>, gate: &GateConfig) -> Result<bool> {
    if logits_a.nrows() == 0 {
        return Err(Error::Contract("gate over a sequence with no real tokens".into()));
    }
    Ok(logits_a
        .rows()
        .into_iter()
        .any(|row| machine_probability(row) > gate.tau))
}

/// Labels the real positions of one sequence.
pub fn gated_decode(
    logits_a: ArrayView2<'_, f64>,
    logits_b: ArrayView2<'_, f64>,
    gate: &GateConfig,
) -> Result<Vec<Label>> {
    if gate_fires(logits_a, gate)? {
        Ok(logits_b.rows().into_iter().map(head_b_label).collect())
    } else {
        Ok(vec![Label::Human; logits_a.nrows()])
    }
}

pub fn decode_sequence(
    logits_a: ArrayView2<'_, f64>,
    logits_b: ArrayView2<'_, f64>,
    rule: &DecodeRule,
) -> Result<Vec<Label>> {
    match rule {
        DecodeRule::Gated(gate) => gated_decode(logits_a, logits_b, gate),
        DecodeRule::HeadBOnly => {
            if logits_b.nrows() == 0 {
                return Err(Error::Contract("decode of a sequence with no real tokens".into()));
            }
            Ok(logits_b.rows().into_iter().map(head_b_label).collect())
        }
    }
}

/// Decodes every row of a forward output.
pub fn decode_output(out: &ForwardOutput, rule: &DecodeRule) -> Result<Vec<Vec<Label>>> {
    (0..out.n_rows())
        .map(|i| {
            let (a, b) = out.row(i);
            decode_sequence(a, b, rule)
        })
        .collect()
}

/// Labels for one document, at word-token level and as character spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub doc_id: String,
    pub word_labels: Vec<Label>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    doc_id: String,
    token_label_ids: Vec<i64>,
    annotations: Vec<(usize, usize, String)>,
}

/// Windows, subtokenizes, runs the model per chunk, decodes, and maps labels
/// back to word tokens and spans. The gate is applied to each chunk separately.
pub fn predict_document(
    params: &DualHeadParams,
    doc: &Document,
    vocab: &Vocabulary,
    window: usize,
    rule: &DecodeRule,
) -> Result<Prediction> {
    let chunks = chunk_document(doc, window, vocab, params.config.max_subwords)?;
    let mut parts = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        let out = forward(params, &Batch::from_chunks(&[chunk]), false, 0)?;
        let (a, b) = out.row(0);
        let subword_labels = decode_sequence(a, b, rule)?;
        parts.push((chunk.word_range.clone(), align_predictions(chunk, &subword_labels)?));
    }
    let word_labels = reassemble(doc.len(), parts)?;
    let annotations = labels_to_spans(doc, &word_labels)?;
    Ok(Prediction {
        doc_id: doc.doc_id.clone(),
        word_labels,
        annotations,
    })
}

pub fn predict_corpus(
    params: &DualHeadParams,
    docs: &[Document],
    vocab: &Vocabulary,
    window: usize,
    rule: &DecodeRule,
) -> Result<Vec<Prediction>> {
    docs.iter()
        .map(|doc| predict_document(params, doc, vocab, window, rule))
        .collect()
}

/// Maximal runs of equal labels become spans. Each span ends where the next
/// run's first token starts, so inter-token whitespace goes to the earlier span.
pub fn labels_to_spans(doc: &Document, word_labels: &[Label]) -> Result<Vec<Annotation>> {
    if word_labels.len() != doc.len() {
        return Err(Error::Contract(format!(
            "{} labels for a document with {} tokens",
            word_labels.len(),
            doc.len()
        )));
    }
    let mut spans: Vec<Annotation> = Vec::new();
    for (j, &label) in word_labels.iter().enumerate() {
        match spans.last_mut() {
            Some(last) if last.label == label => {}
            Some(last) => {
                let start = doc.token_offsets[j].0;
                last.end_char = start;
                spans.push(Annotation::new(start, start, label));
            }
            None => spans.push(Annotation::new(0, 0, label)),
        }
    }
    if let Some(last) = spans.last_mut() {
        last.end_char = doc.char_len();
    }
    Ok(spans)
}

impl Prediction {
    fn to_record(&self) -> PredictionRecord {
        PredictionRecord {
            doc_id: self.doc_id.clone(),
            token_label_ids: self.word_labels.iter().map(|l| l.id() as i64).collect(),
            annotations: annotation_triples(&self.annotations),
        }
    }

    fn from_record(index: usize, r: PredictionRecord) -> Result<Self> {
        let bad = |m: String| Error::Validation(format!("prediction record {index}: {m}"));
        let word_labels = r
            .token_label_ids
            .iter()
            .map(|&id| Label::from_id(id).ok_or_else(|| bad(format!("label id {id} is not in 0..=3"))))
            .collect::<Result<Vec<_>>>()?;
        let annotations = r
            .annotations
            .into_iter()
            .map(|(s, e, name)| {
                Label::from_name(&name)
                    .map(|l| Annotation::new(s, e, l))
                    .ok_or_else(|| bad(format!("unknown label name {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            doc_id: r.doc_id,
            word_labels,
            annotations,
        })
    }
}

pub fn write_predictions<W: Write>(writer: W, preds: &[Prediction]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for p in preds {
        serde_json::to_writer(&mut w, &p.to_record())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            index,
            message: e.to_string(),
        })?;
        out.push(Prediction::from_record(index, record)?);
    }
    Ok(out)
}

pub fn save_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    write_predictions(File::create(path)?, preds)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    read_predictions(File::open(path)?)
}
