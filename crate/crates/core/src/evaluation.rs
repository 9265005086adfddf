//! Word-token scoring: confusion matrices, per-class and macro precision /
//! recall / F1, and the 0-1 empirical risk.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::inference::Prediction;

/// 4×4 counts, rows = gold label, columns = predicted label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub counts: [[u64; 4]; 4],
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn add(&mut self, gold: Label, pred: Label) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    fn gold_count(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn pred_count(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold labels vs {} predicted labels",
            gold.len(),
            pred.len()
        )));
    }
    let mut conf = Confusion::default();
    for (&g, &p) in gold.iter().zip(pred) {
        conf.add(g, p);
    }
    Ok(conf)
}

/// Fraction of tokens where the prediction differs from gold, as `1 - accuracy`.
pub fn empirical_risk(gold: &[Label], pred: &[Label]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Contract("empirical risk of an empty sequence".into()));
    }
    let conf = confusion(gold, pred)?;
    Ok(1.0 - conf.accuracy())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Macro metrics per document, then the unweighted mean over documents.
    #[default]
    PerDocumentMean,
    /// One confusion matrix over all tokens of all documents.
    CorpusPooled,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::PerDocumentMean => "per_document_mean",
            AggregationMode::CorpusPooled => "corpus_pooled",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_document_mean" => Ok(AggregationMode::PerDocumentMean),
            "corpus_pooled" => Ok(AggregationMode::CorpusPooled),
            other => Err(Error::Config(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// `None` for classes absent from both gold and prediction (excluded from
    /// the macro mean). In per-document mode each entry is the mean over the
    /// documents where the class was included.
    pub per_class: [Option<ClassMetrics>; 4],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub empirical_risk: f64,
    pub aggregation_mode: AggregationMode,
    pub n_documents: usize,
    pub n_tokens: u64,
}

fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class P/R/F1 and their unweighted macro means over the classes that
/// occur in gold or prediction.
pub fn macro_f1(conf: &Confusion) -> Result<MetricsReport> {
    if conf.total() == 0 {
        return Err(Error::Contract("macro F1 of an empty confusion matrix".into()));
    }
    let mut per_class = [None; 4];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let (gold, pred) = (conf.gold_count(c), conf.pred_count(c));
        if gold == 0 && pred == 0 {
            continue;
        }
        let tp = conf.counts[c][c];
        let precision = ratio(tp, pred);
        let recall = ratio(tp, gold);
        *slot = Some(ClassMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
        });
    }
    let included: Vec<&ClassMetrics> = per_class.iter().flatten().collect();
    let mean = |f: fn(&ClassMetrics) -> f64| included.iter().map(|m| f(m)).sum::<f64>() / included.len() as f64;
    Ok(MetricsReport {
        per_class,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        empirical_risk: 1.0 - conf.accuracy(),
        aggregation_mode: AggregationMode::CorpusPooled,
        n_documents: 1,
        n_tokens: conf.total(),
    })
}

/// Scores predictions against a gold corpus. Documents are paired by id; the
/// result does not depend on the order of either input.
pub fn evaluate_corpus(gold: &[Document], pred: &[Prediction], mode: AggregationMode) -> Result<MetricsReport> {
    if gold.len() != pred.len() {
        return Err(Error::Pairing(format!(
            "{} gold documents vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(pred.len());
    for p in pred {
        if by_id.insert(p.doc_id.as_str(), p).is_some() {
            return Err(Error::Pairing(format!("duplicate prediction for {:?}", p.doc_id)));
        }
    }
    let mut pairs = Vec::with_capacity(gold.len());
    for doc in gold {
        let p = by_id
            .get(doc.doc_id.as_str())
            .ok_or_else(|| Error::Pairing(format!("no prediction for document {:?}", doc.doc_id)))?;
        if p.word_labels.len() != doc.len() {
            return Err(Error::Pairing(format!(
                "document {:?} has {} tokens but its prediction has {}",
                doc.doc_id,
                doc.len(),
                p.word_labels.len()
            )));
        }
        pairs.push((
            doc.doc_id.as_str(),
            doc.token_labels.as_slice(),
            p.word_labels.as_slice(),
        ));
    }
    evaluate_pairs(pairs, mode)
}

/// Scores `(doc_id, gold, pred)` triples.
pub fn evaluate_pairs<'a>(
    mut pairs: Vec<(&'a str, &'a [Label], &'a [Label])>,
    mode: AggregationMode,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Contract("nothing to evaluate".into()));
    }
    // fixed summation order makes per-document means order independent
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    let mut pooled = Confusion::default();
    let mut per_doc = Vec::with_capacity(pairs.len());
    for (_, g, p) in &pairs {
        let conf = confusion(g, p)?;
        pooled.merge(&conf);
        if mode == AggregationMode::PerDocumentMean {
            per_doc.push(macro_f1(&conf)?);
        }
    }
    let mut report = match mode {
        AggregationMode::CorpusPooled => macro_f1(&pooled)?,
        AggregationMode::PerDocumentMean => mean_reports(&per_doc),
    };
    report.aggregation_mode = mode;
    report.empirical_risk = 1.0 - pooled.accuracy();
    report.n_documents = pairs.len();
    report.n_tokens = pooled.total();
    Ok(report)
}

fn mean_reports(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len() as f64;
    let mut per_class = [None; 4];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let present: Vec<&ClassMetrics> = reports.iter().filter_map(|r| r.per_class[c].as_ref()).collect();
        if present.is_empty() {
            continue;
        }
        let k = present.len() as f64;
        *slot = Some(ClassMetrics {
            precision: present.iter().map(|m| m.precision).sum::<f64>() / k,
            recall: present.iter().map(|m| m.recall).sum::<f64>() / k,
            f1: present.iter().map(|m| m.f1).sum::<f64>() / k,
        });
    }
    MetricsReport {
        per_class,
        macro_precision: reports.iter().map(|r| r.macro_precision).sum::<f64>() / n,
        macro_recall: reports.iter().map(|r| r.macro_recall).sum::<f64>() / n,
        macro_f1: reports.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        empirical_risk: 0.0,
        aggregation_mode: AggregationMode::PerDocumentMean,
        n_documents: reports.len(),
        n_tokens: reports.iter().map(|r| r.n_tokens).sum(),
    }
}

/// One line of a results table: a run name and its macro P/R/F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, precision: f64, recall: f64, f1: f64) -> Self {
        Self {
            name: name.into(),
            precision,
            recall,
            f1,
        }
    }

    pub fn from_report(name: impl Into<String>, report: &MetricsReport) -> Self {
        Self::new(name, report.macro_precision, report.macro_recall, report.macro_f1)
    }
}

/// Aligned plain-text results table, two decimals per metric.
pub fn render_table(rows: &[ReportRow]) -> String {
    let name_header = "Encoder + window";
    let width = rows
        .iter()
        .map(|r| r.name.chars().count())
        .chain([name_header.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{name_header:<width$}  {:>4}  {:>4}  {:>4}", "P", "R", "F1");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:.2}  {:.2}  {:.2}",
            r.name, r.precision, r.recall, r.f1
        );
    }
    out
}

impl MetricsReport {
    /// Results table row plus per-class detail and the empirical risk.
    pub fn render(&self, name: &str) -> String {
        let mut out = render_table(&[ReportRow::from_report(name, self)]);
        let _ = writeln!(out);
        let _ = writeln!(out, "aggregation: {}", self.aggregation_mode);
        let _ = writeln!(out, "documents: {}  tokens: {}", self.n_documents, self.n_tokens);
        let _ = writeln!(out, "empirical risk: {:.4}", self.empirical_risk);
        for (label, m) in Label::ALL.iter().zip(&self.per_class) {
            match m {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "  {:<12}  P {:.2}  R {:.2}  F1 {:.2}",
                        label.display_name(),
                        m.precision,
                        m.recall,
                        m.f1
                    );
                }
                None => {
                    let _ = writeln!(out, "  {:<12}  absent", label.display_name());
                }
            }
        }
        out
    }
}
