use std::fmt::Write as _;

use serde::Serialize;

use super::{Document, Label};

/// Span statistics for one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelStats {
    pub label: Label,
    pub span_count: usize,
    pub mean_length_symbols: f64,
    pub mean_length_tokens: f64,
}

/// Per-label span statistics over a corpus, one entry per label in code order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub labels: [LabelStats; 4],
}

impl CorpusStats {
    pub fn get(&self, label: Label) -> &LabelStats {
        &self.labels[label.index()]
    }

    /// Plain-text table with the columns Label / Count / Mean length symbols /
    /// Mean length tokens.
    pub fn render_table(&self) -> String {
        let header = ["Label", "Count", "Mean length symbols", "Mean length tokens"];
        let rows: Vec<[String; 4]> = self
            .labels
            .iter()
            .map(|s| {
                [
                    s.label.display_name().to_string(),
                    s.span_count.to_string(),
                    format!("{:.2}", s.mean_length_symbols),
                    format!("{:.2}", s.mean_length_tokens),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut push_row = |cells: [&str; 4]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
            );
        };
        push_row(header);
        for row in &rows {
            push_row([&row[0], &row[1], &row[2], &row[3]]);
        }
        out
    }
}

/// Counts annotations per label and averages their length in characters and in
/// word tokens. A token belongs to the span that contains its first character.
pub fn compute_stats(corpus: &[Document]) -> CorpusStats {
    let mut counts = [0usize; 4];
    let mut symbols = [0usize; 4];
    let mut tokens = [0usize; 4];
    for doc in corpus {
        for a in &doc.annotations {
            let i = a.label.index();
            counts[i] += 1;
            symbols[i] += a.len();
            let lo = doc.token_offsets.partition_point(|&(s, _)| s < a.start_char);
            let hi = doc.token_offsets.partition_point(|&(s, _)| s < a.end_char);
            tokens[i] += hi - lo;
        }
    }
    let mean = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    CorpusStats {
        labels: Label::ALL.map(|l| {
            let i = l.index();
            LabelStats {
                label: l,
                span_count: counts[i],
                mean_length_symbols: mean(symbols[i], counts[i]),
                mean_length_tokens: mean(tokens[i], counts[i]),
            }
        }),
    }
}
