//! Word windows, subword chunks, and the mapping from subword predictions back
//! to word tokens.
//!
//! A document is cut into consecutive windows of at most `W` word tokens. Each
//! window is split into subwords; if it needs more subwords than the model can
//! take, it is halved at a word boundary until every part fits. Words are never
//! dropped or truncated.

mod vocab;

pub use vocab::{build_vocab, Vocabulary, CONTINUATION, PAD_ID, PAD_PIECE, UNK_ID, UNK_PIECE};

use std::ops::Range;

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};

/// One model input: a run of consecutive word tokens and their subword ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub doc_id: String,
    pub window_index: usize,
    pub word_range: Range<usize>,
    pub subword_ids: Vec<u32>,
    /// Position of each word's first subword, relative to the chunk.
    pub word_to_first_subword: Vec<usize>,
}

impl Chunk {
    pub fn n_words(&self) -> usize {
        self.word_range.len()
    }

    pub fn n_subwords(&self) -> usize {
        self.subword_ids.len()
    }

    /// Subword positions `[start, end)` of word `w` (chunk-relative).
    pub fn word_subwords(&self, w: usize) -> Range<usize> {
        let start = self.word_to_first_subword[w];
        let end = self
            .word_to_first_subword
            .get(w + 1)
            .copied()
            .unwrap_or(self.subword_ids.len());
        start..end
    }

    /// Copies each word's label onto all of its subwords.
    pub fn broadcast_word_labels(&self, word_labels: &[Label]) -> Vec<Label> {
        debug_assert_eq!(word_labels.len(), self.n_words());
        let mut out = Vec::with_capacity(self.subword_ids.len());
        for (w, &label) in word_labels.iter().enumerate() {
            out.extend(std::iter::repeat_n(label, self.word_subwords(w).len()));
        }
        out
    }
}

/// Consecutive non-overlapping ranges of `window` word tokens; the last one
/// holds the remainder.
pub fn window_tokens(doc: &Document, window: usize) -> Vec<Range<usize>> {
    window_ranges(doc.len(), window)
}

pub fn window_ranges(n_tokens: usize, window: usize) -> Vec<Range<usize>> {
    assert!(window >= 1, "window length must be at least 1");
    (0..n_tokens)
        .step_by(window)
        .map(|start| start..(start + window).min(n_tokens))
        .collect()
}

/// Subword-tokenizes the words in `range`, splitting at the word boundary
/// nearest the middle whenever the subword count exceeds `max_subwords`.
pub fn subtokenize(
    doc: &Document,
    window_index: usize,
    range: Range<usize>,
    vocab: &Vocabulary,
    max_subwords: usize,
) -> Result<Vec<Chunk>> {
    if range.end > doc.len() || range.start > range.end {
        return Err(Error::Contract(format!(
            "word range {range:?} is outside document {:?} with {} tokens",
            doc.doc_id,
            doc.len()
        )));
    }
    let words: Vec<Vec<u32>> = doc.tokens[range.clone()]
        .iter()
        .map(|w| vocab.tokenize_word(w))
        .collect();
    for (i, pieces) in words.iter().enumerate() {
        if pieces.len() > max_subwords {
            return Err(Error::WordTooLong {
                word: doc.tokens[range.start + i].clone(),
                needed: pieces.len(),
                limit: max_subwords,
            });
        }
    }
    let mut chunks = Vec::new();
    split_fitting(&words, 0..words.len(), max_subwords, &mut |part| {
        let mut subword_ids = Vec::new();
        let mut word_to_first_subword = Vec::with_capacity(part.len());
        for pieces in &words[part.clone()] {
            word_to_first_subword.push(subword_ids.len());
            subword_ids.extend_from_slice(pieces);
        }
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            window_index,
            word_range: range.start + part.start..range.start + part.end,
            subword_ids,
            word_to_first_subword,
        });
    });
    Ok(chunks)
}

fn split_fitting(words: &[Vec<u32>], part: Range<usize>, max_subwords: usize, emit: &mut impl FnMut(Range<usize>)) {
    let total: usize = words[part.clone()].iter().map(Vec::len).sum();
    if total <= max_subwords || part.len() <= 1 {
        emit(part);
        return;
    }
    let mid = part.start + part.len() / 2;
    split_fitting(words, part.start..mid, max_subwords, emit);
    split_fitting(words, mid..part.end, max_subwords, emit);
}

/// Windows and subtokenizes a whole document, in word order.
pub fn chunk_document(doc: &Document, window: usize, vocab: &Vocabulary, max_subwords: usize) -> Result<Vec<Chunk>> {
    let mut chunks = Vec::new();
    for (i, range) in window_tokens(doc, window).into_iter().enumerate() {
        chunks.extend(subtokenize(doc, i, range, vocab, max_subwords)?);
    }
    Ok(chunks)
}

/// Word labels from subword labels: each word takes the label of its first subword.
pub fn align_predictions(chunk: &Chunk, subword_labels: &[Label]) -> Result<Vec<Label>> {
    if subword_labels.len() != chunk.subword_ids.len() {
        return Err(Error::Contract(format!(
            "chunk has {} subwords but {} labels were given",
            chunk.subword_ids.len(),
            subword_labels.len()
        )));
    }
    Ok(chunk.word_to_first_subword.iter().map(|&p| subword_labels[p]).collect())
}

/// Stitches per-chunk word labels into one label per document token. Parts may
/// arrive in any order but must partition `[0, n_tokens)`.
pub fn reassemble(n_tokens: usize, mut parts: Vec<(Range<usize>, Vec<Label>)>) -> Result<Vec<Label>> {
    parts.sort_by_key(|(r, _)| r.start);
    let mut out = Vec::with_capacity(n_tokens);
    for (range, labels) in parts {
        if range.start != out.len() {
            return Err(Error::Partition(format!(
                "range {range:?} does not start at {} ({})",
                out.len(),
                if range.start < out.len() { "overlap" } else { "gap" }
            )));
        }
        if range.end < range.start || labels.len() != range.len() {
            return Err(Error::Partition(format!(
                "range {range:?} carries {} labels",
                labels.len()
            )));
        }
        out.extend(labels);
    }
    if out.len() != n_tokens {
        return Err(Error::Partition(format!(
            "ranges cover {} of {n_tokens} tokens",
            out.len()
        )));
    }
    Ok(out)
}
