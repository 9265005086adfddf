//! Dataset rows: documents, labels, character-span annotations.
//!
//! On disk a corpus is line-delimited JSON, one document per line:
//!
//! ```text
//! {"doc_id":"d1","text":"The number of ...","annotations":[[0,3264,"chatgpt"]],
//!  "tokens":["The","number","of",...],"token_label_ids":[2,2,2,...]}
//! ```
//!
//! Offsets count Unicode scalar values, not bytes. The file does not carry token
//! offsets; they are recovered by searching each token left to right in the text.

mod stats;
mod synthetic;

pub use stats::{compute_stats, CorpusStats, LabelStats};
pub use synthetic::{generate_synthetic, LengthRange, PerLabel, SyntheticSpec};

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token class. Codes are fixed by the dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Human = 0,
    NltkSynonym = 1,
    Chatgpt = 2,
    Summarized = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Human, Label::NltkSynonym, Label::Chatgpt, Label::Summarized];
    pub const COUNT: usize = 4;

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: i64) -> Option<Label> {
        match id {
            0 => Some(Label::Human),
            1 => Some(Label::NltkSynonym),
            2 => Some(Label::Chatgpt),
            3 => Some(Label::Summarized),
            _ => None,
        }
    }

    /// Name used in annotation triples.
    pub fn name(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::NltkSynonym => "nltk_synonym",
            Label::Chatgpt => "chatgpt",
            Label::Summarized => "summarized",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Row title used in statistics tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Human => "Human",
            Label::NltkSynonym => "NLTK-replace",
            Label::Chatgpt => "ChatGPT",
            Label::Summarized => "Summarized",
        }
    }

    pub fn is_machine(self) -> bool {
        self != Label::Human
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A labeled character interval `[start_char, end_char)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub start_char: usize,
    pub end_char: usize,
    pub label: Label,
}

impl Annotation {
    pub fn new(start_char: usize, end_char: usize, label: Label) -> Self {
        Self {
            start_char,
            end_char,
            label,
        }
    }

    pub fn len(&self) -> usize {
        self.end_char - self.start_char
    }

    pub fn is_empty(&self) -> bool {
        self.end_char == self.start_char
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start_char <= offset && offset < self.end_char
    }
}

/// A validated dataset row.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub token_offsets: Vec<(usize, usize)>,
    pub token_labels: Vec<Label>,
    pub annotations: Vec<Annotation>,
    text_chars: usize,
}

impl Document {
    /// Builds a document, recovering token offsets and checking every invariant.
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        tokens: Vec<String>,
        token_labels: Vec<Label>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = text.into();
        if tokens.is_empty() {
            return Err(Error::Validation(format!("document {doc_id:?} has no tokens")));
        }
        if tokens.len() != token_labels.len() {
            return Err(Error::Validation(format!(
                "document {doc_id:?} has {} tokens but {} label ids",
                tokens.len(),
                token_labels.len()
            )));
        }
        let text_chars = text.chars().count();
        let token_offsets =
            locate_tokens(&text, &tokens).map_err(|e| Error::Alignment(format!("document {doc_id:?}: {e}")))?;
        validate_tiling(&annotations, text_chars).map_err(|e| Error::Tiling(format!("document {doc_id:?}: {e}")))?;
        let derived = derive_token_labels(&text, &token_offsets, &annotations)?;
        if let Some(j) = derived.iter().zip(&token_labels).position(|(a, b)| a != b) {
            return Err(Error::Validation(format!(
                "document {doc_id:?}: token {j} ({:?}) is labeled {} but its annotation says {}",
                tokens[j], token_labels[j], derived[j]
            )));
        }
        Ok(Self {
            doc_id,
            text,
            tokens,
            token_offsets,
            token_labels,
            annotations,
            text_chars,
        })
    }

    /// Number of word tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Text length in characters.
    pub fn char_len(&self) -> usize {
        self.text_chars
    }

    fn from_record(index: usize, record: Record) -> Result<Self> {
        let at = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("record {index}: {m}")),
            Error::Alignment(m) => Error::Alignment(format!("record {index}: {m}")),
            Error::Tiling(m) => Error::Tiling(format!("record {index}: {m}")),
            other => other,
        };
        let token_labels = record
            .token_label_ids
            .iter()
            .map(|&id| {
                Label::from_id(id)
                    .ok_or_else(|| Error::Validation(format!("record {index}: label id {id} is not in 0..=3")))
            })
            .collect::<Result<Vec<_>>>()?;
        let annotations = record
            .annotations
            .iter()
            .map(|(start, end, name)| {
                let label = Label::from_name(name)
                    .ok_or_else(|| Error::Validation(format!("record {index}: unknown label name {name:?}")))?;
                Ok(Annotation::new(*start, *end, label))
            })
            .collect::<Result<Vec<_>>>()?;
        Document::new(record.doc_id, record.text, record.tokens, token_labels, annotations).map_err(at)
    }

    fn to_record(&self) -> Record {
        Record {
            doc_id: self.doc_id.clone(),
            text: self.text.clone(),
            annotations: annotation_triples(&self.annotations),
            tokens: self.tokens.clone(),
            token_label_ids: self.token_labels.iter().map(|l| l.id() as i64).collect(),
        }
    }
}

/// Annotations in their on-disk `[start, end, "name"]` form.
pub fn annotation_triples(annotations: &[Annotation]) -> Vec<(usize, usize, String)> {
    annotations
        .iter()
        .map(|a| (a.start_char, a.end_char, a.label.name().to_string()))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    doc_id: String,
    text: String,
    annotations: Vec<(usize, usize, String)>,
    tokens: Vec<String>,
    token_label_ids: Vec<i64>,
}

/// Finds each token in `text`, left to right, starting after the previous match.
/// Returns character offsets.
pub fn locate_tokens(text: &str, tokens: &[String]) -> Result<Vec<(usize, usize)>> {
    let mut offsets = Vec::with_capacity(tokens.len());
    let mut byte_pos = 0;
    let mut char_pos = 0;
    for (j, token) in tokens.iter().enumerate() {
        if token.is_empty() {
            return Err(Error::Alignment(format!("token {j} is empty")));
        }
        let rest = &text[byte_pos..];
        let rel = rest
            .find(token.as_str())
            .ok_or_else(|| Error::Alignment(format!("token {j} ({token:?}) not found after character {char_pos}")))?;
        let start = char_pos + rest[..rel].chars().count();
        let end = start + token.chars().count();
        offsets.push((start, end));
        byte_pos += rel + token.len();
        char_pos = end;
    }
    Ok(offsets)
}

/// Checks that annotations are sorted, non-empty, gap-free, and cover `[0, text_chars)`.
pub fn validate_tiling(annotations: &[Annotation], text_chars: usize) -> Result<()> {
    let mut expected_start = 0;
    for (k, a) in annotations.iter().enumerate() {
        if a.start_char != expected_start {
            let kind = if a.start_char > expected_start {
                "gap"
            } else {
                "overlap"
            };
            return Err(Error::Tiling(format!(
                "annotation {k} starts at {} but the previous one ends at {expected_start} ({kind})",
                a.start_char
            )));
        }
        if a.end_char <= a.start_char {
            return Err(Error::Tiling(format!(
                "annotation {k} is empty or reversed: [{}, {})",
                a.start_char, a.end_char
            )));
        }
        expected_start = a.end_char;
    }
    if expected_start != text_chars {
        return Err(Error::Tiling(format!(
            "annotations end at {expected_start} but the text has {text_chars} characters"
        )));
    }
    Ok(())
}

/// Labels each token with the annotation that contains its first character.
pub fn derive_token_labels(
    _text: &str,
    token_offsets: &[(usize, usize)],
    annotations: &[Annotation],
) -> Result<Vec<Label>> {
    token_offsets
        .iter()
        .enumerate()
        .map(|(j, &(start, _))| {
            let k = annotations.partition_point(|a| a.end_char <= start);
            match annotations.get(k) {
                Some(a) if a.contains(start) => Ok(a.label),
                _ => Err(Error::Tiling(format!(
                    "token {j} starts at character {start}, which no annotation covers"
                ))),
            }
        })
        .collect()
}

/// Parses a JSONL corpus. Blank lines are skipped; record indices count all lines.
pub fn parse_corpus<R: Read>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            index,
            message: e.to_string(),
        })?;
        docs.push(Document::from_record(index, record)?);
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    parse_corpus(File::open(path)?)
}

pub fn write_corpus<W: Write>(writer: W, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in docs {
        serde_json::to_writer(&mut w, &doc.to_record())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_corpus(File::create(path)?, docs)
}
