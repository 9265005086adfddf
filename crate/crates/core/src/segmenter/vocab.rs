use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_PIECE: &str = "[PAD]";
pub const UNK_PIECE: &str = "[UNK]";
/// Prefix marking a piece that continues a word.
pub const CONTINUATION: &str = "##";

/// Subword inventory. Piece `i` has id `i`; ids 0 and 1 are padding and unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    ids: HashMap<String, u32>,
    /// Longest piece length in characters, not counting the continuation prefix.
    max_piece_chars: usize,
}

impl Vocabulary {
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.first().map(String::as_str) != Some(PAD_PIECE) || pieces.get(1).map(String::as_str) != Some(UNK_PIECE)
        {
            return Err(Error::Validation(format!(
                "vocabulary must start with {PAD_PIECE} and {UNK_PIECE}"
            )));
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        let mut max_piece_chars = 1;
        for (i, piece) in pieces.iter().enumerate() {
            if piece.is_empty() || piece.contains('\n') {
                return Err(Error::Validation(format!(
                    "vocabulary piece {i} is empty or multi-line"
                )));
            }
            if ids.insert(piece.clone(), i as u32).is_some() {
                return Err(Error::Validation(format!("vocabulary piece {piece:?} is duplicated")));
            }
            let body = piece.strip_prefix(CONTINUATION).unwrap_or(piece);
            max_piece_chars = max_piece_chars.max(body.chars().count());
        }
        Ok(Self {
            pieces,
            ids,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Greedy longest-match split of one word. Pieces after the first are looked
    /// up with the continuation prefix. A character with no piece becomes UNK.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        let mut key = String::new();
        while start < chars.len() {
            let mut end = chars.len().min(start + self.max_piece_chars);
            let mut found = None;
            while end > start {
                key.clear();
                if start > 0 {
                    key.push_str(CONTINUATION);
                }
                key.extend(&chars[start..end]);
                if let Some(&id) = self.ids.get(&key) {
                    found = Some((id, end));
                    break;
                }
                end -= 1;
            }
            match found {
                Some((id, next)) => {
                    out.push(id);
                    start = next;
                }
                None => {
                    out.push(UNK_ID);
                    start += 1;
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for piece in &self.pieces {
            writeln!(w, "{piece}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut s = String::new();
        reader.read_to_string(&mut s)?;
        let body = s.strip_suffix('\n').unwrap_or(&s);
        Self::from_pieces(body.split('\n').map(String::from).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

/// Specials, then every character seen in a token (both as a word-initial piece
/// and as a continuation piece), then whole words by descending frequency.
///
/// The word list is cut to the remaining capacity before pieces already present
/// are dropped, so a frequent single-character word uses up a slot.
pub fn build_vocab(corpus: &[Document], max_size: usize) -> Result<Vocabulary> {
    let mut chars = BTreeSet::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for token in &doc.tokens {
            chars.extend(token.chars());
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let char_pieces: BTreeSet<String> = chars
        .iter()
        .flat_map(|&c| [c.to_string(), format!("{CONTINUATION}{c}")])
        .collect();
    let mut pieces = vec![PAD_PIECE.to_string(), UNK_PIECE.to_string()];
    if corpus.is_empty() {
        return Vocabulary::from_pieces(pieces);
    }
    let required = pieces.len() + char_pieces.len();
    if max_size < required {
        return Err(Error::Config(format!(
            "vocabulary size {max_size} cannot hold the {required} special and character pieces"
        )));
    }
    pieces.extend(char_pieces);

    let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut present: std::collections::HashSet<String> = pieces.iter().cloned().collect();
    for (word, _) in words.into_iter().take(max_size - required) {
        if present.insert(word.to_string()) {
            pieces.push(word.to_string());
        }
    }
    Vocabulary::from_pieces(pieces)
}
