#![allow(dead_code)]

use fragscan::{Annotation, Document, Label};
use proptest::prelude::*;

/// Builds a document from labelled runs of (word, following separator).
/// Each annotation starts at its run's first token (0 for the first run) and
/// ends where the next run starts, so whitespace goes to the earlier span.
pub fn doc_from_runs(doc_id: &str, leading: &str, runs: &[(Label, Vec<(String, String)>)]) -> Document {
    let mut text = String::from(leading);
    let mut chars = leading.chars().count();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut starts = Vec::new();
    for (label, words) in runs {
        starts.push(if starts.is_empty() { 0 } else { chars });
        for (word, sep) in words {
            text.push_str(word);
            text.push_str(sep);
            chars += word.chars().count() + sep.chars().count();
            tokens.push(word.clone());
            labels.push(*label);
        }
    }
    let annotations = runs
        .iter()
        .enumerate()
        .map(|(i, (label, _))| Annotation::new(starts[i], starts.get(i + 1).copied().unwrap_or(chars), *label))
        .collect();
    Document::new(doc_id, text, tokens, labels, annotations).expect("generated document is valid")
}

pub fn arb_label() -> impl Strategy<Value = Label> {
    (0usize..4).prop_map(|i| Label::ALL[i])
}

pub fn arb_word() -> impl Strategy<Value = String> {
    "[abcdeé日]{1,6}"
}

pub fn arb_sep() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(" ".to_string()),
        Just("  ".to_string()),
        Just("\n".to_string()),
        Just(" \t".to_string())
    ]
}

pub fn arb_doc_with_id(doc_id: String) -> impl Strategy<Value = Document> {
    let run = (arb_label(), prop::collection::vec((arb_word(), arb_sep()), 1..8));
    (prop::option::of(arb_sep()), prop::collection::vec(run, 1..6))
        .prop_map(move |(leading, runs)| doc_from_runs(&doc_id, leading.as_deref().unwrap_or(""), &runs))
}

pub fn arb_doc() -> impl Strategy<Value = Document> {
    arb_doc_with_id("doc".to_string())
}

/// Documents with distinct ids.
pub fn arb_corpus(max_docs: usize) -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec(arb_doc(), 1..=max_docs).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, d)| {
                let runs: Vec<Annotation> = d.annotations.clone();
                Document::new(format!("d{i:03}"), d.text, d.tokens, d.token_labels, runs).unwrap()
            })
            .collect()
    })
}
