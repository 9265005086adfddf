//! Seeded synthetic corpora with the dataset's shape: documents built from
//! alternating labeled spans, each span drawn from that label's own word list.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Annotation, Document, Label};
use crate::error::{Error, Result};

/// One value per label, addressable by name in JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLabel<T> {
    pub human: T,
    pub nltk_synonym: T,
    pub chatgpt: T,
    pub summarized: T,
}

impl<T> PerLabel<T> {
    pub fn get(&self, label: Label) -> &T {
        match label {
            Label::Human => &self.human,
            Label::NltkSynonym => &self.nltk_synonym,
            Label::Chatgpt => &self.chatgpt,
            Label::Summarized => &self.summarized,
        }
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl LengthRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub seed: u64,
    /// Span length in word tokens, per label.
    pub span_lengths: PerLabel<LengthRange>,
    pub lexicons: PerLabel<Vec<String>>,
    pub spans_per_doc: LengthRange,
    pub human_first_probability: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        Self {
            n_docs: 200,
            seed: 7,
            span_lengths: PerLabel {
                human: LengthRange::new(40, 60),
                nltk_synonym: LengthRange::new(8, 16),
                chatgpt: LengthRange::new(8, 16),
                summarized: LengthRange::new(8, 16),
            },
            lexicons: PerLabel {
                human: words(HUMAN_WORDS),
                nltk_synonym: words(SYNONYM_WORDS),
                chatgpt: words(CHATGPT_WORDS),
                summarized: words(SUMMARY_WORDS),
            },
            spans_per_doc: LengthRange::new(2, 6),
            human_first_probability: 0.7,
        }
    }
}

const HUMAN_WORDS: &[&str] = &[
    "the",
    "of",
    "and",
    "in",
    "was",
    "were",
    "we",
    "found",
    "bone",
    "density",
    "fracture",
    "cohort",
    "patients",
    "measured",
    "sample",
    "blade",
    "surface",
    "roughness",
    "turbine",
    "specimen",
    "analysis",
    "observed",
    "protein",
    "cell",
    "tissue",
    "significant",
    "increase",
    "between",
    "results",
    "data",
    "method",
    "temperature",
    "pressure",
    "flow",
    "model",
    "experiment",
    "group",
    "control",
    "ratio",
    "level",
    "after",
    "during",
    "for",
    "with",
];

const SYNONYM_WORDS: &[&str] = &[
    "bespeak",
    "figure",
    "consequence",
    "likewise",
    "whilst",
    "thence",
    "appraise",
    "assemblage",
    "ascertain",
    "hitherto",
    "diminution",
    "augmentation",
    "mensuration",
    "corporeal",
    "vitiate",
    "manifold",
    "betwixt",
    "wherefore",
    "engender",
    "heretofore",
    "inasmuch",
    "forthwith",
    "aforesaid",
    "conformation",
    "sojourn",
    "tally",
    "vesture",
    "reckon",
    "apparatus",
    "constituent",
    "pursuance",
    "abide",
    "tidings",
    "apprehend",
    "wax",
    "wane",
    "moreover",
    "amongst",
];

const CHATGPT_WORDS: &[&str] = &[
    "notably",
    "furthermore",
    "crucial",
    "delve",
    "comprehensive",
    "pivotal",
    "landscape",
    "underscores",
    "highlights",
    "intricate",
    "multifaceted",
    "fostering",
    "leveraging",
    "robust",
    "insights",
    "nuanced",
    "paramount",
    "realm",
    "showcasing",
    "additionally",
    "overall",
    "essential",
    "enhance",
    "valuable",
    "potential",
    "innovative",
    "seamless",
    "vital",
    "ensuring",
    "holistic",
    "navigate",
    "transformative",
    "profound",
    "significantly",
    "key",
    "role",
    "various",
    "approach",
    "context",
    "understanding",
];

const SUMMARY_WORDS: &[&str] = &[
    "<n>",
    "@xmath0",
    "@xmath1",
    "@xmath2",
    "-lrb-",
    "-rrb-",
    "@xcite",
    "[",
    "]",
    "..",
    "<unk>",
    "et",
    "al",
    ".",
    "summ",
    "shows",
    "paper",
    "presents",
    "proposed",
    "authors",
    "result:",
    "finding:",
    "-",
    "--",
    "###",
    "(s)",
    "i.e.",
    "e.g.",
    "<n><n>",
    "etc",
    "conclusion:",
    "abstract:",
    "this",
    "is",
    "also",
    "it",
];

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(0.0..=1.0).contains(&self.human_first_probability) {
            return bad(format!(
                "human_first_probability {} is outside [0, 1]",
                self.human_first_probability
            ));
        }
        let ranges = Label::ALL
            .iter()
            .map(|&l| (l.name(), *self.span_lengths.get(l)))
            .chain([("spans_per_doc", self.spans_per_doc)]);
        for (name, r) in ranges {
            if r.min == 0 || r.min > r.max {
                return bad(format!("{name} range [{}, {}] is invalid", r.min, r.max));
            }
        }
        let mut owner: HashMap<&str, Label> = HashMap::new();
        for label in Label::ALL {
            for word in self.lexicons.get(label) {
                if word.is_empty() || word.chars().any(char::is_whitespace) {
                    return bad(format!("{label} lexicon word {word:?} is empty or has whitespace"));
                }
                if let Some(prev) = owner.insert(word, label) {
                    if prev != label {
                        return bad(format!("word {word:?} is in both the {prev} and {label} lexicons"));
                    }
                }
            }
        }
        for label in self.requestable_labels() {
            if self.lexicons.get(label).is_empty() {
                return bad(format!("{label} lexicon is empty"));
            }
        }
        Ok(())
    }

    /// Labels the generator can draw under this spec.
    fn requestable_labels(&self) -> Vec<Label> {
        let multi_span = self.spans_per_doc.max >= 2;
        Label::ALL
            .into_iter()
            .filter(|&l| {
                multi_span
                    || if l == Label::Human {
                        self.human_first_probability > 0.0
                    } else {
                        self.human_first_probability < 1.0
                    }
            })
            .collect()
    }
}

/// Generates `spec.n_docs` documents. Output depends only on `spec`.
///
/// Consecutive spans always carry different labels; each span's annotation runs
/// up to the first character of the next span, so the separating space belongs
/// to the earlier span.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_docs)
        .map(|i| generate_document(spec, &mut rng, format!("synth-{i:05}")))
        .collect()
}

fn generate_document(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, doc_id: String) -> Result<Document> {
    let n_spans = rng.random_range(spec.spans_per_doc.min..=spec.spans_per_doc.max);
    let mut span_labels = Vec::with_capacity(n_spans);
    for k in 0..n_spans {
        let label = if k == 0 {
            if rng.random_bool(spec.human_first_probability) {
                Label::Human
            } else {
                Label::ALL[rng.random_range(1..4)]
            }
        } else {
            let prev = span_labels[k - 1];
            let others: Vec<Label> = Label::ALL.into_iter().filter(|&l| l != prev).collect();
            others[rng.random_range(0..others.len())]
        };
        span_labels.push(label);
    }

    let mut text = String::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut span_starts = Vec::with_capacity(n_spans);
    let mut char_pos = 0;
    for &label in &span_labels {
        let lexicon = spec.lexicons.get(label);
        let range = spec.span_lengths.get(label);
        let len = rng.random_range(range.min..=range.max);
        span_starts.push(if tokens.is_empty() { 0 } else { char_pos + 1 });
        for _ in 0..len {
            let word = &lexicon[rng.random_range(0..lexicon.len())];
            if !tokens.is_empty() {
                text.push(' ');
                char_pos += 1;
            }
            text.push_str(word);
            char_pos += word.chars().count();
            tokens.push(word.clone());
            labels.push(label);
        }
    }
    let annotations = span_labels
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let end = span_starts.get(k + 1).copied().unwrap_or(char_pos);
            Annotation::new(span_starts[k], end, label)
        })
        .collect();
    Document::new(doc_id, text, tokens, labels, annotations)
}
