//! Token-level detection of machine-generated fragments in scientific documents.
//!
//! A small transformer encoder produces one vector per subword. Two linear heads
//! read that vector in parallel: a binary human/machine head used as a per-chunk
//! gate, and a four-class head that names the generator. Both heads are trained
//! jointly on the sum of their cross-entropy losses.
//!
//! Module map:
//!
//! | module       | contents                                                     |
//! |--------------|--------------------------------------------------------------|
//! | [`corpus`]   | JSONL dataset schema, validation, span/label conversion, stats, synthetic corpora |
//! | [`segmenter`]| vocabulary, word windows, subword chunks, alignment          |
//! | [`model`]    | encoder + dual heads, forward/backward, checkpoints          |
//! | [`training`] | multi-task loss, Adam training loop, gradient checking        |
//! | [`inference`]| gated decoding, document prediction, span reassembly          |
//! | [`evaluation`]| confusion matrices, macro P/R/F1, empirical risk, reports    |
//! | [`cli`]      | the `fragscan` command-line front end                         |

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod segmenter;
pub mod training;

pub use corpus::{Annotation, Document, Label};
pub use error::{Error, Result};
