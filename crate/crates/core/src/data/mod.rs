//! Corpus loading, vocabularies, decoder targets and the synthetic
//! corpus generator.

mod copy_mask;
mod dataset;
mod overlap;
mod stats;
mod synth;
mod targets;
mod vectors;
mod vocab;

pub use copy_mask::build_copy_mask;
pub use dataset::{
    example_to_json, load_dataset, parse_dataset, prediction_to_json, read_tuple_sets,
    write_dataset, write_predictions, Example, LineError, LoadOptions, LoadReport,
    RelationTuple, Sentence, Span, SurfaceTuple, TupleSetLine,
};
pub use overlap::{classify_overlap, EntityPair, OverlapClass};
pub use stats::{CorpusStats, CountBucket};
pub use synth::{generate_synthetic, split_examples, SynthConfig};
pub use targets::{
    encode_pointer_target, encode_word_target, ordered_tuples, parse_word_target,
    word_target_tokens, ParseDiagnostics, PointerStep, PointerTarget,
};
pub use vectors::{load_word_vectors, WordVectors};
pub use vocab::{
    EncodedSentence, Vocabulary, COMPONENT_SEP_ID, EOS_ID, EOS_RELATION, SOS_ID, TUPLE_SEP_ID,
    UNK_ID,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const SOS: &str = "<SOS>";
pub const EOS: &str = "<EOS>";
pub const UNK: &str = "<UNK>";
/// Separates the components of one tuple in a word target.
pub const COMPONENT_SEP: &str = ";";
/// Separates tuples in a word target.
pub const TUPLE_SEP: &str = "|";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("relation {0} is not in the vocabulary")]
    UnknownRelation(String),
    #[error("entity spans overlap: {0} and {1}")]
    OverlappingSpans(Span, Span),
    #[error("invalid tuple: {0}")]
    InvalidTuple(String),
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
    #[error("{0}")]
    Format(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}
