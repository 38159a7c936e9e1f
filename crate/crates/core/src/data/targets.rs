use std::collections::BTreeSet;

use super::{
    DataError, RelationTuple, Span, SurfaceTuple, Vocabulary, COMPONENT_SEP, EOS, SOS,
    TUPLE_SEP,
};

/// Gold tuples in decoding order: `(e1.start, e2.start, relation id)`,
/// ties broken by the span ends.
pub fn ordered_tuples<'a>(
    tuples: &'a [RelationTuple],
    vocab: &Vocabulary,
) -> Result<Vec<&'a RelationTuple>, DataError> {
    let mut keyed = tuples
        .iter()
        .map(|t| {
            let rel = vocab
                .relation_id(&t.relation)
                .ok_or_else(|| DataError::UnknownRelation(t.relation.clone()))?;
            Ok(((t.e1.start, t.e2.start, rel, t.e1.end, t.e2.end), t))
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, t)| t).collect())
}

/// Word target as strings, ending with `<EOS>`.
///
/// Tuples render as `head ; tail ; relation` joined by `|`.
pub fn word_target_tokens(tuples: &[RelationTuple], vocab: &Vocabulary) -> Result<Vec<String>, DataError> {
    let mut out = Vec::new();
    for (i, t) in ordered_tuples(tuples, vocab)?.into_iter().enumerate() {
        if i > 0 {
            out.push(TUPLE_SEP.to_string());
        }
        out.extend(t.e1_text.split(' ').map(str::to_string));
        out.push(COMPONENT_SEP.to_string());
        out.extend(t.e2_text.split(' ').map(str::to_string));
        out.push(COMPONENT_SEP.to_string());
        out.push(t.relation.clone());
    }
    out.push(EOS.to_string());
    Ok(out)
}

/// Word target as vocabulary ids; out-of-vocabulary entity words become `<UNK>`.
pub fn encode_word_target(tuples: &[RelationTuple], vocab: &Vocabulary) -> Result<Vec<usize>, DataError> {
    Ok(word_target_tokens(tuples, vocab)?.iter().map(|w| vocab.word_id(w)).collect())
}

/// Counts of fragments dropped while parsing a generated word sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct ParseDiagnostics {
    /// Fragments without exactly three non-empty components.
    pub malformed: usize,
    pub duplicate: usize,
    /// Head and tail are the same string.
    pub same_entity: usize,
    pub invalid_relation: usize,
}

impl ParseDiagnostics {
    pub fn total(&self) -> usize {
        self.malformed + self.duplicate + self.same_entity + self.invalid_relation
    }

    pub fn add(&mut self, other: &ParseDiagnostics) {
        self.malformed += other.malformed;
        self.duplicate += other.duplicate;
        self.same_entity += other.same_entity;
        self.invalid_relation += other.invalid_relation;
    }
}

/// Splits a generated word sequence into tuples.
///
/// Reading stops at the first `<EOS>`; `<SOS>` tokens are ignored.
/// Empty fragments are skipped silently.
pub fn parse_word_target<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
) -> (BTreeSet<SurfaceTuple>, ParseDiagnostics) {
    let mut diag = ParseDiagnostics::default();
    let mut tuples = BTreeSet::new();
    let words: Vec<&str> = tokens
        .iter()
        .map(AsRef::as_ref)
        .take_while(|w| *w != EOS)
        .filter(|w| *w != SOS)
        .collect();
    for fragment in words.split(|w| *w == TUPLE_SEP) {
        if fragment.is_empty() {
            continue;
        }
        let parts: Vec<&[&str]> = fragment.split(|w| *w == COMPONENT_SEP).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            diag.malformed += 1;
            continue;
        }
        let head = parts[0].join(" ");
        let tail = parts[1].join(" ");
        let relation = parts[2].join(" ");
        if vocab.relation_id(&relation).is_none() {
            diag.invalid_relation += 1;
            continue;
        }
        if head == tail {
            diag.same_entity += 1;
            continue;
        }
        if !tuples.insert(SurfaceTuple { head, tail, relation }) {
            diag.duplicate += 1;
        }
    }
    (tuples, diag)
}

/// One pointer-decoder step: the relation id and both entity spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointerStep {
    pub relation: usize,
    pub e1: Span,
    pub e2: Span,
}

/// Pointer targets in decoding order. Decoding runs one step past the
/// last tuple to emit the end relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointerTarget {
    pub steps: Vec<PointerStep>,
}

impl PointerTarget {
    /// Decoder step count including the end step.
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Relation target per decoder step, ending with the end relation.
    pub fn relations(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.steps.iter().map(|s| s.relation).collect();
        r.push(super::EOS_RELATION);
        r
    }
}

pub fn encode_pointer_target(tuples: &[RelationTuple], vocab: &Vocabulary) -> Result<PointerTarget, DataError> {
    if let Some(t) = tuples.iter().find(|t| t.e1.overlaps(&t.e2)) {
        return Err(DataError::OverlappingSpans(t.e1, t.e2));
    }
    let steps = ordered_tuples(tuples, vocab)?
        .into_iter()
        .map(|t| PointerStep {
            relation: vocab.relation_id(&t.relation).expect("checked by ordering"),
            e1: t.e1,
            e2: t.e2,
        })
        .collect();
    Ok(PointerTarget { steps })
}
