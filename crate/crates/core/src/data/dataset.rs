use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, COMPONENT_SEP, TUPLE_SEP};

/// Inclusive, 0-based token span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn from_text(text: &str) -> Self {
        Self { tokens: text.split_whitespace().map(str::to_string).collect() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined tokens of `span`.
    pub fn span_text(&self, span: Span) -> String {
        self.tokens[span.start..=span.end].join(" ")
    }
}

/// Entity strings plus relation: the unit every score is computed on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SurfaceTuple {
    pub head: String,
    pub tail: String,
    pub relation: String,
}

impl SurfaceTuple {
    pub fn new(head: impl Into<String>, tail: impl Into<String>, relation: impl Into<String>) -> Self {
        Self { head: head.into(), tail: tail.into(), relation: relation.into() }
    }
}

impl fmt::Display for SurfaceTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ; {} ; {}", self.head, self.tail, self.relation)
    }
}

/// Two entity spans in a sentence and the relation between them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationTuple {
    pub e1: Span,
    pub e2: Span,
    pub e1_text: String,
    pub e2_text: String,
    pub relation: String,
}

impl RelationTuple {
    /// Validates spans against the sentence and derives entity text.
    pub fn new(sentence: &Sentence, e1: Span, e2: Span, relation: &str) -> Result<Self, DataError> {
        let n = sentence.len();
        for span in [e1, e2] {
            if span.start > span.end {
                return Err(DataError::InvalidTuple(format!("start > end in span {span}")));
            }
            if span.end >= n {
                return Err(DataError::InvalidTuple(format!(
                    "span {span} out of range for {n} tokens"
                )));
            }
        }
        if e1.overlaps(&e2) {
            return Err(DataError::OverlappingSpans(e1, e2));
        }
        Ok(Self {
            e1,
            e2,
            e1_text: sentence.span_text(e1),
            e2_text: sentence.span_text(e2),
            relation: relation.to_string(),
        })
    }

    pub fn surface(&self) -> SurfaceTuple {
        SurfaceTuple::new(&self.e1_text, &self.e2_text, &self.relation)
    }

    fn has_separator(&self, sentence: &Sentence) -> bool {
        [self.e1, self.e2].iter().any(|s| {
            sentence.tokens[s.start..=s.end]
                .iter()
                .any(|t| t == COMPONENT_SEP || t == TUPLE_SEP)
        })
    }
}

/// A sentence and its gold tuples, deduplicated and ordered by span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub sentence: Sentence,
    pub tuples: Vec<RelationTuple>,
}

impl Example {
    pub fn new(sentence: Sentence, tuples: Vec<RelationTuple>) -> Self {
        let set: BTreeSet<RelationTuple> = tuples.into_iter().collect();
        Self { sentence, tuples: set.into_iter().collect() }
    }

    pub fn surface_set(&self) -> BTreeSet<SurfaceTuple> {
        self.tuples.iter().map(RelationTuple::surface).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct RawLine {
    tokens: Vec<String>,
    #[serde(default)]
    tuples: Vec<RawTuple>,
}

#[derive(Serialize, Deserialize)]
struct RawTuple {
    e1: [usize; 2],
    e2: [usize; 2],
    rel: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Abort on the first invalid line.
    pub strict: bool,
    /// Relations outside this inventory are rejected when set.
    pub relations: Option<BTreeSet<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub examples: Vec<Example>,
    pub errors: Vec<LineError>,
    /// Lines dropped because an entity contains `;` or `|`.
    pub separator_rejections: usize,
}

pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadReport, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_dataset(&text, options)
}

pub fn parse_dataset(text: &str, options: &LoadOptions) -> Result<LoadReport, DataError> {
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        match parse_line(line, options) {
            Ok(ex) => report.examples.push(ex),
            Err(err) => {
                if matches!(err, LineFailure::Separator) {
                    report.separator_rejections += 1;
                }
                let message = err.to_string();
                if options.strict {
                    return Err(DataError::Line { line: lineno, message });
                }
                report.errors.push(LineError { line: lineno, message });
            }
        }
    }
    Ok(report)
}

enum LineFailure {
    Json(String),
    Invalid(String),
    Separator,
}

impl fmt::Display for LineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineFailure::Json(m) => write!(f, "malformed JSON: {m}"),
            LineFailure::Invalid(m) => f.write_str(m),
            LineFailure::Separator => f.write_str("entity contains a separator token"),
        }
    }
}

fn parse_line(line: &str, options: &LoadOptions) -> Result<Example, LineFailure> {
    let raw: RawLine = serde_json::from_str(line).map_err(|e| LineFailure::Json(e.to_string()))?;
    if raw.tokens.is_empty() {
        return Err(LineFailure::Invalid("empty sentence".into()));
    }
    if raw.tokens.iter().any(|t| t.is_empty()) {
        return Err(LineFailure::Invalid("empty token".into()));
    }
    let sentence = Sentence::new(raw.tokens);
    let mut tuples = Vec::with_capacity(raw.tuples.len());
    for t in raw.tuples {
        if let Some(known) = &options.relations {
            if !known.contains(&t.rel) {
                return Err(LineFailure::Invalid(format!("unknown relation {}", t.rel)));
            }
        }
        let tuple = RelationTuple::new(
            &sentence,
            Span::new(t.e1[0], t.e1[1]),
            Span::new(t.e2[0], t.e2[1]),
            &t.rel,
        )
        .map_err(|e| LineFailure::Invalid(e.to_string()))?;
        if tuple.has_separator(&sentence) {
            return Err(LineFailure::Separator);
        }
        tuples.push(tuple);
    }
    Ok(Example::new(sentence, tuples))
}

pub fn example_to_json(ex: &Example) -> String {
    let raw = RawLine {
        tokens: ex.sentence.tokens.clone(),
        tuples: ex
            .tuples
            .iter()
            .map(|t| RawTuple {
                e1: [t.e1.start, t.e1.end],
                e2: [t.e2.start, t.e2.end],
                rel: t.relation.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&raw).expect("plain data serializes")
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut buf = String::new();
    for ex in examples {
        buf.push_str(&example_to_json(ex));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| DataError::io(path, e))
}

/// Entity reference in a tuple file: a span into `tokens` or literal text.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(untagged)]
enum EntityField {
    Span([usize; 2]),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct TupleLine {
    tokens: Vec<String>,
    #[serde(default)]
    tuples: Vec<TupleField>,
}

#[derive(Serialize, Deserialize)]
struct TupleField {
    e1: EntityField,
    e2: EntityField,
    rel: String,
}

/// One line of a prediction (or gold) file reduced to surface tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleSetLine {
    pub tokens: Vec<String>,
    pub tuples: BTreeSet<SurfaceTuple>,
}

/// Reads tuple sets from either the dataset format (span entities) or
/// the prediction format (string entities).
pub fn read_tuple_sets(path: impl AsRef<Path>) -> Result<Vec<TupleSetLine>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Line { line: i + 1, message };
        let raw: TupleLine = serde_json::from_str(line).map_err(|e| bad(format!("malformed JSON: {e}")))?;
        let resolve = |e: &EntityField| -> Result<String, DataError> {
            match e {
                EntityField::Text(s) => Ok(s.clone()),
                EntityField::Span([s, e]) if s <= e && *e < raw.tokens.len() => {
                    Ok(raw.tokens[*s..=*e].join(" "))
                }
                EntityField::Span(sp) => Err(bad(format!("span {sp:?} out of range"))),
            }
        };
        let mut tuples = BTreeSet::new();
        for t in &raw.tuples {
            tuples.insert(SurfaceTuple::new(resolve(&t.e1)?, resolve(&t.e2)?, t.rel.clone()));
        }
        out.push(TupleSetLine { tokens: raw.tokens, tuples });
    }
    Ok(out)
}

/// Prediction JSON line: tokens plus string-entity tuples.
pub fn prediction_to_json(tokens: &[String], tuples: &BTreeSet<SurfaceTuple>) -> String {
    let line = TupleLine {
        tokens: tokens.to_vec(),
        tuples: tuples
            .iter()
            .map(|t| TupleField {
                e1: EntityField::Text(t.head.clone()),
                e2: EntityField::Text(t.tail.clone()),
                rel: t.relation.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("plain data serializes")
}

pub fn write_predictions(
    mut out: impl Write,
    lines: &[(Vec<String>, BTreeSet<SurfaceTuple>)],
) -> std::io::Result<()> {
    for (tokens, tuples) in lines {
        writeln!(out, "{}", prediction_to_json(tokens, tuples))?;
    }
    Ok(())
}
