use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{classify_overlap, Example, OverlapClass};

/// Per-sentence tuple-count bucket; the last bucket is open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CountBucket {
    One,
    Two,
    Three,
    Four,
    FiveOrMore,
}

impl CountBucket {
    pub const ALL: [CountBucket; 5] =
        [CountBucket::One, CountBucket::Two, CountBucket::Three, CountBucket::Four, CountBucket::FiveOrMore];

    /// `None` for sentences without tuples.
    pub fn of(count: usize) -> Option<Self> {
        match count {
            0 => None,
            1 => Some(CountBucket::One),
            2 => Some(CountBucket::Two),
            3 => Some(CountBucket::Three),
            4 => Some(CountBucket::Four),
            _ => Some(CountBucket::FiveOrMore),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            CountBucket::One => "1",
            CountBucket::Two => "2",
            CountBucket::Three => "3",
            CountBucket::Four => "4",
            CountBucket::FiveOrMore => ">=5",
        }
    }
}

/// Corpus summary printed by `inspect`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub relations: usize,
    pub sentences: usize,
    pub tuples: usize,
    pub neo: usize,
    pub epo: usize,
    pub seo: usize,
    /// Sentences with 1, 2, 3, 4 and 5+ tuples.
    pub tuple_histogram: [usize; 5],
    pub without_tuples: usize,
}

impl CorpusStats {
    pub fn from_examples(examples: &[Example]) -> Self {
        let mut s = CorpusStats { sentences: examples.len(), ..Default::default() };
        let mut relations = BTreeSet::new();
        for ex in examples {
            s.tuples += ex.tuples.len();
            relations.extend(ex.tuples.iter().map(|t| t.relation.as_str()));
            match CountBucket::of(ex.tuples.len()) {
                Some(b) => s.tuple_histogram[b.index()] += 1,
                None => s.without_tuples += 1,
            }
            for class in classify_overlap(&ex.tuples) {
                match class {
                    OverlapClass::Neo => s.neo += 1,
                    OverlapClass::Epo => s.epo += 1,
                    OverlapClass::Seo => s.seo += 1,
                }
            }
        }
        s.relations = relations.len();
        s
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<(String, usize)> = [
            ("relations".to_string(), self.relations),
            ("sentences".to_string(), self.sentences),
            ("tuples".to_string(), self.tuples),
            ("NEO".to_string(), self.neo),
            ("EPO".to_string(), self.epo),
            ("SEO".to_string(), self.seo),
        ]
        .into_iter()
        .chain(CountBucket::ALL.iter().map(|b| (format!("tuples={}", b.label()), self.tuple_histogram[b.index()])))
        .chain(std::iter::once(("tuples=0".to_string(), self.without_tuples)))
        .collect();
        for (k, v) in rows {
            writeln!(f, "{k:<12} {v:>8}")?;
        }
        Ok(())
    }
}
