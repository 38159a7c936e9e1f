use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::DataError;

/// Pretrained word vectors read from `word v1 .. vd` lines.
#[derive(Clone, Debug, Default)]
pub struct WordVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut out = WordVectors::default();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            // optional "count dim" header
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let word = fields[0];
            let parts = fields[1..].iter();
            let bad = |message: String| DataError::Line { line: i + 1, message };
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|e| bad(format!("bad value {p:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(bad("no vector values".into()));
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(bad(format!("expected {} values, got {}", out.dim, values.len())));
            }
            out.vectors.insert(word.to_string(), values);
        }
        Ok(out)
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectors, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    WordVectors::parse(&text)
}
