use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Example, Sentence, COMPONENT_SEP, EOS, SOS, TUPLE_SEP, UNK};
use crate::ndcore::{PAD_CHAR, UNKNOWN_CHAR};

pub const SOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;
pub const COMPONENT_SEP_ID: usize = 3;
pub const TUPLE_SEP_ID: usize = 4;
/// Relation id reserved for the end-of-tuples step of the pointer decoder.
pub const EOS_RELATION: usize = 0;

const FIRST_CHAR_ID: usize = 2;

/// Shared source/target word inventory, character alphabet and relation set.
///
/// Word ids: specials `0..5`, relation names, then source words in
/// lexicographic order. Relation ids: [`EOS_RELATION`] then relation names
/// in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    relations: Vec<String>,
    min_freq: usize,
    word_index: HashMap<String, usize>,
    char_index: HashMap<char, usize>,
    relation_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
    chars: Vec<char>,
    relations: Vec<String>,
    min_freq: usize,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Self::assemble(f.words, f.chars, f.relations, f.min_freq)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { words: v.words, chars: v.chars, relations: v.relations, min_freq: v.min_freq }
    }
}

/// Word and character ids for one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl Vocabulary {
    /// Builds the vocabulary from training examples only.
    ///
    /// Source words below `min_freq` map to `<UNK>`; relation names are
    /// always present.
    pub fn build(train: &[Example], min_freq: usize) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        let mut chars = BTreeSet::new();
        let mut relations = BTreeSet::new();
        for ex in train {
            for tok in &ex.sentence.tokens {
                *freq.entry(tok.as_str()).or_default() += 1;
                chars.extend(tok.chars());
            }
            for t in &ex.tuples {
                relations.insert(t.relation.clone());
            }
        }
        let mut words: Vec<String> =
            [SOS, EOS, UNK, COMPONENT_SEP, TUPLE_SEP].iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = words.iter().cloned().collect();
        for r in &relations {
            if seen.insert(r.clone()) {
                words.push(r.clone());
            }
        }
        for (w, &n) in &freq {
            if n >= min_freq.max(1) && seen.insert(w.to_string()) {
                words.push(w.to_string());
            }
        }
        let mut rels = vec![EOS.to_string()];
        rels.extend(relations);
        Self::assemble(words, chars.into_iter().collect(), rels, min_freq)
    }

    fn assemble(words: Vec<String>, chars: Vec<char>, relations: Vec<String>, min_freq: usize) -> Self {
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let char_index = chars.iter().enumerate().map(|(i, &c)| (c, i + FIRST_CHAR_ID)).collect();
        let relation_index = relations
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, r)| (r.clone(), i))
            .collect();
        Self { words, chars, relations, min_freq, word_index, char_index, relation_index }
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Character alphabet size including the pad and unknown ids.
    pub fn char_count(&self) -> usize {
        self.chars.len() + FIRST_CHAR_ID
    }

    /// Relation count including [`EOS_RELATION`].
    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Id of `word`, or [`UNK_ID`].
    pub fn word_id(&self, word: &str) -> usize {
        self.lookup_word(word).unwrap_or(UNK_ID)
    }

    pub fn lookup_word(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn relation(&self, id: usize) -> &str {
        &self.relations[id]
    }

    /// Relation names excluding the end marker.
    pub fn relation_names(&self) -> &[String] {
        &self.relations[1..]
    }

    /// Id of a real relation; the end marker is never returned.
    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    /// Word id of each relation name, in relation-id order from 1.
    pub fn relation_word_ids(&self) -> Vec<usize> {
        self.relation_names().iter().map(|r| self.word_index[r]).collect()
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNKNOWN_CHAR)
    }

    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        let ids: Vec<usize> = word.chars().map(|c| self.char_id(c)).collect();
        debug_assert!(ids.iter().all(|&i| i != PAD_CHAR));
        ids
    }

    pub fn encode(&self, sentence: &Sentence) -> EncodedSentence {
        EncodedSentence {
            words: sentence.tokens.iter().map(|t| self.word_id(t)).collect(),
            chars: sentence.tokens.iter().map(|t| self.char_ids(t)).collect(),
        }
    }

    /// Hex SHA-256 over every `(kind, id, entry)` triple in sorted order.
    pub fn digest(&self) -> String {
        let mut entries: Vec<String> = Vec::new();
        entries.extend(self.words.iter().enumerate().map(|(i, w)| format!("w\t{i}\t{w}")));
        entries.extend(self.chars.iter().enumerate().map(|(i, c)| format!("c\t{i}\t{c}")));
        entries.extend(self.relations.iter().enumerate().map(|(i, r)| format!("r\t{i}\t{r}")));
        entries.push(format!("m\t{}", self.min_freq));
        entries.sort();
        let mut h = Sha256::new();
        for e in &entries {
            h.update(e.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
