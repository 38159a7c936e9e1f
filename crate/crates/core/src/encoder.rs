//! Token representation and Bi-LSTM sentence encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionKind, PointerQuery};
use crate::data::{EncodedSentence, Vocabulary, WordVectors};
use crate::ndcore::{dropout, BiLstm, CharCnn, Graph, ParameterStore, Real, Tensor, Var};
use crate::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Wdec,
    Pndec,
}

impl std::str::FromStr for DecoderKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wdec" => Ok(DecoderKind::Wdec),
            "pndec" => Ok(DecoderKind::Pndec),
            _ => Err(ModelError::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderKind::Wdec => "wdec",
            DecoderKind::Pndec => "pndec",
        })
    }
}

/// Architecture and decoding hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: DecoderKind,
    pub attention: AttentionKind,
    pub ptr_attention: PointerQuery,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_features: usize,
    /// Bi-LSTM output width; each direction gets half.
    pub hidden: usize,
    pub pointer_hidden: usize,
    pub relation_dim: usize,
    pub cnn_width: usize,
    pub max_word_len: usize,
    pub max_sent_len: usize,
    pub dropout: f64,
    /// Also drop encoder hidden states.
    pub dropout_hidden: bool,
    /// Restrict the word projection to the copy mask at inference.
    pub copy_mask: bool,
    /// Restrict the word projection during training as well.
    pub copy_mask_train: bool,
    pub ngram: usize,
    pub max_target_len: usize,
    pub max_tuples: usize,
    /// Replace the two-pass span rule with the exhaustive four-index argmax.
    pub exhaustive_spans: bool,
    pub init_range: f64,
    pub min_freq: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: DecoderKind::Wdec,
            attention: AttentionKind::Single,
            ptr_attention: PointerQuery::DecHid,
            word_dim: 300,
            char_dim: 50,
            char_features: 50,
            hidden: 300,
            pointer_hidden: 300,
            relation_dim: 300,
            cnn_width: 3,
            max_word_len: 10,
            max_sent_len: 100,
            dropout: 0.3,
            dropout_hidden: false,
            copy_mask: true,
            copy_mask_train: true,
            ngram: 3,
            max_target_len: 100,
            max_tuples: 10,
            exhaustive_spans: false,
            init_range: 0.1,
            min_freq: 1,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ModelError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ModelError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl ModelConfig {
    /// Token vector width `d_w + d_f`.
    pub fn token_dim(&self) -> usize {
        self.word_dim + self.char_features
    }

    /// Tuple vector width `8 d_p + d_r`.
    pub fn tuple_dim(&self) -> usize {
        8 * self.pointer_hidden + self.relation_dim
    }

    /// Applies one `key = value` entry. Returns `Ok(false)` for keys that
    /// belong to some other config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ModelError> {
        let int = || {
            value
                .parse::<usize>()
                .map_err(|e| ModelError::Config(format!("{key}: {e}")))
        };
        match key {
            "model" | "kind" => self.kind = value.parse()?,
            "attention" => self.attention = value.parse()?,
            "ptr_attention" => self.ptr_attention = value.parse()?,
            "d_w" | "word_dim" => self.word_dim = int()?,
            "d_c" | "char_dim" => self.char_dim = int()?,
            "d_f" | "char_features" => self.char_features = int()?,
            "d_h" | "hidden" => self.hidden = int()?,
            "d_p" | "pointer_hidden" => self.pointer_hidden = int()?,
            "d_r" | "relation_dim" => self.relation_dim = int()?,
            "cnn_width" => self.cnn_width = int()?,
            "max_word_len" => self.max_word_len = int()?,
            "max_sent_len" => self.max_sent_len = int()?,
            "ngram" => self.ngram = int()?,
            "max_target_len" => self.max_target_len = int()?,
            "max_tuples" => self.max_tuples = int()?,
            "min_freq" => self.min_freq = int()?,
            "dropout" => {
                self.dropout = value
                    .parse()
                    .map_err(|e| ModelError::Config(format!("{key}: {e}")))?
            }
            "init_range" => {
                self.init_range = value
                    .parse()
                    .map_err(|e| ModelError::Config(format!("{key}: {e}")))?
            }
            "dropout_hidden" => self.dropout_hidden = parse_bool(key, value)?,
            "copy" | "copy_mask" => self.copy_mask = parse_bool(key, value)?,
            "copy_mask_train" => self.copy_mask_train = parse_bool(key, value)?,
            "exhaustive_spans" => self.exhaustive_spans = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("d_w", self.word_dim),
            ("d_c", self.char_dim),
            ("d_f", self.char_features),
            ("d_h", self.hidden),
            ("d_p", self.pointer_hidden),
            ("d_r", self.relation_dim),
            ("cnn_width", self.cnn_width),
            ("max_word_len", self.max_word_len),
            ("max_sent_len", self.max_sent_len),
            ("ngram", self.ngram),
            ("max_target_len", self.max_target_len),
            ("max_tuples", self.max_tuples),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if !self.hidden.is_multiple_of(2) {
            return Err(ModelError::Config(format!("d_h must be even, got {}", self.hidden)));
        }
        if self.cnn_width.is_multiple_of(2) {
            return Err(ModelError::Config(format!("cnn_width must be odd, got {}", self.cnn_width)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !(self.init_range > 0.0 && self.init_range.is_finite()) {
            return Err(ModelError::Config("init_range must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder activations for one sentence.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    /// `[n, d_w + d_f]`
    pub tokens: Var,
    /// `[n, d_h]`
    pub hidden: Var,
    /// `[d_h]`, row `n - 1` of `hidden`.
    pub last: Var,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub word_emb: String,
    pub chars: CharCnn,
    pub bilstm: BiLstm,
    pub words: usize,
    pub word_dim: usize,
    pub dropout: f64,
    pub dropout_hidden: bool,
    pub max_sent_len: usize,
}

/// Shared source/target word embedding table.
pub const WORD_EMBEDDING: &str = "enc.word_emb";

impl Encoder {
    pub fn new(cfg: &ModelConfig, vocab: &Vocabulary) -> Self {
        Self {
            word_emb: WORD_EMBEDDING.to_string(),
            chars: CharCnn::new(
                "enc.char",
                vocab.char_count(),
                cfg.char_dim,
                cfg.char_features,
                cfg.cnn_width,
                cfg.max_word_len,
            ),
            bilstm: BiLstm::new("enc.bilstm", cfg.token_dim(), cfg.hidden / 2),
            words: vocab.word_count(),
            word_dim: cfg.word_dim,
            dropout: cfg.dropout,
            dropout_hidden: cfg.dropout_hidden,
            max_sent_len: cfg.max_sent_len,
        }
    }

    /// Uniform init; rows of words found in `vectors` are overwritten.
    pub fn init<T: Real, R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore<T>,
        range: f64,
        vocab: &Vocabulary,
        vectors: Option<&WordVectors>,
        rng: &mut R,
    ) -> Result<(), ModelError> {
        let mut table = Tensor::<T>::uniform(&[self.words, self.word_dim], range, rng);
        if let Some(v) = vectors {
            if v.dim != self.word_dim && !v.vectors.is_empty() {
                return Err(ModelError::Config(format!(
                    "word vectors have {} dims, model expects {}",
                    v.dim, self.word_dim
                )));
            }
            for (id, w) in vocab.words().iter().enumerate() {
                if let Some(row) = v.get(w) {
                    let dst = &mut table.data_mut()[id * self.word_dim..(id + 1) * self.word_dim];
                    for (d, &s) in dst.iter_mut().zip(row) {
                        *d = T::from_f64(s);
                    }
                }
            }
        }
        store.insert(self.word_emb.clone(), table);
        self.chars.init(store, range, rng);
        self.bilstm.init(store, range, rng);
        Ok(())
    }

    /// Rows `E_w[word] ∥ char_cnn(word)`.
    pub fn embed_tokens<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        sentence: &EncodedSentence,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let table = g.param(&self.word_emb)?;
        let words = g.gather(table, &sentence.words)?;
        let chars = self.chars.forward_words(g, &sentence.chars)?;
        let tokens = g.concat_cols(&[words, chars])?;
        Ok(dropout(g, tokens, self.dropout, training, rng)?)
    }

    pub fn encode<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        tokens: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<EncoderOutput, ModelError> {
        let len = g.shape(tokens)[0];
        if len > self.max_sent_len {
            return Err(ModelError::SentenceTooLong { len, max: self.max_sent_len });
        }
        let mut hidden = self.bilstm.forward(g, tokens)?;
        if self.dropout_hidden {
            hidden = dropout(g, hidden, self.dropout, training, rng)?;
        }
        let last = g.row(hidden, len - 1)?;
        Ok(EncoderOutput { tokens, hidden, last, len })
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        sentence: &EncodedSentence,
        training: bool,
        rng: &mut R,
    ) -> Result<EncoderOutput, ModelError> {
        if sentence.words.len() > self.max_sent_len {
            return Err(ModelError::SentenceTooLong { len: sentence.words.len(), max: self.max_sent_len });
        }
        let tokens = self.embed_tokens(g, sentence, training, rng)?;
        self.encode(g, tokens, training, rng)
    }
}
