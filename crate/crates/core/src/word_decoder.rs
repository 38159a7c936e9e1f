//! Word-by-word decoding over the shared vocabulary.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::attention::{attend_avg, AdditiveAttention, AttentionKind, AttentionOutput, NgramAttention};
use crate::data::{parse_word_target, ParseDiagnostics, SurfaceTuple, Vocabulary, EOS_ID, SOS_ID, UNK_ID};
use crate::encoder::{EncoderOutput, ModelConfig, WORD_EMBEDDING};
use crate::ndcore::{dropout, Graph, Linear, LstmCell, ParameterStore, Real, Var};
use crate::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GenerationDiagnostics {
    pub unk_replacements: usize,
    #[serde(flatten)]
    pub parse: ParseDiagnostics,
    /// Generation hit the length cap before `<EOS>`.
    pub truncated: bool,
}

impl GenerationDiagnostics {
    pub fn add(&mut self, other: &GenerationDiagnostics) {
        self.unk_replacements += other.unk_replacements;
        self.parse.add(&other.parse);
        self.truncated |= other.truncated;
    }
}

#[derive(Clone, Debug)]
pub enum WordContext {
    Avg,
    Ngram(NgramAttention),
    Single(AdditiveAttention),
}

#[derive(Clone, Debug)]
pub struct WordDecoder {
    pub lstm: LstmCell,
    pub output: Linear,
    pub context: WordContext,
    pub word_emb: String,
    pub dropout: f64,
    pub copy_mask: bool,
    pub copy_mask_train: bool,
    pub max_len: usize,
}

/// Per-sentence attention state reused at every step.
#[derive(Clone, Copy, Debug)]
pub struct WordAttentionCache {
    fixed: Option<AttentionOutput>,
    keys: Option<Var>,
}

/// One greedy emission with the source weights used for `<UNK>` replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    pub id: usize,
    pub source_weights: Vec<f64>,
}

impl WordDecoder {
    pub fn new(cfg: &ModelConfig, vocab: &Vocabulary) -> Self {
        let context = match cfg.attention {
            AttentionKind::Avg => WordContext::Avg,
            AttentionKind::Ngram => {
                WordContext::Ngram(NgramAttention::new("wdec.ngram", cfg.hidden, cfg.token_dim(), cfg.ngram))
            }
            AttentionKind::Single => {
                WordContext::Single(AdditiveAttention::new("wdec.att", cfg.hidden, cfg.hidden, cfg.hidden))
            }
        };
        Self {
            lstm: LstmCell::new("wdec.lstm", cfg.hidden + cfg.word_dim, cfg.hidden),
            output: Linear::new("wdec.out", cfg.hidden, vocab.word_count(), true),
            context,
            word_emb: WORD_EMBEDDING.to_string(),
            dropout: cfg.dropout,
            copy_mask: cfg.copy_mask,
            copy_mask_train: cfg.copy_mask && cfg.copy_mask_train,
            max_len: cfg.max_target_len,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        self.lstm.init(store, range, rng);
        self.output.init(store, range, rng);
        match &self.context {
            WordContext::Avg => {}
            WordContext::Ngram(a) => a.init(store, range, rng),
            WordContext::Single(a) => a.init(store, range, rng),
        }
    }

    pub fn prepare<T: Real>(&self, g: &mut Graph<'_, T>, enc: &EncoderOutput) -> Result<WordAttentionCache, ModelError> {
        Ok(match &self.context {
            WordContext::Avg => WordAttentionCache { fixed: Some(attend_avg(g, enc.hidden)?), keys: None },
            WordContext::Ngram(a) => {
                WordAttentionCache { fixed: Some(a.attend(g, enc.tokens, enc.last)?.output), keys: None }
            }
            WordContext::Single(a) => WordAttentionCache { fixed: None, keys: Some(a.project_keys(g, enc.hidden)?) },
        })
    }

    /// Context for the step whose previous decoder state is `prev_hidden`.
    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        enc: &EncoderOutput,
        cache: &WordAttentionCache,
        prev_hidden: Var,
    ) -> Result<AttentionOutput, ModelError> {
        match (&self.context, cache.fixed, cache.keys) {
            (_, Some(out), _) => Ok(out),
            (WordContext::Single(a), None, Some(keys)) => a.attend(g, enc.hidden, keys, prev_hidden),
            _ => Err(ModelError::Config("attention cache does not match decoder".into())),
        }
    }

    /// `h_t = LSTM(e_t ∥ emb(y_{t-1}), h_{t-1})`.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_step<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        context: Var,
        prev_word: usize,
        state: (Var, Var),
        training: bool,
        rng: &mut R,
    ) -> Result<(Var, Var), ModelError> {
        let table = g.param(&self.word_emb)?;
        let y = g.gather(table, &[prev_word])?;
        let width = g.shape(y)[1];
        let y = g.reshape(y, &[width])?;
        let x = g.concat(&[context, y])?;
        let x = dropout(g, x, self.dropout, training, rng)?;
        Ok(self.lstm.step(g, x, state.0, state.1)?)
    }

    /// Log-probabilities over the vocabulary, restricted to `keep` when given.
    pub fn project<T: Real>(&self, g: &mut Graph<'_, T>, hidden: Var, keep: Option<&[bool]>) -> Result<Var, ModelError> {
        let logits = self.output.forward(g, hidden)?;
        Ok(g.log_softmax(logits, keep)?)
    }

    /// Teacher-forced mean negative log-likelihood of `target` (ending in `<EOS>`).
    pub fn word_loss<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        enc: &EncoderOutput,
        target: &[usize],
        keep: &[bool],
        vocab: &Vocabulary,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let keep = self.copy_mask_train.then_some(keep);
        if let Some(k) = keep {
            if let Some(&bad) = target.iter().find(|&&id| !k[id]) {
                return Err(ModelError::GoldOutsideSupport(vocab.word(bad).to_string()));
            }
        }
        let cache = self.prepare(g, enc)?;
        let mut state = self.lstm.zero_state(g);
        let mut prev = SOS_ID;
        let mut terms = Vec::with_capacity(target.len());
        for &gold in target {
            let ctx = self.attend(g, enc, &cache, state.0)?;
            state = self.decode_step(g, ctx.context, prev, state, training, rng)?;
            let logp = self.project(g, state.0, keep)?;
            terms.push(g.pick(logp, gold)?);
            prev = gold;
        }
        let total = g.add_all(&terms)?;
        Ok(g.scale(total, -1.0 / target.len() as f64))
    }

    /// Greedy decoding; returns the parsed tuple set, diagnostics and the
    /// rendered token sequence.
    pub fn generate<T: Real>(
        &self,
        store: &ParameterStore<T>,
        enc_fn: impl FnOnce(&mut Graph<'_, T>) -> Result<EncoderOutput, ModelError>,
        tokens: &[String],
        keep: &[bool],
        vocab: &Vocabulary,
    ) -> Result<(BTreeSet<SurfaceTuple>, GenerationDiagnostics, Vec<String>), ModelError> {
        let mut g = Graph::new(store);
        let enc = enc_fn(&mut g)?;
        let cache = self.prepare(&mut g, &enc)?;
        let keep = self.copy_mask.then_some(keep);
        let mut state = self.lstm.zero_state(&mut g);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let emissions = greedy_decode(self.max_len, |prev| {
            let ctx = self.attend(&mut g, &enc, &cache, state.0)?;
            state = self.decode_step(&mut g, ctx.context, prev, state, false, &mut rng)?;
            let logp = self.project(&mut g, state.0, keep)?;
            let probs: Vec<f64> = g.value(logp).data().iter().map(|v| v.as_f64().exp()).collect();
            let weights = match ctx.weights {
                Some(w) => g.value(w).as_f64_vec(),
                None => dot_weights(&g, enc.hidden, state.0),
            };
            Ok((probs, weights))
        })?;
        let truncated = emissions.last().map(|e| e.id) != Some(EOS_ID);
        let (words, unk_replacements) = render(&emissions, tokens, vocab);
        let (tuples, parse) = parse_word_target(&words, vocab);
        Ok((tuples, GenerationDiagnostics { unk_replacements, parse, truncated }, words))
    }
}

/// Softmax of `h_i · query` over encoder rows; the UNK-replacement source
/// for decoders whose context carries no attention weights.
fn dot_weights<T: Real>(g: &Graph<'_, T>, hidden: Var, query: Var) -> Vec<f64> {
    let h = g.value(hidden);
    let q = g.value(query).as_f64_vec();
    let scores: Vec<f64> = (0..h.rows())
        .map(|i| h.row(i).iter().zip(&q).map(|(a, b)| a.as_f64() * b).sum())
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn argmax_f64(xs: &[f64], skip: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in xs.iter().enumerate() {
        if i != skip && (best == usize::MAX || v > xs[best]) {
            best = i;
        }
    }
    best
}

/// Greedy loop. `step(prev_id)` returns the next-token distribution and the
/// source weights for that step. `<SOS>` is never emitted; stops after
/// `<EOS>` or `max_len` emissions.
pub fn greedy_decode<F>(max_len: usize, mut step: F) -> Result<Vec<Emission>, ModelError>
where
    F: FnMut(usize) -> Result<(Vec<f64>, Vec<f64>), ModelError>,
{
    let mut out = Vec::new();
    let mut prev = SOS_ID;
    while out.len() < max_len {
        let (probs, source_weights) = step(prev)?;
        let id = argmax_f64(&probs, SOS_ID);
        out.push(Emission { id, source_weights });
        if id == EOS_ID {
            break;
        }
        prev = id;
    }
    Ok(out)
}

/// Maps emissions to strings, replacing `<UNK>` by the source token with
/// the highest weight. Returns the words and the replacement count.
pub fn render(emissions: &[Emission], tokens: &[String], vocab: &Vocabulary) -> (Vec<String>, usize) {
    let mut replaced = 0;
    let words = emissions
        .iter()
        .map(|e| {
            if e.id == UNK_ID && !tokens.is_empty() {
                replaced += 1;
                let pos = argmax_f64(&e.source_weights[..tokens.len().min(e.source_weights.len())], usize::MAX);
                tokens[pos].clone()
            } else {
                vocab.word(e.id).to_string()
            }
        })
        .collect();
    (words, replaced)
}
