//! Encoder plus one decoder, behind a single loss/predict surface.

use std::collections::BTreeSet;

use rand::Rng;

use crate::data::{
    build_copy_mask, encode_pointer_target, encode_word_target, Example, Sentence, SurfaceTuple, Vocabulary,
    WordVectors,
};
use crate::encoder::{DecoderKind, Encoder, ModelConfig};
use crate::ndcore::{Graph, ParameterStore, Real, Var};
use crate::pointer_decoder::PointerDecoder;
use crate::word_decoder::{GenerationDiagnostics, WordDecoder};
use crate::ModelError;

#[derive(Clone, Debug)]
pub enum Decoder {
    Word(WordDecoder),
    Pointer(PointerDecoder),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Tuples predicted for one sentence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub tuples: BTreeSet<SurfaceTuple>,
    pub diagnostics: GenerationDiagnostics,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        let encoder = Encoder::new(&config, &vocab);
        let decoder = match config.kind {
            DecoderKind::Wdec => Decoder::Word(WordDecoder::new(&config, &vocab)),
            DecoderKind::Pndec => Decoder::Pointer(PointerDecoder::new(&config, &vocab)),
        };
        Ok(Self { config, vocab, encoder, decoder })
    }

    /// Fresh parameters drawn from `rng`.
    pub fn init<T: Real, R: Rng + ?Sized>(
        &self,
        vectors: Option<&WordVectors>,
        rng: &mut R,
    ) -> Result<ParameterStore<T>, ModelError> {
        let mut store = ParameterStore::new();
        let range = self.config.init_range;
        self.encoder.init(&mut store, range, &self.vocab, vectors, rng)?;
        match &self.decoder {
            Decoder::Word(d) => d.init(&mut store, range, rng),
            Decoder::Pointer(d) => d.init(&mut store, range, rng),
        }
        Ok(store)
    }

    /// Teacher-forced loss of one example.
    pub fn loss<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        example: &Example,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let sentence = self.vocab.encode(&example.sentence);
        let enc = self.encoder.forward(g, &sentence, training, rng)?;
        match &self.decoder {
            Decoder::Word(d) => {
                let target = encode_word_target(&example.tuples, &self.vocab)?;
                let keep = build_copy_mask(&example.sentence, &self.vocab);
                d.word_loss(g, &enc, &target, &keep, &self.vocab, training, rng)
            }
            Decoder::Pointer(d) => {
                let target = encode_pointer_target(&example.tuples, &self.vocab)?;
                d.ptr_loss(g, &enc, &target, training, rng)
            }
        }
    }

    /// Greedy inference without dropout.
    pub fn predict<T: Real>(&self, store: &ParameterStore<T>, sentence: &Sentence) -> Result<Prediction, ModelError> {
        let encoded = self.vocab.encode(sentence);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let enc_fn = |g: &mut Graph<'_, T>| self.encoder.forward(g, &encoded, false, &mut rng);
        match &self.decoder {
            Decoder::Word(d) => {
                let keep = build_copy_mask(sentence, &self.vocab);
                let (tuples, diagnostics, _) = d.generate(store, enc_fn, &sentence.tokens, &keep, &self.vocab)?;
                Ok(Prediction { tuples, diagnostics })
            }
            Decoder::Pointer(d) => {
                let (spans, pdiag) = d.generate(store, enc_fn)?;
                let mut diagnostics = GenerationDiagnostics { truncated: pdiag.truncated, ..Default::default() };
                diagnostics.parse.duplicate = pdiag.duplicates;
                let mut tuples = BTreeSet::new();
                for t in spans {
                    let surface = SurfaceTuple::new(
                        sentence.span_text(t.e1),
                        sentence.span_text(t.e2),
                        self.vocab.relation(t.relation),
                    );
                    if !tuples.insert(surface) {
                        diagnostics.parse.duplicate += 1;
                    }
                }
                Ok(Prediction { tuples, diagnostics })
            }
        }
    }

    /// Raw token sequence from the word decoder, for inspection.
    pub fn predict_words<T: Real>(
        &self,
        store: &ParameterStore<T>,
        sentence: &Sentence,
    ) -> Result<Option<Vec<String>>, ModelError> {
        let Decoder::Word(d) = &self.decoder else { return Ok(None) };
        let encoded = self.vocab.encode(sentence);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let keep = build_copy_mask(sentence, &self.vocab);
        let (_, _, words) = d.generate(
            store,
            |g| self.encoder.forward(g, &encoded, false, &mut rng),
            &sentence.tokens,
            &keep,
            &self.vocab,
        )?;
        Ok(Some(words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RelationTuple, Span};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example() -> Example {
        let s = Sentence::from_text("Paris is in France .");
        let t = RelationTuple::new(&s, Span::new(0, 0), Span::new(3, 3), "/loc/in").unwrap();
        Example::new(s, vec![t])
    }

    fn small(kind: DecoderKind) -> ModelConfig {
        ModelConfig {
            kind,
            word_dim: 4,
            char_dim: 3,
            char_features: 3,
            hidden: 6,
            pointer_hidden: 3,
            relation_dim: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn both_kinds_produce_finite_losses_and_predictions() {
        let ex = example();
        let vocab = Vocabulary::build(std::slice::from_ref(&ex), 1);
        for kind in [DecoderKind::Wdec, DecoderKind::Pndec] {
            let model = Model::new(small(kind), vocab.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let store: ParameterStore<f32> = model.init(None, &mut rng).unwrap();
            let mut g = Graph::new(&store);
            let l = model.loss(&mut g, &ex, true, &mut rng).unwrap();
            assert!(g.value(l).item().is_finite());
            let p = model.predict(&store, &ex.sentence).unwrap();
            assert!(p.tuples.len() <= model.config.max_tuples || kind == DecoderKind::Wdec);
        }
    }

    #[test]
    fn overlong_sentence_is_rejected() {
        let ex = example();
        let vocab = Vocabulary::build(std::slice::from_ref(&ex), 1);
        let cfg = ModelConfig { max_sent_len: 3, ..small(DecoderKind::Pndec) };
        let model = Model::new(cfg, vocab).unwrap();
        let store: ParameterStore<f32> = model.init(None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let err = model.predict(&store, &ex.sentence).unwrap_err();
        assert!(err.to_string().contains("sentence too long"));
    }
}
