//! Tuple-at-a-time decoding with two pointer networks.

use rand::Rng;
use serde::Serialize;

use crate::attention::{PointerAttention, PointerKeys};
use crate::data::{PointerTarget, Span, Vocabulary, EOS_RELATION};
use crate::encoder::{EncoderOutput, ModelConfig};
use crate::ndcore::{dropout, BiLstm, Graph, Linear, LstmCell, ParameterStore, Real, Tensor, Var};
use crate::ModelError;

#[derive(Clone, Debug)]
pub struct PointerDecoder {
    pub lstm: LstmCell,
    pub attention: PointerAttention,
    pub first: BiLstm,
    pub start1: Linear,
    pub end1: Linear,
    pub second: BiLstm,
    pub start2: Linear,
    pub end2: Linear,
    pub relation: Linear,
    pub relation_emb: String,
    pub relations: usize,
    pub relation_dim: usize,
    pub tuple_dim: usize,
    pub dropout: f64,
    pub max_tuples: usize,
    pub exhaustive_spans: bool,
}

/// Activations of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct PointerStepOutput {
    /// Log-probabilities over positions for entity 1 start/end and entity 2 start/end.
    pub log_start1: Var,
    pub log_end1: Var,
    pub log_start2: Var,
    pub log_end2: Var,
    /// `[4 d_p]` each.
    pub entity1: Var,
    pub entity2: Var,
    /// Log-probabilities over relations.
    pub log_relation: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PointerDiagnostics {
    /// Stopped at the tuple cap rather than the end relation.
    pub truncated: bool,
    /// Repeated tuples removed from the output.
    pub duplicates: usize,
}

/// Probabilities of one step, as consumed by [`greedy_tuples`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepProbs {
    pub relation: Vec<f64>,
    pub start1: Vec<f64>,
    pub end1: Vec<f64>,
    pub start2: Vec<f64>,
    pub end2: Vec<f64>,
}

/// A decoded tuple by span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanTuple {
    pub e1: Span,
    pub e2: Span,
    pub relation: usize,
}

impl PointerDecoder {
    pub fn new(cfg: &ModelConfig, vocab: &Vocabulary) -> Self {
        let (h, p) = (cfg.hidden, cfg.pointer_hidden);
        let tuple_dim = cfg.tuple_dim();
        let scorer = |name: &str| Linear::new(&format!("pdec.{name}"), 2 * p, 1, true);
        Self {
            lstm: LstmCell::new("pdec.lstm", h + tuple_dim, h),
            attention: PointerAttention::new("pdec.att", cfg.ptr_attention, h, tuple_dim),
            first: BiLstm::new("pdec.ptr1", 2 * h, p),
            start1: scorer("start1"),
            end1: scorer("end1"),
            second: BiLstm::new("pdec.ptr2", 2 * p + 2 * h, p),
            start2: scorer("start2"),
            end2: scorer("end2"),
            relation: Linear::new("pdec.rel", 8 * p + h, vocab.relation_count(), true),
            relation_emb: "pdec.rel_emb".to_string(),
            relations: vocab.relation_count(),
            relation_dim: cfg.relation_dim,
            tuple_dim,
            dropout: cfg.dropout,
            max_tuples: cfg.max_tuples,
            exhaustive_spans: cfg.exhaustive_spans,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        self.lstm.init(store, range, rng);
        self.attention.init(store, range, rng);
        self.first.init(store, range, rng);
        self.start1.init(store, range, rng);
        self.end1.init(store, range, rng);
        self.second.init(store, range, rng);
        self.start2.init(store, range, rng);
        self.end2.init(store, range, rng);
        self.relation.init(store, range, rng);
        store.init_uniform(&self.relation_emb, &[self.relations, self.relation_dim], range, rng);
    }

    /// `h_t = LSTM(e_t ∥ y_prev, h_{t-1})`.
    pub fn decode_step<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        context: Var,
        prev_tuples: Var,
        state: (Var, Var),
        training: bool,
        rng: &mut R,
    ) -> Result<(Var, Var), ModelError> {
        let x = g.concat(&[context, prev_tuples])?;
        let x = dropout(g, x, self.dropout, training, rng)?;
        Ok(self.lstm.step(g, x, state.0, state.1)?)
    }

    fn position_scores<T: Real>(
        g: &mut Graph<'_, T>,
        scorer: &Linear,
        rows: Var,
    ) -> Result<(Var, Var), ModelError> {
        let n = g.shape(rows)[0];
        let s = scorer.forward_rows(g, rows)?;
        let s = g.reshape(s, &[n])?;
        Ok((g.softmax(s, None)?, g.log_softmax(s, None)?))
    }

    /// Both pointer networks and the relation classifier for one step.
    pub fn point<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        dec_hidden: Var,
        enc_hidden: Var,
    ) -> Result<PointerStepOutput, ModelError> {
        let n = g.shape(enc_hidden)[0];
        let rep = g.stack_rows(&vec![dec_hidden; n])?;
        let x1 = g.concat_cols(&[rep, enc_hidden])?;
        let hk = self.first.forward(g, x1)?;
        let (s1, log_start1) = Self::position_scores(g, &self.start1, hk)?;
        let (e1, log_end1) = Self::position_scores(g, &self.end1, hk)?;
        let x2 = g.concat_cols(&[hk, rep, enc_hidden])?;
        let hl = self.second.forward(g, x2)?;
        let (s2, log_start2) = Self::position_scores(g, &self.start2, hl)?;
        let (e2, log_end2) = Self::position_scores(g, &self.end2, hl)?;

        let a1s = g.vecmat(s1, hk)?;
        let a1e = g.vecmat(e1, hk)?;
        let entity1 = g.concat(&[a1s, a1e])?;
        let a2s = g.vecmat(s2, hl)?;
        let a2e = g.vecmat(e2, hl)?;
        let entity2 = g.concat(&[a2s, a2e])?;

        let joined = g.concat(&[entity1, entity2, dec_hidden])?;
        let logits = self.relation.forward(g, joined)?;
        let log_relation = g.log_softmax(logits, None)?;
        Ok(PointerStepOutput { log_start1, log_end1, log_start2, log_end2, entity1, entity2, log_relation })
    }

    /// `y_t = a¹ ∥ a² ∥ E_r[relation]`.
    pub fn tuple_vector<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        out: &PointerStepOutput,
        relation: usize,
    ) -> Result<Var, ModelError> {
        let table = g.param(&self.relation_emb)?;
        let z = g.gather(table, &[relation])?;
        let z = g.reshape(z, &[self.relation_dim])?;
        Ok(g.concat(&[out.entity1, out.entity2, z])?)
    }

    fn keys<T: Real>(&self, g: &mut Graph<'_, T>, enc: &EncoderOutput) -> Result<PointerKeys, ModelError> {
        Ok(self.attention.project_keys(g, enc.hidden)?)
    }

    /// Teacher-forced loss: relation and four pointer NLL terms per tuple,
    /// relation only at the end step, divided by the step count.
    pub fn ptr_loss<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        enc: &EncoderOutput,
        target: &PointerTarget,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let n = enc.len;
        for s in &target.steps {
            for span in [s.e1, s.e2] {
                if span.end >= n || span.start > span.end {
                    return Err(ModelError::GoldSpanOutOfRange { span, len: n });
                }
            }
        }
        let keys = self.keys(g, enc)?;
        let mut state = self.lstm.zero_state(g);
        let mut prev_tuples = g.constant(Tensor::zeros(&[self.tuple_dim]));
        let mut terms = Vec::new();
        let relations = target.relations();
        for (t, &gold_rel) in relations.iter().enumerate() {
            let ctx = self.attention.attend(g, enc.hidden, &keys, state.0, prev_tuples)?;
            state = self.decode_step(g, ctx.context, prev_tuples, state, training, rng)?;
            let out = self.point(g, state.0, enc.hidden)?;
            terms.push(g.pick(out.log_relation, gold_rel)?);
            if let Some(step) = target.steps.get(t) {
                terms.push(g.pick(out.log_start1, step.e1.start)?);
                terms.push(g.pick(out.log_end1, step.e1.end)?);
                terms.push(g.pick(out.log_start2, step.e2.start)?);
                terms.push(g.pick(out.log_end2, step.e2.end)?);
                let y = self.tuple_vector(g, &out, gold_rel)?;
                prev_tuples = g.add(prev_tuples, y)?;
            }
        }
        let total = g.add_all(&terms)?;
        Ok(g.scale(total, -1.0 / relations.len() as f64))
    }

    /// Greedy inference. Sentences shorter than two tokens yield nothing.
    pub fn generate<T: Real>(
        &self,
        store: &ParameterStore<T>,
        enc_fn: impl FnOnce(&mut Graph<'_, T>) -> Result<EncoderOutput, ModelError>,
    ) -> Result<(Vec<SpanTuple>, PointerDiagnostics), ModelError> {
        let mut g = Graph::new(store);
        let enc = enc_fn(&mut g)?;
        if enc.len < 2 {
            return Ok((Vec::new(), PointerDiagnostics::default()));
        }
        let keys = self.keys(&mut g, &enc)?;
        let mut state = self.lstm.zero_state(&mut g);
        let mut prev_tuples = g.constant(Tensor::zeros(&[self.tuple_dim]));
        let mut last: Option<PointerStepOutput> = None;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let probs = |g: &Graph<'_, T>, v: Var| -> Vec<f64> { g.value(v).data().iter().map(|x| x.as_f64().exp()).collect() };
        let chooser = if self.exhaustive_spans { select_spans_exhaustive } else { select_spans };
        greedy_tuples(self.max_tuples, chooser, |prev_relation| {
            if let (Some(r), Some(out)) = (prev_relation, last.as_ref()) {
                let y = self.tuple_vector(&mut g, out, r)?;
                prev_tuples = g.add(prev_tuples, y)?;
            }
            let ctx = self.attention.attend(&mut g, enc.hidden, &keys, state.0, prev_tuples)?;
            state = self.decode_step(&mut g, ctx.context, prev_tuples, state, false, &mut rng)?;
            let out = self.point(&mut g, state.0, enc.hidden)?;
            let step = StepProbs {
                relation: probs(&g, out.log_relation),
                start1: probs(&g, out.log_start1),
                end1: probs(&g, out.log_end1),
                start2: probs(&g, out.log_start2),
                end2: probs(&g, out.log_end2),
            };
            last = Some(out);
            Ok(step)
        })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

type SpanChooser = fn(&[f64], &[f64], &[f64], &[f64]) -> Result<(Span, Span), ModelError>;

/// Greedy tuple loop. `step(prev)` receives the relation chosen at the
/// previous step (`None` first) and returns the next step's distributions.
/// Stops at the end relation or after `max_tuples` tuples.
pub fn greedy_tuples<F>(
    max_tuples: usize,
    choose: SpanChooser,
    mut step: F,
) -> Result<(Vec<SpanTuple>, PointerDiagnostics), ModelError>
where
    F: FnMut(Option<usize>) -> Result<StepProbs, ModelError>,
{
    let mut out: Vec<SpanTuple> = Vec::new();
    let mut diag = PointerDiagnostics::default();
    let mut prev = None;
    let mut emitted = 0;
    loop {
        if emitted == max_tuples {
            diag.truncated = true;
            break;
        }
        let p = step(prev)?;
        let relation = argmax(&p.relation);
        if relation == EOS_RELATION {
            break;
        }
        let (e1, e2) = choose(&p.start1, &p.end1, &p.start2, &p.end2)?;
        let t = SpanTuple { e1, e2, relation };
        if out.contains(&t) {
            diag.duplicates += 1;
        } else {
            out.push(t);
        }
        emitted += 1;
        prev = Some(relation);
    }
    Ok((out, diag))
}

/// Best span by `start[b] * end[e]` over `b <= e` with both in `lo..=hi`,
/// skipping `exclude`. Ties prefer the smaller end, then the smaller start.
fn best_span(start: &[f64], end: &[f64], lo: usize, hi: usize, exclude: Option<Span>) -> Option<(f64, Span)> {
    let mut best: Option<(f64, Span)> = None;
    for e in lo..=hi {
        for b in lo..=e {
            let span = Span::new(b, e);
            if Some(span) == exclude {
                continue;
            }
            let score = start[b] * end[e];
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, span));
            }
        }
    }
    best
}

/// Best span disjoint from `taken`, same tie order as [`best_span`].
fn best_disjoint(start: &[f64], end: &[f64], taken: Span) -> Option<(f64, Span)> {
    let n = start.len();
    let left = (taken.start > 0).then(|| best_span(start, end, 0, taken.start - 1, None)).flatten();
    let right = (taken.end + 1 < n).then(|| best_span(start, end, taken.end + 1, n - 1, None)).flatten();
    match (left, right) {
        // every left span ends before any right span
        (Some(l), Some(r)) => Some(if r.0 > l.0 { r } else { l }),
        (l, r) => l.or(r),
    }
}

fn one_pass(sa: &[f64], ea: &[f64], sb: &[f64], eb: &[f64]) -> (f64, Span, Span) {
    let n = sa.len();
    let (pa, first) = best_span(sa, ea, 0, n - 1, Some(Span::new(0, n - 1))).expect("n >= 2");
    let (pb, second) = best_disjoint(sb, eb, first).expect("first span leaves room");
    (pa * pb, first, second)
}

fn check_lengths(s1: &[f64], e1: &[f64], s2: &[f64], e2: &[f64]) -> Result<usize, ModelError> {
    let n = s1.len();
    if e1.len() != n || s2.len() != n || e2.len() != n {
        return Err(ModelError::Config("pointer distributions differ in length".into()));
    }
    if n < 2 {
        return Err(ModelError::NoDisjointSpans(n));
    }
    Ok(n)
}

/// Two-pass span choice: entity 1 first then the best disjoint entity 2,
/// and the reverse; the pass with the larger four-way product wins, the
/// entity-1-first pass on ties. The whole-sentence span is never chosen
/// first since it leaves no room for the other entity.
pub fn select_spans(s1: &[f64], e1: &[f64], s2: &[f64], e2: &[f64]) -> Result<(Span, Span), ModelError> {
    check_lengths(s1, e1, s2, e2)?;
    let (pa, a1, a2) = one_pass(s1, e1, s2, e2);
    let (pb, b2, b1) = one_pass(s2, e2, s1, e1);
    Ok(if pb > pa { (b1, b2) } else { (a1, a2) })
}

/// Joint argmax of the four-way product over all disjoint span pairs.
pub fn select_spans_exhaustive(s1: &[f64], e1: &[f64], s2: &[f64], e2: &[f64]) -> Result<(Span, Span), ModelError> {
    let n = check_lengths(s1, e1, s2, e2)?;
    // best entity-2 span inside 0..=k and inside k..n
    let prefix: Vec<Option<(f64, Span)>> = (0..n).map(|k| best_span(s2, e2, 0, k, None)).collect();
    let suffix: Vec<Option<(f64, Span)>> = (0..n).map(|k| best_span(s2, e2, k, n - 1, None)).collect();
    let mut best: Option<(f64, Span, Span)> = None;
    for e in 0..n {
        for b in 0..=e {
            let p1 = s1[b] * e1[e];
            let left = if b > 0 { prefix[b - 1] } else { None };
            let right = if e + 1 < n { suffix[e + 1] } else { None };
            for (p2, span2) in [left, right].into_iter().flatten() {
                let score = p1 * p2;
                if best.is_none_or(|(s, ..)| score > s) {
                    best = Some((score, Span::new(b, e), span2));
                }
            }
        }
    }
    let (_, a, b) = best.expect("n >= 2 admits a disjoint pair");
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_pointer_target, Example, RelationTuple, Sentence};
    use crate::encoder::Encoder;
    use crate::ndcore::{finite_diff_check, NdError};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    fn all_spans(n: usize) -> Vec<Span> {
        let mut out = Vec::new();
        for e in 0..n {
            for b in 0..=e {
                out.push(Span::new(b, e));
            }
        }
        out
    }

    /// Literal simulation: enumerate span lists, filter, take the first maximum.
    fn oracle(s1: &[f64], e1: &[f64], s2: &[f64], e2: &[f64]) -> (Span, Span) {
        let n = s1.len();
        let spans = all_spans(n);
        let first_max = |cands: Vec<Span>, s: &[f64], e: &[f64]| -> (f64, Span) {
            let mut best = (f64::NEG_INFINITY, cands[0]);
            for c in cands {
                let v = s[c.start] * e[c.end];
                if v > best.0 {
                    best = (v, c);
                }
            }
            best
        };
        let pass = |sa: &[f64], ea: &[f64], sb: &[f64], eb: &[f64]| {
            let firsts: Vec<Span> = spans
                .iter()
                .copied()
                .filter(|a| spans.iter().any(|b| !a.overlaps(b)))
                .collect();
            let (pa, a) = first_max(firsts, sa, ea);
            let seconds: Vec<Span> = spans.iter().copied().filter(|b| !a.overlaps(b)).collect();
            let (pb, b) = first_max(seconds, sb, eb);
            (pa * pb, a, b)
        };
        let (pa, a1, a2) = pass(s1, e1, s2, e2);
        let (pb, b2, b1) = pass(s2, e2, s1, e1);
        if pb > pa {
            (b1, b2)
        } else {
            (a1, a2)
        }
    }

    fn normalized(raw: Vec<f64>) -> Vec<f64> {
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    }

    fn arb_quad() -> impl Strategy<Value = [Vec<f64>; 4]> {
        (2usize..=6).prop_flat_map(|n| {
            let d = || proptest::collection::vec(0.001f64..1.0, n).prop_map(normalized);
            [d(), d(), d(), d()]
        })
    }

    #[test]
    fn forced_two_positions() {
        let (a, b) = select_spans(&one_hot(2, 0), &one_hot(2, 0), &one_hot(2, 1), &one_hot(2, 1)).unwrap();
        assert_eq!((a, b), (Span::new(0, 0), Span::new(1, 1)));
    }

    #[test]
    fn table_fixture_one_hot() {
        let n = 38;
        let (a, b) = select_spans(&one_hot(n, 9), &one_hot(n, 9), &one_hot(n, 4), &one_hot(n, 4)).unwrap();
        assert_eq!((a, b), (Span::new(9, 9), Span::new(4, 4)));
    }

    #[test]
    fn short_sentences_have_no_pair() {
        assert!(matches!(select_spans(&[1.0], &[1.0], &[1.0], &[1.0]), Err(ModelError::NoDisjointSpans(1))));
    }

    #[test]
    fn passes_disagree_and_larger_product_wins() {
        // entity 1 greedily takes position 1, which is entity 2's only strong choice
        let s1 = [0.1, 0.5, 0.4];
        let s2 = [0.05, 0.9, 0.05];
        let (a, b) = select_spans(&s1, &s1, &s2, &s2).unwrap();
        assert_eq!((a, b), oracle(&s1, &s1, &s2, &s2));
        assert_eq!(b, Span::new(1, 1));
        assert_eq!(a, Span::new(2, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn two_pass_equals_oracle(q in arb_quad()) {
            let got = select_spans(&q[0], &q[1], &q[2], &q[3]).unwrap();
            prop_assert_eq!(got, oracle(&q[0], &q[1], &q[2], &q[3]));
            let (a, b) = got;
            prop_assert!(a.start <= a.end && b.start <= b.end && !a.overlaps(&b));
        }

        #[test]
        fn exhaustive_reaches_joint_maximum(q in arb_quad()) {
            let (a, b) = select_spans_exhaustive(&q[0], &q[1], &q[2], &q[3]).unwrap();
            prop_assert!(!a.overlaps(&b));
            let score = |a: Span, b: Span| q[0][a.start] * q[1][a.end] * (q[2][b.start] * q[3][b.end]);
            let n = q[0].len();
            let mut best = f64::NEG_INFINITY;
            for x in all_spans(n) {
                for y in all_spans(n) {
                    if !x.overlaps(&y) {
                        best = best.max(score(x, y));
                    }
                }
            }
            prop_assert_eq!(score(a, b), best);
            let (ta, tb) = select_spans(&q[0], &q[1], &q[2], &q[3]).unwrap();
            prop_assert!(score(ta, tb) <= best);
        }
    }

    fn scripted(relations: Vec<usize>, n: usize) -> impl FnMut(Option<usize>) -> Result<StepProbs, ModelError> {
        let mut it = relations.into_iter();
        move |_| {
            let r = it.next().unwrap_or(EOS_RELATION);
            Ok(StepProbs {
                relation: one_hot(3, r),
                start1: one_hot(n, 0),
                end1: one_hot(n, 0),
                start2: one_hot(n, n - 1),
                end2: one_hot(n, n - 1),
            })
        }
    }

    #[test]
    fn loop_stops_on_end_relation() {
        let (out, d) = greedy_tuples(10, select_spans, scripted(vec![EOS_RELATION], 3)).unwrap();
        assert!(out.is_empty() && !d.truncated);
    }

    #[test]
    fn loop_cap_truncates_and_dedups() {
        let (out, d) = greedy_tuples(10, select_spans, scripted(vec![1; 20], 3)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(d.duplicates, 9);
        assert!(d.truncated);
        let mut calls = Vec::new();
        let mut inner = scripted(vec![1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2], 4);
        let (out, d) = greedy_tuples(10, select_spans, |prev| {
            calls.push(prev);
            inner(prev)
        })
        .unwrap();
        assert_eq!(out.len(), 2);
        assert!(d.truncated);
        assert_eq!(calls.len(), 10);
        assert_eq!(calls[0], None);
        assert_eq!(calls[1], Some(1));
    }

    fn tiny() -> (ModelConfig, Example) {
        let cfg = ModelConfig {
            word_dim: 3,
            char_dim: 2,
            char_features: 2,
            hidden: 4,
            pointer_hidden: 2,
            relation_dim: 3,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let s = Sentence::from_text("ab cd ef");
        let t = RelationTuple::new(&s, Span::new(0, 0), Span::new(2, 2), "/r").unwrap();
        (cfg, Example::new(s, vec![t]))
    }

    fn build(cfg: &ModelConfig, ex: &Example) -> (Vocabulary, Encoder, PointerDecoder, ParameterStore<f64>) {
        let vocab = Vocabulary::build(std::slice::from_ref(ex), 1);
        let enc = Encoder::new(cfg, &vocab);
        let dec = PointerDecoder::new(cfg, &vocab);
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        enc.init(&mut store, 0.3, &vocab, None, &mut rng).unwrap();
        dec.init(&mut store, 0.3, &mut rng);
        (vocab, enc, dec, store)
    }

    #[test]
    fn shapes_and_zero_weight_symmetry() {
        let (cfg, ex) = tiny();
        let (vocab, enc, dec, mut store) = build(&cfg, &ex);
        assert_eq!(dec.tuple_dim, 8 * 2 + 3);
        assert_eq!(dec.relations, 2);
        for name in ["pdec.start1", "pdec.end1", "pdec.start2", "pdec.end2", "pdec.rel"] {
            for suffix in ["weight", "bias"] {
                store.get_mut(&format!("{name}.{suffix}")).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = enc.forward(&mut g, &vocab.encode(&ex.sentence), false, &mut rng).unwrap();
        let h = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let out = dec.point(&mut g, h, e.hidden).unwrap();
        for v in [out.log_start1, out.log_end1, out.log_start2, out.log_end2] {
            assert!(g.value(v).data().iter().all(|x| (x.exp() - 1.0 / 3.0).abs() < 1e-12));
        }
        assert!(g.value(out.log_relation).data().iter().all(|x| (x.exp() - 0.5).abs() < 1e-12));
        assert_eq!(g.shape(out.entity1), [8]);
        let y = dec.tuple_vector(&mut g, &out, 1).unwrap();
        assert_eq!(g.value(y).data()[16..], store.get("pdec.rel_emb").unwrap().row(1)[..]);
    }

    #[test]
    fn single_position_distributions_are_certain() {
        let (cfg, _) = tiny();
        let s = Sentence::from_text("ab");
        let ex = Example::new(s, vec![]);
        let (vocab, enc, dec, store) = build(&cfg, &ex);
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = enc.forward(&mut g, &vocab.encode(&ex.sentence), false, &mut rng).unwrap();
        let h = g.constant(Tensor::vector(vec![0.1; 4]));
        let out = dec.point(&mut g, h, e.hidden).unwrap();
        for v in [out.log_start1, out.log_end1, out.log_start2, out.log_end2] {
            assert_eq!(g.value(v).data(), &[0.0]);
        }
    }

    #[test]
    fn step_loss_formula() {
        // half of the mass on every gold index: 5 ln 2 for a one-step sequence's tuple step
        let mut g: Graph<'_, f64> = Graph::detached();
        let half = g.constant(Tensor::vector(vec![0.5f64.ln(), 0.5f64.ln()]));
        let terms: Vec<Var> = (0..5).map(|_| g.pick(half, 0).unwrap()).collect();
        let total = g.add_all(&terms).unwrap();
        let l = g.scale(total, -1.0);
        assert!((g.value(l).item() - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn end_step_adds_only_the_relation_term() {
        let (cfg, ex) = tiny();
        let (vocab, enc, dec, mut store) = build(&cfg, &ex);
        // uniform everything: relation ln 2, positions ln 3
        for name in ["pdec.start1", "pdec.end1", "pdec.start2", "pdec.end2", "pdec.rel"] {
            for suffix in ["weight", "bias"] {
                store.get_mut(&format!("{name}.{suffix}")).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let target = encode_pointer_target(&ex.tuples, &vocab).unwrap();
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = enc.forward(&mut g, &vocab.encode(&ex.sentence), false, &mut rng).unwrap();
        let l = dec.ptr_loss(&mut g, &e, &target, false, &mut rng).unwrap();
        let expected = (2.0 * 2f64.ln() + 4.0 * 3f64.ln()) / 2.0;
        assert!((g.value(l).item() - expected).abs() < 1e-12);

        let empty = encode_pointer_target(&[], &vocab).unwrap();
        let l = dec.ptr_loss(&mut g, &e, &empty, false, &mut rng).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-12);

        let mut bad = target.clone();
        bad.steps[0].e2 = Span::new(3, 3);
        assert!(matches!(dec.ptr_loss(&mut g, &e, &bad, false, &mut rng), Err(ModelError::GoldSpanOutOfRange { .. })));
    }

    #[test]
    fn loss_passes_finite_differences() {
        for variant in [crate::PointerQuery::DecHid, crate::PointerQuery::TupPrev, crate::PointerQuery::Combo] {
            let (mut cfg, ex) = tiny();
            cfg.ptr_attention = variant;
            let (vocab, enc, dec, store) = build(&cfg, &ex);
            let sent = vocab.encode(&ex.sentence);
            let target = encode_pointer_target(&ex.tuples, &vocab).unwrap();
            let err = finite_diff_check(&store, 1e-6, |g| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let e = enc.forward(g, &sent, false, &mut rng).map_err(|_| NdError::EmptySupport)?;
                dec.ptr_loss(g, &e, &target, false, &mut rng).map_err(|_| NdError::EmptySupport)
            })
            .unwrap();
            assert!(err < 1e-5, "{variant:?}: {err}");
        }
    }

    #[test]
    fn overfit_single_sentence() {
        let (_, ex) = tiny();
        let cfg = ModelConfig {
            word_dim: 8,
            char_dim: 4,
            char_features: 4,
            hidden: 16,
            pointer_hidden: 8,
            relation_dim: 8,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let (vocab, enc, dec, store) = build(&cfg, &ex);
        let mut store = store.cast::<f32>();
        let sent = vocab.encode(&ex.sentence);
        let target = encode_pointer_target(&ex.tuples, &vocab).unwrap();
        let mut adam = crate::ndcore::AdamState::new(0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let grads = {
                let mut g = Graph::new(&store);
                let e = enc.forward(&mut g, &sent, true, &mut rng).unwrap();
                let l = dec.ptr_loss(&mut g, &e, &target, true, &mut rng).unwrap();
                g.backward(l).unwrap()
            };
            adam.step(&mut store, &grads).unwrap();
        }
        let (out, diag) = dec
            .generate(&store, |g| enc.forward(g, &sent, false, &mut ChaCha8Rng::seed_from_u64(0)))
            .unwrap();
        let got: Vec<_> = out.iter().map(|t| (t.e1, t.e2, t.relation)).collect();
        let want: Vec<_> = target.steps.iter().map(|s| (s.e1, s.e2, s.relation)).collect();
        assert_eq!(got, want);
        assert!(!diag.truncated);
    }
}
