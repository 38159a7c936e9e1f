//! Source-context mechanisms for both decoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ndcore::{Graph, Linear, NdError, ParameterStore, Real, Var};
use crate::ModelError;

/// Word-decoder context mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Avg,
    Ngram,
    Single,
}

impl std::str::FromStr for AttentionKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "avg" => Ok(AttentionKind::Avg),
            "ngram" => Ok(AttentionKind::Ngram),
            "single" => Ok(AttentionKind::Single),
            _ => Err(ModelError::Config(format!("unknown attention variant {s:?}"))),
        }
    }
}

/// Query source of the pointer decoder's attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerQuery {
    /// Previous decoder hidden state.
    DecHid,
    /// Sum of previously emitted tuple vectors.
    TupPrev,
    /// Both contexts, concatenated and projected.
    Combo,
}

impl std::str::FromStr for PointerQuery {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dec_hid" => Ok(PointerQuery::DecHid),
            "tup_prev" => Ok(PointerQuery::TupPrev),
            "combo" => Ok(PointerQuery::Combo),
            _ => Err(ModelError::Config(format!("unknown pointer attention variant {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub context: Var,
    /// Distribution over source positions; absent for averaging.
    pub weights: Option<Var>,
}

/// Mean of the encoder hidden rows.
pub fn attend_avg<T: Real>(g: &mut Graph<'_, T>, hidden: Var) -> Result<AttentionOutput, ModelError> {
    Ok(AttentionOutput { context: g.mean_rows(hidden)?, weights: None })
}

/// Additive attention `v · tanh(W_q q + b_q + W_u h_i)`.
#[derive(Clone, Debug)]
pub struct AdditiveAttention {
    pub keys: Linear,
    pub query: Linear,
    pub score: String,
    pub width: usize,
}

impl AdditiveAttention {
    pub fn new(prefix: &str, key_dim: usize, query_dim: usize, width: usize) -> Self {
        Self {
            keys: Linear::new(&format!("{prefix}.w_u"), key_dim, width, false),
            query: Linear::new(&format!("{prefix}.w_q"), query_dim, width, true),
            score: format!("{prefix}.v_a"),
            width,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        self.keys.init(store, range, rng);
        self.query.init(store, range, rng);
        store.init_uniform(&self.score, &[self.width], range, rng);
    }

    /// `W_u h_i` for every row; reusable across decoder steps.
    pub fn project_keys<T: Real>(&self, g: &mut Graph<'_, T>, hidden: Var) -> Result<Var, NdError> {
        self.keys.forward_rows(g, hidden)
    }

    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        hidden: Var,
        keys: Var,
        query: Var,
    ) -> Result<AttentionOutput, ModelError> {
        let q = self.query.forward(g, query)?;
        let pre = g.add_rows(keys, q)?;
        let act = g.tanh(pre);
        let v = g.param(&self.score)?;
        let scores = g.matvec(act, v)?;
        let alpha = g.softmax(scores, None)?;
        let context = g.vecmat(alpha, hidden)?;
        Ok(AttentionOutput { context, weights: Some(alpha) })
    }
}

/// Attention over average-pooled token n-grams, queried by the last
/// encoder state.
#[derive(Clone, Debug)]
pub struct NgramAttention {
    /// `V^g`, `[d_h, d_tok]` per gram size.
    pub bilinear: Vec<String>,
    /// `W^g`, `d_tok -> d_h` per gram size.
    pub mix: Vec<Linear>,
    /// `[h_n ∥ Σ_g W^g c^g] -> d_h`
    pub project: Linear,
    pub hidden: usize,
    pub token_dim: usize,
}

/// Context plus the per-gram distributions it was built from.
#[derive(Clone, Debug)]
pub struct NgramOutput {
    pub output: AttentionOutput,
    /// `None` where the sentence is shorter than the gram size.
    pub gram_weights: Vec<Option<Var>>,
}

impl NgramAttention {
    pub fn new(prefix: &str, hidden: usize, token_dim: usize, max_gram: usize) -> Self {
        Self {
            bilinear: (1..=max_gram).map(|g| format!("{prefix}.v{g}")).collect(),
            mix: (1..=max_gram)
                .map(|g| Linear::new(&format!("{prefix}.w{g}"), token_dim, hidden, false))
                .collect(),
            project: Linear::new(&format!("{prefix}.proj"), 2 * hidden, hidden, true),
            hidden,
            token_dim,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        for (v, w) in self.bilinear.iter().zip(&self.mix) {
            store.init_uniform(v, &[self.hidden, self.token_dim], range, rng);
            w.init(store, range, rng);
        }
        self.project.init(store, range, rng);
    }

    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        tokens: Var,
        last: Var,
    ) -> Result<NgramOutput, ModelError> {
        let n = g.shape(tokens)[0];
        let mut mixed = Vec::new();
        let mut gram_weights = Vec::new();
        for (k, (v_name, w)) in self.bilinear.iter().zip(&self.mix).enumerate() {
            let size = k + 1;
            if size > n {
                gram_weights.push(None);
                continue;
            }
            let grams = if size == 1 { tokens } else { g.window_mean(tokens, size)? };
            let v = g.param(v_name)?;
            let probe = g.vecmat(last, v)?;
            let scores = g.matvec(grams, probe)?;
            let alpha = g.softmax(scores, None)?;
            let ctx = g.vecmat(alpha, grams)?;
            mixed.push(w.forward(g, ctx)?);
            gram_weights.push(Some(alpha));
        }
        let sum = g.add_all(&mixed)?;
        let joined = g.concat(&[last, sum])?;
        let context = self.project.forward(g, joined)?;
        let weights = gram_weights[0];
        Ok(NgramOutput { output: AttentionOutput { context, weights }, gram_weights })
    }
}

/// Pointer-decoder attention in one of the three query variants.
#[derive(Clone, Debug)]
pub struct PointerAttention {
    pub variant: PointerQuery,
    pub by_hidden: Option<AdditiveAttention>,
    pub by_tuples: Option<AdditiveAttention>,
    pub combine: Option<Linear>,
}

/// Per-sentence key projections for [`PointerAttention`].
#[derive(Clone, Copy, Debug)]
pub struct PointerKeys {
    by_hidden: Option<Var>,
    by_tuples: Option<Var>,
}

impl PointerAttention {
    pub fn new(prefix: &str, variant: PointerQuery, hidden: usize, tuple_dim: usize) -> Self {
        let dec = || AdditiveAttention::new(&format!("{prefix}.dec"), hidden, hidden, hidden);
        let tup = || AdditiveAttention::new(&format!("{prefix}.tup"), hidden, tuple_dim, hidden);
        match variant {
            PointerQuery::DecHid => Self { variant, by_hidden: Some(dec()), by_tuples: None, combine: None },
            PointerQuery::TupPrev => Self { variant, by_hidden: None, by_tuples: Some(tup()), combine: None },
            PointerQuery::Combo => Self {
                variant,
                by_hidden: Some(dec()),
                by_tuples: Some(tup()),
                combine: Some(Linear::new(&format!("{prefix}.combo"), 2 * hidden, hidden, true)),
            },
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        if let Some(a) = &self.by_hidden {
            a.init(store, range, rng);
        }
        if let Some(a) = &self.by_tuples {
            a.init(store, range, rng);
        }
        if let Some(l) = &self.combine {
            l.init(store, range, rng);
        }
    }

    pub fn project_keys<T: Real>(&self, g: &mut Graph<'_, T>, hidden: Var) -> Result<PointerKeys, NdError> {
        Ok(PointerKeys {
            by_hidden: self.by_hidden.as_ref().map(|a| a.project_keys(g, hidden)).transpose()?,
            by_tuples: self.by_tuples.as_ref().map(|a| a.project_keys(g, hidden)).transpose()?,
        })
    }

    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        hidden: Var,
        keys: &PointerKeys,
        prev_hidden: Var,
        prev_tuples: Var,
    ) -> Result<AttentionOutput, ModelError> {
        let dec = match (&self.by_hidden, keys.by_hidden) {
            (Some(a), Some(k)) => Some(a.attend(g, hidden, k, prev_hidden)?),
            _ => None,
        };
        let tup = match (&self.by_tuples, keys.by_tuples) {
            (Some(a), Some(k)) => Some(a.attend(g, hidden, k, prev_tuples)?),
            _ => None,
        };
        match (dec, tup, &self.combine) {
            (Some(d), None, _) => Ok(d),
            (None, Some(t), _) => Ok(t),
            (Some(d), Some(t), Some(proj)) => {
                let joined = g.concat(&[d.context, t.context])?;
                let context = proj.forward(g, joined)?;
                Ok(AttentionOutput { context, weights: d.weights })
            }
            _ => Err(ModelError::Config("pointer attention keys do not match its variant".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{finite_diff_check, Tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        Tensor::uniform(&[rows, cols], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn softmax(xs: &[f64]) -> Vec<f64> {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    fn matvec(w: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
        (0..w.rows()).map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn avg_matches_direct_mean() {
        let h = rand_matrix(4, 6, 3);
        let mut g = Graph::detached();
        let x = g.constant(h.clone());
        let out = attend_avg(&mut g, x).unwrap();
        assert!(out.weights.is_none());
        for c in 0..6 {
            let mean: f64 = (0..4).map(|r| h.row(r)[c]).sum::<f64>() / 4.0;
            assert!((g.value(out.context).data()[c] - mean).abs() < 1e-7);
        }
        let same = Tensor::matrix(2, 2, vec![1.5, -2.0, 1.5, -2.0]).unwrap();
        let x = g.constant(same);
        let out = attend_avg(&mut g, x).unwrap();
        assert_eq!(g.value(out.context).data(), &[1.5, -2.0]);
    }

    fn single_setup(d_h: usize, q: usize, seed: u64) -> (AdditiveAttention, ParameterStore<f64>) {
        let a = AdditiveAttention::new("att", d_h, q, 5);
        let mut store = ParameterStore::new();
        a.init(&mut store, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        (a, store)
    }

    #[test]
    fn single_matches_formula() {
        let (a, store) = single_setup(3, 2, 11);
        let h = rand_matrix(4, 3, 5);
        let qv = vec![0.3, -0.7];
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let q = g.constant(Tensor::vector(qv.clone()));
        let keys = a.project_keys(&mut g, hv).unwrap();
        let out = a.attend(&mut g, hv, keys, q).unwrap();

        let wu = store.get("att.w_u.weight").unwrap();
        let wq = store.get("att.w_q.weight").unwrap();
        let bq = store.get("att.w_q.bias").unwrap().data();
        let va = store.get("att.v_a").unwrap().data();
        let qproj: Vec<f64> = matvec(wq, &qv).iter().zip(bq).map(|(a, b)| a + b).collect();
        let scores: Vec<f64> = (0..4)
            .map(|i| {
                let u = matvec(wu, h.row(i));
                (0..5).map(|k| va[k] * (qproj[k] + u[k]).tanh()).sum()
            })
            .collect();
        let alpha = softmax(&scores);
        let got_alpha = g.value(out.weights.unwrap()).data();
        for i in 0..4 {
            assert!((got_alpha[i] - alpha[i]).abs() < 1e-6);
        }
        for c in 0..3 {
            let e: f64 = (0..4).map(|i| alpha[i] * h.row(i)[c]).sum();
            assert!((g.value(out.context).data()[c] - e).abs() < 1e-6);
        }
    }

    #[test]
    fn single_zero_score_vector_is_uniform() {
        let (a, mut store) = single_setup(3, 3, 2);
        store.get_mut("att.v_a").unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        let h = rand_matrix(5, 3, 9);
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let q = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let keys = a.project_keys(&mut g, hv).unwrap();
        let out = a.attend(&mut g, hv, keys, q).unwrap();
        for &w in g.value(out.weights.unwrap()).data() {
            assert!((w - 0.2).abs() < 1e-12);
        }
        let mut g2 = Graph::detached();
        let hv2 = g2.constant(h);
        let mean = attend_avg(&mut g2, hv2).unwrap();
        for (a, b) in g.value(out.context).data().iter().zip(g2.value(mean.context).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_one_position_is_certain() {
        let (a, store) = single_setup(2, 2, 4);
        let mut g = Graph::new(&store);
        let hv = g.constant(Tensor::matrix(1, 2, vec![0.4, -0.1]).unwrap());
        let q = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let keys = a.project_keys(&mut g, hv).unwrap();
        let out = a.attend(&mut g, hv, keys, q).unwrap();
        assert_eq!(g.value(out.weights.unwrap()).data(), &[1.0]);
        assert_eq!(g.value(out.context).data(), &[0.4, -0.1]);
    }

    proptest! {
        #[test]
        fn single_is_permutation_equivariant(seed in 0u64..500, shift in 1usize..4) {
            let (a, store) = single_setup(3, 2, seed);
            let n = 4;
            let h = rand_matrix(n, 3, seed + 1);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let mut permuted = Vec::new();
            for &p in &perm {
                permuted.extend_from_slice(h.row(p));
            }
            let hp = Tensor::matrix(n, 3, permuted).unwrap();
            let run = |m: Tensor<f64>| {
                let mut g = Graph::new(&store);
                let hv = g.constant(m);
                let q = g.constant(Tensor::vector(vec![0.2, -0.4]));
                let keys = a.project_keys(&mut g, hv).unwrap();
                let out = a.attend(&mut g, hv, keys, q).unwrap();
                (g.value(out.weights.unwrap()).data().to_vec(), g.value(out.context).data().to_vec())
            };
            let (wa, ca) = run(h);
            let (wb, cb) = run(hp);
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((wb[i] - wa[p]).abs() < 1e-12);
            }
            for (x, y) in ca.iter().zip(&cb) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((wa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn ngram_setup(seed: u64) -> (NgramAttention, ParameterStore<f64>) {
        let a = NgramAttention::new("ng", 4, 3, 3);
        let mut store = ParameterStore::new();
        a.init(&mut store, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        (a, store)
    }

    #[test]
    fn ngram_matches_formula() {
        let (a, store) = ngram_setup(8);
        let n = 4;
        let toks = rand_matrix(n, 3, 1);
        let last: Vec<f64> = vec![0.1, -0.2, 0.3, 0.05];
        let mut g = Graph::new(&store);
        let tv = g.constant(toks.clone());
        let lv = g.constant(Tensor::vector(last.clone()));
        let out = a.attend(&mut g, tv, lv).unwrap();

        let mut sum = vec![0.0; 4];
        for size in 1..=3 {
            let grams: Vec<Vec<f64>> = (0..=n - size)
                .map(|s| (0..3).map(|c| (s..s + size).map(|r| toks.row(r)[c]).sum::<f64>() / size as f64).collect())
                .collect();
            let v = store.get(&format!("ng.v{size}")).unwrap();
            let scores: Vec<f64> = grams
                .iter()
                .map(|w| (0..4).map(|r| last[r] * v.row(r).iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum())
                .collect();
            let alpha = softmax(&scores);
            let got = g.value(out.gram_weights[size - 1].unwrap()).data();
            for (x, y) in got.iter().zip(&alpha) {
                assert!((x - y).abs() < 1e-6);
            }
            let ctx: Vec<f64> = (0..3).map(|c| grams.iter().zip(&alpha).map(|(w, p)| p * w[c]).sum()).collect();
            let mixed = matvec(store.get(&format!("ng.w{size}.weight")).unwrap(), &ctx);
            for r in 0..4 {
                sum[r] += mixed[r];
            }
        }
        let joined: Vec<f64> = last.iter().chain(&sum).copied().collect();
        let b = store.get("ng.proj.bias").unwrap().data();
        let e: Vec<f64> = matvec(store.get("ng.proj.weight").unwrap(), &joined).iter().zip(b).map(|(a, b)| a + b).collect();
        for (x, y) in g.value(out.output.context).data().iter().zip(&e) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn ngram_short_sentence_and_zero_bilinear() {
        let (a, mut store) = ngram_setup(3);
        let mut g = Graph::new(&store);
        let tv = g.constant(rand_matrix(1, 3, 2));
        let lv = g.constant(Tensor::vector(vec![0.5; 4]));
        let out = a.attend(&mut g, tv, lv).unwrap();
        assert_eq!(g.value(out.gram_weights[0].unwrap()).data(), &[1.0]);
        assert!(out.gram_weights[1].is_none() && out.gram_weights[2].is_none());

        for k in 1..=3 {
            store.get_mut(&format!("ng.v{k}")).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new(&store);
        let tv = g.constant(rand_matrix(5, 3, 2));
        let lv = g.constant(Tensor::vector(vec![0.5; 4]));
        let out = a.attend(&mut g, tv, lv).unwrap();
        for (k, w) in out.gram_weights.iter().enumerate() {
            let w = g.value(w.unwrap()).data();
            let expect = 1.0 / (5 - k) as f64;
            assert!(w.iter().all(|p| (p - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn pointer_variants() {
        let (h, t) = (4, 6);
        let mk = |variant| {
            let a = PointerAttention::new("pa", variant, h, t);
            let mut store = ParameterStore::<f64>::new();
            a.init(&mut store, 0.5, &mut ChaCha8Rng::seed_from_u64(13));
            (a, store)
        };
        let enc = rand_matrix(3, h, 7);
        let hd = Tensor::vector(vec![0.3, -0.1, 0.2, 0.4]);
        let yp = Tensor::vector(vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.7]);
        let run = |a: &PointerAttention, store: &ParameterStore<f64>, yp: &Tensor<f64>| {
            let mut g = Graph::new(store);
            let hv = g.constant(enc.clone());
            let keys = a.project_keys(&mut g, hv).unwrap();
            let d = g.constant(hd.clone());
            let y = g.constant(yp.clone());
            let out = a.attend(&mut g, hv, &keys, d, y).unwrap();
            g.value(out.context).data().to_vec()
        };

        // dec_hid is plain additive attention with the decoder state as query
        let (a, store) = mk(PointerQuery::DecHid);
        let direct = {
            let inner = a.by_hidden.as_ref().unwrap();
            let mut g = Graph::new(&store);
            let hv = g.constant(enc.clone());
            let k = inner.project_keys(&mut g, hv).unwrap();
            let d = g.constant(hd.clone());
            let o = inner.attend(&mut g, hv, k, d).unwrap();
            g.value(o.context).data().to_vec()
        };
        assert_eq!(run(&a, &store, &yp), direct);

        // zero tuple sum: the query contributes only its bias
        let (a, store) = mk(PointerQuery::TupPrev);
        let zero = Tensor::vector(vec![0.0; t]);
        let got = run(&a, &store, &zero);
        let wu = store.get("pa.tup.w_u.weight").unwrap();
        let bq = store.get("pa.tup.w_q.bias").unwrap().data();
        let va = store.get("pa.tup.v_a").unwrap().data();
        let scores: Vec<f64> = (0..3)
            .map(|i| matvec(wu, enc.row(i)).iter().zip(bq).zip(va).map(|((u, b), v)| v * (u + b).tanh()).sum())
            .collect();
        let alpha = softmax(&scores);
        for c in 0..h {
            let e: f64 = (0..3).map(|i| alpha[i] * enc.row(i)[c]).sum();
            assert!((got[c] - e).abs() < 1e-9);
        }

        // combo projects the concatenation of the two separate contexts
        let (a, store) = mk(PointerQuery::Combo);
        let got = run(&a, &store, &yp);
        let mut g = Graph::new(&store);
        let hv = g.constant(enc.clone());
        let dq = g.constant(hd.clone());
        let yq = g.constant(yp.clone());
        let by_h = a.by_hidden.as_ref().unwrap();
        let by_t = a.by_tuples.as_ref().unwrap();
        let kd = by_h.project_keys(&mut g, hv).unwrap();
        let kt = by_t.project_keys(&mut g, hv).unwrap();
        let cd = by_h.attend(&mut g, hv, kd, dq).unwrap().context;
        let ct = by_t.attend(&mut g, hv, kt, yq).unwrap().context;
        let joined: Vec<f64> = g.value(cd).data().iter().chain(g.value(ct).data()).copied().collect();
        let b = store.get("pa.combo.bias").unwrap().data();
        let e: Vec<f64> = matvec(store.get("pa.combo.weight").unwrap(), &joined).iter().zip(b).map(|(a, b)| a + b).collect();
        for (x, y) in got.iter().zip(&e) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_flow_through_every_variant() {
        let (s, store_s) = single_setup(3, 3, 21);
        let h = rand_matrix(4, 3, 22);
        let err = finite_diff_check(&store_s, 1e-6, |g| {
            let hv = g.constant(h.clone());
            let q = g.constant(Tensor::vector(vec![0.1, 0.2, -0.3]));
            let k = s.project_keys(g, hv)?;
            let o = s.attend(g, hv, k, q).map_err(|_| NdError::EmptySupport)?;
            Ok(g.sum(o.context))
        })
        .unwrap();
        assert!(err < 1e-6, "single {err}");

        let (ng, store_n) = ngram_setup(5);
        let toks = rand_matrix(4, 3, 9);
        let err = finite_diff_check(&store_n, 1e-6, |g| {
            let tv = g.constant(toks.clone());
            let lv = g.constant(Tensor::vector(vec![0.3, -0.2, 0.1, 0.4]));
            let o = ng.attend(g, tv, lv).map_err(|_| NdError::EmptySupport)?;
            let sq = g.mul(o.output.context, o.output.context)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(err < 1e-6, "ngram {err}");

        for variant in [PointerQuery::DecHid, PointerQuery::TupPrev, PointerQuery::Combo] {
            let a = PointerAttention::new("pa", variant, 3, 5);
            let mut store = ParameterStore::<f64>::new();
            a.init(&mut store, 0.5, &mut ChaCha8Rng::seed_from_u64(1));
            let err = finite_diff_check(&store, 1e-6, |g| {
                let hv = g.constant(h.clone());
                let keys = a.project_keys(g, hv)?;
                let d = g.constant(Tensor::vector(vec![0.2, 0.0, -0.1]));
                let y = g.constant(Tensor::vector(vec![0.1, 0.5, -0.5, 0.3, 0.2]));
                let o = a.attend(g, hv, &keys, d, y).map_err(|_| NdError::EmptySupport)?;
                let sq = g.mul(o.context, o.context)?;
                Ok(g.sum(sq))
            })
            .unwrap();
            assert!(err < 1e-6, "{variant:?} {err}");
        }
    }
}
