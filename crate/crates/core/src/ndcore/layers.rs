use rand::Rng;

use super::{Graph, NdError, ParameterStore, Real, Tensor, Var};

/// Affine map `W x + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(prefix: &str, input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: bias.then(|| format!("{prefix}.bias")),
            input,
            output,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        store.init_uniform(&self.weight, &[self.output, self.input], range, rng);
        if let Some(b) = &self.bias {
            store.init_uniform(b, &[self.output], range, rng);
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var, NdError> {
        let w = g.param(&self.weight)?;
        let y = g.matvec(w, x)?;
        match &self.bias {
            Some(b) => {
                let b = g.param(b)?;
                g.add(y, b)
            }
            None => Ok(y),
        }
    }

    /// Applies the map to every row of `[n, in]`.
    pub fn forward_rows<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var, NdError> {
        let w = g.param(&self.weight)?;
        let y = g.matmul_t(x, w)?;
        match &self.bias {
            Some(b) => {
                let b = g.param(b)?;
                g.add_rows(y, b)
            }
            None => Ok(y),
        }
    }
}

/// LSTM cell with gates stacked as input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_ih: String,
    pub w_hh: String,
    pub bias: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            bias: format!("{prefix}.bias"),
            input,
            hidden,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        let h4 = 4 * self.hidden;
        store.init_uniform(&self.w_ih, &[h4, self.input], range, rng);
        store.init_uniform(&self.w_hh, &[h4, self.hidden], range, rng);
        store.init_uniform(&self.bias, &[h4], range, rng);
    }

    pub fn zero_state<T: Real>(&self, g: &mut Graph<'_, T>) -> (Var, Var) {
        let h = g.constant(Tensor::zeros(&[self.hidden]));
        let c = g.constant(Tensor::zeros(&[self.hidden]));
        (h, c)
    }

    /// One step from the raw input `x`.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var), NdError> {
        if g.shape(x) != [self.input] {
            return Err(NdError::Shape(format!(
                "lstm input {:?}, cell expects [{}]",
                g.shape(x),
                self.input
            )));
        }
        let w = g.param(&self.w_ih)?;
        let projected = g.matvec(w, x)?;
        self.step_projected(g, projected, h_prev, c_prev)
    }

    /// One step given `W_ih x` already computed.
    pub fn step_projected<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        projected: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var), NdError> {
        let d = self.hidden;
        if g.shape(h_prev) != [d] || g.shape(c_prev) != [d] {
            return Err(NdError::Shape(format!(
                "lstm state {:?}/{:?}, cell expects [{d}]",
                g.shape(h_prev),
                g.shape(c_prev)
            )));
        }
        let u = g.param(&self.w_hh)?;
        let b = g.param(&self.bias)?;
        let rec = g.matvec(u, h_prev)?;
        let z = g.add(projected, rec)?;
        let z = g.add(z, b)?;
        let zi = g.slice(z, 0, d)?;
        let zf = g.slice(z, d, d)?;
        let zg = g.slice(z, 2 * d, d)?;
        let zo = g.slice(z, 3 * d, d)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }
}

/// Bidirectional LSTM; row `i` of the output is `fwd(i) ∥ bwd(i)`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new(prefix: &str, input: usize, hidden_per_direction: usize) -> Self {
        Self {
            forward: LstmCell::new(&format!("{prefix}.fwd"), input, hidden_per_direction),
            backward: LstmCell::new(&format!("{prefix}.bwd"), input, hidden_per_direction),
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        self.forward.init(store, range, rng);
        self.backward.init(store, range, rng);
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, seq: Var) -> Result<Var, NdError> {
        let shape = g.shape(seq).to_vec();
        if shape.len() != 2 {
            return Err(NdError::Shape(format!("bilstm input {shape:?}")));
        }
        let n = shape[0];
        if n == 0 {
            return Err(NdError::EmptySequence);
        }
        if shape[1] != self.forward.input {
            return Err(NdError::Shape(format!(
                "bilstm input width {}, expected {}",
                shape[1], self.forward.input
            )));
        }
        let fwd = self.run(g, &self.forward, seq, (0..n).collect())?;
        let mut bwd = self.run(g, &self.backward, seq, (0..n).rev().collect())?;
        bwd.reverse();
        let f = g.stack_rows(&fwd)?;
        let b = g.stack_rows(&bwd)?;
        g.concat_cols(&[f, b])
    }

    fn run<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        cell: &LstmCell,
        seq: Var,
        order: Vec<usize>,
    ) -> Result<Vec<Var>, NdError> {
        let w = g.param(&cell.w_ih)?;
        let projected = g.matmul_t(seq, w)?;
        let (mut h, mut c) = cell.zero_state(g);
        let mut out = Vec::with_capacity(order.len());
        for t in order {
            let p = g.row(projected, t)?;
            (h, c) = cell.step_projected(g, p, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

pub const PAD_CHAR: usize = 0;
pub const UNKNOWN_CHAR: usize = 1;

/// Character convolution with max-pooling over positions.
///
/// Words are truncated or right-padded with [`PAD_CHAR`] to `max_len`
/// characters; the convolution zero-pads so every position is a window.
#[derive(Clone, Debug)]
pub struct CharCnn {
    pub embedding: String,
    pub conv: Linear,
    pub alphabet: usize,
    pub char_dim: usize,
    pub features: usize,
    pub width: usize,
    pub max_len: usize,
}

impl CharCnn {
    pub fn new(
        prefix: &str,
        alphabet: usize,
        char_dim: usize,
        features: usize,
        width: usize,
        max_len: usize,
    ) -> Self {
        Self {
            embedding: format!("{prefix}.char_emb"),
            conv: Linear::new(&format!("{prefix}.conv"), width * char_dim, features, true),
            alphabet,
            char_dim,
            features,
            width,
            max_len,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, range: f64, rng: &mut R) {
        store.init_uniform(&self.embedding, &[self.alphabet, self.char_dim], range, rng);
        self.conv.init(store, range, rng);
    }

    /// Fixed-length character ids for one word.
    pub fn fit(&self, chars: &[usize]) -> Vec<usize> {
        let mut ids: Vec<usize> = chars.iter().copied().take(self.max_len).collect();
        ids.resize(self.max_len, PAD_CHAR);
        ids
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, chars: &[usize]) -> Result<Var, NdError> {
        let table = g.param(&self.embedding)?;
        let ids = self.fit(chars);
        let emb = g.gather(table, &ids)?;
        let windows = g.unfold(emb, self.width)?;
        let conv = self.conv.forward_rows(g, windows)?;
        g.max_rows(conv)
    }

    /// Feature rows `[n, features]` for a sequence of words.
    pub fn forward_words<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        words: &[Vec<usize>],
    ) -> Result<Var, NdError> {
        let rows = words
            .iter()
            .map(|w| self.forward(g, w))
            .collect::<Result<Vec<_>, _>>()?;
        g.stack_rows(&rows)
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)`.
/// Identity outside training.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    g: &mut Graph<'_, T>,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var, NdError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NdError::InvalidDropout(rate));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let n = g.value(x).numel();
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    let factors = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep_scale })
        .collect();
    g.mul_const(x, factors)
}
