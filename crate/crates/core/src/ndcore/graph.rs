//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value; `backward`
//! walks the tape in reverse and accumulates vector-Jacobian products.
//! Parameter leaves borrow their tensors from a [`ParameterStore`] so a
//! graph never copies the weights it reads.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::tensor::{argmax, axpy, dot};
use super::{Gradients, NdError, ParameterStore, Real, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `[m,k] · [k] -> [m]`
    MatVec { w: Var, x: Var },
    /// `[n,k] · [m,k]^T -> [n,m]`
    MatMulT { x: Var, w: Var },
    /// `[n] · [n,d] -> [d]`
    VecMat { v: Var, m: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[n,m] + [m]` broadcast over rows.
    AddRows { x: Var, b: Var },
    Scale { x: Var, factor: T },
    MulConst { x: Var, factors: Vec<T> },
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Row { x: Var, index: usize },
    Slice { x: Var, start: usize },
    Gather { table: Var, ids: Vec<usize> },
    MeanRows(Var),
    MaxRows { x: Var, winners: Vec<usize> },
    Unfold { x: Var, width: usize },
    WindowMean { x: Var, size: usize },
    Softmax { x: Var, keep: Option<Vec<bool>> },
    LogSoftmax { x: Var, keep: Option<Vec<bool>> },
    Pick { x: Var, index: usize },
    Sum(Var),
    Reshape(Var),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation over one forward pass.
pub struct Graph<'a, T: Real> {
    store: Option<&'a ParameterStore<T>>,
    nodes: Vec<Node<'a, T>>,
    params: BTreeMap<String, Var>,
}

fn shape_err(msg: String) -> NdError {
    NdError::Shape(msg)
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new(store: &'a ParameterStore<T>) -> Self {
        Self { store: Some(store), nodes: Vec::new(), params: BTreeMap::new() }
    }

    /// A graph with no parameter store; only constants and variables.
    pub fn detached() -> Self {
        Self { store: None, nodes: Vec::new(), params: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf bound to a named store tensor. Repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var, NdError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let store = self
            .store
            .ok_or_else(|| NdError::UnknownParameter(name.to_string()))?;
        let tensor = store.require(name)?;
        let v = self.push_node(Cow::Borrowed(tensor), Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_node(Cow::Owned(t), Op::Leaf, false)
    }

    /// Leaf that receives a gradient but is not a stored parameter.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push_node(Cow::Owned(t), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push_node(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(Cow::Owned(value), op, requires_grad)
    }

    fn expect_rank(&self, v: Var, rank: usize, what: &str) -> Result<(), NdError> {
        let s = self.shape(v);
        if s.len() != rank {
            return Err(shape_err(format!("{what}: expected rank {rank}, got shape {s:?}")));
        }
        Ok(())
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NdError> {
        self.expect_rank(w, 2, "matvec weight")?;
        self.expect_rank(x, 1, "matvec input")?;
        let (m, k) = (self.shape(w)[0], self.shape(w)[1]);
        if self.shape(x)[0] != k {
            return Err(shape_err(format!(
                "matvec: weight {:?} vs input {:?}",
                self.shape(w),
                self.shape(x)
            )));
        }
        let wv = self.value(w).data();
        let xv = self.value(x).data();
        let out: Vec<T> = (0..m).map(|i| dot(&wv[i * k..(i + 1) * k], xv)).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec { w, x }, &[w, x]))
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "matmul_t input")?;
        self.expect_rank(w, 2, "matmul_t weight")?;
        let (n, k) = (self.shape(x)[0], self.shape(x)[1]);
        let m = self.shape(w)[0];
        if self.shape(w)[1] != k {
            return Err(shape_err(format!(
                "matmul_t: input {:?} vs weight {:?}",
                self.shape(x),
                self.shape(w)
            )));
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            let xr = &xv[r * k..(r + 1) * k];
            for c in 0..m {
                out.push(dot(xr, &wv[c * k..(c + 1) * k]));
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(t, Op::MatMulT { x, w }, &[x, w]))
    }

    pub fn vecmat(&mut self, v: Var, m: Var) -> Result<Var, NdError> {
        self.expect_rank(v, 1, "vecmat weights")?;
        self.expect_rank(m, 2, "vecmat matrix")?;
        let (n, d) = (self.shape(m)[0], self.shape(m)[1]);
        if self.shape(v)[0] != n {
            return Err(shape_err(format!(
                "vecmat: weights {:?} vs matrix {:?}",
                self.shape(v),
                self.shape(m)
            )));
        }
        let vv = self.value(v).data();
        let mv = self.value(m).data();
        let mut out = vec![T::zero(); d];
        for i in 0..n {
            axpy(&mut out, vv[i], &mv[i * d..(i + 1) * d]);
        }
        Ok(self.push(Tensor::vector(out), Op::VecMat { v, m }, &[v, m]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), NdError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let av = self.value(a);
        let out: Vec<T> = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(av.shape().to_vec(), out).expect("shape preserved");
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn add_rows(&mut self, x: Var, b: Var) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "add_rows input")?;
        self.expect_rank(b, 1, "add_rows bias")?;
        let cols = self.shape(x)[1];
        if self.shape(b)[0] != cols {
            return Err(shape_err(format!(
                "add_rows: {:?} vs bias {:?}",
                self.shape(x),
                self.shape(b)
            )));
        }
        let bv = self.value(b).data();
        let xv = self.value(x);
        let out: Vec<T> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % cols])
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(t, Op::AddRows { x, b }, &[x, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::from_f64(factor);
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| v * f).collect();
        let t = Tensor::new(xv.shape().to_vec(), out).expect("shape preserved");
        self.push(t, Op::Scale { x, factor: f }, &[x])
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, x: Var, factors: Vec<T>) -> Result<Var, NdError> {
        let xv = self.value(x);
        if factors.len() != xv.numel() {
            return Err(shape_err(format!(
                "mul_const: {} factors for shape {:?}",
                factors.len(),
                xv.shape()
            )));
        }
        let out = xv.data().iter().zip(&factors).map(|(&a, &b)| a * b).collect();
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(t, Op::MulConst { x, factors }, &[x]))
    }

    fn map(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), out).expect("shape preserved");
        self.push(t, op, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), |v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), |v| v.tanh())
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NdError> {
        if parts.is_empty() {
            return Err(shape_err("concat: no inputs".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.expect_rank(p, 1, "concat part")?;
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), parts))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NdError> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols: no inputs".into()));
        }
        for &p in parts {
            self.expect_rank(p, 2, "concat_cols part")?;
        }
        let n = self.shape(parts[0])[0];
        if parts.iter().any(|&p| self.shape(p)[0] != n) {
            return Err(shape_err("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(vec![n, total], out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, NdError> {
        if rows.is_empty() {
            return Err(NdError::EmptySequence);
        }
        let d = self.shape(rows[0]).first().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            self.expect_rank(r, 1, "stack_rows part")?;
            if self.shape(r)[0] != d {
                return Err(shape_err("stack_rows: lengths differ".into()));
            }
            out.extend_from_slice(self.value(r).data());
        }
        let t = Tensor::new(vec![rows.len(), d], out)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec()), rows))
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "row")?;
        if index >= self.shape(x)[0] {
            return Err(shape_err(format!("row {index} of {:?}", self.shape(x))));
        }
        let out = self.value(x).row(index).to_vec();
        Ok(self.push(Tensor::vector(out), Op::Row { x, index }, &[x]))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NdError> {
        self.expect_rank(x, 1, "slice")?;
        if start + len > self.shape(x)[0] {
            return Err(shape_err(format!(
                "slice {start}..{} of {:?}",
                start + len,
                self.shape(x)
            )));
        }
        let out = self.value(x).data()[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(out), Op::Slice { x, start }, &[x]))
    }

    /// Embedding lookup: rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NdError> {
        self.expect_rank(table, 2, "gather table")?;
        let (v, d) = (self.shape(table)[0], self.shape(table)[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(shape_err(format!("gather id {bad} out of {v} rows")));
        }
        if ids.is_empty() {
            return Err(NdError::EmptySequence);
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(tv.row(i));
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(t, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "mean_rows")?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        if n == 0 {
            return Err(NdError::EmptySequence);
        }
        let xv = self.value(x);
        let mut out = vec![T::zero(); d];
        for r in 0..n {
            axpy(&mut out, T::one(), xv.row(r));
        }
        let inv = T::one() / T::from_f64(n as f64);
        out.iter_mut().for_each(|v| *v = *v * inv);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(x), &[x]))
    }

    /// Column-wise maximum over rows.
    pub fn max_rows(&mut self, x: Var) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "max_rows")?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        if n == 0 {
            return Err(NdError::EmptySequence);
        }
        let xv = self.value(x);
        let mut out = xv.row(0).to_vec();
        let mut winners = vec![0usize; d];
        for r in 1..n {
            for (c, &v) in xv.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    winners[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MaxRows { x, winners }, &[x]))
    }

    /// Sliding windows of `width` rows with zero same-padding:
    /// `[L,d] -> [L, width*d]`, row `p` holding rows `p-width/2 ..`.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "unfold")?;
        if width == 0 || width.is_multiple_of(2) {
            return Err(shape_err(format!("unfold width must be odd, got {width}")));
        }
        let (l, d) = (self.shape(x)[0], self.shape(x)[1]);
        let half = width / 2;
        let xv = self.value(x);
        let mut out = vec![T::zero(); l * width * d];
        for p in 0..l {
            for j in 0..width {
                let src = p + j;
                if src < half || src - half >= l {
                    continue;
                }
                let dst = p * width * d + j * d;
                out[dst..dst + d].copy_from_slice(xv.row(src - half));
            }
        }
        let t = Tensor::new(vec![l, width * d], out)?;
        Ok(self.push(t, Op::Unfold { x, width }, &[x]))
    }

    /// Means of every run of `size` consecutive rows: `[n,d] -> [n-size+1, d]`.
    pub fn window_mean(&mut self, x: Var, size: usize) -> Result<Var, NdError> {
        self.expect_rank(x, 2, "window_mean")?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        if size == 0 || size > n {
            return Err(shape_err(format!("window of {size} over {n} rows")));
        }
        let xv = self.value(x);
        let count = n - size + 1;
        let inv = T::one() / T::from_f64(size as f64);
        let mut out = vec![T::zero(); count * d];
        for i in 0..count {
            let dst = &mut out[i * d..(i + 1) * d];
            for j in 0..size {
                axpy(dst, inv, xv.row(i + j));
            }
        }
        let t = Tensor::new(vec![count, d], out)?;
        Ok(self.push(t, Op::WindowMean { x, size }, &[x]))
    }

    fn check_keep(&self, x: Var, keep: Option<&[bool]>) -> Result<(), NdError> {
        self.expect_rank(x, 1, "softmax")?;
        if let Some(k) = keep {
            if k.len() != self.shape(x)[0] {
                return Err(shape_err(format!(
                    "mask of {} for logits {:?}",
                    k.len(),
                    self.shape(x)
                )));
            }
            if !k.iter().any(|&b| b) {
                return Err(NdError::EmptySupport);
            }
        } else if self.shape(x)[0] == 0 {
            return Err(NdError::EmptySupport);
        }
        Ok(())
    }

    /// Masked logits and their log-sum-exp over kept positions.
    fn masked_lse(&self, x: Var, keep: Option<&[bool]>) -> (Vec<T>, T) {
        let logits: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| match keep {
                Some(k) if !k[i] => T::MASK_FILL,
                _ => v,
            })
            .collect();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = logits.iter().map(|&v| (v - max).exp()).sum();
        (logits, max + sum.ln())
    }

    /// Softmax restricted to `keep`; masked outputs are exactly zero.
    pub fn softmax(&mut self, x: Var, keep: Option<&[bool]>) -> Result<Var, NdError> {
        self.check_keep(x, keep)?;
        let (logits, lse) = self.masked_lse(x, keep);
        let out: Vec<T> = logits
            .iter()
            .enumerate()
            .map(|(i, &v)| match keep {
                Some(k) if !k[i] => T::zero(),
                _ => (v - lse).exp(),
            })
            .collect();
        let op = Op::Softmax { x, keep: keep.map(<[bool]>::to_vec) };
        Ok(self.push(Tensor::vector(out), op, &[x]))
    }

    /// Log-softmax restricted to `keep`; masked outputs are `MASK_FILL - lse`.
    pub fn log_softmax(&mut self, x: Var, keep: Option<&[bool]>) -> Result<Var, NdError> {
        self.check_keep(x, keep)?;
        let (logits, lse) = self.masked_lse(x, keep);
        let out: Vec<T> = logits.iter().map(|&v| v - lse).collect();
        let op = Op::LogSoftmax { x, keep: keep.map(<[bool]>::to_vec) };
        Ok(self.push(Tensor::vector(out), op, &[x]))
    }

    /// Scalar element `index` of a vector.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, NdError> {
        self.expect_rank(x, 1, "pick")?;
        if index >= self.shape(x)[0] {
            return Err(shape_err(format!("pick {index} of {:?}", self.shape(x))));
        }
        let v = self.value(x).data()[index];
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NdError> {
        let t = Tensor::new(shape.to_vec(), self.value(x).data().to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Sum of scalars.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var, NdError> {
        let mut it = terms.iter();
        let mut acc = *it.next().ok_or(NdError::EmptySequence)?;
        for &t in it {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Gradients of `loss` for every parameter in the bound store.
    /// Parameters the loss does not reach get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NdError> {
        let mut node_grads = self.run_backward(loss)?;
        let mut out = BTreeMap::new();
        if let Some(store) = self.store {
            for (name, t) in store.iter() {
                let g = match self.params.get(name).and_then(|v| node_grads[v.0].take()) {
                    Some(data) => Tensor::new(t.shape().to_vec(), data)?,
                    None => Tensor::zeros(t.shape()),
                };
                out.insert(name.clone(), g);
            }
        }
        Ok(Gradients::from_map(out))
    }

    /// Gradients of `loss` with respect to arbitrary leaves.
    pub fn backward_vars(&self, loss: Var, vars: &[Var]) -> Result<Vec<Tensor<T>>, NdError> {
        let mut node_grads = self.run_backward(loss)?;
        vars.iter()
            .map(|v| {
                let shape = self.shape(*v).to_vec();
                match node_grads[v.0].take() {
                    Some(d) => Tensor::new(shape, d),
                    None => Ok(Tensor::zeros(&shape)),
                }
            })
            .collect()
    }

    fn run_backward(&self, loss: Var) -> Result<Vec<Option<Vec<T>>>, NdError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(NdError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(gy);
                continue;
            }
            self.vjp(i, &gy, &mut grads);
        }
        Ok(grads)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn vjp(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatVec { w, x } => {
                let wt = self.value(*w);
                let (m, k) = (wt.shape()[0], wt.shape()[1]);
                let xv = self.value(*x).data();
                if let Some(gw) = self.slot(grads, *w) {
                    for r in 0..m {
                        axpy(&mut gw[r * k..(r + 1) * k], gy[r], xv);
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    let wd = wt.data();
                    for r in 0..m {
                        axpy(gx, gy[r], &wd[r * k..(r + 1) * k]);
                    }
                }
            }
            Op::MatMulT { x, w } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (n, k) = (xt.shape()[0], xt.shape()[1]);
                let m = wt.shape()[0];
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..n {
                        let gxr = &mut gx[r * k..(r + 1) * k];
                        for c in 0..m {
                            axpy(gxr, gy[r * m + c], wt.row(c));
                        }
                    }
                }
                if let Some(gw) = self.slot(grads, *w) {
                    for r in 0..n {
                        let xr = xt.row(r);
                        for c in 0..m {
                            axpy(&mut gw[c * k..(c + 1) * k], gy[r * m + c], xr);
                        }
                    }
                }
            }
            Op::VecMat { v, m } => {
                let mt = self.value(*m);
                let (n, d) = (mt.shape()[0], mt.shape()[1]);
                let vv = self.value(*v).data();
                if let Some(gv) = self.slot(grads, *v) {
                    for r in 0..n {
                        gv[r] = gv[r] + dot(mt.row(r), gy);
                    }
                }
                if let Some(gm) = self.slot(grads, *m) {
                    for r in 0..n {
                        axpy(&mut gm[r * d..(r + 1) * d], vv[r], gy);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.slot(grads, v) {
                        axpy(g, T::one(), gy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(g) = self.slot(grads, *a) {
                    axpy(g, T::one(), gy);
                }
                if let Some(g) = self.slot(grads, *b) {
                    axpy(g, -T::one(), gy);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(g) = self.slot(grads, *a) {
                    for j in 0..g.len() {
                        g[j] = g[j] + gy[j] * bv[j];
                    }
                }
                if let Some(g) = self.slot(grads, *b) {
                    for j in 0..g.len() {
                        g[j] = g[j] + gy[j] * av[j];
                    }
                }
            }
            Op::AddRows { x, b } => {
                let cols = self.shape(*b)[0];
                if let Some(g) = self.slot(grads, *x) {
                    axpy(g, T::one(), gy);
                }
                if let Some(g) = self.slot(grads, *b) {
                    for (j, &v) in gy.iter().enumerate() {
                        g[j % cols] = g[j % cols] + v;
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(g) = self.slot(grads, *x) {
                    axpy(g, *factor, gy);
                }
            }
            Op::MulConst { x, factors } => {
                if let Some(g) = self.slot(grads, *x) {
                    for j in 0..g.len() {
                        g[j] = g[j] + gy[j] * factors[j];
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(g) = self.slot(grads, *x) {
                    for j in 0..g.len() {
                        g[j] = g[j] + gy[j] * y[j] * (T::one() - y[j]);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(g) = self.slot(grads, *x) {
                    for j in 0..g.len() {
                        g[j] = g[j] + gy[j] * (T::one() - y[j] * y[j]);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(g) = self.slot(grads, p) {
                        axpy(g, T::one(), &gy[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if let Some(g) = self.slot(grads, p) {
                        for r in 0..n {
                            let src = &gy[r * total + off..r * total + off + w];
                            axpy(&mut g[r * w..(r + 1) * w], T::one(), src);
                        }
                    }
                    off += w;
                }
            }
            Op::StackRows(rows) => {
                let d = node.value.shape()[1];
                for (r, &p) in rows.iter().enumerate() {
                    if let Some(g) = self.slot(grads, p) {
                        axpy(g, T::one(), &gy[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::Row { x, index } => {
                let d = gy.len();
                if let Some(g) = self.slot(grads, *x) {
                    axpy(&mut g[index * d..(index + 1) * d], T::one(), gy);
                }
            }
            Op::Slice { x, start } => {
                if let Some(g) = self.slot(grads, *x) {
                    axpy(&mut g[*start..*start + gy.len()], T::one(), gy);
                }
            }
            Op::Gather { table, ids } => {
                let d = self.shape(*table)[1];
                if let Some(g) = self.slot(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut g[id * d..(id + 1) * d], T::one(), &gy[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::MeanRows(x) => {
                let (n, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let inv = T::one() / T::from_f64(n as f64);
                if let Some(g) = self.slot(grads, *x) {
                    for r in 0..n {
                        axpy(&mut g[r * d..(r + 1) * d], inv, gy);
                    }
                }
            }
            Op::MaxRows { x, winners } => {
                let d = self.shape(*x)[1];
                if let Some(g) = self.slot(grads, *x) {
                    for (c, &r) in winners.iter().enumerate() {
                        g[r * d + c] = g[r * d + c] + gy[c];
                    }
                }
            }
            Op::Unfold { x, width } => {
                let (l, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let half = width / 2;
                if let Some(g) = self.slot(grads, *x) {
                    for p in 0..l {
                        for j in 0..*width {
                            let src = p + j;
                            if src < half || src - half >= l {
                                continue;
                            }
                            let s = src - half;
                            let off = p * width * d + j * d;
                            axpy(&mut g[s * d..(s + 1) * d], T::one(), &gy[off..off + d]);
                        }
                    }
                }
            }
            Op::WindowMean { x, size } => {
                let d = self.shape(*x)[1];
                let count = node.value.shape()[0];
                let inv = T::one() / T::from_f64(*size as f64);
                if let Some(g) = self.slot(grads, *x) {
                    for i in 0..count {
                        for j in 0..*size {
                            let r = i + j;
                            axpy(&mut g[r * d..(r + 1) * d], inv, &gy[i * d..(i + 1) * d]);
                        }
                    }
                }
            }
            Op::Softmax { x, keep } => {
                let s: T = y.iter().zip(gy).map(|(&p, &g)| p * g).sum();
                if let Some(g) = self.slot(grads, *x) {
                    for j in 0..g.len() {
                        if keep.as_ref().is_none_or(|k| k[j]) {
                            g[j] = g[j] + y[j] * (gy[j] - s);
                        }
                    }
                }
            }
            Op::LogSoftmax { x, keep } => {
                let kept = |j: usize| keep.as_ref().is_none_or(|k| k[j]);
                let s: T = (0..gy.len()).filter(|&j| kept(j)).map(|j| gy[j]).sum();
                if let Some(g) = self.slot(grads, *x) {
                    for j in 0..g.len() {
                        if kept(j) {
                            g[j] = g[j] + gy[j] - y[j].exp() * s;
                        }
                    }
                }
            }
            Op::Pick { x, index } => {
                if let Some(g) = self.slot(grads, *x) {
                    g[*index] = g[*index] + gy[0];
                }
            }
            Op::Sum(x) => {
                if let Some(g) = self.slot(grads, *x) {
                    g.iter_mut().for_each(|v| *v = *v + gy[0]);
                }
            }
            Op::Reshape(x) => {
                if let Some(g) = self.slot(grads, *x) {
                    axpy(g, T::one(), gy);
                }
            }
        }
    }

    /// Index of the largest entry of a vector node.
    pub fn argmax(&self, v: Var) -> usize {
        argmax(self.value(v).data())
    }
}
