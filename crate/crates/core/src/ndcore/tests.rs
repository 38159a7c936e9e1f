use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar-loop LSTM step, gate rows ordered input, forget, candidate, output.
fn reference_lstm(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = h.len();
    let din = x.len();
    let mut z = vec![0.0; 4 * d];
    for r in 0..4 * d {
        let mut s = b[r];
        for j in 0..din {
            s += w_ih[r * din + j] * x[j];
        }
        for j in 0..d {
            s += w_hh[r * d + j] * h[j];
        }
        z[r] = s;
    }
    let mut h2 = vec![0.0; d];
    let mut c2 = vec![0.0; d];
    for k in 0..d {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[d + k]);
        let g = z[2 * d + k].tanh();
        let o = sigmoid(z[3 * d + k]);
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

fn reference_bilstm(seq: &[Vec<f64>], store: &ParameterStore<f64>, prefix: &str, d: usize) -> Vec<Vec<f64>> {
    let get = |n: &str| store.get(&format!("{prefix}.{n}")).unwrap().data().to_vec();
    let run = |dir: &str, order: Vec<usize>| {
        let (wi, wh, b) = (get(&format!("{dir}.w_ih")), get(&format!("{dir}.w_hh")), get(&format!("{dir}.bias")));
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut out = vec![Vec::new(); seq.len()];
        for t in order {
            let (h2, c2) = reference_lstm(&seq[t], &h, &c, &wi, &wh, &b);
            h = h2;
            c = c2;
            out[t] = h.clone();
        }
        out
    };
    let n = seq.len();
    let f = run("fwd", (0..n).collect());
    let bw = run("bwd", (0..n).rev().collect());
    f.into_iter().zip(bw).map(|(mut a, b)| {
        a.extend(b);
        a
    }).collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y} (tol {tol})");
    }
}

#[test]
fn softmax_single_support() {
    let p = softmax_masked(&Tensor::vector(vec![5.0f64, -2.0]), &[true, false]).unwrap();
    assert_eq!(p.data(), &[1.0, 0.0]);
}

#[test]
fn softmax_uniform_on_equal_logits() {
    let p = softmax_masked(&Tensor::vector(vec![0.7f64; 3]), &[true; 3]).unwrap();
    assert_close(p.data(), &[1.0 / 3.0; 3], 1e-12);
}

#[test]
fn softmax_masked_middle() {
    let p = softmax_masked(&Tensor::vector(vec![1.0f64, 2.0, 3.0]), &[true, false, true]).unwrap();
    let z = 1f64.exp() + 3f64.exp();
    assert_close(p.data(), &[1f64.exp() / z, 0.0, 3f64.exp() / z], 1e-12);
    assert_eq!(p.data()[1], 0.0);
}

#[test]
fn softmax_all_masked_is_error() {
    let err = softmax_masked(&Tensor::vector(vec![1.0f32, 2.0]), &[false, false]).unwrap_err();
    assert_eq!(err, NdError::EmptySupport);
}

#[test]
fn softmax_gradient_only_reaches_kept() {
    let mut g = Graph::<f64>::detached();
    let x = g.variable(Tensor::vector(vec![0.3, -1.0, 2.0, 0.5]));
    let keep = [true, false, true, true];
    let p = g.softmax(x, Some(&keep)).unwrap();
    let w = g.constant(Tensor::vector(vec![1.0, 5.0, -2.0, 0.5]));
    let l = g.mul(p, w).unwrap();
    let l = g.sum(l);
    let grads = g.backward_vars(l, &[x]).unwrap();
    assert_eq!(grads[0].data()[1], 0.0);
    assert!(grads[0].data()[0] != 0.0);
}

proptest! {
    #[test]
    fn softmax_is_distribution_over_kept(
        logits in prop::collection::vec(-30.0f64..30.0, 1..12),
        mask_bits in prop::collection::vec(any::<bool>(), 12),
    ) {
        let n = logits.len();
        let mut keep: Vec<bool> = mask_bits[..n].to_vec();
        keep[0] = true;
        let p = softmax_masked(&Tensor::vector(logits), &keep).unwrap();
        let total: f64 = p.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        for (i, &v) in p.data().iter().enumerate() {
            prop_assert!(v >= 0.0);
            if !keep[i] {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn lstm_zero_everything_gives_zero() {
    let cell = LstmCell::new("c", 2, 3);
    let mut store = ParameterStore::<f64>::new();
    store.insert("c.w_ih", Tensor::zeros(&[12, 2]));
    store.insert("c.w_hh", Tensor::zeros(&[12, 3]));
    store.insert("c.bias", Tensor::zeros(&[12]));
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::zeros(&[2]));
    let (h0, c0) = cell.zero_state(&mut g);
    let (h, c) = cell.step(&mut g, x, h0, c0).unwrap();
    assert_eq!(g.value(h).data(), &[0.0; 3]);
    assert_eq!(g.value(c).data(), &[0.0; 3]);
}

#[test]
fn lstm_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cell = LstmCell::new("c", 4, 3);
    let mut store = ParameterStore::<f64>::new();
    cell.init(&mut store, 0.5, &mut rng);
    let x = Tensor::<f64>::uniform(&[4], 1.0, &mut rng);
    let h0 = Tensor::<f64>::uniform(&[3], 1.0, &mut rng);
    let c0 = Tensor::<f64>::uniform(&[3], 1.0, &mut rng);

    let mut g = Graph::new(&store);
    let (xv, hv, cv) = (g.constant(x.clone()), g.constant(h0.clone()), g.constant(c0.clone()));
    let (h, c) = cell.step(&mut g, xv, hv, cv).unwrap();

    let (rh, rc) = reference_lstm(
        x.data(),
        h0.data(),
        c0.data(),
        store.get("c.w_ih").unwrap().data(),
        store.get("c.w_hh").unwrap().data(),
        store.get("c.bias").unwrap().data(),
    );
    assert_close(g.value(h).data(), &rh, 1e-6);
    assert_close(g.value(c).data(), &rc, 1e-6);
}

#[test]
fn lstm_items_are_independent_of_batch_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cell = LstmCell::new("c", 2, 2);
    let mut store = ParameterStore::<f32>::new();
    cell.init(&mut store, 0.5, &mut rng);
    let inputs: Vec<Tensor<f32>> = (0..3).map(|_| Tensor::uniform(&[2], 1.0, &mut rng)).collect();
    let run = |order: &[usize]| {
        let mut g = Graph::new(&store);
        let mut outs = vec![Vec::new(); inputs.len()];
        for &i in order {
            let x = g.constant(inputs[i].clone());
            let (h0, c0) = cell.zero_state(&mut g);
            let (h, _) = cell.step(&mut g, x, h0, c0).unwrap();
            outs[i] = g.value(h).data().to_vec();
        }
        outs
    };
    assert_eq!(run(&[0, 1, 2]), run(&[2, 0, 1]));
}

#[test]
fn lstm_rejects_bad_input_width() {
    let cell = LstmCell::new("c", 3, 2);
    let mut store = ParameterStore::<f32>::new();
    cell.init(&mut store, 0.1, &mut ChaCha8Rng::seed_from_u64(0));
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::zeros(&[4]));
    let (h, c) = cell.zero_state(&mut g);
    assert!(matches!(cell.step(&mut g, x, h, c), Err(NdError::Shape(_))));
}

fn random_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn bilstm_output(layer: &BiLstm, store: &ParameterStore<f64>, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = seq[0].len();
    let flat: Vec<f64> = seq.iter().flatten().copied().collect();
    let mut g = Graph::new(store);
    let x = g.constant(Tensor::new(vec![seq.len(), d], flat).unwrap());
    let y = layer.forward(&mut g, x).unwrap();
    let t = g.value(y);
    (0..seq.len()).map(|i| t.row(i).to_vec()).collect()
}

#[test]
fn bilstm_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layer = BiLstm::new("b", 2, 3);
    let mut store = ParameterStore::<f64>::new();
    layer.init(&mut store, 0.5, &mut rng);
    let seq = random_seq(&mut rng, 4, 2);
    let got = bilstm_output(&layer, &store, &seq);
    let want = reference_bilstm(&seq, &store, "b", 3);
    for (a, b) in got.iter().zip(&want) {
        assert_close(a, b, 1e-6);
    }
}

#[test]
fn bilstm_single_token_is_one_step_each_way() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let layer = BiLstm::new("b", 3, 2);
    let mut store = ParameterStore::<f64>::new();
    layer.init(&mut store, 0.5, &mut rng);
    let seq = random_seq(&mut rng, 1, 3);
    let got = bilstm_output(&layer, &store, &seq);
    let get = |n: &str| store.get(n).unwrap().data().to_vec();
    let zero = vec![0.0; 2];
    let (hf, _) = reference_lstm(&seq[0], &zero, &zero, &get("b.fwd.w_ih"), &get("b.fwd.w_hh"), &get("b.fwd.bias"));
    let (hb, _) = reference_lstm(&seq[0], &zero, &zero, &get("b.bwd.w_ih"), &get("b.bwd.w_hh"), &get("b.bwd.bias"));
    assert_close(&got[0][..2], &hf, 1e-9);
    assert_close(&got[0][2..], &hb, 1e-9);
}

#[test]
fn bilstm_reversal_swaps_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = BiLstm::new("b", 2, 3);
    let mut store = ParameterStore::<f64>::new();
    layer.init(&mut store, 0.5, &mut rng);
    // Share weights across directions so reversal is a pure swap.
    for name in ["w_ih", "w_hh", "bias"] {
        let t = store.get(&format!("b.fwd.{name}")).unwrap().clone();
        store.insert(format!("b.bwd.{name}"), t);
    }
    let seq = random_seq(&mut rng, 5, 2);
    let mut rev = seq.clone();
    rev.reverse();
    let a = bilstm_output(&layer, &store, &seq);
    let b = bilstm_output(&layer, &store, &rev);
    for i in 0..5 {
        let j = 4 - i;
        assert_close(&a[i][..3], &b[j][3..], 1e-12);
        assert_close(&a[i][3..], &b[j][..3], 1e-12);
    }
}

#[test]
fn bilstm_empty_sequence_is_error() {
    let layer = BiLstm::new("b", 2, 2);
    let mut store = ParameterStore::<f64>::new();
    layer.init(&mut store, 0.1, &mut ChaCha8Rng::seed_from_u64(0));
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::zeros(&[0, 2]));
    assert_eq!(layer.forward(&mut g, x).unwrap_err(), NdError::EmptySequence);
}

fn cnn_output(cnn: &CharCnn, store: &ParameterStore<f64>, chars: &[usize]) -> Vec<f64> {
    let mut g = Graph::new(store);
    let v = cnn.forward(&mut g, chars).unwrap();
    g.value(v).data().to_vec()
}

#[test]
fn char_cnn_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cnn = CharCnn::new("cnn", 6, 2, 3, 3, 10);
    let mut store = ParameterStore::<f64>::new();
    cnn.init(&mut store, 0.5, &mut rng);
    let word = [3usize, 4, 5, 2];
    let got = cnn_output(&cnn, &store, &word);

    let emb = store.get("cnn.char_emb").unwrap();
    let w = store.get("cnn.conv.weight").unwrap().data();
    let b = store.get("cnn.conv.bias").unwrap().data();
    let mut ids = word.to_vec();
    ids.resize(10, PAD_CHAR);
    let char_vec = |p: isize| -> Vec<f64> {
        if !(0..10).contains(&p) {
            vec![0.0; 2]
        } else {
            emb.row(ids[p as usize]).to_vec()
        }
    };
    let mut want = vec![f64::NEG_INFINITY; 3];
    for p in 0..10isize {
        for f in 0..3 {
            let mut s = b[f];
            for j in 0..3isize {
                let cv = char_vec(p + j - 1);
                for c in 0..2 {
                    s += w[f * 6 + (j as usize) * 2 + c] * cv[c];
                }
            }
            want[f] = want[f].max(s);
        }
    }
    assert_close(&got, &want, 1e-6);
}

#[test]
fn char_cnn_truncates_long_words() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cnn = CharCnn::new("cnn", 20, 4, 5, 3, 10);
    let mut store = ParameterStore::<f64>::new();
    cnn.init(&mut store, 0.5, &mut rng);
    let long: Vec<usize> = (2..17).collect();
    assert_eq!(cnn_output(&cnn, &store, &long), cnn_output(&cnn, &store, &long[..10]));
    let one = cnn_output(&cnn, &store, &[5]);
    assert_eq!(one.len(), 5);
    assert!(one.iter().all(|v| v.is_finite()));
}

#[test]
fn backward_linear_case_is_analytic() {
    let mut g = Graph::<f64>::detached();
    let w = g.variable(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap());
    let x = g.variable(Tensor::vector(vec![0.2, -0.4, 1.5]));
    let y = g.matvec(w, x).unwrap();
    let l = g.sum(y);
    let grads = g.backward_vars(l, &[w, x]).unwrap();
    assert_eq!(grads[0].data(), &[0.2, -0.4, 1.5, 0.2, -0.4, 1.5]);
    assert_close(grads[1].data(), &[0.0, 2.5, 7.0], 1e-12);
}

#[test]
fn backward_unreached_parameter_gets_zero() {
    let mut store = ParameterStore::<f64>::new();
    store.insert("used", Tensor::vector(vec![1.0, 2.0]));
    store.insert("unused", Tensor::vector(vec![3.0, 4.0, 5.0]));
    let mut g = Graph::new(&store);
    let u = g.param("used").unwrap();
    let _ = g.param("unused").unwrap();
    let l = g.sum(u);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get("used").unwrap().data(), &[1.0, 1.0]);
    assert_eq!(grads.get("unused").unwrap().data(), &[0.0; 3]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::<f64>::detached();
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    let err = g.backward_vars(x, &[x]).unwrap_err();
    assert_eq!(err, NdError::NonScalarLoss(vec![2]));
}

/// Every primitive composed into one scalar, checked by central differences.
#[test]
fn composite_chain_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParameterStore::<f64>::new();
    store.init_uniform("m", &[4, 3], 0.8, &mut rng);
    store.init_uniform("v", &[3], 0.8, &mut rng);
    store.init_uniform("seq", &[5, 3], 0.8, &mut rng);
    store.init_uniform("table", &[6, 3], 0.8, &mut rng);
    store.init_uniform("bias", &[4], 0.8, &mut rng);
    let keep = [true, false, true, true];
    let err = finite_diff_check(&store, 1e-5, |g| {
        let m = g.param("m")?;
        let v = g.param("v")?;
        let seq = g.param("seq")?;
        let table = g.param("table")?;
        let bias = g.param("bias")?;
        let a = g.matvec(m, v)?;
        let a = g.add(a, bias)?;
        let a = g.tanh(a);
        let b = g.matmul_t(seq, m)?;
        let b = g.add_rows(b, bias)?;
        let b = g.sigmoid(b);
        let mean = g.mean_rows(b)?;
        let mx = g.max_rows(b)?;
        let prod = g.mul(mean, mx)?;
        let s = g.sub(prod, a)?;
        let emb = g.gather(table, &[1, 3, 3, 0])?;
        let unf = g.unfold(emb, 3)?;
        let win = g.window_mean(seq, 2)?;
        let r0 = g.row(win, 1)?;
        let alpha = g.softmax(s, Some(&keep))?;
        let logp = g.log_softmax(s, None)?;
        let picked = g.pick(logp, 2)?;
        let ctx = g.vecmat(alpha, emb)?;
        let cat = g.concat(&[ctx, r0, v])?;
        let sl = g.slice(cat, 2, 5)?;
        let st = g.stack_rows(&[sl, sl])?;
        let cc = g.concat_cols(&[st, st])?;
        let rs = g.reshape(cc, &[20])?;
        let sc = g.scale(rs, 0.7);
        let dm = g.mul_const(sc, (0..20).map(|i| (i % 3) as f64).collect())?;
        let t1 = g.sum(dm);
        let t2 = g.sum(unf);
        let t3 = g.mul(t1, picked)?;
        g.add_all(&[t1, t2, t3, picked])
    })
    .unwrap();
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn quadratic_gradient_is_exact() {
    let mut store = ParameterStore::<f64>::new();
    store.insert("x", Tensor::vector(vec![0.3, -1.2, 2.0]));
    let err = finite_diff_check(&store, 1e-5, |g| {
        let x = g.param("x")?;
        let sq = g.mul(x, x)?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn recurrent_layers_pass_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layer = BiLstm::new("b", 3, 2);
    let cnn = CharCnn::new("cnn", 5, 2, 3, 3, 4);
    let mut store = ParameterStore::<f64>::new();
    layer.init(&mut store, 0.5, &mut rng);
    cnn.init(&mut store, 0.5, &mut rng);
    let err = finite_diff_check(&store, 1e-5, |g| {
        let feats = cnn.forward_words(g, &[vec![2, 3], vec![4, 2, 2, 3, 4]])?;
        let wide = g.concat_cols(&[feats])?;
        let h = layer.forward(g, wide)?;
        let h = g.tanh(h);
        Ok(g.sum(h))
    })
    .unwrap();
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut store = ParameterStore::<f64>::new();
    store.insert("p", Tensor::vector(vec![0.5, -0.25]));
    let before = store.clone();
    let mut adam = AdamState::new(0.1);
    adam.step(&mut store, &Gradients::zeros_like(&before)).unwrap();
    assert_eq!(store, before);
    assert_eq!(adam.step_count(), 1);
}

fn grads_of(pairs: &[(&str, Tensor<f64>)]) -> Gradients<f64> {
    Gradients::from_map(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
}

#[test]
fn adam_first_step_matches_formula() {
    let mut store = ParameterStore::<f64>::new();
    store.insert("p", Tensor::scalar(2.0));
    let mut adam = AdamState::new(0.1);
    adam.step(&mut store, &grads_of(&[("p", Tensor::scalar(1.0))])).unwrap();
    let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 0.1f64, 1e-8f64);
    let m = (1.0 - b1) * 1.0;
    let v = (1.0 - b2) * 1.0;
    let m_hat = m / (1.0 - b1);
    let v_hat = v / (1.0 - b2);
    let want = 2.0 - lr * m_hat / (v_hat.sqrt() + eps);
    assert!((store.get("p").unwrap().item() - want).abs() < 1e-9);
}

#[test]
fn adam_rejects_nan_and_names_parameter() {
    let mut store = ParameterStore::<f64>::new();
    store.insert("bad", Tensor::scalar(1.0));
    store.insert("ok", Tensor::scalar(1.0));
    let before = store.clone();
    let grads = grads_of(&[("bad", Tensor::scalar(f64::NAN)), ("ok", Tensor::scalar(0.5))]);
    let err = AdamState::new(0.1).step(&mut store, &grads).unwrap_err();
    assert_eq!(err, NdError::NonFiniteGradient("bad".into()));
    assert_eq!(store, before);
}

#[test]
fn adam_identical_parameters_stay_identical() {
    let mut store = ParameterStore::<f32>::new();
    store.insert("a", Tensor::vector(vec![0.3, 0.1]));
    store.insert("b", Tensor::vector(vec![0.3, 0.1]));
    let mut adam = AdamState::new(0.01);
    for step in 0..20 {
        let mut g = Graph::new(&store);
        let a = g.param("a").unwrap();
        let b = g.param("b").unwrap();
        let aa = g.mul(a, a).unwrap();
        let bb = g.mul(b, b).unwrap();
        let s = g.add(aa, bb).unwrap();
        let l = g.scale(s, step as f64 + 1.0);
        let l = g.sum(l);
        let grads = g.backward(l).unwrap();
        drop(g);
        adam.step(&mut store, &grads).unwrap();
    }
    assert_eq!(store.get("a"), store.get("b"));
}

#[test]
fn dropout_identity_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f32>::detached();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert_eq!(dropout(&mut g, x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(dropout(&mut g, x, 0.5, false, &mut rng).unwrap(), x);
    assert_eq!(
        dropout(&mut g, x, 1.0, true, &mut rng).unwrap_err(),
        NdError::InvalidDropout(1.0)
    );
}

#[test]
fn dropout_keep_fraction_near_expected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::<f32>::detached();
    let n = 200_000;
    let x = g.constant(Tensor::vector(vec![1.0; n]));
    let y = dropout(&mut g, x, 0.3, true, &mut rng).unwrap();
    let vals = g.value(y).data();
    let kept = vals.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
    assert!((kept - 0.7).abs() < 0.02, "kept {kept}");
    let scale = 1.0f32 / 0.7;
    assert!(vals.iter().all(|&v| v == 0.0 || (v - scale).abs() < 1e-6));
}

#[test]
fn seeded_training_is_bit_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cell = LstmCell::new("c", 3, 4);
        let mut store = ParameterStore::<f32>::new();
        cell.init(&mut store, 0.1, &mut rng);
        let mut adam = AdamState::new(0.01);
        for _ in 0..10 {
            let mut g = Graph::new(&store);
            let x = g.constant(Tensor::uniform(&[3], 1.0, &mut rng));
            let x = dropout(&mut g, x, 0.3, true, &mut rng).unwrap();
            let (h, c) = cell.zero_state(&mut g);
            let (h, _) = cell.step(&mut g, x, h, c).unwrap();
            let l = g.sum(h);
            let grads = g.backward(l).unwrap();
            drop(g);
            adam.step(&mut store, &grads).unwrap();
        }
        store
    };
    assert_eq!(run(), run());
}
