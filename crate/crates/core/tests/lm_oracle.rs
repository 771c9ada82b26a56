//! The language model checked against a direct scalar implementation that
//! reads the same named parameters.

use aclb::bilm::{BiLm, BiLmConfig};
use aclb::corpus::{Vocabulary, BOS_ID, EOS_ID};
use aclb::seed::rng_for;
use rand::Rng;

struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn mat(lm: &BiLm, name: &str) -> Mat {
    let t = lm.params.get(lm.params.id(name).unwrap_or_else(|| panic!("missing {name}")));
    let (rows, cols) = if t.shape().len() == 2 { (t.rows(), t.cols()) } else { (1, t.len()) };
    Mat { rows, cols, data: t.data().to_vec() }
}

/// `x * m + b` for a row vector `x`.
fn affine(x: &[f64], m: &Mat, b: &Mat) -> Vec<f64> {
    assert_eq!(x.len(), m.rows);
    (0..m.cols)
        .map(|j| b.data[j] + (0..m.rows).map(|i| x[i] * m.data[i * m.cols + j]).sum::<f64>())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm(lm: &BiLm, prefix: &str, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w: Vec<Mat> = ["i", "f", "o", "g"].iter().map(|g| mat(lm, &format!("{prefix}.w_{g}"))).collect();
    let b: Vec<Mat> = ["i", "f", "o", "g"].iter().map(|g| mat(lm, &format!("{prefix}.b_{g}"))).collect();
    let hid = w[0].cols;
    let (mut h, mut c) = (vec![0.0; hid], vec![0.0; hid]);
    let mut out = Vec::new();
    for x in inputs {
        let xh: Vec<f64> = x.iter().chain(&h).copied().collect();
        let z: Vec<Vec<f64>> = (0..4).map(|k| affine(&xh, &w[k], &b[k])).collect();
        for j in 0..hid {
            c[j] = sigmoid(z[1][j]) * c[j] + sigmoid(z[0][j]) * z[3][j].tanh();
            h[j] = sigmoid(z[2][j]) * c[j].tanh();
        }
        out.push(h.clone());
    }
    out
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

struct Reference {
    /// `[layer][t]`
    states: Vec<Vec<Vec<f64>>>,
    loss: f64,
}

fn reference(lm: &BiLm, seq: &[usize]) -> Reference {
    let emb = mat(lm, "lm.embed");
    let row = |id: usize| emb.data[id * emb.cols..(id + 1) * emb.cols].to_vec();
    let t_len = seq.len();
    let fwd_in: Vec<Vec<f64>> = std::iter::once(BOS_ID).chain(seq.iter().copied()).map(row).collect();
    let bwd_in: Vec<Vec<f64>> = std::iter::once(EOS_ID).chain(seq.iter().rev().copied()).map(row).collect();
    let f1 = lstm(lm, "lm.fwd.l1", &fwd_in);
    let f2 = lstm(lm, "lm.fwd.l2", &f1);
    let b1 = lstm(lm, "lm.bwd.l1", &bwd_in);
    let b2 = lstm(lm, "lm.bwd.l2", &b1);

    let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<f64>>();
    let states = vec![
        seq.iter().map(|&w| cat(&row(w), &row(w))).collect(),
        (0..t_len).map(|t| cat(&b1[t_len - t], &f1[t + 1])).collect(),
        (0..t_len).map(|t| cat(&b2[t_len - t], &f2[t + 1])).collect(),
    ];

    let (fw, fb) = (mat(lm, "lm.fwd.out.w"), mat(lm, "lm.fwd.out.b"));
    let (bw, bb) = (mat(lm, "lm.bwd.out.w"), mat(lm, "lm.bwd.out.b"));
    let mut loss = 0.0;
    for (t, &w) in seq.iter().enumerate() {
        // forward has read <s> w_1 .. w_{t-1}; backward has read </s> w_T .. w_{t+1}
        loss -= log_softmax(&affine(&f2[t], &fw, &fb))[w];
        loss -= log_softmax(&affine(&b2[t_len - 1 - t], &bw, &bb))[w];
    }
    Reference {
        states,
        loss: loss / t_len as f64,
    }
}

fn model(seed: u64) -> BiLm {
    let vocab = Vocabulary::from_words(["fly", "to", "boston", "fare", "fair", "show"].map(String::from));
    BiLm::new(BiLmConfig { embed_dim: 3, hidden_dim: 4, seed }, vocab).unwrap()
}

#[test]
fn states_and_loss_match_scalar_reference() {
    for seed in 0..20 {
        let mut lm = model(seed);
        let mut rng = rng_for(seed, "lm-oracle");
        // Nonzero biases so every term of the cell is exercised.
        let names: Vec<String> = lm.params.iter().map(|(_, n, _)| n.to_owned()).collect();
        for n in names {
            let id = lm.params.id(&n).unwrap();
            for v in lm.params.get_mut(id).data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let len = rng.gen_range(1..=6);
        let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..lm.vocab_size())).collect();
        let expect = reference(&lm, &seq);
        let out = lm.forward(&seq).unwrap();
        for layer in 0..3 {
            for t in 0..len {
                for (a, b) in out.state.vector(t, layer).iter().zip(&expect.states[layer][t]) {
                    assert!((a - b).abs() < 1e-12, "seed {seed} layer {layer} t {t}: {a} vs {b}");
                }
            }
        }
        let loss = lm.lm_loss(&seq).unwrap();
        assert!((loss - expect.loss).abs() < 1e-10, "seed {seed}: {loss} vs {}", expect.loss);
    }
}

#[test]
fn context_free_output_gives_closed_form_loss() {
    // With zero output weights both directions predict softmax(bias) at
    // every position, whatever the context.
    let mut lm = model(3);
    let v = lm.vocab_size();
    let [fw, fb, bw, bb] = lm.output_params();
    let fwd_bias: Vec<f64> = (0..v).map(|i| 0.3 * i as f64).collect();
    let bwd_bias: Vec<f64> = (0..v).map(|i| -0.2 * i as f64 + 0.1).collect();
    lm.params.get_mut(fw).data_mut().fill(0.0);
    lm.params.get_mut(bw).data_mut().fill(0.0);
    lm.params.get_mut(fb).data_mut().copy_from_slice(&fwd_bias);
    lm.params.get_mut(bb).data_mut().copy_from_slice(&bwd_bias);

    let seq = [4usize, 7, 5, 4];
    let (lf, lb) = (log_softmax(&fwd_bias), log_softmax(&bwd_bias));
    let expect = -seq.iter().map(|&w| lf[w] + lb[w]).sum::<f64>() / seq.len() as f64;
    assert!((lm.lm_loss(&seq).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn predictive_rows_are_distributions() {
    let lm = model(8);
    let out = lm.forward(&[4, 5, 6, 7, 8, 9]).unwrap();
    for probs in [&out.forward_log_probs, &out.backward_log_probs] {
        for r in 0..probs.rows() {
            let s: f64 = probs.row_slice(r).iter().map(|x| x.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
