//! LSTM cell shared by the language model and the intent classifier.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::Result;

const GATES: [&str; 4] = ["i", "f", "o", "g"];

/// Input, forget and output gates plus the candidate cell, each with its own
/// `(input + hidden) x hidden` weight matrix.
#[derive(Debug, Clone)]
pub struct LstmCell {
    weights: [ParamId; 4],
    biases: [ParamId; 4],
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weights = GATES.map(|gate| {
            store.add(
                format!("{prefix}.w_{gate}"),
                Tensor::glorot(input_dim + hidden_dim, hidden_dim, rng),
            )
        });
        let biases = GATES.map(|gate| store.add(format!("{prefix}.b_{gate}"), Tensor::zeros(&[1, hidden_dim])));
        LstmCell {
            weights,
            biases,
            input_dim,
            hidden_dim,
        }
    }

    /// Runs over `inputs` (one `batch x input_dim` node per step) from a zero
    /// state and returns the hidden output of every step.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
        let Some(&first) = inputs.first() else {
            return Ok(Vec::new());
        };
        let batch = g.value(first).rows();
        let w = self.weights.map(|p| g.param(store, p));
        let b = self.biases.map(|p| g.param(store, p));
        let mut h = g.constant(Tensor::zeros(&[batch, self.hidden_dim]));
        let mut c = g.constant(Tensor::zeros(&[batch, self.hidden_dim]));
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let xh = g.concat(&[x, h])?;
            let mut pre = [xh; 4];
            for k in 0..4 {
                let z = g.matmul(xh, w[k])?;
                pre[k] = g.add(z, b[k])?;
            }
            let i = g.sigmoid(pre[0]);
            let f = g.sigmoid(pre[1]);
            let o = g.sigmoid(pre[2]);
            let cand = g.tanh(pre[3]);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let squashed = g.tanh(c);
            h = g.mul(o, squashed)?;
            outputs.push(h);
        }
        Ok(outputs)
    }
}
