//! Intent classifier: layer-mixed LM states (or a plain embedding table)
//! feed a two-layer bidirectional LSTM whose top outputs are max-pooled over
//! time, projected to intent logits and softmaxed.
//!
//! The language model is never registered in the classifier's parameter
//! store; its states enter the graph as constants, so it cannot change
//! during classifier training.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{Adam, AdamConfig, Axis, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::bilm::{BiLm, BiLmState, LAYERS};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::corpus::{Dataset, Utterance, Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::recurrent::LstmCell;
use crate::seed::rng_for;

/// Mixing parameters: effective weights are `softmax(raw_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeights {
    pub raw_alpha: [f64; LAYERS],
    pub gamma: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            raw_alpha: [0.0; LAYERS],
            gamma: 1.0,
        }
    }
}

impl MixWeights {
    pub fn alphas(&self) -> [f64; LAYERS] {
        let m = self.raw_alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = self.raw_alpha.map(|a| (a - m).exp());
        let s: f64 = e.iter().sum();
        e.map(|x| x / s)
    }
}

/// `e_t = gamma * sum_i alpha_i h_{t,i}` for every position.
pub fn contextual_embed(state: &BiLmState, mix: &MixWeights) -> Result<Tensor> {
    let shape = state.layers[0].shape();
    if state.layers.iter().any(|l| l.shape() != shape) {
        let shapes: Vec<&[usize]> = state.layers.iter().map(Tensor::shape).collect();
        return Err(Error::shape("contextual_embed (layer widths differ)", &shapes));
    }
    let alphas = mix.alphas();
    let mut out = Tensor::zeros(shape);
    for (layer, a) in state.layers.iter().zip(alphas) {
        for (o, h) in out.data_mut().iter_mut().zip(layer.data()) {
            *o += mix.gamma * a * h;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SluConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SluConfig {
    fn default() -> Self {
        SluConfig {
            hidden_dim: 32,
            epochs: 50,
            batch_size: 64,
            lr: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoder {
    /// Mixed states of a frozen language model.
    Contextual,
    /// A trainable embedding table, randomly initialized.
    Lookup,
}

impl Encoder {
    fn tag(self) -> &'static str {
        match self {
            Encoder::Contextual => "contextual",
            Encoder::Lookup => "lookup",
        }
    }
}

#[derive(Debug, Clone)]
struct Ids {
    alpha: Option<ParamId>,
    gamma: Option<ParamId>,
    embed: Option<ParamId>,
    /// `[layer][direction]`, direction 0 forward.
    cells: [[LstmCell; 2]; 2],
    out_w: ParamId,
    out_b: ParamId,
}

/// Classifier inputs for a set of utterances.
#[derive(Debug, Clone)]
pub enum Inputs {
    States(Vec<BiLmState>),
    Ids(Vec<Vec<usize>>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::States(s) => s.len(),
            Inputs::Ids(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn seq_len(&self, i: usize) -> usize {
        match self {
            Inputs::States(s) => s[i].len(),
            Inputs::Ids(ids) => ids[i].len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SluModel {
    pub config: SluConfig,
    pub encoder: Encoder,
    pub intents: Vec<String>,
    pub vocab: Vocabulary,
    pub input_dim: usize,
    pub params: ParamStore,
    ids: Ids,
}

impl SluModel {
    pub fn new(
        config: SluConfig,
        encoder: Encoder,
        intents: Vec<String>,
        vocab: Vocabulary,
        input_dim: usize,
    ) -> Result<Self> {
        if intents.len() < 2 {
            return Err(Error::Invalid(format!(
                "intent inventory needs at least 2 labels, got {}",
                intents.len()
            )));
        }
        if config.hidden_dim == 0 || input_dim == 0 {
            return Err(Error::Invalid("classifier dimensions must be at least 1".into()));
        }
        let mut rng = rng_for(config.seed, "slu-init");
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let (alpha, gamma, embed) = match encoder {
            Encoder::Contextual => (
                Some(params.add("slu.mix.alpha", Tensor::zeros(&[1, LAYERS]))),
                Some(params.add("slu.mix.gamma", Tensor::scalar(1.0))),
                None,
            ),
            Encoder::Lookup => (
                None,
                None,
                Some(params.add("slu.embed", Tensor::glorot(vocab.len(), input_dim, &mut rng))),
            ),
        };
        let mut cell = |name: &str, inp: usize| LstmCell::new(&mut params, name, inp, h, &mut rng);
        let cells = [
            [cell("slu.l1.fwd", input_dim), cell("slu.l1.bwd", input_dim)],
            [cell("slu.l2.fwd", 2 * h), cell("slu.l2.bwd", 2 * h)],
        ];
        let out_w = params.add("slu.out.w", Tensor::glorot(2 * h, intents.len(), &mut rng));
        let out_b = params.add("slu.out.b", Tensor::zeros(&[1, intents.len()]));
        Ok(SluModel {
            config,
            encoder,
            intents,
            vocab,
            input_dim,
            params,
            ids: Ids {
                alpha,
                gamma,
                embed,
                cells,
                out_w,
                out_b,
            },
        })
    }

    /// Current mixing weights (contextual encoder only).
    pub fn mix(&self) -> Option<MixWeights> {
        let (a, g) = (self.ids.alpha?, self.ids.gamma?);
        let raw = self.params.get(a).data();
        Some(MixWeights {
            raw_alpha: [raw[0], raw[1], raw[2]],
            gamma: self.params.get(g).item(),
        })
    }

    pub fn intent_index(&self, label: &str) -> Option<usize> {
        self.intents.iter().position(|i| i == label)
    }

    /// Inputs for `utterances`, using `lm` for the contextual encoder.
    pub fn inputs(&self, lm: Option<&BiLm>, utterances: &[Utterance]) -> Result<Inputs> {
        match self.encoder {
            Encoder::Contextual => {
                let lm = lm.ok_or_else(|| Error::Invalid("contextual classifier needs a language model".into()))?;
                let widths = lm.layer_widths();
                if widths.iter().any(|&w| w != self.input_dim) {
                    return Err(Error::Config(format!(
                        "language model layer widths {widths:?} do not match classifier input {}",
                        self.input_dim
                    )));
                }
                let seqs: Vec<Vec<usize>> = utterances.iter().map(|u| lm.vocab.encode(&u.tokens)).collect();
                Ok(Inputs::States(lm.states(&seqs, 128)?))
            }
            Encoder::Lookup => Ok(Inputs::Ids(
                utterances.iter().map(|u| self.vocab.encode(&u.tokens)).collect(),
            )),
        }
    }

    /// Mixed (or looked-up) inputs for the sequences `batch`, stacked
    /// position-major: row `t * B + b` is position `t` of sequence `b`,
    /// zero (or `<pad>`) beyond its end.
    fn input_rows(&self, g: &mut Graph, inputs: &Inputs, batch: &[usize], steps: usize) -> Result<NodeId> {
        let b = batch.len();
        match inputs {
            Inputs::States(states) => {
                let d = self.input_dim;
                let mut terms = Vec::with_capacity(LAYERS);
                let alpha_raw = g.param(&self.params, self.ids.alpha.expect("contextual"));
                let alpha = g.softmax(alpha_raw)?;
                for layer in 0..LAYERS {
                    let mut data = vec![0.0; steps * b * d];
                    for (k, &i) in batch.iter().enumerate() {
                        let st = &states[i].layers[layer];
                        for t in 0..st.rows() {
                            data[(t * b + k) * d..(t * b + k + 1) * d].copy_from_slice(st.row_slice(t));
                        }
                    }
                    let h = g.constant(Tensor::matrix(steps * b, d, data)?);
                    let mut pick = vec![0.0; LAYERS];
                    pick[layer] = 1.0;
                    let pick = g.constant(Tensor::matrix(LAYERS, 1, pick)?);
                    let a = g.matmul(alpha, pick)?;
                    terms.push(g.mul(h, a)?);
                }
                let mut mixed = terms[0];
                for &t in &terms[1..] {
                    mixed = g.add(mixed, t)?;
                }
                let gamma = g.param(&self.params, self.ids.gamma.expect("contextual"));
                g.mul(mixed, gamma)
            }
            Inputs::Ids(ids) => {
                let mut rows = vec![PAD_ID; steps * b];
                for (k, &i) in batch.iter().enumerate() {
                    for (t, &id) in ids[i].iter().enumerate() {
                        rows[t * b + k] = id;
                    }
                }
                let embed = g.param(&self.params, self.ids.embed.expect("lookup"));
                g.gather(embed, &rows)
            }
        }
    }

    /// Log-probabilities `B x |intents|` for the sequences `batch`.
    pub fn log_probs_node(&self, g: &mut Graph, inputs: &Inputs, batch: &[usize]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty classifier batch".into()));
        }
        let b = batch.len();
        let lens: Vec<usize> = batch.iter().map(|&i| inputs.seq_len(i)).collect();
        if lens.contains(&0) {
            return Err(Error::Invalid("classifier input with no tokens".into()));
        }
        let steps = *lens.iter().max().expect("non-empty");
        // Row of position `t` of sequence `k`, and the row read by the
        // backward pass at step `q`.
        let fwd_row = |t: usize, k: usize| t * b + k;
        let bwd_row = |q: usize, k: usize| if q < lens[k] { (lens[k] - 1 - q) * b + k } else { q * b + k };

        let mut x = self.input_rows(g, inputs, batch, steps)?;
        for cells in &self.ids.cells {
            let f_in = (0..steps)
                .map(|p| g.gather(x, &(0..b).map(|k| fwd_row(p, k)).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            let b_in = (0..steps)
                .map(|q| g.gather(x, &(0..b).map(|k| bwd_row(q, k)).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            let f_out = cells[0].run(g, &self.params, &f_in)?;
            let b_out = cells[1].run(g, &self.params, &b_in)?;
            let f_stack = g.stack_rows(&f_out)?;
            let b_stack = g.stack_rows(&b_out)?;
            // Back to position-major order: position t of the backward pass
            // was produced at step lens[k] - 1 - t (the mapping is an involution).
            let realign: Vec<usize> = (0..steps)
                .flat_map(|t| (0..b).map(move |k| (t, k)))
                .map(|(t, k)| bwd_row(t, k))
                .collect();
            let b_pos = g.gather(b_stack, &realign)?;
            x = g.concat(&[f_stack, b_pos])?;
        }
        let pooled = (0..b)
            .map(|k| {
                let rows: Vec<usize> = (0..lens[k]).map(|t| fwd_row(t, k)).collect();
                let h = g.gather(x, &rows)?;
                g.max(h, Axis::Rows)
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled = g.stack_rows(&pooled)?;
        let w = g.param(&self.params, self.ids.out_w);
        let bias = g.param(&self.params, self.ids.out_b);
        let z = g.matmul(pooled, w)?;
        let z = g.add(z, bias)?;
        let p = g.softmax(z)?;
        Ok(g.log(p))
    }

    /// Mean cross-entropy over `batch` with gold indices `labels`.
    pub fn loss_node(&self, g: &mut Graph, inputs: &Inputs, batch: &[usize], labels: &[usize]) -> Result<NodeId> {
        let lp = self.log_probs_node(g, inputs, batch)?;
        let n = self.intents.len();
        let mut pick = vec![0.0; batch.len() * n];
        for (k, &i) in batch.iter().enumerate() {
            pick[k * n + labels[i]] = -1.0 / batch.len() as f64;
        }
        let pick = g.constant(Tensor::matrix(batch.len(), n, pick)?);
        let weighted = g.mul(lp, pick)?;
        Ok(g.sum(weighted))
    }

    /// Probability vectors for every input.
    pub fn probabilities(&self, inputs: &Inputs) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(inputs.len());
        let all: Vec<usize> = (0..inputs.len()).collect();
        for chunk in all.chunks(128) {
            let mut g = Graph::new();
            let lp = self.log_probs_node(&mut g, inputs, chunk)?;
            let v = g.value(lp);
            out.extend((0..chunk.len()).map(|k| v.row_slice(k).iter().map(|x| x.exp()).collect()));
        }
        Ok(out)
    }

    /// Intent labels with their distributions.
    pub fn predict(&self, lm: Option<&BiLm>, utterances: &[Utterance]) -> Result<Vec<Prediction>> {
        let inputs = self.inputs(lm, utterances)?;
        Ok(self
            .probabilities(&inputs)?
            .into_iter()
            .map(|probs| {
                let best = argmax(&probs);
                Prediction {
                    intent: self.intents[best].clone(),
                    index: best,
                    probs,
                }
            })
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = CheckpointMeta {
            layout: "slu".into(),
            vocabulary: self.vocab.words().to_vec(),
            intents: self.intents.clone(),
            ..Default::default()
        };
        let h = &mut meta.hyperparameters;
        h.insert("encoder".into(), json!(self.encoder.tag()));
        h.insert("input_dim".into(), json!(self.input_dim));
        h.insert("hidden_dim".into(), json!(self.config.hidden_dim));
        h.insert("epochs".into(), json!(self.config.epochs));
        h.insert("batch_size".into(), json!(self.config.batch_size));
        h.insert("lr".into(), json!(self.config.lr));
        h.insert("seed".into(), json!(self.config.seed));
        Checkpoint::from_store(meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.layout != "slu" {
            return Err(Error::Format(format!("expected a slu checkpoint, found {:?}", ck.meta.layout)));
        }
        let encoder = match ck.meta.hyperparameters.get("encoder").and_then(|v| v.as_str()) {
            Some("contextual") => Encoder::Contextual,
            Some("lookup") => Encoder::Lookup,
            other => return Err(Error::Format(format!("unknown classifier encoder {other:?}"))),
        };
        let config = SluConfig {
            hidden_dim: ck.hyper_u64("hidden_dim")? as usize,
            epochs: ck.hyper_u64("epochs")? as usize,
            batch_size: ck.hyper_u64("batch_size")? as usize,
            lr: ck
                .meta
                .hyperparameters
                .get("lr")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Format("checkpoint lacks lr".into()))?,
            seed: ck.hyper_u64("seed")?,
        };
        let vocab = Vocabulary::from_stored(ck.meta.vocabulary.clone())?;
        let mut model = SluModel::new(
            config,
            encoder,
            ck.meta.intents.clone(),
            vocab,
            ck.hyper_u64("input_dim")? as usize,
        )?;
        model.params.load_from(ck.named())?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub intent: String,
    pub index: usize,
    pub probs: Vec<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn labels_for(model: &SluModel, data: &Dataset) -> Result<Vec<usize>> {
    data.utterances
        .iter()
        .map(|u| {
            let label = u
                .intent
                .as_deref()
                .ok_or_else(|| Error::Invalid(format!("utterance {:?} has no intent label", u.id)))?;
            model
                .intent_index(label)
                .ok_or_else(|| Error::Invalid(format!("intent {label:?} of {:?} not in the inventory", u.id)))
        })
        .collect()
}

/// Trains a classifier on `data`. With [`Encoder::Contextual`] the inputs
/// are the frozen states of `lm`; with [`Encoder::Lookup`] the model learns
/// its own `2 * embed_dim` wide embedding over the LM vocabulary.
pub fn train_slu(lm: &BiLm, data: &Dataset, encoder: Encoder, cfg: &SluConfig) -> Result<(SluModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Invalid("classifier training data is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let width = lm.layer_widths()[0];
    let model = SluModel::new(*cfg, encoder, data.intents.clone(), lm.vocab.clone(), width)?;
    let labels = labels_for(&model, data)?;
    let inputs = model.inputs(Some(lm), &data.utterances)?;
    train_on_inputs(model, &inputs, &labels)
}

/// Adam training on prepared inputs; returns the model and per-epoch mean
/// loss.
pub fn train_on_inputs(mut model: SluModel, inputs: &Inputs, labels: &[usize]) -> Result<(SluModel, Vec<f64>)> {
    let cfg = model.config;
    let mut adam = Adam::new(&model.params, AdamConfig::with_lr(cfg.lr));
    let mut rng = rng_for(cfg.seed, "slu-shuffle");
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut g = Graph::new();
            let loss = model.loss_node(&mut g, inputs, batch, labels)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite classifier loss in epoch {epoch}")));
            }
            total += value * batch.len() as f64;
            let grads = g.backward(loss)?;
            adam.step(&mut model.params, &grads)?;
        }
        losses.push(total / inputs.len() as f64);
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilm::BiLmConfig;
    use crate::corpus::{tokens, Channel};

    fn lm() -> BiLm {
        let vocab = Vocabulary::from_words(["play", "jazz", "stop", "music", "lights", "on"].map(String::from));
        BiLm::new(
            BiLmConfig {
                embed_dim: 3,
                hidden_dim: 3,
                seed: 1,
            },
            vocab,
        )
        .unwrap()
    }

    fn state() -> BiLmState {
        BiLmState {
            layers: [
                Tensor::row(vec![1.0, 2.0]),
                Tensor::row(vec![3.0, -1.0]),
                Tensor::row(vec![0.0, 4.0]),
            ],
        }
    }

    #[test]
    fn mixing_identities() {
        let st = state();
        let zero = contextual_embed(&st, &MixWeights { raw_alpha: [0.0; 3], gamma: 0.0 }).unwrap();
        assert_eq!(zero.data(), &[0.0, 0.0]);
        let uniform = contextual_embed(&st, &MixWeights { raw_alpha: [2.0; 3], gamma: 3.0 }).unwrap();
        assert!((uniform.data()[0] - 4.0).abs() < 1e-12);
        assert!((uniform.data()[1] - 5.0).abs() < 1e-12);
        let sat = contextual_embed(&st, &MixWeights { raw_alpha: [50.0, -50.0, -50.0], gamma: 2.0 }).unwrap();
        assert!((sat.data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut st = state();
        st.layers[2] = Tensor::row(vec![1.0, 2.0, 3.0]);
        assert!(contextual_embed(&st, &MixWeights::default()).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn data() -> Dataset {
        let rows = [
            ("a", "play jazz", "music"),
            ("b", "play music", "music"),
            ("c", "lights on", "lights"),
            ("d", "stop lights", "lights"),
        ];
        Dataset::new(
            "toy",
            rows.iter()
                .map(|(id, text, intent)| Utterance::from_text(*id, text, Channel::Manual).unwrap().with_intent(*intent))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn batched_probabilities_match_single() {
        let lm = lm();
        let d = data();
        let model = SluModel::new(SluConfig::default(), Encoder::Contextual, d.intents.clone(), lm.vocab.clone(), 6).unwrap();
        let inputs = model.inputs(Some(&lm), &d.utterances).unwrap();
        let all = model.probabilities(&inputs).unwrap();
        for (i, u) in d.utterances.iter().enumerate() {
            let one = model.inputs(Some(&lm), std::slice::from_ref(u)).unwrap();
            let p = model.probabilities(&one).unwrap().remove(0);
            for (x, y) in p.iter().zip(&all[i]) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lm_untouched_by_training() {
        let lm = lm();
        let before = lm.to_checkpoint().to_bytes().unwrap();
        let cfg = SluConfig {
            epochs: 3,
            hidden_dim: 4,
            ..Default::default()
        };
        let (model, _) = train_slu(&lm, &data(), Encoder::Contextual, &cfg).unwrap();
        assert_eq!(lm.to_checkpoint().to_bytes().unwrap(), before);
        assert!(model.mix().is_some());
    }

    #[test]
    fn unknown_label_rejected() {
        let lm = lm();
        let d = data();
        let model = SluModel::new(SluConfig::default(), Encoder::Lookup, d.intents.clone(), lm.vocab.clone(), 6).unwrap();
        let mut other = d.clone();
        other.utterances[0].intent = Some("weather".into());
        assert!(labels_for(&model, &other).is_err());
        let no_label = Utterance::new("x", tokens(&["on"]), Channel::Manual).unwrap();
        other.utterances[0] = no_label;
        assert!(labels_for(&model, &other).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let lm = lm();
        let d = data();
        let model = SluModel::new(SluConfig::default(), Encoder::Lookup, d.intents.clone(), lm.vocab.clone(), 6).unwrap();
        let back = SluModel::from_checkpoint(&Checkpoint::from_bytes(&model.to_checkpoint().to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(model.predict(None, &d.utterances).unwrap(), back.predict(None, &d.utterances).unwrap());
    }
}
