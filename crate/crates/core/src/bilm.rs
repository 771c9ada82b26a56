//! Bidirectional language model: a token-embedding layer followed by two
//! stacked LSTM layers per direction, each direction with its own softmax
//! over the vocabulary.
//!
//! Layer 0 of the exposed state is the embedding duplicated into both
//! halves; layers 1 and 2 are `[backward; forward]` LSTM outputs. The
//! forward stream reads `<s> w_1 .. w_T`, the backward stream reads
//! `</s> w_T .. w_1`, and the two stacks never exchange information, so the
//! forward half at position `t` depends only on `w_1..w_t` and the backward
//! half only on `w_t..w_T`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{Adam, AdamConfig, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::corpus::{Dataset, Vocabulary, BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::recurrent::LstmCell;
use crate::seed::{derive_seed, rng_for};
use rand::seq::SliceRandom;

pub const LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLmConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for BiLmConfig {
    fn default() -> Self {
        BiLmConfig {
            embed_dim: 32,
            hidden_dim: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
struct Direction {
    layers: [LstmCell; 2],
    out_w: ParamId,
    out_b: ParamId,
}

/// Per-layer hidden vectors of one utterance: `layers[i]` is `T x width_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLmState {
    pub layers: [Tensor; LAYERS],
}

impl BiLmState {
    pub fn len(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h_{t,i}` for 0-based position `t`.
    pub fn vector(&self, t: usize, layer: usize) -> &[f64] {
        self.layers[layer].row_slice(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLmOutput {
    pub state: BiLmState,
    /// Row `t`: log-probabilities of the vocabulary given `w_<t` (and `<s>`).
    pub forward_log_probs: Tensor,
    /// Row `t`: log-probabilities given `w_>t` (and `</s>`).
    pub backward_log_probs: Tensor,
}

/// Graph nodes for a padded batch. Stacked nodes hold step `p` of sequence
/// `b` at row `p * batch + b`.
#[derive(Debug, Clone)]
pub struct BatchNodes {
    pub lens: Vec<usize>,
    pub tokens: Vec<Vec<usize>>,
    pub batch: usize,
    pub embed: NodeId,
    pub forward: [NodeId; 2],
    pub backward: [NodeId; 2],
}

impl BatchNodes {
    /// Rows `h_{t,layer}` for `(sequence, 0-based position)` pairs.
    pub fn states_at(&self, g: &mut Graph, positions: &[(usize, usize)], layer: usize) -> Result<NodeId> {
        if layer == 0 {
            let ids: Vec<usize> = positions.iter().map(|&(b, t)| self.tokens[b][t]).collect();
            let e = g.gather(self.embed, &ids)?;
            return g.concat(&[e, e]);
        }
        let bwd_rows: Vec<usize> = positions
            .iter()
            .map(|&(b, t)| (self.lens[b] - t) * self.batch + b)
            .collect();
        let fwd_rows: Vec<usize> = positions.iter().map(|&(b, t)| (t + 1) * self.batch + b).collect();
        let bwd = g.gather(self.backward[layer - 1], &bwd_rows)?;
        let fwd = g.gather(self.forward[layer - 1], &fwd_rows)?;
        g.concat(&[bwd, fwd])
    }
}

#[derive(Debug, Clone)]
pub struct BiLm {
    pub config: BiLmConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    embed: ParamId,
    forward: Direction,
    backward: Direction,
}

impl BiLm {
    /// Fresh model with seeded Glorot-uniform weights and zero biases.
    pub fn new(config: BiLmConfig, vocab: Vocabulary) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Invalid("embedding and hidden sizes must be at least 1".into()));
        }
        let v = vocab.len();
        let mut rng = rng_for(config.seed, "bilm-init");
        let mut params = ParamStore::new();
        let embed = params.add("lm.embed", Tensor::glorot(v, config.embed_dim, &mut rng));
        let mut direction = |name: &str, params: &mut ParamStore| {
            let l1 = LstmCell::new(params, &format!("lm.{name}.l1"), config.embed_dim, config.hidden_dim, &mut rng);
            let l2 = LstmCell::new(params, &format!("lm.{name}.l2"), config.hidden_dim, config.hidden_dim, &mut rng);
            let out_w = params.add(format!("lm.{name}.out.w"), Tensor::glorot(config.hidden_dim, v, &mut rng));
            let out_b = params.add(format!("lm.{name}.out.b"), Tensor::zeros(&[1, v]));
            Direction {
                layers: [l1, l2],
                out_w,
                out_b,
            }
        };
        let forward = direction("fwd", &mut params);
        let backward = direction("bwd", &mut params);
        Ok(BiLm {
            config,
            vocab,
            params,
            embed,
            forward,
            backward,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Widths of layers 0, 1, 2.
    pub fn layer_widths(&self) -> [usize; LAYERS] {
        [2 * self.config.embed_dim, 2 * self.config.hidden_dim, 2 * self.config.hidden_dim]
    }

    /// Output projection parameters `(forward w, forward b, backward w, backward b)`.
    pub fn output_params(&self) -> [ParamId; 4] {
        [self.forward.out_w, self.forward.out_b, self.backward.out_w, self.backward.out_b]
    }

    fn check_tokens(&self, seq: &[usize]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Invalid("language model input must have at least one token".into()));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::Invalid(format!(
                "token index {bad} outside vocabulary of size {}",
                self.vocab.len()
            )));
        }
        Ok(())
    }

    /// Builds both directional stacks for a batch of token-id sequences.
    pub fn forward_batch(&self, g: &mut Graph, seqs: &[Vec<usize>]) -> Result<BatchNodes> {
        if seqs.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        for s in seqs {
            self.check_tokens(s)?;
        }
        let batch = seqs.len();
        let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
        let steps = lens.iter().max().copied().unwrap_or(0) + 1;
        let embed = g.param(&self.params, self.embed);

        let stream = |rev: bool, p: usize| -> Vec<usize> {
            seqs.iter()
                .map(|s| {
                    let t = s.len();
                    match (rev, p) {
                        (false, 0) => BOS_ID,
                        (true, 0) => EOS_ID,
                        (false, p) if p <= t => s[p - 1],
                        (true, p) if p <= t => s[t - p],
                        _ => crate::corpus::PAD_ID,
                    }
                })
                .collect()
        };

        let run = |rev: bool, dir: &Direction, g: &mut Graph| -> Result<[NodeId; 2]> {
            let inputs = (0..steps)
                .map(|p| g.gather(embed, &stream(rev, p)))
                .collect::<Result<Vec<_>>>()?;
            let h1 = dir.layers[0].run(g, &self.params, &inputs)?;
            let h2 = dir.layers[1].run(g, &self.params, &h1)?;
            Ok([g.stack_rows(&h1)?, g.stack_rows(&h2)?])
        };
        let forward = run(false, &self.forward, g)?;
        let backward = run(true, &self.backward, g)?;
        Ok(BatchNodes {
            lens,
            tokens: seqs.to_vec(),
            batch,
            embed,
            forward,
            backward,
        })
    }

    /// Log-probability nodes over the vocabulary for every real position:
    /// `(forward rows, backward rows)`, each `sum(T_b) x V`, sequence-major.
    fn log_probs(&self, g: &mut Graph, nodes: &BatchNodes) -> Result<(NodeId, NodeId)> {
        let b = nodes.batch;
        let mut fwd_rows = Vec::new();
        let mut bwd_rows = Vec::new();
        for (s, &t_len) in nodes.lens.iter().enumerate() {
            for t in 0..t_len {
                // forward state after reading w_1..w_{t}; backward after w_{t+2}..w_T
                fwd_rows.push(t * b + s);
                bwd_rows.push((t_len - 1 - t) * b + s);
            }
        }
        let head = |dir: &Direction, top: NodeId, rows: &[usize], g: &mut Graph| -> Result<NodeId> {
            let h = g.gather(top, rows)?;
            let w = g.param(&self.params, dir.out_w);
            let bias = g.param(&self.params, dir.out_b);
            let z = g.matmul(h, w)?;
            let z = g.add(z, bias)?;
            let p = g.softmax(z)?;
            Ok(g.log(p))
        };
        let f = head(&self.forward, nodes.forward[1], &fwd_rows, g)?;
        let bw = head(&self.backward, nodes.backward[1], &bwd_rows, g)?;
        Ok((f, bw))
    }

    /// `sum_b weight_b * L_LM(sequence b)` where
    /// `L_LM = (1/T) sum_t [-log p(w_t | w_<t) - log p(w_t | w_>t)]`.
    pub fn lm_loss_node(&self, g: &mut Graph, nodes: &BatchNodes, weights: &[f64]) -> Result<NodeId> {
        let (f, bw) = self.log_probs(g, nodes)?;
        let v = self.vocab.len();
        let total: usize = nodes.lens.iter().sum();
        let mut pick = vec![0.0; total * v];
        let mut row = 0;
        for (s, seq) in nodes.tokens.iter().enumerate() {
            let w = weights[s] / seq.len() as f64;
            for &tok in seq {
                pick[row * v + tok] = -w;
                row += 1;
            }
        }
        let pick = g.constant(Tensor::matrix(total, v, pick)?);
        let lf = g.mul(f, pick)?;
        let lb = g.mul(bw, pick)?;
        let lf = g.sum(lf);
        let lb = g.sum(lb);
        g.add(lf, lb)
    }

    /// Bidirectional LM loss of one utterance.
    pub fn lm_loss(&self, tokens: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.forward_batch(&mut g, &[tokens.to_vec()])?;
        let loss = self.lm_loss_node(&mut g, &nodes, &[1.0])?;
        Ok(g.value(loss).item())
    }

    /// Hidden states and both directions' predictive distributions.
    pub fn forward(&self, tokens: &[usize]) -> Result<BiLmOutput> {
        let mut g = Graph::new();
        let nodes = self.forward_batch(&mut g, &[tokens.to_vec()])?;
        let (f, bw) = self.log_probs(&mut g, &nodes)?;
        let state = self.collect_states(&mut g, &nodes)?.remove(0);
        Ok(BiLmOutput {
            state,
            forward_log_probs: g.value(f).clone(),
            backward_log_probs: g.value(bw).clone(),
        })
    }

    /// States for many sequences, computed in chunks of `chunk` sequences.
    pub fn states(&self, seqs: &[Vec<usize>], chunk: usize) -> Result<Vec<BiLmState>> {
        let mut out = Vec::with_capacity(seqs.len());
        for part in seqs.chunks(chunk.max(1)) {
            let mut g = Graph::new();
            let nodes = self.forward_batch(&mut g, part)?;
            out.extend(self.collect_states(&mut g, &nodes)?);
        }
        Ok(out)
    }

    fn collect_states(&self, g: &mut Graph, nodes: &BatchNodes) -> Result<Vec<BiLmState>> {
        (0..nodes.batch)
            .map(|b| {
                let pos: Vec<(usize, usize)> = (0..nodes.lens[b]).map(|t| (b, t)).collect();
                let l0 = nodes.states_at(g, &pos, 0)?;
                let l1 = nodes.states_at(g, &pos, 1)?;
                let l2 = nodes.states_at(g, &pos, 2)?;
                Ok(BiLmState {
                    layers: [g.value(l0).clone(), g.value(l1).clone(), g.value(l2).clone()],
                })
            })
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = CheckpointMeta {
            layout: "bilm".into(),
            vocabulary: self.vocab.words().to_vec(),
            ..Default::default()
        };
        meta.hyperparameters.insert("embed_dim".into(), json!(self.config.embed_dim));
        meta.hyperparameters.insert("hidden_dim".into(), json!(self.config.hidden_dim));
        meta.hyperparameters.insert("seed".into(), json!(self.config.seed));
        Checkpoint::from_store(meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.layout != "bilm" {
            return Err(Error::Format(format!("expected a bilm checkpoint, found {:?}", ck.meta.layout)));
        }
        let config = BiLmConfig {
            embed_dim: ck.hyper_u64("embed_dim")? as usize,
            hidden_dim: ck.hyper_u64("hidden_dim")? as usize,
            seed: ck.hyper_u64("seed")?,
        };
        let vocab = Vocabulary::from_stored(ck.meta.vocabulary.clone())?;
        let mut lm = BiLm::new(config, vocab)?;
        lm.params.load_from(ck.named().filter(|(n, _)| n.starts_with("lm.")))?;
        Ok(lm)
    }
}

/// Mean LM loss over `seqs` (equal weights), for evaluation.
pub fn mean_lm_loss(lm: &BiLm, seqs: &[Vec<usize>], chunk: usize) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::Invalid("mean loss over no sequences".into()));
    }
    let mut total = 0.0;
    for part in seqs.chunks(chunk.max(1)) {
        let mut g = Graph::new();
        let nodes = lm.forward_batch(&mut g, part)?;
        let loss = lm.lm_loss_node(&mut g, &nodes, &vec![1.0; part.len()])?;
        total += g.value(loss).item();
    }
    Ok(total / seqs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub lm: BiLm,
    /// Mean per-utterance loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh model on `corpus` with Adam; the shuffle order of every
/// epoch is derived from the config seed.
pub fn pretrain(
    config: BiLmConfig,
    vocab: Vocabulary,
    corpus: &Dataset,
    schedule: &TrainSchedule,
) -> Result<Pretrained> {
    if corpus.is_empty() {
        return Err(Error::Invalid("pre-training corpus is empty".into()));
    }
    let mut lm = BiLm::new(config, vocab)?;
    let seqs: Vec<Vec<usize>> = corpus.utterances.iter().map(|u| lm.vocab.encode(&u.tokens)).collect();
    let epoch_losses = train_lm_epochs(&mut lm, &seqs, schedule, derive_seed(config.seed, "pretrain-shuffle"))?;
    Ok(Pretrained { lm, epoch_losses })
}

pub(crate) fn train_lm_epochs(
    lm: &mut BiLm,
    seqs: &[Vec<usize>],
    schedule: &TrainSchedule,
    shuffle_seed: u64,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(&lm.params, AdamConfig::with_lr(schedule.lr));
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut losses = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(schedule.batch_size.max(1)) {
            let batch: Vec<Vec<usize>> = idx.iter().map(|&i| seqs[i].clone()).collect();
            let mut g = Graph::new();
            let nodes = lm.forward_batch(&mut g, &batch)?;
            let w = 1.0 / batch.len() as f64;
            let loss = lm.lm_loss_node(&mut g, &nodes, &vec![w; batch.len()])?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite LM loss in epoch {}", epoch + 1)));
            }
            total += value * batch.len() as f64;
            let grads = g.backward(loss)?;
            adam.step(&mut lm.params, &grads)?;
        }
        losses.push(total / seqs.len() as f64);
    }
    Ok(losses)
}
