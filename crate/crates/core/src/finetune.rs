//! Confusion-aware fine-tuning.
//!
//! The confusion loss of two utterances `x1`, `x2` with aligned word pairs
//! `C` is
//!
//! ```text
//! L_conf = 1/|C| * sum_{(t1,t2) in C} sum_{i in {0,1}} [1 - cos(h^{x1}_{t1,i}, h^{x2}_{t2,i})]
//! ```
//!
//! and the training objective is `L_FT = L_LM + beta * L_conf`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alignment::extract_supervised_confusions;
use crate::autodiff::{Adam, AdamConfig, Graph, NodeId, Tensor, COSINE_EPS};
use crate::bilm::{BatchNodes, BiLm, BiLmState};
use crate::corpus::{ConfusionPair, NBestList, StopWordList, TranscriptPair, Utterance};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::wcn::{build_wcn, extract_unsupervised_confusions};

/// LM layers whose states enter the confusion loss.
pub const CONFUSION_LAYERS: [usize; 2] = [0, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Supervised,
    Unsupervised,
    /// Plain text without confusion pairs.
    Text,
}

/// One or two utterances and the aligned positions `(t1, t2)` of their
/// confusable words.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionExample {
    pub first: Utterance,
    pub second: Option<Utterance>,
    pub pairs: Vec<(usize, usize)>,
}

impl ConfusionExample {
    pub fn new(first: Utterance, second: Option<Utterance>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        match &second {
            None if !pairs.is_empty() => {
                return Err(Error::Invalid(format!(
                    "confusion pairs for {:?} need a second utterance",
                    first.id
                )))
            }
            Some(s) => {
                if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= first.len() || b >= s.len()) {
                    return Err(Error::Invalid(format!(
                        "confusion position ({a}, {b}) outside {:?} (len {}) / {:?} (len {})",
                        first.id,
                        first.len(),
                        s.id,
                        s.len()
                    )));
                }
            }
            None => {}
        }
        Ok(ConfusionExample { first, second, pairs })
    }

    pub fn single(u: Utterance) -> Self {
        ConfusionExample {
            first: u,
            second: None,
            pairs: Vec::new(),
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        std::iter::once(&self.first).chain(self.second.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionBatch {
    pub provenance: Provenance,
    pub examples: Vec<ConfusionExample>,
}

impl ConfusionBatch {
    /// Manual/recognized pairs with their substitution confusions.
    pub fn supervised(pairs: &[TranscriptPair], stops: &StopWordList) -> Result<Self> {
        let examples = pairs
            .iter()
            .map(|p| {
                let c = extract_supervised_confusions(p, stops)
                    .iter()
                    .map(|c| (c.left.index, c.right.index))
                    .collect();
                ConfusionExample::new(p.manual.clone(), Some(p.asr.clone()), c)
            })
            .collect::<Result<_>>()?;
        Ok(ConfusionBatch {
            provenance: Provenance::Supervised,
            examples,
        })
    }

    /// Confusions mined from confusion networks over the top `max_hyps`
    /// hypotheses. Pairs are grouped by the two hypotheses they connect; a
    /// recording without confusions contributes its top two hypotheses (or
    /// its only one) as text.
    pub fn unsupervised(nbests: &[NBestList], stops: &StopWordList, max_hyps: usize) -> Result<Self> {
        let mut examples = Vec::new();
        for nb in nbests {
            let nb = nb.truncated(max_hyps);
            let cn = build_wcn(&nb)?;
            let mined = extract_unsupervised_confusions(&cn, stops);
            if mined.is_empty() {
                examples.push(ConfusionExample::new(
                    nb.hypotheses[0].clone(),
                    nb.hypotheses.get(1).cloned(),
                    Vec::new(),
                )?);
                continue;
            }
            let by_id: BTreeMap<&str, &Utterance> = nb.hypotheses.iter().map(|u| (u.id.as_str(), u)).collect();
            examples.extend(group_pairs(&mined, |id| by_id.get(id).copied())?);
        }
        Ok(ConfusionBatch {
            provenance: Provenance::Unsupervised,
            examples,
        })
    }

    /// Pairs read from a confusion file, resolved against `utterances`.
    /// Utterances no pair refers to are kept as text.
    pub fn from_pairs(pairs: &[ConfusionPair], utterances: &[Utterance], provenance: Provenance) -> Result<Self> {
        let by_id: BTreeMap<&str, &Utterance> = utterances.iter().map(|u| (u.id.as_str(), u)).collect();
        let mut examples = group_pairs(pairs, |id| by_id.get(id).copied())?;
        let used: BTreeSet<&str> = pairs
            .iter()
            .flat_map(|p| [p.left.utterance.as_str(), p.right.utterance.as_str()])
            .collect();
        examples.extend(
            utterances
                .iter()
                .filter(|u| !used.contains(u.id.as_str()))
                .map(|u| ConfusionExample::single(u.clone())),
        );
        Ok(ConfusionBatch { provenance, examples })
    }

    /// Plain text for LM-only adaptation.
    pub fn text(utterances: &[Utterance]) -> Self {
        ConfusionBatch {
            provenance: Provenance::Text,
            examples: utterances.iter().cloned().map(ConfusionExample::single).collect(),
        }
    }

    /// Same utterances and grouping with every pair set emptied.
    pub fn without_pairs(&self) -> Self {
        ConfusionBatch {
            provenance: self.provenance,
            examples: self
                .examples
                .iter()
                .map(|e| ConfusionExample {
                    pairs: Vec::new(),
                    ..e.clone()
                })
                .collect(),
        }
    }

    pub fn pair_count(&self) -> usize {
        self.examples.iter().map(|e| e.pairs.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

fn group_pairs<'a, F>(pairs: &[ConfusionPair], lookup: F) -> Result<Vec<ConfusionExample>>
where
    F: Fn(&str) -> Option<&'a Utterance>,
{
    let mut groups: BTreeMap<(&str, &str), Vec<(usize, usize)>> = BTreeMap::new();
    for p in pairs {
        for occ in [&p.left, &p.right] {
            let u = lookup(&occ.utterance)
                .ok_or_else(|| Error::Invalid(format!("confusion refers to unknown utterance {:?}", occ.utterance)))?;
            if u.tokens.get(occ.index) != Some(&occ.token) {
                return Err(Error::Invalid(format!(
                    "confusion token {:?} does not occur at position {} of {:?}",
                    occ.token.as_str(),
                    occ.index,
                    occ.utterance
                )));
            }
        }
        groups
            .entry((&p.left.utterance, &p.right.utterance))
            .or_default()
            .push((p.left.index, p.right.index));
    }
    groups
        .into_iter()
        .map(|((a, b), pos)| {
            let first = lookup(a).expect("checked above").clone();
            let second = lookup(b).expect("checked above").clone();
            ConfusionExample::new(first, Some(second), pos)
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < COSINE_EPS || nb < COSINE_EPS {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// `L_conf` of one utterance pair. Layer terms with a (near-)zero vector
/// are skipped.
pub fn confusion_loss(s1: &BiLmState, s2: &BiLmState, pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("confusion loss over an empty pair set".into()));
    }
    let mut total = 0.0;
    for &(t1, t2) in pairs {
        if t1 >= s1.len() || t2 >= s2.len() {
            return Err(Error::Invalid(format!(
                "confusion position ({t1}, {t2}) outside states of length {} / {}",
                s1.len(),
                s2.len()
            )));
        }
        for layer in CONFUSION_LAYERS {
            if let Some(c) = cosine(s1.vector(t1, layer), s2.vector(t2, layer)) {
                total += 1.0 - c;
            }
        }
    }
    Ok(total / pairs.len() as f64)
}

/// Mean cosine similarity over every pair and confusion layer, measured on
/// fresh forward passes. `None` when the batch has no pairs.
pub fn mean_pair_similarity(lm: &BiLm, batch: &ConfusionBatch) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ex in batch.examples.iter().filter(|e| !e.pairs.is_empty()) {
        let second = ex.second.as_ref().expect("pairs imply a second utterance");
        let s1 = lm.forward(&lm.vocab.encode(&ex.first.tokens))?.state;
        let s2 = lm.forward(&lm.vocab.encode(&second.tokens))?.state;
        for &(t1, t2) in &ex.pairs {
            for layer in CONFUSION_LAYERS {
                if let Some(c) = cosine(s1.vector(t1, layer), s2.vector(t2, layer)) {
                    sum += c;
                    n += 1;
                }
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            beta: 0.1,
            epochs: 3,
            batch_size: 64,
            lr: 0.001,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Epoch means of the three objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub lm: f64,
    /// Mean over steps with at least one confusion pair; 0 when there were none.
    pub conf: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub lm: BiLm,
    pub trace: Vec<EpochTrace>,
}

/// Step objective for a slice of examples. Returns the loss node and the
/// `(L_LM, L_conf)` node pair; `L_conf` is absent when `beta` is zero or no
/// example carries pairs.
pub fn step_loss(
    g: &mut Graph,
    lm: &BiLm,
    examples: &[&ConfusionExample],
    beta: f64,
) -> Result<(NodeId, NodeId, Option<NodeId>)> {
    let mut seqs = Vec::new();
    let mut slots = Vec::with_capacity(examples.len());
    for ex in examples {
        let first = seqs.len();
        seqs.push(lm.vocab.encode(&ex.first.tokens));
        let second = ex.second.as_ref().map(|s| {
            seqs.push(lm.vocab.encode(&s.tokens));
            seqs.len() - 1
        });
        slots.push((first, second));
    }
    let nodes = lm.forward_batch(g, &seqs)?;
    let w = 1.0 / seqs.len() as f64;
    let lm_loss = lm.lm_loss_node(g, &nodes, &vec![w; seqs.len()])?;

    let with_pairs: Vec<(usize, &ConfusionExample)> = examples
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.pairs.is_empty())
        .map(|(i, e)| (i, *e))
        .collect();
    if beta == 0.0 || with_pairs.is_empty() {
        return Ok((lm_loss, lm_loss, None));
    }
    let conf = conf_node(g, &nodes, &slots, &with_pairs)?;
    let scaled = g.scale(conf, beta);
    let total = g.add(lm_loss, scaled)?;
    Ok((total, lm_loss, Some(conf)))
}

fn conf_node(
    g: &mut Graph,
    nodes: &BatchNodes,
    slots: &[(usize, Option<usize>)],
    with_pairs: &[(usize, &ConfusionExample)],
) -> Result<NodeId> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut weights = Vec::new();
    for &(i, ex) in with_pairs {
        let (a, b) = slots[i];
        let b = b.expect("pairs imply a second utterance");
        let w = 1.0 / (ex.pairs.len() * with_pairs.len()) as f64;
        for &(t1, t2) in &ex.pairs {
            left.push((a, t1));
            right.push((b, t2));
            weights.push(w);
        }
    }
    let mut cos_sum = None;
    let mut constant = 0.0;
    for layer in CONFUSION_LAYERS {
        let l = nodes.states_at(g, &left, layer)?;
        let r = nodes.states_at(g, &right, layer)?;
        let (lv, rv) = (g.value(l), g.value(r));
        let layer_w: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let usable = cosine(lv.row_slice(k), rv.row_slice(k)).is_some();
                if usable {
                    w
                } else {
                    0.0
                }
            })
            .collect();
        constant += layer_w.iter().sum::<f64>();
        let c = g.cosine(l, r)?;
        let wn = g.constant(Tensor::matrix(layer_w.len(), 1, layer_w)?);
        let weighted = g.mul(c, wn)?;
        let s = g.sum(weighted);
        cos_sum = Some(match cos_sum {
            None => s,
            Some(prev) => g.add(prev, s)?,
        });
    }
    let neg = g.neg(cos_sum.expect("two layers"));
    let k = g.constant(Tensor::scalar(constant));
    g.add(neg, k)
}

/// Minimizes `L_LM + beta * L_conf` with a fresh Adam state. Example order
/// is reshuffled every epoch from the config seed.
pub fn joint_finetune(lm: &BiLm, batch: &ConfusionBatch, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::Invalid("fine-tuning data is empty".into()));
    }
    let mut lm = lm.clone();
    let mut adam = Adam::new(&lm.params, AdamConfig::with_lr(cfg.lr));
    let mut rng = rng_for(cfg.seed, "finetune-shuffle");
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut lm_sum, mut conf_sum, mut total_sum) = (0.0, 0.0, 0.0);
        let (mut steps, mut conf_steps) = (0usize, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let examples: Vec<&ConfusionExample> = idx.iter().map(|&i| &batch.examples[i]).collect();
            let mut g = Graph::new();
            let (loss, lm_node, conf_node) = step_loss(&mut g, &lm, &examples, cfg.beta)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite fine-tuning loss at epoch {epoch}, step {}",
                    steps + 1
                )));
            }
            lm_sum += g.value(lm_node).item();
            if let Some(c) = conf_node {
                conf_sum += g.value(c).item();
                conf_steps += 1;
            }
            total_sum += value;
            steps += 1;
            let grads = g.backward(loss)?;
            adam.step(&mut lm.params, &grads)?;
        }
        trace.push(EpochTrace {
            lm: lm_sum / steps as f64,
            conf: if conf_steps > 0 { conf_sum / conf_steps as f64 } else { 0.0 },
            total: total_sum / steps as f64,
        });
    }
    Ok(FinetuneOutcome { lm, trace })
}

/// The `L_LM`-only baseline: the same utterances, grouping and shuffle as
/// [`joint_finetune`], with no confusion term.
pub fn lm_only_finetune(lm: &BiLm, batch: &ConfusionBatch, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    let cfg = FinetuneConfig { beta: 0.0, ..*cfg };
    joint_finetune(lm, &batch.without_pairs(), &cfg)
}
