// Fine-tunes a pre-trained language model on recognizer confusions and
// reports how close the hidden states of confused words move together.
//
//     cargo run --example confusion_finetune

use aclb::bilm::{pretrain, BiLmConfig, TrainSchedule};
use aclb::corpus::{vocabulary, Dataset, StopWordList};
use aclb::eval::{generate, synthesize_noisy, NoiseSpec, SyntheticConfig};
use aclb::finetune::{joint_finetune, lm_only_finetune, mean_pair_similarity, ConfusionBatch, FinetuneConfig};

pub fn main() {
    let bench = generate(&SyntheticConfig {
        adapt: 200,
        general: 300,
        seed: 9,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let spec = NoiseSpec {
        confusions: bench.confusions.clone(),
        seed: 9,
        ..NoiseSpec::rates(0.25, 0.0, 0.0)
    };
    let (pairs, _) = synthesize_noisy(&bench.adapt, &spec).unwrap();
    let batch = ConfusionBatch::supervised(&pairs, &StopWordList::default_english()).unwrap();
    println!("examples: {}, confusion pairs: {}", batch.len(), batch.pair_count());

    let asr = Dataset::new("adapt-asr", pairs.iter().map(|p| p.asr.clone()).collect()).unwrap();
    let vocab = vocabulary(&[&bench.general, &bench.adapt, &asr], 1);
    let config = BiLmConfig {
        embed_dim: 8,
        hidden_dim: 8,
        seed: 9,
    };
    let schedule = TrainSchedule {
        epochs: 3,
        batch_size: 32,
        lr: 0.01,
    };
    let base = pretrain(config, vocab, &bench.general, &schedule).unwrap().lm;

    let cfg = FinetuneConfig {
        epochs: 4,
        lr: 0.01,
        seed: 9,
        ..FinetuneConfig::default()
    };
    let joint = joint_finetune(&base, &batch, &cfg).unwrap();
    let lm_only = lm_only_finetune(&base, &batch, &cfg).unwrap();
    for (i, t) in joint.trace.iter().enumerate() {
        println!("epoch {}: L_LM {:.3}  L_conf {:.3}  total {:.3}", i + 1, t.lm, t.conf, t.total);
    }

    let sim = |lm| mean_pair_similarity(lm, &batch).unwrap().expect("batch has pairs");
    let (before, plain, after) = (sim(&base), sim(&lm_only.lm), sim(&joint.lm));
    println!("pair similarity: pretrained {before:.3}, lm-only {plain:.3}, joint {after:.3}");
    assert!(after > before);
}
