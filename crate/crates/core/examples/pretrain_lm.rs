// Pre-trains a small bidirectional LSTM language model on a synthetic
// general-domain corpus, then checks that a checkpoint reproduces its
// outputs exactly.
//
//     cargo run --example pretrain_lm

use aclb::bilm::{pretrain, BiLm, BiLmConfig, TrainSchedule};
use aclb::checkpoint::Checkpoint;
use aclb::corpus::vocabulary;
use aclb::eval::{generate, SyntheticConfig};

pub fn main() {
    let bench = generate(&SyntheticConfig {
        general: 300,
        seed: 5,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let vocab = vocabulary(&[&bench.general], 1);
    let config = BiLmConfig {
        embed_dim: 8,
        hidden_dim: 8,
        seed: 5,
    };
    let schedule = TrainSchedule {
        epochs: 4,
        batch_size: 32,
        lr: 0.01,
    };
    let run = pretrain(config, vocab, &bench.general, &schedule).unwrap();
    for (i, loss) in run.epoch_losses.iter().enumerate() {
        println!("epoch {}: mean loss {loss:.3}", i + 1);
    }
    assert!(run.epoch_losses.last() < run.epoch_losses.first());

    let lm = run.lm;
    let bytes = lm.to_checkpoint().to_bytes().unwrap();
    println!("checkpoint: {} bytes, {} parameters", bytes.len(), lm.params.size());
    let restored = BiLm::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();

    let probe = lm.vocab.encode(&bench.general.utterances[0].tokens);
    assert_eq!(lm.forward(&probe).unwrap(), restored.forward(&probe).unwrap());
    println!("restored model reproduces forward outputs");
}
