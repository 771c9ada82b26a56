// Trains an intent classifier on the mixed hidden states of a frozen
// language model and scores it on clean and noisy test sets.
//
//     cargo run --example intent_classifier

use aclb::bilm::{pretrain, BiLmConfig, TrainSchedule};
use aclb::corpus::{vocabulary, Dataset};
use aclb::eval::{accuracy, generate, synthesize_noisy, NoiseSpec, SyntheticConfig};
use aclb::slu::{train_slu, Encoder, SluConfig};

pub fn main() {
    let bench = generate(&SyntheticConfig {
        train: 300,
        test: 100,
        general: 300,
        seed: 4,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let vocab = vocabulary(&[&bench.general, &bench.train], 1);
    let config = BiLmConfig {
        embed_dim: 8,
        hidden_dim: 8,
        seed: 4,
    };
    let schedule = TrainSchedule {
        epochs: 3,
        batch_size: 32,
        lr: 0.01,
    };
    let lm = pretrain(config, vocab, &bench.general, &schedule).unwrap().lm;

    let cfg = SluConfig {
        hidden_dim: 8,
        epochs: 40,
        lr: 0.01,
        seed: 4,
        ..SluConfig::default()
    };
    let (model, losses) = train_slu(&lm, &bench.train, Encoder::Contextual, &cfg).unwrap();
    println!("training loss: {:.3} -> {:.3}", losses[0], losses[losses.len() - 1]);
    let mix = model.mix().expect("contextual encoder");
    println!("layer weights {:?}, scale {:.3}", mix.alphas().map(|a| (a * 1000.0).round() / 1000.0), mix.gamma);

    let spec = NoiseSpec {
        confusions: bench.confusions.clone(),
        seed: 4,
        ..NoiseSpec::rates(0.25, 0.0, 0.0)
    };
    let (pairs, _) = synthesize_noisy(&bench.test, &spec).unwrap();
    let noisy = Dataset::new("test-asr", pairs.into_iter().map(|p| p.asr).collect()).unwrap();

    for set in [&bench.test, &noisy] {
        let preds = model.predict(Some(&lm), &set.utterances).unwrap();
        let got: Vec<&str> = preds.iter().map(|p| p.intent.as_str()).collect();
        let gold: Vec<&str> = set.utterances.iter().map(|u| u.intent.as_deref().unwrap()).collect();
        println!("{}: accuracy {:.3}", set.name, accuracy(&got, &gold).unwrap());
    }
    let first = &model.predict(Some(&lm), &bench.test.utterances[..1]).unwrap()[0];
    println!("\"{}\" -> {} {:?}", bench.test.utterances[0].text(), first.intent, first.probs);
    assert!(losses[losses.len() - 1] < losses[0]);
}
