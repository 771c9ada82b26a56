// Corrupts a synthetic in-domain corpus with a word-level noise channel and
// checks that the measured word error rate tracks the substitution rate.
//
//     cargo run --example noise_channel

use aclb::alignment::corpus_word_error_rate;
use aclb::eval::{generate, synthesize_noisy, NoiseSpec, SyntheticConfig};

pub fn main() {
    let bench = generate(&SyntheticConfig {
        train: 400,
        seed: 3,
        ..SyntheticConfig::default()
    })
    .expect("valid config");

    let spec = NoiseSpec {
        confusions: bench.confusions.clone(),
        n_best: 3,
        seed: 3,
        ..NoiseSpec::rates(0.2, 0.0, 0.0)
    };
    let (pairs, nbest) = synthesize_noisy(&bench.train, &spec).expect("valid spec");
    for p in pairs.iter().take(3) {
        println!("{:<10} {}", p.manual.id, p.manual.text());
        println!("{:<10} {}", p.asr.id, p.asr.text());
    }
    println!("n-best lists: {}, hypotheses each: {}", nbest.len(), nbest[0].len());

    let wer = corpus_word_error_rate(pairs.iter().map(|p| (&p.manual.tokens[..], &p.asr.tokens[..]))).unwrap();
    println!("corpus WER at p_sub = 0.2: {wer:.3}");
    assert!((wer - 0.2).abs() < 0.03);
}
