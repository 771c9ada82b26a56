// Aligns a manual transcript with a recognizer output, reports the word
// error rate and lists the substitutions kept as acoustic confusions.
//
//     cargo run --example align

use aclb::alignment::{edit_distance_align, extract_supervised_confusions, word_error_rate};
use aclb::corpus::{tokenize, StopWordList, TranscriptPair};

pub fn main() {
    let manual = tokenize("show me the fair from boston to denver");
    let asr = tokenize("show me a fare from boston denver");

    let alignment = edit_distance_align(&manual, &asr);
    println!("{alignment}");
    println!("edits: {}", alignment.cost);

    let wer = word_error_rate(&manual, &asr).expect("non-empty reference");
    println!("WER: {wer:.3}");
    assert!((wer - 3.0 / 8.0).abs() < 1e-12);

    let pair = TranscriptPair::new("rec-1", manual, asr).expect("valid pair");
    let confusions = extract_supervised_confusions(&pair, &StopWordList::default_english());
    for c in &confusions {
        println!(
            "{}[{}] {} <-> {}[{}] {}",
            c.left.utterance,
            c.left.index,
            c.left.token.as_str(),
            c.right.utterance,
            c.right.index,
            c.right.token.as_str()
        );
    }
    // "the" -> "a" involves stop words and is dropped.
    assert_eq!(confusions.len(), 1);
    assert_eq!(confusions[0].left.token.as_str(), "fair");
}
