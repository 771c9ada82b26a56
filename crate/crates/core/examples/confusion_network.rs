// Builds a word confusion network from an n-best list and mines the word
// pairs that compete for the same slot.
//
//     cargo run --example confusion_network

use aclb::corpus::{tokenize, NBestList, StopWordList};
use aclb::wcn::{build_wcn, extract_unsupervised_confusions};

pub fn main() {
    let hyps = vec![
        tokenize("list flights to boston"),
        tokenize("list flight to boston"),
        tokenize("list flights to austin"),
        tokenize("list the flights to boston"),
    ];
    let nbest = NBestList::new("rec-7", hyps.clone(), Some(vec![0.4, 0.3, 0.2, 0.1])).expect("valid list");
    let cn = build_wcn(&nbest).expect("non-empty list");
    print!("{}", cn.to_text());

    for (rank, h) in hyps.iter().enumerate() {
        assert_eq!(cn.path(rank + 1).as_ref(), Some(h));
    }

    let pairs = extract_unsupervised_confusions(&cn, &StopWordList::default_english());
    for p in &pairs {
        println!(
            "{} {} <-> {} {}",
            p.left.utterance,
            p.left.token.as_str(),
            p.right.utterance,
            p.right.token.as_str()
        );
    }
    let words: Vec<(&str, &str)> = pairs.iter().map(|p| (p.left.token.as_str(), p.right.token.as_str())).collect();
    assert!(words.contains(&("flights", "flight")));
    assert!(words.contains(&("boston", "austin")));
}
