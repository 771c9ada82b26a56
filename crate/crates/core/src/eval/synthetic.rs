//! Synthetic intent benchmark built from pseudo-words.
//!
//! Each intent owns a few keywords, and every keyword has a near-miss
//! twin that differs in one vowel. Near-miss words never occur in clean
//! in-domain text; in the general corpus they appear only among general
//! words, while keywords appear next to their intent's context words. The
//! noise table maps each keyword to its twin, so a recognizer error on a
//! keyword yields a word the pre-trained model associates with nothing
//! intent-related.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Channel, Dataset, Token, Utterance};
use crate::error::{Error, Result};
use crate::seed::rng_for;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const INTENT_NAMES: [&str; 8] = [
    "play_music",
    "set_alarm",
    "get_weather",
    "book_table",
    "switch_lights",
    "find_flight",
    "send_message",
    "add_reminder",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub intents: usize,
    pub keywords_per_intent: usize,
    pub context_per_intent: usize,
    pub fillers: usize,
    pub general_words: usize,
    pub train: usize,
    pub test: usize,
    pub adapt: usize,
    pub general: usize,
    /// Probability that a context word is drawn from the utterance's own intent.
    pub context_purity: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            intents: 5,
            keywords_per_intent: 4,
            context_per_intent: 6,
            fillers: 30,
            general_words: 50,
            train: 1000,
            test: 300,
            adapt: 1000,
            general: 2000,
            context_purity: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub intents: Vec<String>,
    pub keywords: Vec<Vec<String>>,
    pub near_miss: Vec<Vec<String>>,
    pub context: Vec<Vec<String>>,
    pub fillers: Vec<String>,
    pub general: Vec<String>,
}

impl Lexicon {
    pub fn size(&self) -> usize {
        let nested = |v: &Vec<Vec<String>>| v.iter().map(Vec::len).sum::<usize>();
        nested(&self.keywords) + nested(&self.near_miss) + nested(&self.context) + self.fillers.len() + self.general.len()
    }

    /// Keyword/near-miss pairs.
    pub fn confusable_pairs(&self) -> Vec<(String, String)> {
        self.keywords
            .iter()
            .flatten()
            .cloned()
            .zip(self.near_miss.iter().flatten().cloned())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub lexicon: Lexicon,
    /// Labeled clean training utterances.
    pub train: Dataset,
    /// Labeled clean test utterances.
    pub test: Dataset,
    /// Unlabeled in-domain utterances for LM adaptation.
    pub adapt: Dataset,
    /// Unlabeled general-domain LM corpus.
    pub general: Dataset,
    /// Recognizer confusions: keywords to their twins plus random pairings
    /// among the remaining words.
    pub confusions: BTreeMap<String, Vec<(String, f64)>>,
}

struct WordMaker {
    used: BTreeSet<String>,
}

impl WordMaker {
    fn syllable(rng: &mut ChaCha8Rng) -> [u8; 2] {
        [
            CONSONANTS[rng.gen_range(0..CONSONANTS.len())],
            VOWELS[rng.gen_range(0..VOWELS.len())],
        ]
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let w: Vec<u8> = (0..syllables).flat_map(|_| Self::syllable(rng)).collect();
            let w = String::from_utf8(w).expect("ascii");
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    /// A fresh keyword and a twin differing in its last vowel.
    fn twin_pair(&mut self, rng: &mut ChaCha8Rng) -> (String, String) {
        loop {
            let w = self.fresh(rng, 2);
            let mut b = w.clone().into_bytes();
            let last = b.len() - 1;
            let options: Vec<u8> = VOWELS.iter().copied().filter(|&v| v != b[last]).collect();
            b[last] = *options.choose(rng).expect("vowels");
            let twin = String::from_utf8(b).expect("ascii");
            if self.used.insert(twin.clone()) {
                return (w, twin);
            }
            self.used.remove(&w);
        }
    }
}

pub fn generate_lexicon(cfg: &SyntheticConfig) -> Result<Lexicon> {
    if cfg.intents < 2 || cfg.keywords_per_intent == 0 || cfg.context_per_intent == 0 || cfg.fillers == 0 || cfg.general_words == 0 {
        return Err(Error::Config(
            "synthetic benchmark needs >= 2 intents and at least one word of every kind".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.context_purity) {
        return Err(Error::Config(format!("context purity {} outside [0, 1]", cfg.context_purity)));
    }
    let mut rng = rng_for(cfg.seed, "synthetic-lexicon");
    let mut maker = WordMaker { used: BTreeSet::new() };
    let intents = (0..cfg.intents)
        .map(|i| INTENT_NAMES.get(i).map_or_else(|| format!("intent_{i}"), |s| s.to_string()))
        .collect();
    let mut keywords = Vec::new();
    let mut near_miss = Vec::new();
    for _ in 0..cfg.intents {
        let (k, n): (Vec<_>, Vec<_>) = (0..cfg.keywords_per_intent).map(|_| maker.twin_pair(&mut rng)).unzip();
        keywords.push(k);
        near_miss.push(n);
    }
    let context = (0..cfg.intents)
        .map(|_| (0..cfg.context_per_intent).map(|_| maker.fresh(&mut rng, 3)).collect())
        .collect();
    let fillers = (0..cfg.fillers)
        .map(|_| {
            let syllables = 1 + rng.gen::<bool>() as usize;
            maker.fresh(&mut rng, syllables)
        })
        .collect();
    let general = (0..cfg.general_words).map(|_| maker.fresh(&mut rng, 3)).collect();
    Ok(Lexicon {
        intents,
        keywords,
        near_miss,
        context,
        fillers,
        general,
    })
}

const TEMPLATES: [&str; 7] = ["FKC", "FFKC", "FKCC", "KCF", "FKFC", "FCK", "CFKC"];

fn in_domain(lex: &Lexicon, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng, intent: usize) -> Vec<String> {
    let template = TEMPLATES.choose(rng).expect("templates");
    template
        .bytes()
        .map(|slot| match slot {
            b'F' => lex.fillers.choose(rng).expect("fillers").clone(),
            b'K' => lex.keywords[intent].choose(rng).expect("keywords").clone(),
            _ => {
                let owner = if rng.gen::<f64>() < cfg.context_purity {
                    intent
                } else {
                    rng.gen_range(0..lex.intents.len())
                };
                lex.context[owner].choose(rng).expect("context").clone()
            }
        })
        .collect()
}

fn general_sentence(lex: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<String> {
    let g = |rng: &mut ChaCha8Rng| lex.general.choose(rng).expect("general").clone();
    let intent = rng.gen_range(0..lex.intents.len());
    match rng.gen_range(0..5) {
        0 | 1 => {
            let k = lex.keywords[intent].choose(rng).expect("keywords").clone();
            let c = lex.context[intent].choose(rng).expect("context").clone();
            vec![g(rng), k, c, g(rng)]
        }
        2 | 3 => {
            let n = lex.near_miss[intent].choose(rng).expect("near miss").clone();
            vec![g(rng), g(rng), n, g(rng)]
        }
        _ => {
            let f = lex.fillers.choose(rng).expect("fillers").clone();
            vec![f, g(rng), g(rng), g(rng)]
        }
    }
}

fn utterance(id: String, words: &[String], intent: Option<&str>) -> Result<Utterance> {
    let tokens = words.iter().map(|w| Token::new(w)).collect::<Result<Vec<_>>>()?;
    let u = Utterance::new(id, tokens, Channel::Manual)?;
    Ok(match intent {
        Some(i) => u.with_intent(i),
        None => u,
    })
}

fn labeled(lex: &Lexicon, cfg: &SyntheticConfig, name: &str, n: usize) -> Result<Dataset> {
    let mut rng = rng_for(cfg.seed, &format!("synthetic-{name}"));
    let utts = (0..n)
        .map(|i| {
            let intent = i % lex.intents.len();
            let words = in_domain(lex, cfg, &mut rng, intent);
            utterance(format!("{name}{i:05}"), &words, Some(&lex.intents[intent]))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, utts)
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    let lexicon = generate_lexicon(cfg)?;
    let train = labeled(&lexicon, cfg, "train", cfg.train)?;
    let test = labeled(&lexicon, cfg, "test", cfg.test)?;
    let mut adapt = labeled(&lexicon, cfg, "adapt", cfg.adapt)?;
    for u in &mut adapt.utterances {
        u.intent = None;
    }
    adapt.intents.clear();
    let mut rng = rng_for(cfg.seed, "synthetic-general");
    let general = Dataset::new(
        "general",
        (0..cfg.general)
            .map(|i| utterance(format!("gen{i:05}"), &general_sentence(&lexicon, &mut rng), None))
            .collect::<Result<Vec<_>>>()?,
    )?;

    let mut confusions = BTreeMap::new();
    for (k, n) in lexicon.confusable_pairs() {
        confusions.insert(k.clone(), vec![(n.clone(), 1.0)]);
        confusions.insert(n, vec![(k, 1.0)]);
    }
    let mut rng = rng_for(cfg.seed, "synthetic-confusions");
    let others: Vec<&String> = lexicon
        .context
        .iter()
        .flatten()
        .chain(&lexicon.fillers)
        .chain(&lexicon.general)
        .collect();
    let pool: Vec<&String> = lexicon.fillers.iter().chain(&lexicon.general).collect();
    for w in others {
        let partner = loop {
            let p = pool.choose(&mut rng).expect("pool");
            if *p != w {
                break (*p).clone();
            }
        };
        confusions.insert(w.clone(), vec![(partner, 1.0)]);
    }
    Ok(SyntheticBenchmark {
        lexicon,
        train,
        test,
        adapt,
        general,
        confusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let cfg = SyntheticConfig::default();
        let b = generate(&cfg).unwrap();
        assert_eq!(b.lexicon.size(), 150);
        assert_eq!(b.lexicon.confusable_pairs().len(), 20);
        assert_eq!(b.train.len(), 1000);
        assert_eq!(b.test.len(), 300);
        assert_eq!(b.train.intents.len(), 5);
        assert!(b.adapt.utterances.iter().all(|u| u.intent.is_none()));
    }

    #[test]
    fn twins_differ_in_one_letter() {
        let lex = generate_lexicon(&SyntheticConfig::default()).unwrap();
        for (k, n) in lex.confusable_pairs() {
            assert_eq!(k.len(), n.len());
            assert_eq!(k.bytes().zip(n.bytes()).filter(|(a, b)| a != b).count(), 1);
        }
    }

    #[test]
    fn near_miss_absent_from_clean_text() {
        let b = generate(&SyntheticConfig {
            train: 200,
            test: 50,
            adapt: 50,
            general: 100,
            ..Default::default()
        })
        .unwrap();
        let twins: BTreeSet<&str> = b.lexicon.near_miss.iter().flatten().map(String::as_str).collect();
        for u in b.train.utterances.iter().chain(&b.test.utterances) {
            assert!(u.tokens.iter().all(|t| !twins.contains(t.as_str())));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            train: 30,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap().train, generate(&cfg).unwrap().train);
    }
}
