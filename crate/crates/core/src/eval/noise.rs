//! A word-level noise channel standing in for a speech recognizer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, NBestList, Token, TranscriptPair};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

/// Channel parameters. Serialized as JSON; the confusion table maps a token
/// to weighted substitutes:
///
/// ```json
/// {"confusions": {"fair": [["fare", 1.0]]}, "p_sub": 0.25, "p_del": 0.0,
///  "p_ins": 0.0, "n_best": 5, "seed": 7}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub confusions: BTreeMap<String, Vec<(String, f64)>>,
    pub p_sub: f64,
    #[serde(default)]
    pub p_del: f64,
    #[serde(default)]
    pub p_ins: f64,
    #[serde(default = "default_n_best")]
    pub n_best: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_best() -> usize {
    1
}

impl NoiseSpec {
    pub fn rates(p_sub: f64, p_del: f64, p_ins: f64) -> Self {
        NoiseSpec {
            confusions: BTreeMap::new(),
            p_sub,
            p_del,
            p_ins,
            n_best: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_sub", self.p_sub), ("p_del", self.p_del), ("p_ins", self.p_ins)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.p_sub + self.p_del + self.p_ins > 1.0 + 1e-12 {
            return Err(Error::Config("p_sub + p_del + p_ins exceeds 1".into()));
        }
        if self.n_best == 0 {
            return Err(Error::Config("n_best must be at least 1".into()));
        }
        for (tok, subs) in &self.confusions {
            if subs.is_empty() {
                return Err(Error::Config(format!("confusion entry {tok:?} has no substitutes")));
            }
            if let Some((w, x)) = subs.iter().find(|(_, x)| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Config(format!("confusion {tok:?} -> {w:?} has weight {x}")));
            }
            for (w, _) in subs {
                Token::new(w)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: NoiseSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

struct Channel<'a> {
    spec: &'a NoiseSpec,
    table: BTreeMap<&'a str, (Vec<&'a str>, WeightedIndex<f64>)>,
    pool: Vec<String>,
}

impl<'a> Channel<'a> {
    fn new(spec: &'a NoiseSpec, clean: &Dataset) -> Result<Self> {
        let table = spec
            .confusions
            .iter()
            .map(|(k, subs)| {
                let words = subs.iter().map(|(w, _)| w.as_str()).collect();
                let dist = WeightedIndex::new(subs.iter().map(|(_, x)| *x))
                    .map_err(|e| Error::Config(format!("confusion {k:?}: {e}")))?;
                Ok((k.as_str(), (words, dist)))
            })
            .collect::<Result<_>>()?;
        let pool: BTreeSet<String> = clean
            .utterances
            .iter()
            .flat_map(|u| u.tokens.iter().map(|t| t.as_str().to_owned()))
            .chain(spec.confusions.values().flatten().map(|(w, _)| w.clone()))
            .collect();
        Ok(Channel {
            spec,
            table,
            pool: pool.into_iter().collect(),
        })
    }

    fn random_other<R: Rng>(&self, rng: &mut R, not: &str) -> Token {
        loop {
            let w = &self.pool[rng.gen_range(0..self.pool.len())];
            if w != not || self.pool.len() == 1 {
                return Token::new(w).expect("pool words are tokens");
            }
        }
    }

    fn substitute<R: Rng>(&self, rng: &mut R, tok: &Token) -> Token {
        match self.table.get(tok.as_str()) {
            Some((words, dist)) => Token::new(words[dist.sample(rng)]).expect("validated"),
            None => self.random_other(rng, tok.as_str()),
        }
    }

    /// One noisy rendering. Should every token be deleted, the first
    /// original token is kept so the hypothesis is never empty.
    fn corrupt<R: Rng>(&self, rng: &mut R, clean: &[Token]) -> Vec<Token> {
        let s = self.spec;
        let mut out = Vec::with_capacity(clean.len() + 2);
        for tok in clean {
            let r: f64 = rng.gen();
            if r < s.p_sub {
                out.push(self.substitute(rng, tok));
            } else if r < s.p_sub + s.p_del {
            } else if r < s.p_sub + s.p_del + s.p_ins {
                out.push(self.random_other(rng, ""));
                out.push(tok.clone());
            } else {
                out.push(tok.clone());
            }
        }
        if out.is_empty() {
            out.push(clean[0].clone());
        }
        out
    }
}

/// Manual/noisy pairs (the noisy side is hypothesis 1) and n-best lists
/// whose remaining hypotheses are independent redraws. Each utterance gets
/// its own random stream keyed by its id, so results do not depend on
/// corpus order.
pub fn synthesize_noisy(clean: &Dataset, spec: &NoiseSpec) -> Result<(Vec<TranscriptPair>, Vec<NBestList>)> {
    spec.validate()?;
    let channel = Channel::new(spec, clean)?;
    let mut pairs = Vec::with_capacity(clean.len());
    let mut lists = Vec::with_capacity(clean.len());
    for u in &clean.utterances {
        let mut rng = rng_for(derive_seed(spec.seed, &u.id), "noise");
        let hyps: Vec<Vec<Token>> = (0..spec.n_best).map(|_| channel.corrupt(&mut rng, &u.tokens)).collect();
        pairs.push(TranscriptPair::new(u.id.clone(), u.tokens.clone(), hyps[0].clone())?.with_intent(u.intent.clone()));
        let mut nb = NBestList::new(u.id.clone(), hyps, None)?;
        for h in &mut nb.hypotheses {
            h.intent = u.intent.clone();
        }
        lists.push(nb);
    }
    Ok((pairs, lists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::corpus_word_error_rate;
    use crate::corpus::{Channel as Ch, Utterance};

    fn corpus(n: usize) -> Dataset {
        let words = ["play", "some", "jazz", "turn", "on", "the", "lights", "now"];
        Dataset::new(
            "c",
            (0..n)
                .map(|i| {
                    let toks = (0..5).map(|k| words[(i * 3 + k * 5) % words.len()]).collect::<Vec<_>>();
                    Utterance::new(format!("u{i}"), crate::corpus::tokens(&toks), Ch::Manual).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_copy_input() {
        let mut spec = NoiseSpec::rates(0.0, 0.0, 0.0);
        spec.n_best = 3;
        let (pairs, lists) = synthesize_noisy(&corpus(20), &spec).unwrap();
        for (p, l) in pairs.iter().zip(&lists) {
            assert_eq!(p.manual.tokens, p.asr.tokens);
            assert!(l.hypotheses.iter().all(|h| h.tokens == p.manual.tokens));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let mut spec = NoiseSpec::rates(0.2, 0.1, 0.1);
        spec.n_best = 2;
        spec.seed = 11;
        let a = synthesize_noisy(&corpus(50), &spec).unwrap();
        let b = synthesize_noisy(&corpus(50), &spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 12;
        assert_ne!(a, synthesize_noisy(&corpus(50), &spec).unwrap());
    }

    #[test]
    fn table_substitutes_are_used() {
        let mut spec = NoiseSpec::rates(1.0, 0.0, 0.0);
        spec.confusions.insert("jazz".into(), vec![("chess".into(), 1.0)]);
        let (pairs, _) = synthesize_noisy(&corpus(30), &spec).unwrap();
        for p in &pairs {
            for (m, a) in p.manual.tokens.iter().zip(&p.asr.tokens) {
                assert_ne!(m, a);
                if m.as_str() == "jazz" {
                    assert_eq!(a.as_str(), "chess");
                }
            }
        }
    }

    #[test]
    fn rates_validated() {
        assert!(NoiseSpec::rates(0.7, 0.2, 0.2).validate().is_err());
        assert!(NoiseSpec::rates(-0.1, 0.0, 0.0).validate().is_err());
    }

    #[test]
    fn deletion_heavy_channel_calibrates() {
        let spec = NoiseSpec::rates(0.0, 0.2, 0.0);
        let (pairs, _) = synthesize_noisy(&corpus(400), &spec).unwrap();
        let wer = corpus_word_error_rate(pairs.iter().map(|p| (&p.manual.tokens[..], &p.asr.tokens[..]))).unwrap();
        assert!((wer - 0.2).abs() < 0.03, "{wer}");
    }
}
