//! Word confusion networks ("sausages") built from n-best lists by
//! incremental alignment against the 1-best, and unsupervised confusion
//! mining from their slots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::alignment::{edit_distance_align, EditKind};
use crate::corpus::{hypothesis_id, ConfusionPair, NBestList, Occurrence, StopWordList, Token};
use crate::error::{Error, Result};

/// Where a slot entry came from: hypothesis rank (1-based) and, for word
/// entries, the token index within that hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Origin {
    pub rank: usize,
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotEntry {
    pub weight: f64,
    pub origins: Vec<Origin>,
}

/// Competing words for one time span. The `None` key is the blank entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Slot {
    pub entries: BTreeMap<Option<Token>, SlotEntry>,
}

impl Slot {
    fn add(&mut self, token: Option<Token>, weight: f64, origin: Origin) {
        let e = self.entries.entry(token).or_insert(SlotEntry {
            weight: 0.0,
            origins: Vec::new(),
        });
        e.weight += weight;
        e.origins.push(origin);
    }

    /// Highest-weight word entry, ties to the lexicographically smallest.
    pub fn representative(&self) -> Option<&Token> {
        let mut best: Option<(&Token, f64)> = None;
        for (tok, e) in &self.entries {
            let Some(tok) = tok else { continue };
            if best.is_none_or(|(_, w)| e.weight > w) {
                best = Some((tok, e.weight));
            }
        }
        best.map(|(t, _)| t)
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.values().map(|e| e.weight).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = (&Token, &SlotEntry)> {
        self.entries
            .iter()
            .filter_map(|(t, e)| t.as_ref().map(|t| (t, e)))
    }

    /// The entry hypothesis `rank` passes through.
    pub fn entry_for(&self, rank: usize) -> Option<(Option<&Token>, Origin)> {
        self.entries.iter().find_map(|(t, e)| {
            e.origins
                .iter()
                .find(|o| o.rank == rank)
                .map(|o| (t.as_ref(), *o))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionNetwork {
    pub recording: String,
    pub slots: Vec<Slot>,
    pub hypotheses: usize,
}

impl ConfusionNetwork {
    /// Reads hypothesis `rank` back out of the slots, dropping blanks.
    pub fn path(&self, rank: usize) -> Option<Vec<Token>> {
        let mut out = Vec::new();
        for slot in &self.slots {
            let (tok, _) = slot.entry_for(rank)?;
            if let Some(t) = tok {
                out.push(t.clone());
            }
        }
        Some(out)
    }

    /// Text form: one line per slot, `token:weight` entries separated by
    /// spaces, blank rendered as `*`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for slot in &self.slots {
            let line = slot
                .entries
                .iter()
                .map(|(t, e)| {
                    let word = t.as_ref().map_or("*", Token::as_str);
                    format!("{word}:{}", e.weight)
                })
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(s, "{line}");
        }
        s
    }
}

/// Builds a confusion network with the rank-1 hypothesis as pivot.
///
/// Each later hypothesis is aligned against the slot representatives.
/// Substitutions and matches join an existing slot, insertions open a new
/// slot whose blank entry covers every hypothesis merged so far, and
/// deletions add a blank for the new hypothesis. Weights are scores when
/// the list carries them (normalized per slot at the end), otherwise counts.
pub fn build_wcn(nbest: &NBestList) -> Result<ConfusionNetwork> {
    let Some(first) = nbest.hypotheses.first() else {
        return Err(Error::Invalid(format!(
            "cannot build a confusion network from empty n-best list {:?}",
            nbest.recording
        )));
    };
    let weight_of = |k: usize| nbest.scores.as_ref().map_or(1.0, |s| s[k]);

    let mut slots: Vec<Slot> = first
        .tokens
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mut slot = Slot::default();
            slot.add(Some(t.clone()), weight_of(0), Origin { rank: 1, index: Some(j) });
            slot
        })
        .collect();

    for (k, hyp) in nbest.hypotheses.iter().enumerate().skip(1) {
        let rank = k + 1;
        let w = weight_of(k);
        let reps: Vec<Token> = slots
            .iter()
            .map(|s| s.representative().cloned().expect("every slot holds a word"))
            .collect();
        let alignment = edit_distance_align(&reps, &hyp.tokens);

        let mut merged = Vec::with_capacity(alignment.columns.len());
        let mut old = slots.into_iter();
        let mut j = 0usize;
        for col in alignment.columns {
            match col.kind {
                EditKind::Match | EditKind::Substitution => {
                    let mut slot = old.next().expect("aligned slot");
                    slot.add(col.right, w, Origin { rank, index: Some(j) });
                    j += 1;
                    merged.push(slot);
                }
                EditKind::Deletion => {
                    let mut slot = old.next().expect("aligned slot");
                    slot.add(None, w, Origin { rank, index: None });
                    merged.push(slot);
                }
                EditKind::Insertion => {
                    let mut slot = Slot::default();
                    for prev in 1..rank {
                        slot.add(None, weight_of(prev - 1), Origin { rank: prev, index: None });
                    }
                    slot.add(col.right, w, Origin { rank, index: Some(j) });
                    j += 1;
                    merged.push(slot);
                }
            }
        }
        slots = merged;
    }

    if nbest.scores.is_some() {
        for slot in &mut slots {
            let total = slot.total_weight();
            let n = slot.entries.values().map(|e| e.origins.len()).sum::<usize>() as f64;
            for e in slot.entries.values_mut() {
                // All-zero scores fall back to uniform weights.
                e.weight = if total > 0.0 {
                    e.weight / total
                } else {
                    e.origins.len() as f64 / n
                };
            }
        }
    }

    Ok(ConfusionNetwork {
        recording: nbest.recording.clone(),
        slots,
        hypotheses: nbest.len(),
    })
}

/// Every unordered pair of distinct words sharing a slot, neither a stop
/// word. Each side points at its lowest-rank occurrence; the side with the
/// lower rank (then smaller token) is `left`.
pub fn extract_unsupervised_confusions(
    cn: &ConfusionNetwork,
    stops: &StopWordList,
) -> Vec<ConfusionPair> {
    let mut out = Vec::new();
    for slot in &cn.slots {
        let words: Vec<(Origin, &Token)> = slot
            .words()
            .filter(|(t, _)| !stops.contains(t))
            .filter_map(|(t, e)| e.origins.iter().min().map(|o| (*o, t)))
            .collect();
        for a in 0..words.len() {
            for b in (a + 1)..words.len() {
                let (mut x, mut y) = (words[a], words[b]);
                if (y.0.rank, y.1) < (x.0.rank, x.1) {
                    std::mem::swap(&mut x, &mut y);
                }
                out.push(ConfusionPair {
                    left: occurrence(&cn.recording, x),
                    right: occurrence(&cn.recording, y),
                });
            }
        }
    }
    out
}

fn occurrence(recording: &str, (origin, token): (Origin, &Token)) -> Occurrence {
    Occurrence {
        utterance: hypothesis_id(recording, origin.rank),
        index: origin.index.expect("word entries carry an index"),
        token: token.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokens;

    fn nbest(hyps: &[&[&str]]) -> NBestList {
        NBestList::new("r", hyps.iter().map(|h| tokens(h)).collect(), None).unwrap()
    }

    fn slot_words(slot: &Slot) -> Vec<(String, f64)> {
        slot.entries
            .iter()
            .map(|(t, e)| (t.as_ref().map_or("*".into(), |t| t.to_string()), e.weight))
            .collect()
    }

    #[test]
    fn single_hypothesis() {
        let cn = build_wcn(&nbest(&[&["play", "jazz"]])).unwrap();
        assert_eq!(cn.slots.len(), 2);
        assert!(cn.slots.iter().all(|s| s.entries.len() == 1));
        assert_eq!(cn.path(1).unwrap(), tokens(&["play", "jazz"]));
    }

    #[test]
    fn insertion_opens_blank_slot() {
        let cn = build_wcn(&nbest(&[&["set", "alarm"], &["set", "an", "alarm"]])).unwrap();
        assert_eq!(cn.slots.len(), 3);
        assert_eq!(slot_words(&cn.slots[0]), vec![("set".into(), 2.0)]);
        assert_eq!(slot_words(&cn.slots[1]), vec![("*".into(), 1.0), ("an".into(), 1.0)]);
        assert_eq!(slot_words(&cn.slots[2]), vec![("alarm".into(), 2.0)]);
        assert_eq!(cn.to_text(), "set:2\n*:1 an:1\nalarm:2\n");
    }

    #[test]
    fn identical_hypotheses_double_counts() {
        let cn = build_wcn(&nbest(&[&["play", "jazz"], &["play", "jazz"]])).unwrap();
        assert_eq!(cn.slots.len(), 2);
        assert_eq!(slot_words(&cn.slots[1]), vec![("jazz".into(), 2.0)]);
        assert!(extract_unsupervised_confusions(&cn, &StopWordList::empty()).is_empty());
    }

    #[test]
    fn deletion_adds_blank() {
        let cn = build_wcn(&nbest(&[&["set", "an", "alarm"], &["set", "alarm"]])).unwrap();
        assert_eq!(cn.slots.len(), 3);
        assert_eq!(slot_words(&cn.slots[1]), vec![("*".into(), 1.0), ("an".into(), 1.0)]);
        assert_eq!(cn.path(2).unwrap(), tokens(&["set", "alarm"]));
        assert!(extract_unsupervised_confusions(&cn, &StopWordList::empty()).is_empty());
    }

    #[test]
    fn substitution_pairs() {
        let cn = build_wcn(&nbest(&[&["play", "jazz"], &["play", "chess"]])).unwrap();
        let got = extract_unsupervised_confusions(&cn, &StopWordList::empty());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].left.token.as_str(), "jazz");
        assert_eq!((got[0].left.utterance.as_str(), got[0].left.index), ("r#1", 1));
        assert_eq!(got[0].right.token.as_str(), "chess");
        assert_eq!((got[0].right.utterance.as_str(), got[0].right.index), ("r#2", 1));

        let stops = StopWordList::parse("chess");
        assert!(extract_unsupervised_confusions(&cn, &stops).is_empty());
    }

    #[test]
    fn scores_normalize_per_slot() {
        let list = NBestList::new(
            "r",
            vec![tokens(&["set", "alarm"]), tokens(&["set", "an", "alarm"]), tokens(&["sat", "alarm"])],
            Some(vec![0.5, 0.3, 0.2]),
        )
        .unwrap();
        let cn = build_wcn(&list).unwrap();
        for slot in &cn.slots {
            assert!((slot.total_weight() - 1.0).abs() < 1e-9);
        }
        for rank in 1..=3 {
            assert_eq!(cn.path(rank).unwrap(), list.hypotheses[rank - 1].tokens);
        }
    }

    #[test]
    fn representative_prefers_weight_then_lexicographic() {
        let mut slot = Slot::default();
        slot.add(Some(Token::new("b").unwrap()), 1.0, Origin { rank: 1, index: Some(0) });
        slot.add(Some(Token::new("a").unwrap()), 1.0, Origin { rank: 2, index: Some(0) });
        slot.add(None, 5.0, Origin { rank: 3, index: None });
        assert_eq!(slot.representative().unwrap().as_str(), "a");
    }
}
