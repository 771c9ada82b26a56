mod common;

use aclb::alignment::{edit_distance, edit_distance_align, word_error_rate, EditKind};
use common::exhaustive_alignment;
use proptest::prelude::*;

fn seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..=6)
}

fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..4u8).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

#[test]
fn matches_exhaustive_oracle_on_grid() {
    let seqs = all_sequences(3);
    for a in &seqs {
        for b in &seqs {
            let got = edit_distance_align(a, b);
            let (cost, kinds) = exhaustive_alignment(a, b);
            assert_eq!(got.cost, cost, "{a:?} {b:?}");
            assert_eq!(got.kinds(), kinds, "{a:?} {b:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_exhaustive_oracle(a in seq(), b in seq()) {
        let got = edit_distance_align(&a, &b);
        let (cost, kinds) = exhaustive_alignment(&a, &b);
        prop_assert_eq!(got.cost, cost);
        prop_assert_eq!(got.kinds(), kinds);
        prop_assert_eq!(edit_distance(&a, &b), cost);
    }

    #[test]
    fn alignment_reconstructs_both_sides(a in seq(), b in seq()) {
        let al = edit_distance_align(&a, &b);
        prop_assert_eq!(al.left_sequence(), a.clone());
        prop_assert_eq!(al.right_sequence(), b.clone());
        let mut cost = 0;
        for c in &al.columns {
            match c.kind {
                EditKind::Match => prop_assert!(c.left.is_some() && c.left == c.right),
                EditKind::Substitution => prop_assert!(c.left.is_some() && c.right.is_some() && c.left != c.right),
                EditKind::Deletion => prop_assert!(c.left.is_some() && c.right.is_none()),
                EditKind::Insertion => prop_assert!(c.left.is_none() && c.right.is_some()),
            }
            cost += usize::from(c.kind != EditKind::Match);
        }
        prop_assert_eq!(cost, al.cost);
    }

    #[test]
    fn distance_is_a_metric(a in seq(), b in seq(), c in seq()) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert!(edit_distance(&a, &b) >= a.len().abs_diff(b.len()));
        prop_assert!(edit_distance(&a, &b) <= a.len().max(b.len()));
    }

    #[test]
    fn wer_is_distance_over_reference_length(a in prop::collection::vec(0u8..4, 1..=6), b in seq()) {
        let wer = word_error_rate(&a, &b).unwrap();
        prop_assert!((wer - edit_distance(&a, &b) as f64 / a.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn wer_rejects_empty_reference() {
    assert!(word_error_rate::<u8>(&[], &[1]).is_err());
}
