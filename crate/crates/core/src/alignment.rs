//! Minimum edit-distance alignment with a deterministic backtrace, word
//! error rate, and supervised confusion extraction from transcript pairs.

use std::fmt;

use crate::corpus::{ConfusionPair, Occurrence, StopWordList, Token, TranscriptPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EditKind {
    Match,
    Substitution,
    Deletion,
    Insertion,
}

/// One alignment column. `None` is the blank symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedColumn<T> {
    pub left: Option<T>,
    pub right: Option<T>,
    pub kind: EditKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment<T> {
    pub columns: Vec<AlignedColumn<T>>,
    pub cost: usize,
}

impl<T: Clone> Alignment<T> {
    pub fn left_sequence(&self) -> Vec<T> {
        self.columns.iter().filter_map(|c| c.left.clone()).collect()
    }

    pub fn right_sequence(&self) -> Vec<T> {
        self.columns.iter().filter_map(|c| c.right.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<EditKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }
}

impl<T: fmt::Display> fmt::Display for Alignment<T> {
    /// Two rows, blanks rendered as `*`, columns padded to equal width.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |x: &Option<T>| x.as_ref().map_or_else(|| "*".to_string(), |t| t.to_string());
        let mut top = Vec::with_capacity(self.columns.len());
        let mut bottom = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let (l, r) = (cell(&c.left), cell(&c.right));
            let w = l.chars().count().max(r.chars().count());
            top.push(format!("{l:<w$}"));
            bottom.push(format!("{r:<w$}"));
        }
        writeln!(f, "{}", top.join(" ").trim_end())?;
        write!(f, "{}", bottom.join(" ").trim_end())
    }
}

fn dp_table<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Vec<usize>> {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let diag = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    dp_table(a, b)[a.len()][b.len()]
}

/// Minimum-cost alignment of `a` (left) against `b` (right).
///
/// Ties are resolved while backtracing from the end, preferring
/// match, then substitution, then deletion (right blank), then insertion
/// (left blank).
pub fn edit_distance_align<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Alignment<T> {
    let d = dp_table(a, b);
    let (mut i, mut j) = (a.len(), b.len());
    let mut columns = Vec::with_capacity(a.len().max(b.len()));
    while i > 0 || j > 0 {
        let here = d[i][j];
        if i > 0 && j > 0 {
            let same = a[i - 1] == b[j - 1];
            if same && d[i - 1][j - 1] == here {
                columns.push(AlignedColumn {
                    left: Some(a[i - 1].clone()),
                    right: Some(b[j - 1].clone()),
                    kind: EditKind::Match,
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && d[i - 1][j - 1] + 1 == here {
                columns.push(AlignedColumn {
                    left: Some(a[i - 1].clone()),
                    right: Some(b[j - 1].clone()),
                    kind: EditKind::Substitution,
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i - 1][j] + 1 == here {
            columns.push(AlignedColumn {
                left: Some(a[i - 1].clone()),
                right: None,
                kind: EditKind::Deletion,
            });
            i -= 1;
        } else {
            columns.push(AlignedColumn {
                left: None,
                right: Some(b[j - 1].clone()),
                kind: EditKind::Insertion,
            });
            j -= 1;
        }
    }
    columns.reverse();
    let cost = d[a.len()][b.len()];
    Alignment { columns, cost }
}

/// Edit distance divided by reference length; can exceed 1.
pub fn word_error_rate<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Invalid("word error rate of an empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Total edits over total reference words.
pub fn corpus_word_error_rate<'a, T, I>(pairs: I) -> Result<f64>
where
    T: PartialEq + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let (mut edits, mut words) = (0usize, 0usize);
    for (r, h) in pairs {
        edits += edit_distance(r, h);
        words += r.len();
    }
    if words == 0 {
        return Err(Error::Invalid("word error rate of an empty reference".into()));
    }
    Ok(edits as f64 / words as f64)
}

/// Substitution columns of the manual-vs-recognized alignment, minus any
/// involving a stop word.
pub fn extract_supervised_confusions(
    pair: &TranscriptPair,
    stops: &StopWordList,
) -> Vec<ConfusionPair> {
    let manual = &pair.manual.tokens;
    let asr = &pair.asr.tokens;
    let alignment = edit_distance_align(manual, asr);
    let (mut i, mut j) = (0usize, 0usize);
    let mut out = Vec::new();
    for col in &alignment.columns {
        if let (EditKind::Substitution, Some(l), Some(r)) = (col.kind, &col.left, &col.right) {
            if !stops.contains(l) && !stops.contains(r) {
                out.push(ConfusionPair {
                    left: occurrence(&pair.manual.id, i, l),
                    right: occurrence(&pair.asr.id, j, r),
                });
            }
        }
        i += usize::from(col.left.is_some());
        j += usize::from(col.right.is_some());
    }
    out
}

fn occurrence(utterance: &str, index: usize, token: &Token) -> Occurrence {
    Occurrence {
        utterance: utterance.to_owned(),
        index,
        token: token.clone(),
    }
}
