//! Data model and on-disk formats: utterances (JSON Lines), transcript
//! pairs (JSON Lines), n-best lists (plain text), stop-word lists and the
//! confusion-pair TSV shared by both extraction modes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";

pub const BOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;
pub const PAD_ID: usize = 3;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// A lowercase word with no internal whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    pub fn new(surface: &str) -> Result<Self> {
        if surface.is_empty() {
            return Err(Error::Invalid("empty token".into()));
        }
        if surface.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("token {surface:?} contains whitespace")));
        }
        if surface.chars().any(char::is_uppercase) {
            return Err(Error::Invalid(format!("token {surface:?} is not lowercase")));
        }
        Ok(Token(surface.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Token::new(&s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and splits on whitespace. This is the only place raw text
/// becomes tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|w| Token(w.to_lowercase()))
        .collect()
}

/// Builds tokens from already-normalized words, e.g. in tests and examples.
pub fn tokens(words: &[&str]) -> Vec<Token> {
    words.iter().flat_map(|w| tokenize(w)).collect()
}

pub fn join_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(Token::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Manual,
    Asr,
    /// Rank within an n-best list, starting at 1.
    Hyp(usize),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Manual => f.write_str("manual"),
            Channel::Asr => f.write_str("asr"),
            Channel::Hyp(k) => write!(f, "hyp{k}"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Channel::Manual),
            "asr" => Ok(Channel::Asr),
            _ => {
                let rank = s
                    .strip_prefix("hyp")
                    .map(|r| r.trim_start_matches('(').trim_end_matches(')'))
                    .and_then(|r| r.parse::<usize>().ok())
                    .filter(|&k| k >= 1);
                rank.map(Channel::Hyp)
                    .ok_or_else(|| Error::Invalid(format!("unknown channel {s:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub intent: Option<String>,
    pub channel: Channel,
}

impl Utterance {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>, channel: Channel) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::Invalid(format!("utterance {id:?} has no tokens")));
        }
        Ok(Utterance {
            id,
            tokens,
            intent: None,
            channel,
        })
    }

    pub fn from_text(id: impl Into<String>, text: &str, channel: Channel) -> Result<Self> {
        Utterance::new(id, tokenize(text), channel)
    }

    pub fn with_intent(mut self, intent: impl Into<String>) -> Self {
        self.intent = Some(intent.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        join_tokens(&self.tokens)
    }
}

/// Manual and recognized transcripts of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptPair {
    pub recording: String,
    pub manual: Utterance,
    pub asr: Utterance,
}

impl TranscriptPair {
    /// The manual side keeps the recording id; the recognized side gets
    /// `<recording>#asr`.
    pub fn new(recording: impl Into<String>, manual: Vec<Token>, asr: Vec<Token>) -> Result<Self> {
        let recording = recording.into();
        Ok(TranscriptPair {
            manual: Utterance::new(recording.clone(), manual, Channel::Manual)?,
            asr: Utterance::new(format!("{recording}#asr"), asr, Channel::Asr)?,
            recording,
        })
    }

    pub fn with_intent(mut self, intent: Option<String>) -> Self {
        self.manual.intent = intent.clone();
        self.asr.intent = intent;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub recording: String,
    pub hypotheses: Vec<Utterance>,
    pub scores: Option<Vec<f64>>,
}

impl NBestList {
    /// Hypothesis `k` (1-based) gets utterance id `<recording>#<k>`.
    pub fn new(
        recording: impl Into<String>,
        hypotheses: Vec<Vec<Token>>,
        scores: Option<Vec<f64>>,
    ) -> Result<Self> {
        let recording = recording.into();
        if hypotheses.is_empty() {
            return Err(Error::Invalid(format!("n-best list {recording:?} is empty")));
        }
        if let Some(s) = &scores {
            if s.len() != hypotheses.len() {
                return Err(Error::Invalid(format!(
                    "n-best list {recording:?}: {} scores for {} hypotheses",
                    s.len(),
                    hypotheses.len()
                )));
            }
            if let Some(bad) = s.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::Invalid(format!(
                    "n-best list {recording:?}: invalid score {bad}"
                )));
            }
        }
        let hypotheses = hypotheses
            .into_iter()
            .enumerate()
            .map(|(i, toks)| {
                Utterance::new(hypothesis_id(&recording, i + 1), toks, Channel::Hyp(i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NBestList {
            recording,
            hypotheses,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Keeps the `n` best hypotheses.
    pub fn truncated(&self, n: usize) -> NBestList {
        let n = n.max(1).min(self.hypotheses.len());
        NBestList {
            recording: self.recording.clone(),
            hypotheses: self.hypotheses[..n].to_vec(),
            scores: self.scores.as_ref().map(|s| s[..n].to_vec()),
        }
    }
}

pub fn hypothesis_id(recording: &str, rank: usize) -> String {
    format!("{recording}#{rank}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub utterances: Vec<Utterance>,
    /// Sorted intent inventory.
    pub intents: Vec<String>,
}

impl Dataset {
    /// Checks id uniqueness and derives the intent inventory.
    pub fn new(name: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate utterance id {:?}", u.id)));
            }
        }
        let intents: BTreeSet<String> = utterances
            .iter()
            .filter_map(|u| u.intent.clone())
            .collect();
        Ok(Dataset {
            name: name.into(),
            utterances,
            intents: intents.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn intent_index(&self, label: &str) -> Option<usize> {
        self.intents.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StopWordList {
    words: BTreeSet<Token>,
}

impl StopWordList {
    pub fn new<I: IntoIterator<Item = Token>>(words: I) -> Self {
        StopWordList {
            words: words.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// The English list shipped in `data/stopwords.txt`.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(tokenize);
        Self::new(words)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &Token) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Index assignment with the four reserved symbols at 0..=3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Corpus words with `count >= min_count`, by descending count then
    /// lexicographically.
    pub fn build<'a, I>(utterances: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a Utterance>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for u in utterances {
            for t in &u.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count.max(1) && !is_reserved(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_words(ranked.into_iter().map(|(w, _)| w.to_owned()))
    }

    /// Reserved symbols followed by `words` in the given order.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut all: Vec<String> = [BOS, EOS, UNK, PAD].iter().map(|s| s.to_string()).collect();
        all.extend(words.into_iter().filter(|w| !is_reserved(w)));
        let index = all
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words: all, index }
    }

    /// Restores a stored word list, which must start with the reserved symbols.
    pub fn from_stored(words: Vec<String>) -> Result<Self> {
        let reserved = [BOS, EOS, UNK, PAD];
        if words.len() < 4 || words.iter().zip(reserved).any(|(w, r)| w != r) {
            return Err(Error::Format(
                "vocabulary must start with <s>, </s>, <unk>, <pad>".into(),
            ));
        }
        Ok(Self::from_words(words.into_iter().skip(4)))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Maps a token to its index, `<unk>` when absent.
    pub fn id(&self, token: &Token) -> usize {
        self.get(token.as_str()).unwrap_or(UNK_ID)
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

fn is_reserved(w: &str) -> bool {
    matches!(w, BOS | EOS | UNK | PAD)
}

/// Vocabulary over several datasets.
pub fn vocabulary(datasets: &[&Dataset], min_count: usize) -> Vocabulary {
    Vocabulary::build(datasets.iter().flat_map(|d| d.utterances.iter()), min_count)
}

/// One word occurrence: utterance id plus 0-based token index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Occurrence {
    pub utterance: String,
    pub index: usize,
    pub token: Token,
}

/// Two acoustically confusable word occurrences.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub left: Occurrence,
    pub right: Occurrence,
}

// ---------------------------------------------------------------------------
// Utterance JSON Lines

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<String>,
}

/// Reads an utterance file. Records without a `channel` key get `channel`.
pub fn load_utterances(path: impl AsRef<Path>, channel: Channel) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_utterances(BufReader::new(file), &path.display().to_string(), &name, channel)
}

pub fn parse_utterances<R: BufRead>(
    reader: R,
    source: &str,
    name: &str,
    channel: Channel,
) -> Result<Dataset> {
    let mut utterances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(source, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(source, line_no, e.to_string()))?;
        let channel = match &rec.channel {
            Some(c) => c.parse().map_err(|e: Error| parse_err(source, line_no, e.to_string()))?,
            None => channel,
        };
        let toks = tokenize(&rec.text);
        if toks.is_empty() {
            return Err(parse_err(
                source,
                line_no,
                format!("record {:?} has no tokens after normalization", rec.id),
            ));
        }
        utterances.push(Utterance {
            id: rec.id,
            tokens: toks,
            intent: rec.intent,
            channel,
        });
    }
    Dataset::new(name, utterances).map_err(|e| parse_err(source, 0, e.to_string()))
}

pub fn write_utterances<W: Write>(mut out: W, utterances: &[Utterance]) -> Result<()> {
    for u in utterances {
        let rec = UtteranceRecord {
            id: u.id.clone(),
            text: u.text(),
            intent: u.intent.clone(),
            channel: (u.channel != Channel::Manual).then(|| u.channel.to_string()),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Transcript-pair JSON Lines: {"id", "manual", "asr", "intent"?}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    id: String,
    manual: String,
    asr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intent: Option<String>,
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<TranscriptPair>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(BufReader::new(file), &path.display().to_string())
}

pub fn parse_pairs<R: BufRead>(reader: R, source: &str) -> Result<Vec<TranscriptPair>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(source, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(source, line_no, e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(source, line_no, format!("duplicate id {:?}", rec.id)));
        }
        let pair = TranscriptPair::new(rec.id, tokenize(&rec.manual), tokenize(&rec.asr))
            .map_err(|e| parse_err(source, line_no, e.to_string()))?
            .with_intent(rec.intent);
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs<W: Write>(mut out: W, pairs: &[TranscriptPair]) -> Result<()> {
    for p in pairs {
        let rec = PairRecord {
            id: p.recording.clone(),
            manual: p.manual.text(),
            asr: p.asr.text(),
            intent: p.manual.intent.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// N-best text: `<recording-id> <rank> [score=<float>] <token> ...`

pub fn load_nbest(path: impl AsRef<Path>) -> Result<Vec<NBestList>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(BufReader::new(file), &path.display().to_string())
}

pub fn parse_nbest<R: BufRead>(reader: R, source: &str) -> Result<Vec<NBestList>> {
    struct Group {
        first_line: usize,
        hyps: Vec<Vec<Token>>,
        scores: Vec<Option<f64>>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(source, line_no, e.to_string()))?;
        let mut fields = line.split_whitespace().peekable();
        let Some(rec) = fields.next() else { continue };
        let rank: usize = fields
            .next()
            .ok_or_else(|| parse_err(source, line_no, "missing rank".into()))?
            .parse()
            .map_err(|_| parse_err(source, line_no, "rank is not a positive integer".into()))?;
        let mut score = None;
        if let Some(s) = fields.peek().and_then(|f| f.strip_prefix("score=")) {
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(source, line_no, format!("bad score {s:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(source, line_no, format!("score {v} must be finite and non-negative")));
            }
            score = Some(v);
            fields.next();
        }
        let toks: Vec<Token> = fields.flat_map(tokenize).collect();
        if toks.is_empty() {
            return Err(parse_err(source, line_no, "hypothesis has no tokens".into()));
        }
        let group = groups.entry(rec.to_owned()).or_insert_with(|| {
            order.push(rec.to_owned());
            Group {
                first_line: line_no,
                hyps: Vec::new(),
                scores: Vec::new(),
            }
        });
        if rank != group.hyps.len() + 1 {
            return Err(parse_err(
                source,
                line_no,
                format!(
                    "recording {rec:?}: rank {rank} follows rank {}; ranks must be contiguous from 1",
                    group.hyps.len()
                ),
            ));
        }
        group.hyps.push(toks);
        group.scores.push(score);
    }

    order
        .into_iter()
        .map(|rec| {
            let g = groups.remove(&rec).expect("group recorded in order");
            let scores = if g.scores.iter().all(Option::is_some) {
                Some(g.scores.into_iter().flatten().collect())
            } else if g.scores.iter().all(Option::is_none) {
                None
            } else {
                return Err(parse_err(
                    source,
                    g.first_line,
                    format!("recording {rec:?}: scores must be given for all hypotheses or none"),
                ));
            };
            NBestList::new(rec, g.hyps, scores)
                .map_err(|e| parse_err(source, g.first_line, e.to_string()))
        })
        .collect()
}

pub fn write_nbest<W: Write>(mut out: W, lists: &[NBestList]) -> Result<()> {
    for list in lists {
        for (k, hyp) in list.hypotheses.iter().enumerate() {
            let score = list
                .scores
                .as_ref()
                .map(|s| format!(" score={}", s[k]))
                .unwrap_or_default();
            writeln!(out, "{} {}{} {}", list.recording, k + 1, score, hyp.text())
                .map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Confusion TSV:
// left_utt_id  left_index  left_token  right_utt_id  right_index  right_token

pub fn write_confusions<W: Write>(mut out: W, pairs: &[ConfusionPair]) -> Result<()> {
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.left.utterance, p.left.index, p.left.token, p.right.utterance, p.right.index, p.right.token
        )
        .map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn load_confusions(path: impl AsRef<Path>) -> Result<Vec<ConfusionPair>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_confusions(BufReader::new(file), &path.display().to_string())
}

pub fn parse_confusions<R: BufRead>(reader: R, source: &str) -> Result<Vec<ConfusionPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(source, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(parse_err(source, line_no, format!("expected 6 tab-separated fields, got {}", f.len())));
        }
        let occ = |u: &str, idx: &str, tok: &str| -> Result<Occurrence> {
            Ok(Occurrence {
                utterance: u.to_owned(),
                index: idx
                    .parse()
                    .map_err(|_| parse_err(source, line_no, format!("bad index {idx:?}")))?,
                token: Token::new(tok).map_err(|e| parse_err(source, line_no, e.to_string()))?,
            })
        };
        out.push(ConfusionPair {
            left: occ(f[0], f[1], f[2])?,
            right: occ(f[3], f[4], f[5])?,
        });
    }
    Ok(out)
}

/// Groups utterances by id for confusion lookups.
pub fn index_by_id<'a, I>(utterances: I) -> BTreeMap<&'a str, &'a Utterance>
where
    I: IntoIterator<Item = &'a Utterance>,
{
    utterances.into_iter().map(|u| (u.id.as_str(), u)).collect()
}

fn parse_err(source: &str, line: usize, message: String) -> Error {
    Error::Parse {
        path: source.to_owned(),
        line,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_utterances(text.as_bytes(), "mem", "mem", Channel::Manual)
    }

    #[test]
    fn loads_and_normalizes_one_record() {
        let ds = parse(r#"{"id":"u1","text":"Find Comedies","intent":"find_movie"}"#).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.utterances[0].tokens, tokens(&["find", "comedies"]));
        assert_eq!(ds.utterances[0].intent.as_deref(), Some("find_movie"));
        assert_eq!(ds.intents, vec!["find_movie".to_string()]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn blank_text_is_a_record_error() {
        let err = parse("{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"u1\",\"text\":\"  \"}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let err = parse("{\"id\":\"a\",\"text\":\"ok\"}\nnot json").unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(parse("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}").is_err());
    }

    #[test]
    fn channel_key_overrides_default() {
        let ds = parse(r#"{"id":"a","text":"x","channel":"hyp(2)"}"#).unwrap();
        assert_eq!(ds.utterances[0].channel, Channel::Hyp(2));
    }

    #[test]
    fn nbest_groups_by_recording() {
        let lists = parse_nbest("r1 1 set alarm\nr1 2 set an alarm\n".as_bytes(), "mem").unwrap();
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].len(), 2);
        assert_eq!(lists[0].hypotheses[1].tokens, tokens(&["set", "an", "alarm"]));
        assert_eq!(lists[0].hypotheses[1].id, "r1#2");
        assert_eq!(lists[0].hypotheses[1].channel, Channel::Hyp(2));
        assert!(lists[0].scores.is_none());
    }

    #[test]
    fn nbest_single_and_scored() {
        let lists = parse_nbest("r1 1 score=0.7 play jazz\nr2 1 hi\n".as_bytes(), "mem").unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].scores, Some(vec![0.7]));
        assert_eq!(lists[1].len(), 1);
    }

    #[test]
    fn nbest_rank_gap_rejected() {
        assert!(parse_nbest("r1 1 a\nr1 3 b\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn nbest_negative_score_rejected() {
        assert!(parse_nbest("r1 1 score=-1 a\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn vocabulary_ordering() {
        let ds = Dataset::new(
            "c",
            vec![Utterance::from_text("1", "a a b", Channel::Manual).unwrap()],
        )
        .unwrap();
        let v1 = vocabulary(&[&ds], 1);
        assert_eq!(v1.words(), ["<s>", "</s>", "<unk>", "<pad>", "a", "b"]);
        let v2 = vocabulary(&[&ds], 2);
        assert_eq!(v2.words(), ["<s>", "</s>", "<unk>", "<pad>", "a"]);
        let v0 = vocabulary(&[], 1);
        assert_eq!(v0.len(), 4);
        assert_eq!(v1.id(&Token::new("zzz").unwrap()), UNK_ID);
    }

    #[test]
    fn vocabulary_ties_are_lexicographic() {
        let ds = Dataset::new(
            "c",
            vec![Utterance::from_text("1", "c b a c", Channel::Manual).unwrap()],
        )
        .unwrap();
        assert_eq!(&vocabulary(&[&ds], 1).words()[4..], ["c", "a", "b"]);
    }

    #[test]
    fn stopwords_skip_comments() {
        let s = StopWordList::parse("# comment\nthe\nA\n\n");
        assert_eq!(s.len(), 2);
        assert!(s.contains(&Token::new("a").unwrap()));
        assert!(StopWordList::default_english().contains(&Token::new("the").unwrap()));
    }

    #[test]
    fn confusion_tsv_round_trip() {
        let p = ConfusionPair {
            left: Occurrence {
                utterance: "u1".into(),
                index: 1,
                token: Token::new("fare").unwrap(),
            },
            right: Occurrence {
                utterance: "u1#asr".into(),
                index: 1,
                token: Token::new("fair").unwrap(),
            },
        };
        let mut buf = Vec::new();
        write_confusions(&mut buf, std::slice::from_ref(&p)).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "u1\t1\tfare\tu1#asr\t1\tfair\n");
        assert_eq!(parse_confusions(&buf[..], "mem").unwrap(), vec![p]);
    }

    #[test]
    fn token_rejects_bad_surface() {
        assert!(Token::new("").is_err());
        assert!(Token::new("a b").is_err());
        assert!(Token::new("Ab").is_err());
    }
}
