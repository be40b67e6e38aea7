//! Text cleaning, corpus filtering and sentence-length profiling.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SenderRole;

/// Punctuation marks stripped before any other cleaning step.
pub const BANNED_PUNCTUATION: [char; 5] = ['!', '"', '?', '\'', ':'];

/// Longest input the downstream encoder accepts, in tokens.
pub const MAX_SEQUENCE_LENGTH: usize = 256;

/// Documents shorter than this (in whitespace tokens) are dropped.
pub const MIN_TOKENS: usize = 4;

pub const DEFAULT_COVERAGE: f64 = 0.95;

/// The default stop words for Vietnamese messenger chatter.
pub const DEFAULT_STOPWORDS: [&str; 9] = [
    "dạ", "vâng", "chào ad", "vâng ạ", "alo", "ừ", "vậy", "ok", "nhé",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("coverage must lie in (0, 1], got {0}")]
    InvalidCoverage(f64),
    #[error("stop word list is empty")]
    EmptyStopwords,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One cleaned sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i32>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = text.split_whitespace().count();
        Document {
            id: id.into(),
            text,
            token_count,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Option<i32>) -> Self {
        self.label = label;
        self
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

/// Lowercase stop words and stop phrases, matched as whole token sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    // sorted longest phrase first
    phrases: Vec<Vec<String>>,
}

impl StopwordList {
    pub fn new<I, S>(entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut phrases: Vec<Vec<String>> = entries
            .into_iter()
            .map(|e| {
                e.as_ref()
                    .to_lowercase()
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
            })
            .filter(|p| !p.is_empty())
            .filter(|p| seen.insert(p.clone()))
            .collect();
        if phrases.is_empty() {
            return Err(CorpusError::EmptyStopwords);
        }
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Ok(StopwordList { phrases })
    }

    /// Reads one entry per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_owned(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut entries = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                entries.push(line.to_owned());
            }
        }
        StopwordList::new(entries)
    }

    /// The defaults plus every entry of `other`.
    pub fn extended(&self, other: &StopwordList) -> StopwordList {
        StopwordList::new(
            self.phrases
                .iter()
                .chain(&other.phrases)
                .map(|p| p.join(" ")),
        )
        .expect("union of non-empty lists is non-empty")
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = String> + '_ {
        self.phrases.iter().map(|p| p.join(" "))
    }

    fn match_len(&self, tokens: &[&str]) -> Option<usize> {
        self.phrases
            .iter()
            .find(|p| p.len() <= tokens.len() && p.iter().zip(tokens).all(|(a, b)| a == b))
            .map(Vec::len)
    }

    fn strip_once(&self, tokens: &[&str]) -> (Vec<usize>, bool) {
        let mut kept = Vec::with_capacity(tokens.len());
        let mut changed = false;
        let mut i = 0;
        while i < tokens.len() {
            match self.match_len(&tokens[i..]) {
                Some(n) => {
                    i += n;
                    changed = true;
                }
                None => {
                    kept.push(i);
                    i += 1;
                }
            }
        }
        (kept, changed)
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        StopwordList::new(DEFAULT_STOPWORDS).expect("defaults are non-empty")
    }
}

/// Splits already-cleaned text into words. Vietnamese multi-syllable words
/// are expected to arrive joined with `_` by an external segmenter.
pub trait WordSegmenter {
    fn segment(&self, text: &str) -> String;
}

/// Leaves the text untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySegmenter;

impl WordSegmenter for IdentitySegmenter {
    fn segment(&self, text: &str) -> String {
        text.to_owned()
    }
}

/// Strips banned punctuation, lowercases, removes stop words and collapses
/// whitespace.
///
/// Stop phrases are removed longest match first, repeatedly, until none is
/// left, so removing one phrase can expose another.
pub fn clean_text(raw: &str, stopwords: &StopwordList) -> String {
    let stripped: String = raw
        .chars()
        .filter(|c| !BANNED_PUNCTUATION.contains(c))
        .collect();
    let lowered = stripped.to_lowercase();
    let mut tokens: Vec<&str> = lowered.split_whitespace().collect();
    loop {
        let (kept, changed) = stopwords.strip_once(&tokens);
        if !changed {
            break;
        }
        tokens = kept.into_iter().map(|i| tokens[i]).collect();
    }
    tokens.join(" ")
}

/// Drops documents under [`MIN_TOKENS`] tokens and later duplicates of a text.
pub fn filter_corpus(docs: Vec<Document>) -> Vec<Document> {
    let mut seen = HashSet::new();
    docs.into_iter()
        .filter(|d| d.token_count >= MIN_TOKENS)
        .filter(|d| seen.insert(d.text.clone()))
        .collect()
}

/// Sentence-length histogram and the padding length derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub histogram: BTreeMap<usize, usize>,
    pub total: usize,
    pub padding_length: usize,
}

/// Computes the token-count histogram and the smallest length covering at
/// least `coverage` of the documents, capped at [`MAX_SEQUENCE_LENGTH`].
pub fn profile_and_pad(docs: &[Document], coverage: f64) -> Result<CorpusStats, CorpusError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(CorpusError::InvalidCoverage(coverage));
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut histogram = BTreeMap::new();
    for doc in docs {
        *histogram.entry(doc.token_count).or_insert(0) += 1;
    }
    let total = docs.len();
    // relative slack keeps e.g. 0.95 * 20 from rounding up past 19
    let needed = coverage * total as f64 * (1.0 - 1e-12);
    let mut cumulative = 0usize;
    let mut padding_length = *histogram.keys().last().expect("non-empty");
    for (&len, &count) in &histogram {
        cumulative += count;
        if cumulative as f64 >= needed {
            padding_length = len;
            break;
        }
    }
    Ok(CorpusStats {
        histogram,
        total,
        padding_length: padding_length.clamp(1, MAX_SEQUENCE_LENGTH),
    })
}

/// A corpus line as written by `fetch` or by hand. Every field but `text` is
/// optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub conversation_id: Option<String>,
    #[serde(default)]
    pub sender_role: Option<SenderRole>,
    pub text: String,
    #[serde(default)]
    pub created_at: Option<i64>,
    #[serde(default)]
    pub label: Option<i32>,
}

impl CorpusRecord {
    /// Explicit `id`, else `conversation_id:created_at`, else the line number.
    pub fn stable_id(&self, line: usize) -> String {
        match (&self.id, &self.conversation_id, self.created_at) {
            (Some(id), _, _) => id.clone(),
            (None, Some(conv), Some(ts)) => format!("{conv}:{ts}:{line}"),
            (None, Some(conv), None) => format!("{conv}:{line}"),
            _ => format!("line-{line}"),
        }
    }
}

/// Reads a JSONL corpus; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            path: path.to_owned(),
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Options for [`preprocess`].
#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    pub stopwords: StopwordList,
    /// Keep only messages from this sender, when set.
    pub sender: Option<SenderRole>,
}

/// Cleans and filters raw records into documents.
pub fn preprocess(
    records: &[CorpusRecord],
    options: &PreprocessOptions,
    segmenter: &dyn WordSegmenter,
) -> Vec<Document> {
    let docs = records
        .iter()
        .enumerate()
        .filter(|(_, r)| match (options.sender, r.sender_role) {
            (Some(want), Some(got)) => want == got,
            _ => true,
        })
        .map(|(line, r)| {
            let cleaned = clean_text(&r.text, &options.stopwords);
            Document::new(r.stable_id(line + 1), segmenter.segment(&cleaned)).with_label(r.label)
        })
        .collect();
    filter_corpus(docs)
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>, CorpusError> {
    Ok(read_records(path)?
        .into_iter()
        .enumerate()
        .map(|(line, r)| Document::new(r.stable_id(line + 1), r.text).with_label(r.label))
        .collect())
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<usize, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("documents always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(docs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document::new(text, text)
    }

    #[test]
    fn removes_single_stopword_and_punctuation() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("dạ em muốn hỏi học phí ạ!", &sw), "em muốn hỏi học phí ạ");
    }

    #[test]
    fn removes_multi_word_stopwords() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("chào ad cho em hỏi ktx nhé?", &sw), "cho em hỏi ktx");
    }

    #[test]
    fn empty_input_stays_empty() {
        assert_eq!(clean_text("", &StopwordList::default()), "");
    }

    #[test]
    fn longest_phrase_wins() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("vâng ạ em cảm ơn", &sw), "em cảm ơn");
        assert_eq!(clean_text("vâng em cảm ơn ạ", &sw), "em cảm ơn ạ");
    }

    #[test]
    fn punctuation_goes_before_matching() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("OK? Em hiểu rồi", &sw), "em hiểu rồi");
    }

    #[test]
    fn removal_can_expose_a_phrase() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("chào dạ ad bạn", &sw), "bạn");
    }

    #[test]
    fn stopword_matching_is_whole_token() {
        let sw = StopwordList::default();
        assert_eq!(clean_text("okay nhéé", &sw), "okay nhéé");
    }

    #[test]
    fn filter_drops_short_and_duplicates() {
        let out = filter_corpus(vec![doc("a b c"), doc("a b c d"), doc("a b c d")]);
        assert_eq!(out, vec![doc("a b c d")]);
        assert!(filter_corpus(Vec::new()).is_empty());
    }

    #[test]
    fn filter_keeps_distinct_long_sentences() {
        let docs: Vec<_> = (0..10).map(|i| doc(&format!("w{i} a b c d"))).collect();
        // independent dedup pass
        let mut seen = HashSet::new();
        let expected: Vec<_> = docs
            .iter()
            .filter(|d| d.token_count >= 4 && seen.insert(d.text.clone()))
            .cloned()
            .collect();
        assert_eq!(expected.len(), 10);
        assert_eq!(filter_corpus(docs), expected);
    }

    fn docs_with_lengths(lengths: &[usize]) -> Vec<Document> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| Document::new(i.to_string(), vec!["w"; n].join(" ")))
            .collect()
    }

    #[test]
    fn padding_is_the_coverage_quantile() {
        let stats = profile_and_pad(&docs_with_lengths(&[5, 10, 33, 40]), 0.75).unwrap();
        assert_eq!(stats.padding_length, 33);
        assert_eq!(stats.total, 4);
        assert_eq!(stats.histogram.values().sum::<usize>(), 4);
    }

    #[test]
    fn degenerate_distribution_pads_to_its_length() {
        for coverage in [0.01, 0.5, 0.95, 1.0] {
            let stats = profile_and_pad(&docs_with_lengths(&[7; 20]), coverage).unwrap();
            assert_eq!(stats.padding_length, 7);
        }
    }

    #[test]
    fn padding_is_capped() {
        let stats = profile_and_pad(&docs_with_lengths(&[300, 300]), 1.0).unwrap();
        assert_eq!(stats.padding_length, MAX_SEQUENCE_LENGTH);
    }

    #[test]
    fn coverage_rounding_does_not_overshoot() {
        let mut lengths = vec![5; 19];
        lengths.push(50);
        let stats = profile_and_pad(&docs_with_lengths(&lengths), 0.95).unwrap();
        assert_eq!(stats.padding_length, 5);
    }

    #[test]
    fn profile_rejects_bad_input() {
        assert!(matches!(profile_and_pad(&[], 0.9), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(
            profile_and_pad(&docs_with_lengths(&[4]), 0.0),
            Err(CorpusError::InvalidCoverage(_))
        ));
    }

    #[test]
    fn empty_stopword_list_is_rejected() {
        assert!(matches!(
            StopwordList::new(Vec::<String>::new()),
            Err(CorpusError::EmptyStopwords)
        ));
    }

    #[test]
    fn stopword_file_extends_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sw.txt");
        std::fs::write(&path, "# extra\nỞ Đâu\n\nạ\n").unwrap();
        let extra = StopwordList::from_file(&path).unwrap();
        let all = StopwordList::default().extended(&extra);
        assert_eq!(all.len(), 11);
        assert_eq!(clean_text("ở đâu vậy ạ em ơi", &all), "em ơi");
    }

    #[test]
    fn preprocess_filters_roles_and_keeps_labels() {
        let records = vec![
            CorpusRecord {
                id: Some("a".into()),
                sender_role: Some(SenderRole::Client),
                text: "Dạ cho em hỏi học phí ạ?".into(),
                label: Some(2),
                ..Default::default()
            },
            CorpusRecord {
                conversation_id: Some("c1".into()),
                sender_role: Some(SenderRole::Admin),
                text: "chào bạn, học phí là bao nhiêu".into(),
                ..Default::default()
            },
        ];
        let opts = PreprocessOptions {
            sender: Some(SenderRole::Client),
            ..Default::default()
        };
        let docs = preprocess(&records, &opts, &IdentitySegmenter);
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "a");
        assert_eq!(docs[0].text, "cho em hỏi học phí ạ");
        assert_eq!(docs[0].label, Some(2));

        let all = preprocess(&records, &PreprocessOptions::default(), &IdentitySegmenter);
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].id, "c1:2");
    }

    #[test]
    fn documents_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        let docs = vec![
            Document::new("x", "một hai ba bốn").with_label(Some(1)),
            Document::new("y", "năm sáu bảy tám"),
        ];
        assert_eq!(write_documents(&path, &docs).unwrap(), 2);
        assert_eq!(read_documents(&path).unwrap(), docs);
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(raw in "[a-zA-Z!?:'\" ạđẹừậ]{0,40}") {
            let sw = StopwordList::new(["ab", "a b", "ừ", "ok", "c ạ", "vậy"]).unwrap();
            let once = clean_text(&raw, &sw);
            prop_assert_eq!(clean_text(&once, &sw), once.clone());
            prop_assert!(!once.contains(BANNED_PUNCTUATION));
        }

        #[test]
        fn filter_output_is_distinct_and_long(texts in proptest::collection::vec("(a|b|c)( (a|b|c)){0,6}", 0..30)) {
            let out = filter_corpus(texts.iter().map(|t| doc(t)).collect());
            let distinct: HashSet<_> = out.iter().map(|d| &d.text).collect();
            prop_assert_eq!(distinct.len(), out.len());
            prop_assert!(out.iter().all(|d| d.token_count >= MIN_TOKENS));
        }

        #[test]
        fn padding_monotone_in_coverage(
            lengths in proptest::collection::vec(1usize..400, 1..40),
            a in 0.01f64..=1.0,
            b in 0.01f64..=1.0,
        ) {
            let docs = docs_with_lengths(&lengths);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = profile_and_pad(&docs, lo).unwrap().padding_length;
            let p_hi = profile_and_pad(&docs, hi).unwrap().padding_length;
            prop_assert!(p_lo <= p_hi);
            prop_assert!(p_hi <= MAX_SEQUENCE_LENGTH);
        }
    }
}
