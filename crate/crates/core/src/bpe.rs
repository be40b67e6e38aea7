//! Byte-pair-encoding merge learning and subword segmentation.
//!
//! Words are represented as space-separated symbol sequences terminated by
//! the end-of-word marker [`END_OF_WORD`]. Learning repeatedly merges the most
//! frequent adjacent symbol pair; segmentation replays the learned merges in
//! order on a single word.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

/// Marker appended to every word before learning or segmentation.
pub const END_OF_WORD: &str = "</w>";

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("vocabulary entry {0:?} does not end with the end-of-word marker")]
    MissingEndMarker(String),
    #[error("vocabulary entry {0:?} has a zero count")]
    ZeroCount(String),
    #[error("merge table line {line}: expected \"left right\", got {text:?}")]
    MalformedMerge { line: usize, text: String },
    #[error("merge table line {line}: duplicate pair {left:?} {right:?}")]
    DuplicateMerge {
        line: usize,
        left: String,
        right: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Word frequencies keyed by their current symbolization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountedVocab {
    entries: BTreeMap<Vec<String>, u64>,
}

impl CountedVocab {
    /// Builds a vocabulary from `("x i n h </w>", 10)`-style entries.
    pub fn from_symbolized<I, S>(entries: I) -> Result<Self, BpeError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut vocab = CountedVocab::default();
        for (key, count) in entries {
            let key = key.as_ref();
            let symbols: Vec<String> = key.split_whitespace().map(str::to_owned).collect();
            if symbols.last().map(String::as_str) != Some(END_OF_WORD) {
                return Err(BpeError::MissingEndMarker(key.to_owned()));
            }
            if count == 0 {
                return Err(BpeError::ZeroCount(key.to_owned()));
            }
            *vocab.entries.entry(symbols).or_insert(0) += count;
        }
        Ok(vocab)
    }

    /// Counts plain words (e.g. whitespace tokens of a corpus), splitting each
    /// into characters plus the end-of-word marker.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = CountedVocab::default();
        for word in words {
            let word = word.as_ref();
            if word.is_empty() {
                continue;
            }
            *vocab.entries.entry(initial_symbols(word)).or_insert(0) += 1;
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries as `(space-joined symbols, count)`, in key order.
    pub fn entries(&self) -> impl Iterator<Item = (String, u64)> + '_ {
        self.entries.iter().map(|(k, &c)| (k.join(" "), c))
    }

    /// Total count of each symbol across all words, weighted by word count.
    pub fn token_inventory(&self) -> BTreeMap<String, u64> {
        let mut inventory = BTreeMap::new();
        for (symbols, &count) in &self.entries {
            for symbol in symbols {
                *inventory.entry(symbol.clone()).or_insert(0) += count;
            }
        }
        inventory
    }

    fn pair_frequencies(&self) -> HashMap<(&str, &str), u64> {
        let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, &count) in &self.entries {
            for window in symbols.windows(2) {
                *pairs.entry((&window[0], &window[1])).or_insert(0) += count;
            }
        }
        pairs
    }

    fn apply_merge(&self, left: &str, right: &str) -> Self {
        let mut entries = BTreeMap::new();
        for (symbols, &count) in &self.entries {
            *entries.entry(merge_pair(symbols, left, right)).or_insert(0) += count;
        }
        CountedVocab { entries }
    }
}

/// Ordered list of learned merges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        MergeTable { merges }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Reads the codes format: one `left right` pair per line. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, BpeError> {
        let mut merges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split(' ');
            let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(BpeError::MalformedMerge {
                    line: idx + 1,
                    text: trimmed.to_owned(),
                });
            };
            if left.is_empty() || right.is_empty() {
                return Err(BpeError::MalformedMerge {
                    line: idx + 1,
                    text: trimmed.to_owned(),
                });
            }
            let pair = (left.to_owned(), right.to_owned());
            if !seen.insert(pair.clone()) {
                return Err(BpeError::DuplicateMerge {
                    line: idx + 1,
                    left: pair.0,
                    right: pair.1,
                });
            }
            merges.push(pair);
        }
        Ok(MergeTable { merges })
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<(), BpeError> {
        for (left, right) in &self.merges {
            writeln!(writer, "{left} {right}")?;
        }
        Ok(())
    }
}

impl fmt::Display for MergeTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (left, right) in &self.merges {
            writeln!(f, "{left} {right}")?;
        }
        Ok(())
    }
}

impl FromStr for MergeTable {
    type Err = BpeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MergeTable::read_from(s.as_bytes())
    }
}

/// Learns up to `num_merges` merges.
///
/// Each round merges the globally most frequent adjacent pair, ties broken by
/// the lexicographically smallest `(left, right)`. Learning stops early once
/// the best pair occurs fewer than two times.
pub fn learn_merges(
    vocab: &CountedVocab,
    num_merges: usize,
) -> Result<(MergeTable, CountedVocab), BpeError> {
    if vocab.is_empty() {
        return Err(BpeError::EmptyVocab);
    }
    let mut current = vocab.clone();
    let mut merges = Vec::new();
    for _ in 0..num_merges {
        let best = {
            let pairs = current.pair_frequencies();
            pairs
                .into_iter()
                .max_by(|(pa, fa), (pb, fb)| fa.cmp(fb).then_with(|| pb.cmp(pa)))
                .map(|((l, r), f)| ((l.to_owned(), r.to_owned()), f))
        };
        let Some(((left, right), freq)) = best else {
            break;
        };
        if freq < 2 {
            break;
        }
        current = current.apply_merge(&left, &right);
        merges.push((left, right));
    }
    Ok((MergeTable { merges }, current))
}

/// Splits `word` into subword units by replaying `merges` in learned order.
///
/// The returned pieces keep the end-of-word marker, either fused into the
/// final piece or as a trailing standalone `"</w>"`.
pub fn segment_word(word: &str, merges: &MergeTable) -> Vec<String> {
    let mut symbols = initial_symbols(word);
    for (left, right) in &merges.merges {
        if symbols.len() < 2 {
            break;
        }
        symbols = merge_pair(&symbols, left, right);
    }
    symbols
}

/// Display form of a segmentation: end-of-word markers stripped and empty
/// pieces dropped.
pub fn display_segments(segments: &[String]) -> Vec<String> {
    segments
        .iter()
        .map(|s| s.strip_suffix(END_OF_WORD).unwrap_or(s).to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .map(String::from)
        .chain(std::iter::once(END_OF_WORD.to_owned()))
        .collect()
}

fn merge_pair(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}
