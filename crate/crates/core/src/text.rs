//! Tokenization, stopword filtering and frequency-thresholded vocabularies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_STOPWORDS: &str = include_str!("../assets/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("min_count must be at least 1")]
    ZeroMinCount,
    #[error("vocabulary is empty after applying min_count {0}")]
    EmptyVocabulary(u64),
    #[error("cannot read stopword list {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Set of lowercase tokens removed during preprocessing.
#[derive(Debug, Clone, Default)]
pub struct StopList(HashSet<String>);

impl StopList {
    /// The bundled 318-entry English list.
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn empty() -> Self {
        StopList(HashSet::new())
    }

    /// One token per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        StopList(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|source| TextError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopList {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        StopList(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Preprocessed note: lowercase alphanumeric tokens, no stopwords, none shorter than 2 chars.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn preprocess_note(text: &str, stoplist: &StopList) -> TokenSequence {
    let lowered = text.to_lowercase();
    TokenSequence(
        lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().nth(1).is_some())
            .filter(|t| !stoplist.contains(t))
            .map(str::to_string)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Keeps tokens seen at least `min_count` times. Indices run by descending
/// count, ties broken lexicographically.
pub fn build_vocabulary<'a, I>(corpus: I, min_count: u64) -> Result<Vocabulary, TextError>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    if min_count == 0 {
        return Err(TextError::ZeroMinCount);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for seq in corpus {
        for t in seq.iter() {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary(min_count));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Ok(Vocabulary {
        counts: kept.iter().map(|&(_, c)| c).collect(),
        words,
        index,
        min_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence(tokens.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn bundled_list_size() {
        let s = StopList::english();
        assert_eq!(s.len(), 318);
        assert!(s.contains("the") && s.contains("and") && s.contains("of"));
    }

    #[test]
    fn clinical_shorthand() {
        let s = StopList::english();
        assert_eq!(
            preprocess_note("Pt c/o SOB; RR 22.", &s).tokens(),
            seq(&["pt", "sob", "rr", "22"]).tokens()
        );
        assert!(preprocess_note("", &s).is_empty());
        assert!(preprocess_note("the and of", &s).is_empty());
    }

    #[test]
    fn multiline_and_punctuation() {
        let s = StopList::english();
        let t = preprocess_note("BP 120/80,\nHR-88\tO2sat 97%", &s);
        assert_eq!(
            t.tokens(),
            seq(&["bp", "120", "80", "hr", "88", "o2sat", "97"]).tokens()
        );
    }

    #[test]
    fn threshold_and_ties() {
        let mut tokens = vec!["a"; 6];
        tokens.extend(vec!["b"; 4]);
        let v = build_vocabulary([&seq(&tokens)], 5).unwrap();
        assert_eq!(v.words(), &["a".to_string()]);

        let v = build_vocabulary([&seq(&["b", "a", "b", "a", "a", "b"])], 1).unwrap();
        assert_eq!(v.words(), &["a".to_string(), "b".to_string()]);

        let v = build_vocabulary([&seq(&["x", "y", "y", "z"]), &seq(&["z", "z"])], 1).unwrap();
        assert_eq!(v.words(), &["z", "y", "x"].map(String::from));
        assert_eq!(v.counts(), &[3, 2, 1]);
    }

    #[test]
    fn vocabulary_errors() {
        assert!(matches!(
            build_vocabulary([&seq(&["a"])], 0),
            Err(TextError::ZeroMinCount)
        ));
        assert!(matches!(
            build_vocabulary([&seq(&["a"])], 2),
            Err(TextError::EmptyVocabulary(2))
        ));
    }

    proptest! {
        #[test]
        fn preprocessing_is_idempotent(text in "\\PC{0,80}") {
            let s = StopList::english();
            let once = preprocess_note(&text, &s);
            let twice = preprocess_note(&once.join(), &s);
            prop_assert_eq!(&once, &twice);
            for t in once.iter() {
                prop_assert!(t.chars().count() >= 2);
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert!(!s.contains(t));
            }
        }

        #[test]
        fn vocabulary_indices_are_dense(words in proptest::collection::vec("[a-e]{1,2}", 1..60)) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let corpus = seq(&refs);
            let v = build_vocabulary([&corpus], 1).unwrap();
            let distinct: HashSet<&str> = refs.iter().copied().collect();
            prop_assert_eq!(v.len(), distinct.len());
            for i in 0..v.len() {
                prop_assert_eq!(v.index_of(v.word(i)), Some(i));
            }
        }
    }
}
