use std::collections::{BTreeSet, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;

use super::example::SparseFeatures;
use crate::error::{Error, Result};

/// Joins the words of a word n-gram. Not printable, so "a b" as one token
/// never collides with the bigram of "a" and "b".
pub const NGRAM_SEPARATOR: char = '\u{1f}';

/// Token → id mapping. Id 0 is reserved for padding and unknown tokens.
#[derive(Clone, Debug, PartialEq)]
pub enum Vocab {
    Explicit {
        index: HashMap<String, u32>,
        tokens: Vec<String>,
    },
    Hashed {
        bucket_count: u32,
    },
}

impl Vocab {
    /// Keeps tokens seen at least `min_frequency` times, ordered by
    /// descending frequency and then lexicographically. Ids start at 1.
    pub fn build<I, S>(tokens: I, min_frequency: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if min_frequency == 0 {
            return Err(Error::config("min_frequency must be at least 1"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t.as_ref().to_owned()).or_default() += 1;
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Ok(Vocab::Explicit { index, tokens })
    }

    pub fn hashed(bucket_count: u32) -> Result<Self> {
        if bucket_count == 0 {
            return Err(Error::config("hashed vocabulary needs at least one bucket"));
        }
        Ok(Vocab::Hashed { bucket_count })
    }

    /// Id of `token`: 0 when unknown in explicit mode, `1..=bucket_count`
    /// when hashed.
    pub fn lookup(&self, token: &str) -> u32 {
        match self {
            Vocab::Explicit { index, .. } => index.get(token).copied().unwrap_or(0),
            Vocab::Hashed { bucket_count } => {
                let mut h = FnvHasher::default();
                h.write(token.as_bytes());
                1 + (h.finish() % u64::from(*bucket_count)) as u32
            }
        }
    }

    /// Rows an embedding table over this vocabulary needs, padding included.
    pub fn table_rows(&self) -> usize {
        match self {
            Vocab::Explicit { tokens, .. } => tokens.len() + 1,
            Vocab::Hashed { bucket_count } => *bucket_count as usize + 1,
        }
    }

    /// Number of real (non-padding) entries.
    pub fn len(&self) -> usize {
        self.table_rows() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        match self {
            Vocab::Explicit { tokens, .. } if id > 0 => tokens.get(id as usize - 1).map(String::as_str),
            _ => None,
        }
    }
}

/// Word n-grams over whitespace-split, lowercased tokens.
pub fn word_ngrams(text: &str, orders: &BTreeSet<usize>) -> Vec<String> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let sep = NGRAM_SEPARATOR.to_string();
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || n > words.len() {
            continue;
        }
        out.extend(words.windows(n).map(|w| w.join(&sep)));
    }
    out
}

/// Character n-grams over the raw lowercased string.
pub fn char_ngrams(text: &str, orders: &BTreeSet<usize>) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || n > chars.len() {
            continue;
        }
        out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// Maps raw text to n-gram and character n-gram ids.
#[derive(Clone, Debug)]
pub struct TextFeaturizer {
    pub vocab: Vocab,
    pub ngram_orders: BTreeSet<usize>,
    pub char_ngram_orders: BTreeSet<usize>,
}

impl TextFeaturizer {
    pub fn new(vocab: Vocab, ngram_orders: &[usize], char_ngram_orders: &[usize]) -> Result<Self> {
        if ngram_orders.is_empty() || char_ngram_orders.is_empty() {
            return Err(Error::config("n-gram orders must be non-empty"));
        }
        Ok(TextFeaturizer {
            vocab,
            ngram_orders: ngram_orders.iter().copied().collect(),
            char_ngram_orders: char_ngram_orders.iter().copied().collect(),
        })
    }

    /// Word orders {1, 2}, character orders {3, 4}.
    pub fn with_default_orders(vocab: Vocab) -> Self {
        Self::new(vocab, &[1, 2], &[3, 4]).expect("default orders are non-empty")
    }

    /// Every token `featurize` would look up, for building a vocabulary.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let mut t = word_ngrams(text, &self.ngram_orders);
        t.extend(char_ngrams(text, &self.char_ngram_orders));
        t
    }

    pub fn featurize(&self, text: &str) -> SparseFeatures {
        let ids = |grams: Vec<String>| grams.iter().map(|g| self.vocab.lookup(g)).collect();
        SparseFeatures::new(
            ids(word_ngrams(text, &self.ngram_orders)),
            ids(char_ngrams(text, &self.char_ngram_orders)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orders(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn min_frequency_threshold() {
        let v = Vocab::build(["a", "a", "b"], 2).unwrap();
        assert_eq!(v.lookup("a"), 1);
        assert_eq!(v.lookup("b"), 0);
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn equal_counts_order_lexicographically() {
        let v = Vocab::build(["b", "a"], 1).unwrap();
        assert_eq!(v.lookup("a"), 1);
        assert_eq!(v.lookup("b"), 2);
        assert_eq!(v.token(2), Some("b"));
    }

    #[test]
    fn empty_stream_is_valid() {
        let v = Vocab::build(Vec::<String>::new(), 1).unwrap();
        assert!(v.is_empty());
        assert!(Vocab::build(["a"], 0).is_err());
    }

    #[test]
    fn featurize_examples() {
        let f = TextFeaturizer::new(Vocab::hashed(97).unwrap(), &[1, 2], &[3]).unwrap();
        assert_eq!(f.featurize(""), SparseFeatures::default());

        assert_eq!(
            word_ngrams("a b", &orders(&[1, 2])),
            vec!["a".to_string(), "b".into(), format!("a{NGRAM_SEPARATOR}b")]
        );
        assert_eq!(char_ngrams("flight", &orders(&[3])), vec!["fli", "lig", "igh", "ght"]);
        assert_eq!(char_ngrams("FLIGHT", &orders(&[3])), char_ngrams("flight", &orders(&[3])));
    }

    #[test]
    fn bigram_differs_from_spaced_token() {
        let vocab = Vocab::build(["a b".to_string(), format!("a{NGRAM_SEPARATOR}b")], 1).unwrap();
        assert_ne!(vocab.lookup("a b"), vocab.lookup(&format!("a{NGRAM_SEPARATOR}b")));
    }

    #[test]
    fn explicit_vocab_maps_unknowns_to_padding() {
        let f = TextFeaturizer::new(Vocab::build(["hello"], 1).unwrap(), &[1], &[5]).unwrap();
        let feats = f.featurize("hello world");
        assert_eq!(feats.ngram_ids, vec![1, 0]);
        assert_eq!(feats.char_ngram_ids.len(), "hello world".len() - 4);
        // word and character n-grams share one token space
        assert_eq!(feats.char_ngram_ids[0], 1);
        assert!(feats.char_ngram_ids[1..].iter().all(|&id| id == 0));
    }

    #[test]
    fn seeded_stream_matches_independent_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let stream: Vec<String> = (0..1000).map(|_| format!("t{}", rng.random_range(0..300))).collect();
        let mut expected = 0;
        for k in 0..300 {
            let name = format!("t{k}");
            if stream.iter().filter(|s| **s == name).count() >= 4 {
                expected += 1;
            }
        }
        let v = Vocab::build(&stream, 4).unwrap();
        assert_eq!(v.len(), expected);
        assert_eq!(Vocab::build(&stream, 4).unwrap(), v);
    }

    proptest! {
        #[test]
        fn featurize_is_total_and_deterministic(text in "\\PC{0,40}") {
            let f = TextFeaturizer::with_default_orders(Vocab::hashed(1 << 10).unwrap());
            let a = f.featurize(&text);
            prop_assert_eq!(&a, &f.featurize(&text));
            prop_assert!(a.max_id().is_none_or(|m| m as usize <= 1 << 10));
        }
    }
}
