use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training/evaluation regime.
///
/// `Ranking` lists carry exactly one click among the valid documents;
/// `Classification` examples hold one document with a binary label.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ranking,
    Classification,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ranking => "ranking",
            Mode::Classification => "classification",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" => Ok(Mode::Ranking),
            "classification" => Ok(Mode::Classification),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Word n-gram and character n-gram ids of a piece of text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseFeatures {
    #[serde(rename = "ngrams")]
    pub ngram_ids: Vec<u32>,
    #[serde(rename = "char_ngrams")]
    pub char_ngram_ids: Vec<u32>,
}

impl SparseFeatures {
    pub fn new(ngram_ids: Vec<u32>, char_ngram_ids: Vec<u32>) -> Self {
        SparseFeatures {
            ngram_ids,
            char_ngram_ids,
        }
    }

    pub fn max_id(&self) -> Option<u32> {
        self.ngram_ids.iter().chain(&self.char_ngram_ids).copied().max()
    }
}

pub type QueryFeatures = SparseFeatures;
pub type DocSparseFeatures = SparseFeatures;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(flatten)]
    pub sparse: DocSparseFeatures,
    pub dense: Vec<f64>,
}

impl Document {
    pub fn new(sparse: DocSparseFeatures, dense: Vec<f64>) -> Self {
        Document { sparse, dense }
    }

    fn padding(dense_dim: usize) -> Self {
        Document {
            sparse: SparseFeatures::default(),
            dense: vec![0.0; dense_dim],
        }
    }
}

/// One query with a fixed-size candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingExample {
    pub query: QueryFeatures,
    pub docs: Vec<Document>,
    /// `false` marks padded slots.
    pub mask: Vec<bool>,
    pub labels: Vec<u8>,
    pub propensity_weight: f64,
}

impl RankingExample {
    /// A single-document example with a binary label.
    pub fn classification(query: QueryFeatures, doc: Document, label: bool) -> Self {
        RankingExample {
            query,
            docs: vec![doc],
            mask: vec![true],
            labels: vec![u8::from(label)],
            propensity_weight: 1.0,
        }
    }

    /// A ranking list padded to `list_size`; `clicked` indexes into `docs`.
    pub fn ranking(
        query: QueryFeatures,
        docs: Vec<Document>,
        clicked: usize,
        list_size: usize,
    ) -> Result<Self> {
        if docs.is_empty() || docs.len() > list_size {
            return Err(Error::validation(format!(
                "a list needs between 1 and {list_size} documents, got {}",
                docs.len()
            )));
        }
        if clicked >= docs.len() {
            return Err(Error::validation(format!(
                "clicked index {clicked} outside a list of {} documents",
                docs.len()
            )));
        }
        let dense_dim = docs[0].dense.len();
        let valid = docs.len();
        let mut docs = docs;
        docs.resize_with(list_size, || Document::padding(dense_dim));
        let mut labels = vec![0; list_size];
        labels[clicked] = 1;
        Ok(RankingExample {
            query,
            docs,
            mask: (0..list_size).map(|i| i < valid).collect(),
            labels,
            propensity_weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.propensity_weight = weight;
        self
    }

    pub fn list_size(&self) -> usize {
        self.docs.len()
    }

    pub fn num_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Index of the first clicked valid document.
    pub fn clicked_index(&self) -> Option<usize> {
        (0..self.labels.len()).find(|&i| self.mask[i] && self.labels[i] == 1)
    }

    pub fn validate(&self, mode: Mode, list_size: usize, dense_dim: usize) -> Result<()> {
        let n = self.docs.len();
        if n != list_size || self.mask.len() != n || self.labels.len() != n {
            return Err(Error::validation(format!(
                "expected {list_size} docs/mask/labels, got {}/{}/{}",
                n,
                self.mask.len(),
                self.labels.len()
            )));
        }
        if mode == Mode::Classification && list_size != 1 {
            return Err(Error::validation("classification examples hold exactly one document"));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(Error::validation("list has no valid documents"));
        }
        for (i, doc) in self.docs.iter().enumerate() {
            if doc.dense.len() != dense_dim {
                return Err(Error::validation(format!(
                    "doc {i} has {} dense values, expected {dense_dim}",
                    doc.dense.len()
                )));
            }
            if doc.dense.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("doc {i} has non-finite dense values")));
            }
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::validation("labels must be 0 or 1"));
        }
        if self.labels.iter().zip(&self.mask).any(|(&y, &m)| y == 1 && !m) {
            return Err(Error::validation("padded slot carries a click"));
        }
        if mode == Mode::Ranking {
            let clicks = self.labels.iter().filter(|&&y| y == 1).count();
            if clicks != 1 {
                return Err(Error::validation(format!(
                    "ranking lists need exactly one click, got {clicks}"
                )));
            }
        }
        if !(self.propensity_weight.is_finite() && self.propensity_weight > 0.0) {
            return Err(Error::validation(format!(
                "propensity weight must be positive, got {}",
                self.propensity_weight
            )));
        }
        Ok(())
    }
}
