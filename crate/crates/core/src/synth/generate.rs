use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, DatasetHeader, Document, Mode, RankingExample, SparseFeatures};
use crate::nn::{dot, Tensor};

pub const DEFAULT_TRIGGER_WORDS: [&str; 4] = ["recent", "latest", "newest", "today"];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Dataset 1: sparse matching only.
    Sparse,
    /// Dataset 2: trigger query and negative dense sum.
    Dense,
    /// Dataset 3: conjunction of the two.
    Combined,
}

impl LabelRule {
    pub const ALL: [LabelRule; 3] = [LabelRule::Sparse, LabelRule::Dense, LabelRule::Combined];

    /// 1-based dataset number.
    pub fn dataset_number(self) -> usize {
        match self {
            LabelRule::Sparse => 1,
            LabelRule::Dense => 2,
            LabelRule::Combined => 3,
        }
    }

    fn uses_triggers(self) -> bool {
        self != LabelRule::Sparse
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelRule::Sparse => "sparse",
            LabelRule::Dense => "dense",
            LabelRule::Combined => "combined",
        })
    }
}

impl FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "1" => Ok(LabelRule::Sparse),
            "dense" | "2" => Ok(LabelRule::Dense),
            "combined" | "3" => Ok(LabelRule::Combined),
            other => Err(Error::config(format!("unknown label rule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub embedding_dim: usize,
    pub vocab_size: usize,
    pub dense_dim: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub seed: u64,
    /// Probability that a dataset 2/3 query is drawn from the trigger set.
    pub trigger_fraction: f64,
    pub trigger_words: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            embedding_dim: 100,
            vocab_size: 50,
            dense_dim: 100,
            num_train: 20_000,
            num_test: 20_000,
            seed: 7,
            trigger_fraction: 0.5,
            trigger_words: DEFAULT_TRIGGER_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.dense_dim == 0 {
            return Err(Error::config("synthetic dimensions must be positive"));
        }
        if self.num_train == 0 || self.num_test == 0 {
            return Err(Error::config("synthetic split sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.trigger_fraction) {
            return Err(Error::config(format!(
                "trigger_fraction {} outside [0, 1]",
                self.trigger_fraction
            )));
        }
        let distinct: BTreeSet<&String> = self.trigger_words.iter().collect();
        if distinct.is_empty() || distinct.len() != self.trigger_words.len() {
            return Err(Error::config("trigger words must be non-empty and distinct"));
        }
        if self.vocab_size <= self.trigger_words.len() {
            return Err(Error::config(format!(
                "vocab_size {} must exceed the {} trigger words",
                self.vocab_size,
                self.trigger_words.len()
            )));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

const STREAM_TABLE: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_TEST: u64 = 3;
const STREAM_LISTS: u64 = 4;

/// Unit-norm token embeddings. Token `tokens[i]` has id `i + 1`; row 0 of
/// `vectors` is the zero padding row.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthEmbeddingTable {
    pub tokens: Vec<String>,
    pub vectors: Tensor,
    pub trigger_ids: BTreeSet<u32>,
}

impl SynthEmbeddingTable {
    pub fn vector(&self, id: u32) -> &[f64] {
        self.vectors.row(id as usize)
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn is_trigger(&self, id: u32) -> bool {
        self.trigger_ids.contains(&id)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32 + 1)
    }
}

/// Gaussian vectors normalized to unit length; trigger words occupy the
/// first ids.
pub fn gen_embedding_table(cfg: &SynthConfig) -> Result<SynthEmbeddingTable> {
    cfg.validate()?;
    let mut rng = cfg.rng(STREAM_TABLE);
    let mut tokens = cfg.trigger_words.clone();
    let mut k = 0;
    while tokens.len() < cfg.vocab_size {
        let name = format!("w{k:05}");
        if !cfg.trigger_words.contains(&name) {
            tokens.push(name);
        }
        k += 1;
    }
    let dim = cfg.embedding_dim;
    let mut data = vec![0.0; (cfg.vocab_size + 1) * dim];
    for row in data.chunks_mut(dim).skip(1) {
        loop {
            row.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let norm = dot(row, row).sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
    }
    let trigger_ids = (1..=cfg.trigger_words.len() as u32).collect();
    Ok(SynthEmbeddingTable {
        tokens,
        vectors: Tensor::matrix(cfg.vocab_size + 1, dim, data)?,
        trigger_ids,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Ground-truth label of a (query token, doc token, dense vector) triple.
pub fn derive_label(
    rule: LabelRule,
    table: &SynthEmbeddingTable,
    query_id: u32,
    doc_id: u32,
    dense: &[f64],
) -> bool {
    let sparse_match = || cosine(table.vector(doc_id), table.vector(query_id)) > 0.0;
    let dense_match = || table.is_trigger(query_id) && dense.iter().sum::<f64>() < 0.0;
    match rule {
        LabelRule::Sparse => sparse_match(),
        LabelRule::Dense => dense_match(),
        LabelRule::Combined => sparse_match() && dense_match(),
    }
}

pub struct SynthSplits {
    pub train: Dataset,
    pub test: Dataset,
}

struct Sampler<'a> {
    table: &'a SynthEmbeddingTable,
    triggers: Vec<u32>,
    others: Vec<u32>,
    dense_dim: usize,
}

impl<'a> Sampler<'a> {
    fn new(table: &'a SynthEmbeddingTable, dense_dim: usize) -> Self {
        let all = 1..=table.vocab_size() as u32;
        Sampler {
            table,
            triggers: table.trigger_ids.iter().copied().collect(),
            others: all.filter(|id| !table.is_trigger(*id)).collect(),
            dense_dim,
        }
    }

    fn any_token<R: Rng>(&self, rng: &mut R) -> u32 {
        rng.random_range(1..=self.table.vocab_size() as u32)
    }

    fn query<R: Rng>(&self, rule: LabelRule, trigger_fraction: f64, rng: &mut R) -> u32 {
        if !rule.uses_triggers() {
            return self.any_token(rng);
        }
        let pool = if rng.random::<f64>() < trigger_fraction {
            &self.triggers
        } else {
            &self.others
        };
        *pool.choose(rng).expect("non-empty token pool")
    }

    fn dense<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dense_dim).map(|_| rng.random_range(-0.5..0.5)).collect()
    }
}

fn token(id: u32) -> SparseFeatures {
    SparseFeatures::new(vec![id], Vec::new())
}

fn gen_split(
    cfg: &SynthConfig,
    rule: LabelRule,
    table: &SynthEmbeddingTable,
    count: usize,
    stream: u64,
) -> Result<Dataset> {
    let sampler = Sampler::new(table, cfg.dense_dim);
    let mut rng = cfg.rng(stream);
    let examples = (0..count)
        .map(|_| {
            let q = sampler.query(rule, cfg.trigger_fraction, &mut rng);
            let d = sampler.any_token(&mut rng);
            let dense = sampler.dense(&mut rng);
            let label = derive_label(rule, table, q, d, &dense);
            RankingExample::classification(token(q), Document::new(token(d), dense), label)
        })
        .collect();
    Dataset::new(DatasetHeader::new(Mode::Classification, 1, cfg.dense_dim), examples)
}

/// Train and test splits in classification form (one document per example).
pub fn gen_dataset(cfg: &SynthConfig, rule: LabelRule, table: &SynthEmbeddingTable) -> Result<SynthSplits> {
    cfg.validate()?;
    check_table(cfg, table)?;
    Ok(SynthSplits {
        train: gen_split(cfg, rule, table, cfg.num_train, STREAM_TRAIN)?,
        test: gen_split(cfg, rule, table, cfg.num_test, STREAM_TEST)?,
    })
}

fn check_table(cfg: &SynthConfig, table: &SynthEmbeddingTable) -> Result<()> {
    if table.dim() != cfg.embedding_dim || table.vocab_size() != cfg.vocab_size {
        return Err(Error::config("embedding table does not match the synthetic config"));
    }
    Ok(())
}

/// Ranking lists of `list_size` items under `rule`, each holding exactly one
/// positive at a uniformly random position.
///
/// Rules involving the trigger set always draw trigger queries here, since
/// other queries admit no positive document.
pub fn gen_ranking_lists(
    cfg: &SynthConfig,
    rule: LabelRule,
    table: &SynthEmbeddingTable,
    list_size: usize,
    num_lists: usize,
    stream: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    check_table(cfg, table)?;
    if list_size < 2 {
        return Err(Error::config("ranking lists need at least two documents"));
    }
    let sampler = Sampler::new(table, cfg.dense_dim);
    let mut rng = cfg.rng(STREAM_LISTS.wrapping_add(stream.wrapping_mul(16)));
    let mut examples = Vec::with_capacity(num_lists);
    for _ in 0..num_lists {
        let q = sampler.query(rule, 1.0, &mut rng);
        let mut positive = None;
        let mut negatives = Vec::with_capacity(list_size - 1);
        let mut attempts = 0usize;
        while positive.is_none() || negatives.len() < list_size - 1 {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Internal("rejection sampling for ranking lists did not converge".into()));
            }
            let d = sampler.any_token(&mut rng);
            let dense = sampler.dense(&mut rng);
            let doc = Document::new(token(d), dense);
            if derive_label(rule, table, q, d, &doc.dense) {
                positive.get_or_insert(doc);
            } else if negatives.len() < list_size - 1 {
                negatives.push(doc);
            }
        }
        let clicked = rng.random_range(0..list_size);
        negatives.insert(clicked, positive.expect("loop exits with a positive"));
        examples.push(RankingExample::ranking(token(q), negatives, clicked, list_size)?);
    }
    Dataset::new(DatasetHeader::new(Mode::Ranking, list_size, cfg.dense_dim), examples)
}

/// Number of stored labels that disagree with `rule` re-applied to the
/// stored features.
pub fn verify_labels(dataset: &Dataset, table: &SynthEmbeddingTable, rule: LabelRule) -> Result<usize> {
    let mut mismatches = 0;
    for ex in &dataset.examples {
        let q = single_id(&ex.query)?;
        for (i, doc) in ex.docs.iter().enumerate() {
            if !ex.mask[i] {
                continue;
            }
            let d = single_id(&doc.sparse)?;
            if q as usize > table.vocab_size() || d as usize > table.vocab_size() {
                return Err(Error::data("token id outside the synthetic vocabulary"));
            }
            let expected = derive_label(rule, table, q, d, &doc.dense);
            if expected != (ex.labels[i] == 1) {
                mismatches += 1;
            }
        }
    }
    Ok(mismatches)
}

fn single_id(f: &SparseFeatures) -> Result<u32> {
    match f.ngram_ids.as_slice() {
        [id] => Ok(*id),
        other => Err(Error::data(format!(
            "synthetic records carry exactly one token, found {}",
            other.len()
        ))),
    }
}
