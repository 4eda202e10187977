use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::PAD_SCORE;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::features::{Document, QueryFeatures, RankingExample};
use crate::nn::{Activation, DenseCache, DenseLayer, EmbeddingLayer, Gradients, ParamStore};

/// Which document features feed a tower. Query features always do.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Sparse,
    Dense,
    Concat,
}

impl FeatureSet {
    fn uses_sparse(self) -> bool {
        matches!(self, FeatureSet::Sparse | FeatureSet::Concat)
    }

    fn uses_dense(self) -> bool {
        matches!(self, FeatureSet::Dense | FeatureSet::Concat)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Sparse => "sparse",
            FeatureSet::Dense => "dense",
            FeatureSet::Concat => "concat",
        })
    }
}

/// Embedding tables for one text field: word n-grams, and optionally
/// character n-grams.
#[derive(Clone, Debug)]
pub struct TextEmbeddings {
    pub ngrams: EmbeddingLayer,
    pub char_ngrams: Option<EmbeddingLayer>,
}

impl TextEmbeddings {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let ngrams = EmbeddingLayer::new(store, &format!("{prefix}.ngram_emb"), cfg.vocab_size, cfg.embedding_dim, rng);
        let char_ngrams = cfg.use_char_ngrams.then(|| {
            EmbeddingLayer::new(store, &format!("{prefix}.char_ngram_emb"), cfg.vocab_size, cfg.embedding_dim, rng)
        });
        TextEmbeddings { ngrams, char_ngrams }
    }

    fn width(&self) -> usize {
        self.ngrams.dim + self.char_ngrams.as_ref().map_or(0, |c| c.dim)
    }

    fn pool_into(&self, store: &ParamStore, f: &QueryFeatures, out: &mut Vec<f64>) -> Result<()> {
        out.extend(self.ngrams.pool(store, &f.ngram_ids)?);
        if let Some(c) = &self.char_ngrams {
            out.extend(c.pool(store, &f.char_ngram_ids)?);
        }
        Ok(())
    }

    fn backward(&self, store: &ParamStore, f: &QueryFeatures, grad: &[f64], grads: &mut Gradients) {
        let d = self.ngrams.dim;
        self.ngrams.backward(store, &f.ngram_ids, &grad[..d], grads);
        if let Some(c) = &self.char_ngrams {
            c.backward(store, &f.char_ngram_ids, &grad[d..d + c.dim], grads);
        }
    }
}

/// Per-item scoring network: pooled query embeddings concatenated with the
/// selected document features, then hidden layers and a scalar output.
#[derive(Clone, Debug)]
pub struct Tower {
    pub feature_set: FeatureSet,
    pub query: TextEmbeddings,
    pub doc: Option<TextEmbeddings>,
    pub dense_dim: usize,
    pub hidden: Vec<DenseLayer>,
    pub output: DenseLayer,
}

pub struct TowerCache {
    hidden: Vec<DenseCache>,
    output: DenseCache,
}

impl Tower {
    /// `shared_query` reuses another tower's query tables instead of
    /// registering new ones.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        feature_set: FeatureSet,
        cfg: &ModelConfig,
        shared_query: Option<&TextEmbeddings>,
        rng: &mut R,
    ) -> Self {
        let query = match shared_query {
            Some(q) => q.clone(),
            None => TextEmbeddings::new(store, &format!("{name}.query"), cfg, rng),
        };
        let doc = feature_set
            .uses_sparse()
            .then(|| TextEmbeddings::new(store, &format!("{name}.doc"), cfg, rng));
        let mut width = query.width() + doc.as_ref().map_or(0, TextEmbeddings::width);
        if feature_set.uses_dense() {
            width += cfg.dense_dim;
        }
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        for (i, &units) in cfg.hidden.iter().enumerate() {
            hidden.push(DenseLayer::new(store, &format!("{name}.hidden{i}"), width, units, cfg.activation, rng));
            width = units;
        }
        let output = DenseLayer::new(store, &format!("{name}.output"), width, 1, Activation::Identity, rng);
        Tower {
            feature_set,
            query,
            doc,
            dense_dim: cfg.dense_dim,
            hidden,
            output,
        }
    }

    /// Width of the concatenated input features.
    pub fn input_width(&self) -> usize {
        self.hidden.first().map_or(self.output.in_dim, |l| l.in_dim)
    }

    fn input(&self, store: &ParamStore, query: &QueryFeatures, doc: &Document) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.input_width());
        self.query.pool_into(store, query, &mut x)?;
        if let Some(d) = &self.doc {
            d.pool_into(store, &doc.sparse, &mut x)?;
        }
        if self.feature_set.uses_dense() {
            if doc.dense.len() != self.dense_dim {
                return Err(Error::config(format!(
                    "tower expects {} dense features, got {}",
                    self.dense_dim,
                    doc.dense.len()
                )));
            }
            x.extend_from_slice(&doc.dense);
        }
        Ok(x)
    }

    pub fn score_item(&self, store: &ParamStore, query: &QueryFeatures, doc: &Document) -> Result<(f64, TowerCache)> {
        let mut x = self.input(store, query, doc)?;
        let mut caches = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let (y, c) = layer.forward(store, &x)?;
            caches.push(c);
            x = y;
        }
        let (y, output) = self.output.forward(store, &x)?;
        Ok((y[0], TowerCache { hidden: caches, output }))
    }

    pub fn backward_item(
        &self,
        store: &ParamStore,
        query: &QueryFeatures,
        doc: &Document,
        cache: &TowerCache,
        grad_score: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        let mut g = self.output.backward(store, &cache.output, &[grad_score], grads)?;
        for (layer, c) in self.hidden.iter().zip(&cache.hidden).rev() {
            g = layer.backward(store, c, &g, grads)?;
        }
        let qw = self.query.width();
        self.query.backward(store, query, &g[..qw], grads);
        if let Some(d) = &self.doc {
            d.backward(store, &doc.sparse, &g[qw..qw + d.width()], grads);
        }
        Ok(())
    }

    /// Scores every valid document of the list; padded slots get
    /// [`PAD_SCORE`].
    pub fn score_list(&self, store: &ParamStore, example: &RankingExample) -> Result<Vec<f64>> {
        example
            .docs
            .iter()
            .zip(&example.mask)
            .map(|(doc, &valid)| {
                if valid {
                    self.score_item(store, &example.query, doc).map(|(s, _)| s)
                } else {
                    Ok(PAD_SCORE)
                }
            })
            .collect()
    }
}
