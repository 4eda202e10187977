//! The four scoring models: dense-only, sparse-only, concatenation, and
//! SepAttn (separate sparse/dense towers aggregated by prediction-level
//! attention and trained with a KL co-training regularizer).
//!
//! In ranking mode every distribution is a masked softmax over the list.
//! In classification mode (one document per example) the final logit feeds a
//! sigmoid, and each "distribution" is the Bernoulli pair `[p, 1 − p]`,
//! i.e. a softmax over `[logit, 0]`. Both modes therefore share one loss
//! and gradient path.

mod attention;
mod tower;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use attention::{attention_aggregate, Attention, AttentionOutput, PAD_SCORE};
pub use tower::{FeatureSet, TextEmbeddings, Tower, TowerCache};

use crate::error::{Error, Result};
use crate::features::{Mode, RankingExample};
use crate::loss::{ce_with_grad, kl_with_grad, single_click};
use crate::nn::{
    finite_diff_check, log_softmax, sigmoid, softmax, Activation, FiniteDiffReport, Gradients, ParamKind, ParamStore,
    Tensor,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DenseOnly,
    SparseOnly,
    Concat,
    SepAttn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::SparseOnly,
        ModelKind::DenseOnly,
        ModelKind::Concat,
        ModelKind::SepAttn,
    ];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DenseOnly => "dense_only",
            ModelKind::SparseOnly => "sparse_only",
            ModelKind::Concat => "concat",
            ModelKind::SepAttn => "sepattn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense_only" => Ok(ModelKind::DenseOnly),
            "sparse_only" => Ok(ModelKind::SparseOnly),
            "concat" => Ok(ModelKind::Concat),
            "sepattn" => Ok(ModelKind::SepAttn),
            other => Err(Error::config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub mode: Mode,
    pub list_size: usize,
    /// Rows of every embedding table, padding row included.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub dense_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub use_char_ngrams: bool,
    /// SepAttn only: both towers read the query through the same tables.
    pub share_query_embeddings: bool,
    pub train_embeddings: bool,
}

impl ModelConfig {
    /// One tanh hidden layer of 50 units over frozen 100-d token embeddings.
    pub fn synthetic(kind: ModelKind, vocab_size: usize) -> Self {
        ModelConfig {
            kind,
            mode: Mode::Classification,
            list_size: 1,
            vocab_size,
            embedding_dim: 100,
            dense_dim: 100,
            hidden: vec![50],
            activation: Activation::Tanh,
            use_char_ngrams: false,
            share_query_embeddings: false,
            train_embeddings: false,
        }
    }

    /// Lists of 6, relu layers 256/128/64 over trainable 20-d n-gram and
    /// character n-gram embeddings.
    pub fn email(kind: ModelKind, vocab_size: usize, dense_dim: usize) -> Self {
        ModelConfig {
            kind,
            mode: Mode::Ranking,
            list_size: 6,
            vocab_size,
            embedding_dim: 20,
            dense_dim,
            hidden: vec![256, 128, 64],
            activation: Activation::Relu,
            use_char_ngrams: true,
            share_query_embeddings: false,
            train_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.list_size == 0 {
            return Err(Error::config("list_size must be positive"));
        }
        if self.mode == Mode::Classification && self.list_size != 1 {
            return Err(Error::config("classification mode requires list_size = 1"));
        }
        if self.vocab_size == 0 || self.embedding_dim == 0 {
            return Err(Error::config("vocab_size and embedding_dim must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        let needs_dense = matches!(self.kind, ModelKind::DenseOnly | ModelKind::Concat | ModelKind::SepAttn);
        if needs_dense && self.dense_dim == 0 {
            return Err(Error::config("dense_dim must be positive for models using dense features"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Architecture {
    Single(Tower),
    SepAttn {
        sparse: Tower,
        dense: Tower,
        attention: Attention,
    },
}

/// Diagnostics only SepAttn produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SepAttnOutput {
    pub h_sparse: Vec<f64>,
    pub h_dense: Vec<f64>,
    pub alpha_sparse: f64,
    pub alpha_dense: f64,
    pub u_sparse: Vec<f64>,
    pub u_dense: Vec<f64>,
    pub p_sparse: Vec<f64>,
    pub p_dense: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub mask: Vec<bool>,
    /// Final per-document scores; padded slots hold [`PAD_SCORE`].
    pub h_final: Vec<f64>,
    /// Masked softmax over the list (ranking) or `[p, 1 − p]` (classification).
    pub p_final: Vec<f64>,
    pub sepattn: Option<SepAttnOutput>,
}

#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub listwise: f64,
    pub regularization: f64,
}

/// Scoring model plus the parameter store it reads from.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    arch: Architecture,
}

struct TowerPass {
    scores: Vec<f64>,
    caches: Vec<Option<TowerCache>>,
}

struct ForwardPass {
    primary: TowerPass,
    secondary: Option<(TowerPass, AttentionOutput)>,
}

fn distribution_logits(mode: Mode, h: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<bool>) {
    match mode {
        Mode::Ranking => (h.to_vec(), mask.to_vec()),
        Mode::Classification => (vec![h[0], 0.0], vec![true, true]),
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = match config.kind {
            ModelKind::SepAttn => {
                let sparse = Tower::new(&mut store, "sparse_tower", FeatureSet::Sparse, &config, None, &mut rng);
                let shared = config.share_query_embeddings.then_some(&sparse.query);
                let dense = Tower::new(&mut store, "dense_tower", FeatureSet::Dense, &config, shared, &mut rng);
                let attention = Attention::new(&mut store, config.list_size, &mut rng);
                Architecture::SepAttn {
                    sparse,
                    dense,
                    attention,
                }
            }
            kind => {
                let fs = match kind {
                    ModelKind::DenseOnly => FeatureSet::Dense,
                    ModelKind::SparseOnly => FeatureSet::Sparse,
                    _ => FeatureSet::Concat,
                };
                Architecture::Single(Tower::new(&mut store, "tower", fs, &config, None, &mut rng))
            }
        };
        if !config.train_embeddings {
            let tables: Vec<_> = store
                .iter()
                .filter(|(_, p)| p.kind == ParamKind::Embedding)
                .map(|(id, _)| id)
                .collect();
            for id in tables {
                store.set_frozen(id, true);
            }
        }
        Ok(Model { config, store, arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Copies `table` into every embedding table of the model.
    pub fn load_pretrained_embeddings(&mut self, table: &Tensor) -> Result<()> {
        let tables: Vec<_> = self
            .store
            .iter()
            .filter(|(_, p)| p.kind == ParamKind::Embedding)
            .map(|(id, _)| id)
            .collect();
        for id in tables {
            self.store.assign(id, table.clone())?;
        }
        Ok(())
    }

    fn check_example(&self, ex: &RankingExample) -> Result<()> {
        if ex.docs.len() != self.config.list_size || ex.mask.len() != ex.docs.len() {
            return Err(Error::config(format!(
                "model expects lists of {}, example has {}",
                self.config.list_size,
                ex.docs.len()
            )));
        }
        if !ex.mask.iter().any(|&m| m) {
            return Err(Error::validation("example has no valid documents"));
        }
        Ok(())
    }

    fn run_tower(&self, tower: &Tower, ex: &RankingExample, keep: bool) -> Result<TowerPass> {
        let mut scores = Vec::with_capacity(ex.docs.len());
        let mut caches = Vec::with_capacity(ex.docs.len());
        for (doc, &valid) in ex.docs.iter().zip(&ex.mask) {
            if valid {
                let (s, c) = tower.score_item(&self.store, &ex.query, doc)?;
                scores.push(s);
                caches.push(keep.then_some(c));
            } else {
                scores.push(PAD_SCORE);
                caches.push(None);
            }
        }
        Ok(TowerPass { scores, caches })
    }

    fn forward_pass(&self, ex: &RankingExample, keep: bool) -> Result<ForwardPass> {
        self.check_example(ex)?;
        match &self.arch {
            Architecture::Single(t) => Ok(ForwardPass {
                primary: self.run_tower(t, ex, keep)?,
                secondary: None,
            }),
            Architecture::SepAttn {
                sparse,
                dense,
                attention,
            } => {
                let s = self.run_tower(sparse, ex, keep)?;
                let d = self.run_tower(dense, ex, keep)?;
                let att = attention.forward(&self.store, &s.scores, &d.scores, &ex.mask)?;
                Ok(ForwardPass {
                    primary: s,
                    secondary: Some((d, att)),
                })
            }
        }
    }

    pub fn forward(&self, ex: &RankingExample) -> Result<ModelOutput> {
        let pass = self.forward_pass(ex, false)?;
        let mode = self.config.mode;
        let dist = |h: &[f64]| -> Result<Vec<f64>> {
            let (logits, mask) = distribution_logits(mode, h, &ex.mask);
            softmax(&logits, Some(&mask))
        };
        match pass.secondary {
            None => Ok(ModelOutput {
                mask: ex.mask.clone(),
                p_final: dist(&pass.primary.scores)?,
                h_final: pass.primary.scores,
                sepattn: None,
            }),
            Some((d, att)) => Ok(ModelOutput {
                mask: ex.mask.clone(),
                p_final: dist(&att.h_final)?,
                h_final: att.h_final,
                sepattn: Some(SepAttnOutput {
                    p_sparse: dist(&pass.primary.scores)?,
                    p_dense: dist(&d.scores)?,
                    h_sparse: pass.primary.scores,
                    h_dense: d.scores,
                    alpha_sparse: att.alpha_sparse,
                    alpha_dense: att.alpha_dense,
                    u_sparse: att.u_sparse,
                    u_dense: att.u_dense,
                }),
            }),
        }
    }

    /// Probability of relevance for a classification-mode example.
    pub fn predict_probability(&self, ex: &RankingExample) -> Result<f64> {
        if self.config.mode != Mode::Classification {
            return Err(Error::config("predict_probability needs a classification model"));
        }
        Ok(predict_binary(self.forward(ex)?.h_final[0]))
    }

    fn target(&self, ex: &RankingExample) -> Result<usize> {
        match self.config.mode {
            Mode::Ranking => single_click(&ex.labels, &ex.mask),
            Mode::Classification => Ok(if ex.labels[0] == 1 { 0 } else { 1 }),
        }
    }

    pub fn loss(&self, ex: &RankingExample, lambda: f64) -> Result<LossBreakdown> {
        self.loss_impl(ex, lambda, None)
    }

    /// Adds `scale · ∂L/∂θ` for this example into `grads` and returns the
    /// loss.
    pub fn accumulate_gradients(
        &self,
        ex: &RankingExample,
        lambda: f64,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<LossBreakdown> {
        self.loss_impl(ex, lambda, Some((scale, grads)))
    }

    fn loss_impl(
        &self,
        ex: &RankingExample,
        lambda: f64,
        backward: Option<(f64, &mut Gradients)>,
    ) -> Result<LossBreakdown> {
        let mode = self.config.mode;
        let target = self.target(ex)?;
        let keep = backward.is_some();
        let pass = self.forward_pass(ex, keep)?;
        let n = ex.docs.len();
        // ∂/∂(distribution logits) → ∂/∂(score vector)
        let to_scores = |g: &[f64]| -> Vec<f64> {
            match mode {
                Mode::Ranking => g.to_vec(),
                Mode::Classification => vec![g[0]],
            }
        };

        let Some((dense_pass, att)) = &pass.secondary else {
            let (logits, mask) = distribution_logits(mode, &pass.primary.scores, &ex.mask);
            let (loss, g) = ce_with_grad(&logits, &mask, target)?;
            if let Some((scale, grads)) = backward {
                let Architecture::Single(tower) = &self.arch else {
                    unreachable!("single-tower pass")
                };
                let g: Vec<f64> = to_scores(&g).iter().map(|x| scale * x).collect();
                self.backward_tower(tower, ex, &pass.primary, &g, grads)?;
            }
            return Ok(LossBreakdown {
                total: loss,
                listwise: loss,
                regularization: 0.0,
            });
        };

        let (lf, mask) = distribution_logits(mode, &att.h_final, &ex.mask);
        let (ls, _) = distribution_logits(mode, &pass.primary.scores, &ex.mask);
        let (ld, _) = distribution_logits(mode, &dense_pass.scores, &ex.mask);
        let (listwise, g_list) = ce_with_grad(&lf, &mask, target)?;
        let lp_f = log_softmax(&lf, Some(&mask))?;
        let kl_s = kl_with_grad(&lp_f, &log_softmax(&ls, Some(&mask))?, &mask);
        let kl_d = kl_with_grad(&lp_f, &log_softmax(&ld, Some(&mask))?, &mask);
        let (a_s, a_d) = (att.alpha_sparse, att.alpha_dense);
        let regularization = a_s * kl_s.value + a_d * kl_d.value;
        let total = listwise + lambda * regularization;

        if let Some((scale, grads)) = backward {
            let Architecture::SepAttn {
                sparse,
                dense,
                attention,
            } = &self.arch
            else {
                unreachable!("sepattn pass")
            };
            let g_final: Vec<f64> = (0..lf.len())
                .map(|i| scale * (g_list[i] + lambda * (a_s * kl_s.grad_p[i] + a_d * kl_d.grad_p[i])))
                .collect();
            let g_final = to_scores(&g_final);
            let extra_alpha = scale * lambda * (kl_s.value - kl_d.value);
            let mut g = attention.backward(
                &self.store,
                &pass.primary.scores,
                &dense_pass.scores,
                &ex.mask,
                att,
                &g_final,
                extra_alpha,
                grads,
            )?;
            let reg_s = to_scores(&kl_s.grad_q);
            let reg_d = to_scores(&kl_d.grad_q);
            for i in 0..n {
                g.grad_sparse[i] += scale * lambda * a_s * reg_s[i];
                g.grad_dense[i] += scale * lambda * a_d * reg_d[i];
            }
            self.backward_tower(sparse, ex, &pass.primary, &g.grad_sparse, grads)?;
            self.backward_tower(dense, ex, dense_pass, &g.grad_dense, grads)?;
        }
        Ok(LossBreakdown {
            total,
            listwise,
            regularization,
        })
    }

    /// Mean loss and gradient over `examples`.
    pub fn batch_gradients<'a, I>(&self, examples: I, lambda: f64) -> Result<(LossBreakdown, Gradients)>
    where
        I: IntoIterator<Item = &'a RankingExample>,
        I::IntoIter: ExactSizeIterator,
    {
        let examples = examples.into_iter();
        if examples.len() == 0 {
            return Err(Error::validation("empty batch"));
        }
        let scale = 1.0 / examples.len() as f64;
        let mut grads = Gradients::new(&self.store);
        let mut mean = LossBreakdown::default();
        for ex in examples {
            let l = self.accumulate_gradients(ex, lambda, scale, &mut grads)?;
            mean.total += scale * l.total;
            mean.listwise += scale * l.listwise;
            mean.regularization += scale * l.regularization;
        }
        Ok((mean, grads))
    }

    /// Compares backpropagated gradients of the mean loss over `examples`
    /// with central finite differences for every trainable tensor.
    pub fn gradient_check(&self, examples: &[RankingExample], lambda: f64, eps: f64) -> Result<FiniteDiffReport> {
        let (_, grads) = self.batch_gradients(examples, lambda)?;
        let mut probe = self.clone();
        let mut store = self.store.clone();
        finite_diff_check(&mut store, &grads, eps, |s| {
            probe.store.clone_from(s);
            let mut total = 0.0;
            for ex in examples {
                total += probe.loss(ex, lambda)?.total;
            }
            Ok(total / examples.len() as f64)
        })
    }

    fn backward_tower(
        &self,
        tower: &Tower,
        ex: &RankingExample,
        pass: &TowerPass,
        grad_scores: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        for (i, cache) in pass.caches.iter().enumerate() {
            if let Some(c) = cache {
                tower.backward_item(&self.store, &ex.query, &ex.docs[i], c, grad_scores[i], grads)?;
            }
        }
        Ok(())
    }
}

pub fn predict_binary(score: f64) -> f64 {
    sigmoid(score)
}
