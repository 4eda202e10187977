use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{xavier_uniform, Gradients, ParamId, ParamKind, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fully connected layer `y = activation(W·x + b)` whose tensors live in a
/// [`ParamStore`].
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Values saved by [`DenseLayer::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w = xavier_uniform(rng, in_dim, out_dim, in_dim * out_dim);
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::matrix(out_dim, in_dim, w).expect("weight shape"),
            ParamKind::Dense,
        );
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::zeros(&[out_dim]),
            ParamKind::Dense,
        );
        DenseLayer {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.in_dim {
            return Err(Error::config(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let mut y = store.get(self.weight).matvec(x)?;
        for (yi, bi) in y.iter_mut().zip(store.get(self.bias).data()) {
            *yi = self.activation.apply(*yi + bi);
        }
        let cache = DenseCache {
            input: x.to_vec(),
            output: y.clone(),
        };
        Ok((y, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &DenseCache,
        grad_y: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if grad_y.len() != self.out_dim || cache.output.len() != self.out_dim {
            return Err(Error::Internal(format!(
                "dense backward: expected {} output gradients, got {}",
                self.out_dim,
                grad_y.len()
            )));
        }
        let grad_z: Vec<f64> = grad_y
            .iter()
            .zip(&cache.output)
            .map(|(g, y)| g * self.activation.derivative_from_output(*y))
            .collect();
        let weight = store.get(self.weight);
        let grad_x = weight.matvec_transposed(&grad_z)?;
        if !store.is_frozen(self.weight) {
            let gw = grads.dense_mut(self.weight);
            for (i, &gz) in grad_z.iter().enumerate() {
                if gz == 0.0 {
                    continue;
                }
                let row = &mut gw[i * self.in_dim..(i + 1) * self.in_dim];
                for (g, x) in row.iter_mut().zip(&cache.input) {
                    *g += gz * x;
                }
            }
        }
        if !store.is_frozen(self.bias) {
            for (g, gz) in grads.dense_mut(self.bias).iter_mut().zip(&grad_z) {
                *g += gz;
            }
        }
        Ok(grad_x)
    }
}

/// Mean of the rows of `table` selected by `ids`; the zero vector for no ids.
pub fn embed_pool(ids: &[u32], table: &Tensor) -> Result<Vec<f64>> {
    let dim = table.cols();
    let mut out = vec![0.0; dim];
    if ids.is_empty() {
        return Ok(out);
    }
    for &id in ids {
        let id = id as usize;
        if id >= table.rows() {
            return Err(Error::data(format!(
                "token id {id} outside vocabulary of size {}",
                table.rows()
            )));
        }
        for (o, x) in out.iter_mut().zip(table.row(id)) {
            *o += x;
        }
    }
    let inv = 1.0 / ids.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// Row gradients of [`embed_pool`]: every referenced row other than the
/// padding row 0 receives `grad_out / ids.len()`, once per occurrence.
pub fn embed_pool_backward(grad_out: &[f64], ids: &[u32]) -> Vec<(usize, Vec<f64>)> {
    if ids.is_empty() {
        return Vec::new();
    }
    let inv = 1.0 / ids.len() as f64;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for &id in ids.iter().filter(|&&id| id != 0) {
        match rows.iter_mut().find(|(r, _)| *r == id as usize) {
            Some((_, g)) => g.iter_mut().zip(grad_out).for_each(|(a, x)| *a += x * inv),
            None => rows.push((id as usize, grad_out.iter().map(|x| x * inv).collect())),
        }
    }
    rows
}

/// Embedding table with average pooling. Row 0 is the padding row: it is
/// initialized to zero and never receives a gradient.
#[derive(Clone, Debug)]
pub struct EmbeddingLayer {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        // Each row is the image of a one-hot input, so fan_in is 1.
        let mut data = xavier_uniform(rng, 1, dim, vocab_size * dim);
        data[..dim].iter_mut().for_each(|x| *x = 0.0);
        let table = store.add(
            name,
            Tensor::matrix(vocab_size, dim, data).expect("embedding shape"),
            ParamKind::Embedding,
        );
        EmbeddingLayer {
            table,
            vocab_size,
            dim,
        }
    }

    /// Wraps an already registered table.
    pub fn from_param(store: &ParamStore, table: ParamId) -> Self {
        let t = store.get(table);
        EmbeddingLayer {
            table,
            vocab_size: t.rows(),
            dim: t.cols(),
        }
    }

    pub fn pool(&self, store: &ParamStore, ids: &[u32]) -> Result<Vec<f64>> {
        embed_pool(ids, store.get(self.table))
    }

    pub fn backward(&self, store: &ParamStore, ids: &[u32], grad_out: &[f64], grads: &mut Gradients) {
        if store.is_frozen(self.table) {
            return;
        }
        for (row, g) in embed_pool_backward(grad_out, ids) {
            grads.add_row(self.table, row, &g, 1.0);
        }
    }
}

/// Softmax over the entries where `mask` is true; masked entries are 0.
pub fn softmax(v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let lp = log_softmax(v, mask)?;
    Ok(lp.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() }).collect())
}

/// Log-softmax over unmasked entries; masked entries are `-inf`.
pub fn log_softmax(v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let valid = |i: usize| mask.is_none_or(|m| m[i]);
    if let Some(m) = mask {
        if m.len() != v.len() {
            return Err(Error::data(format!(
                "softmax mask has {} entries for {} scores",
                m.len(),
                v.len()
            )));
        }
    }
    let max = (0..v.len())
        .filter(|&i| valid(i))
        .map(|i| v[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::data("softmax over an empty or fully masked vector"));
    }
    let sum: f64 = (0..v.len())
        .filter(|&i| valid(i))
        .map(|i| (v[i] - max).exp())
        .sum();
    let log_z = max + sum.ln();
    Ok((0..v.len())
        .map(|i| if valid(i) { v[i] - log_z } else { f64::NEG_INFINITY })
        .collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
