use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Embedding tables receive row-sparse gradients; everything else is dense.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Dense,
    Embedding,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub kind: ParamKind,
    /// Frozen parameters receive no gradient and are never updated.
    pub frozen: bool,
}

/// Owns every trainable tensor of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique within the store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, kind: ParamKind) -> ParamId {
        let name = name.into();
        assert!(
            self.id_of(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Param {
            name,
            value,
            kind,
            frozen: false,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.params[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Replaces the value of `id`, keeping the registered shape.
    pub fn assign(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::config(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gradient {
    Dense(Vec<f64>),
    /// Row index → gradient of that row.
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Gradient buffers mirroring a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    slots: Vec<Gradient>,
    row_width: Vec<usize>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        let slots = store
            .params
            .iter()
            .map(|p| match p.kind {
                ParamKind::Dense => Gradient::Dense(vec![0.0; p.value.len()]),
                ParamKind::Embedding => Gradient::Rows(BTreeMap::new()),
            })
            .collect();
        let row_width = store.params.iter().map(|p| p.value.cols()).collect();
        Gradients { slots, row_width }
    }

    pub fn get(&self, id: ParamId) -> &Gradient {
        &self.slots[id.0]
    }

    /// Dense gradient buffer of `id`. Panics for embedding parameters.
    pub fn dense_mut(&mut self, id: ParamId) -> &mut [f64] {
        match &mut self.slots[id.0] {
            Gradient::Dense(g) => g,
            Gradient::Rows(_) => panic!("parameter {} has a row-sparse gradient", id.0),
        }
    }

    /// Adds `scale * grad` to row `row` of embedding parameter `id`.
    pub fn add_row(&mut self, id: ParamId, row: usize, grad: &[f64], scale: f64) {
        let width = self.row_width[id.0];
        match &mut self.slots[id.0] {
            Gradient::Rows(rows) => {
                let acc = rows.entry(row).or_insert_with(|| vec![0.0; width]);
                for (a, g) in acc.iter_mut().zip(grad) {
                    *a += scale * g;
                }
            }
            Gradient::Dense(g) => {
                for (a, x) in g[row * width..(row + 1) * width].iter_mut().zip(grad) {
                    *a += scale * x;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for slot in &mut self.slots {
            match slot {
                Gradient::Dense(g) => g.iter_mut().for_each(|x| *x *= factor),
                Gradient::Rows(rows) => rows
                    .values_mut()
                    .flat_map(|r| r.iter_mut())
                    .for_each(|x| *x *= factor),
            }
        }
    }

    /// Flattened gradient of `id` in the parameter's own layout.
    pub fn to_dense(&self, id: ParamId, len: usize) -> Vec<f64> {
        match &self.slots[id.0] {
            Gradient::Dense(g) => g.clone(),
            Gradient::Rows(rows) => {
                let width = self.row_width[id.0];
                let mut out = vec![0.0; len];
                for (&r, g) in rows {
                    out[r * width..(r + 1) * width].copy_from_slice(g);
                }
                out
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|slot| match slot {
            Gradient::Dense(g) => g.iter().all(|x| x.is_finite()),
            Gradient::Rows(rows) => rows.values().flatten().all(|x| x.is_finite()),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|slot| -> Box<dyn Iterator<Item = &f64>> {
                match slot {
                    Gradient::Dense(g) => Box::new(g.iter()),
                    Gradient::Rows(rows) => Box::new(rows.values().flatten()),
                }
            })
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    len: usize,
) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_gradients_accumulate() {
        let mut store = ParamStore::new();
        let id = store.add("emb", Tensor::zeros(&[4, 2]), ParamKind::Embedding);
        let mut g = Gradients::new(&store);
        g.add_row(id, 2, &[1.0, 2.0], 0.5);
        g.add_row(id, 2, &[1.0, 2.0], 0.5);
        assert_eq!(g.to_dense(id, 8), vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[1]), ParamKind::Dense);
        store.add("w", Tensor::zeros(&[1]), ParamKind::Dense);
    }
}
