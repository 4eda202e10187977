use super::params::{Gradient, Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adagrad: `G ← G + g²`, `θ ← θ − lr · g / sqrt(G + ε)`, elementwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub epsilon: f64,
    accumulators: Vec<Tensor>,
    steps: usize,
}

impl Adagrad {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        Adagrad {
            learning_rate,
            epsilon: DEFAULT_EPSILON,
            accumulators: store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect(),
            steps: 0,
        }
    }

    /// Restores saved state; `accumulators` must mirror the store.
    pub fn from_state(
        store: &ParamStore,
        learning_rate: f64,
        epsilon: f64,
        accumulators: Vec<Tensor>,
        steps: usize,
    ) -> Result<Self> {
        if accumulators.len() != store.len()
            || store
                .iter()
                .zip(&accumulators)
                .any(|((_, p), a)| p.value.shape() != a.shape())
        {
            return Err(Error::config("optimizer state does not match the model parameters"));
        }
        Ok(Adagrad {
            learning_rate,
            epsilon,
            accumulators,
            steps,
        })
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    /// Number of steps applied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Training {
                step: self.steps,
                message: "non-finite gradient".into(),
            });
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.is_frozen(id) {
                continue;
            }
            let acc = self.accumulators[id.index()].data_mut();
            let value = store.get_mut(id);
            let width = value.cols();
            let values = value.data_mut();
            match grads.get(id) {
                Gradient::Dense(g) => {
                    update(values, acc, g, self.learning_rate, self.epsilon);
                }
                Gradient::Rows(rows) => {
                    for (&r, g) in rows {
                        let span = r * width..(r + 1) * width;
                        update(&mut values[span.clone()], &mut acc[span], g, self.learning_rate, self.epsilon);
                    }
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}

fn update(values: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64, eps: f64) {
    for ((v, a), &g) in values.iter_mut().zip(acc.iter_mut()).zip(grad) {
        if g == 0.0 {
            continue;
        }
        *a += g * g;
        *v -= lr * g / (*a + eps).sqrt();
    }
}
