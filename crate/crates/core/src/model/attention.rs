//! Prediction-level attention over the score vectors of the two towers.
//!
//! ```text
//! u_s = tanh(W·h_s + b)      u_d = tanh(W·h_d + b)
//! α_s, α_d = softmax(u_s·v, u_d·v)
//! h = α_s·h_s + α_d·h_d
//! ```
//!
//! Padded list positions are zeroed in the inputs of `W` so the parameter
//! shapes stay tied to the list size.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, xavier_uniform, Gradients, ParamId, ParamKind, ParamStore, Tensor};

/// Score assigned to padded slots in reported score vectors.
pub const PAD_SCORE: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub h_final: Vec<f64>,
    pub alpha_sparse: f64,
    pub alpha_dense: f64,
    pub u_sparse: Vec<f64>,
    pub u_dense: Vec<f64>,
}

fn masked(h: &[f64], mask: &[bool]) -> Vec<f64> {
    h.iter().zip(mask).map(|(&x, &m)| if m { x } else { 0.0 }).collect()
}

/// Aggregates two score vectors with explicit attention parameters.
pub fn attention_aggregate(
    h_sparse: &[f64],
    h_dense: &[f64],
    mask: &[bool],
    w: &Tensor,
    b: &[f64],
    v: &[f64],
) -> Result<AttentionOutput> {
    let n = h_sparse.len();
    if h_dense.len() != n || mask.len() != n || w.rows() != n || w.cols() != n || b.len() != n || v.len() != n {
        return Err(Error::config(format!(
            "attention over a list of {n} needs W {n}×{n}, b and v of length {n}"
        )));
    }
    let hidden = |h: &[f64]| -> Result<Vec<f64>> {
        let z = w.matvec(&masked(h, mask))?;
        Ok(z.iter().zip(b).map(|(z, b)| (z + b).tanh()).collect())
    };
    let u_sparse = hidden(h_sparse)?;
    let u_dense = hidden(h_dense)?;
    let alpha_sparse = sigmoid(dot(&u_sparse, v) - dot(&u_dense, v));
    let alpha_dense = 1.0 - alpha_sparse;
    let h_final = (0..n)
        .map(|i| {
            if mask[i] {
                alpha_sparse * h_sparse[i] + alpha_dense * h_dense[i]
            } else {
                PAD_SCORE
            }
        })
        .collect();
    Ok(AttentionOutput {
        h_final,
        alpha_sparse,
        alpha_dense,
        u_sparse,
        u_dense,
    })
}

/// Attention parameters registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Attention {
    pub w: ParamId,
    pub b: ParamId,
    pub v: ParamId,
    pub list_size: usize,
}

pub(crate) struct AttentionGrads {
    pub grad_sparse: Vec<f64>,
    pub grad_dense: Vec<f64>,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, list_size: usize, rng: &mut R) -> Self {
        let n = list_size;
        let w = store.add(
            "attention.w",
            Tensor::matrix(n, n, xavier_uniform(rng, n, n, n * n)).expect("square"),
            ParamKind::Dense,
        );
        let b = store.add("attention.b", Tensor::zeros(&[n]), ParamKind::Dense);
        let v = store.add(
            "attention.v",
            Tensor::vector(xavier_uniform(rng, n, 1, n)),
            ParamKind::Dense,
        );
        Attention { w, b, v, list_size }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        h_sparse: &[f64],
        h_dense: &[f64],
        mask: &[bool],
    ) -> Result<AttentionOutput> {
        attention_aggregate(
            h_sparse,
            h_dense,
            mask,
            store.get(self.w),
            store.get(self.b).data(),
            store.get(self.v).data(),
        )
    }

    /// Backpropagates `∂L/∂h_final` (valid positions) plus any direct
    /// `∂L/∂α_sparse` contribution into the attention parameters. Returns the
    /// gradients w.r.t. both input score vectors.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        store: &ParamStore,
        h_sparse: &[f64],
        h_dense: &[f64],
        mask: &[bool],
        out: &AttentionOutput,
        grad_final: &[f64],
        extra_grad_alpha_sparse: f64,
        grads: &mut Gradients,
    ) -> Result<AttentionGrads> {
        let n = self.list_size;
        let (a_s, a_d) = (out.alpha_sparse, out.alpha_dense);
        let mut grad_sparse = vec![0.0; n];
        let mut grad_dense = vec![0.0; n];
        let mut grad_alpha = extra_grad_alpha_sparse;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            grad_alpha += grad_final[i] * (h_sparse[i] - h_dense[i]);
            grad_sparse[i] = a_s * grad_final[i];
            grad_dense[i] = a_d * grad_final[i];
        }
        // α_s = σ(e_s − e_d)
        let grad_e_sparse = grad_alpha * a_s * a_d;
        let grad_e_dense = -grad_e_sparse;
        let v = store.get(self.v).data();
        let w = store.get(self.w);

        let grad_z = |u: &[f64], ge: f64| -> Vec<f64> {
            u.iter().zip(v).map(|(u, v)| ge * v * (1.0 - u * u)).collect()
        };
        let gz_s = grad_z(&out.u_sparse, grad_e_sparse);
        let gz_d = grad_z(&out.u_dense, grad_e_dense);
        let x_s = masked(h_sparse, mask);
        let x_d = masked(h_dense, mask);

        if !store.is_frozen(self.v) {
            for ((g, us), ud) in grads.dense_mut(self.v).iter_mut().zip(&out.u_sparse).zip(&out.u_dense) {
                *g += grad_e_sparse * us + grad_e_dense * ud;
            }
        }
        if !store.is_frozen(self.b) {
            for (i, g) in grads.dense_mut(self.b).iter_mut().enumerate() {
                *g += gz_s[i] + gz_d[i];
            }
        }
        if !store.is_frozen(self.w) {
            let gw = grads.dense_mut(self.w);
            for r in 0..n {
                for c in 0..n {
                    gw[r * n + c] += gz_s[r] * x_s[c] + gz_d[r] * x_d[c];
                }
            }
        }
        let back_s = w.matvec_transposed(&gz_s)?;
        let back_d = w.matvec_transposed(&gz_d)?;
        for i in 0..n {
            if mask[i] {
                grad_sparse[i] += back_s[i];
                grad_dense[i] += back_d[i];
            }
        }
        Ok(AttentionGrads {
            grad_sparse,
            grad_dense,
        })
    }
}
