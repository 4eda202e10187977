//! Listwise softmax cross-entropy, KL co-training regularization and the
//! combined objective `L = L_listwise + λ · L_reg`.
//!
//! The value functions at the top take probabilities or scores directly.
//! The `*_with_grad` helpers further down work on logits and return
//! gradients; the models use those during training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Mode;
use crate::nn::log_softmax;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub mode: Mode,
}

impl LossConfig {
    pub fn new(lambda: f64, mode: Mode) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        Ok(LossConfig { lambda, mode })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            mode: Mode::Ranking,
        }
    }
}

/// `−Σ yᵢ log softmax(scores)ᵢ` over valid documents.
pub fn listwise_softmax_ce(scores: &[f64], labels: &[u8], mask: &[bool]) -> Result<f64> {
    let target = single_click(labels, mask)?;
    let lp = log_softmax(scores, Some(mask))?;
    Ok(-lp[target])
}

pub(crate) fn single_click(labels: &[u8], mask: &[bool]) -> Result<usize> {
    if labels.len() != mask.len() {
        return Err(Error::validation("labels and mask lengths differ"));
    }
    let clicks: Vec<usize> = (0..labels.len())
        .filter(|&i| mask[i] && labels[i] == 1)
        .collect();
    match clicks.as_slice() {
        [i] => Ok(*i),
        _ => Err(Error::validation(format!(
            "expected exactly one click among valid documents, got {}",
            clicks.len()
        ))),
    }
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::data(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::data(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// `Σ pᵢ log(pᵢ / qᵢ)` with `0 · log(0/·) = 0` and `qᵢ` floored at 1e-12.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::data(format!(
            "distributions over {} and {} outcomes",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(PROB_FLOOR).ln()))
        .sum())
}

/// `α_sparse · KL(p_final ‖ p_sparse) + α_dense · KL(p_final ‖ p_dense)`.
pub fn regularization_loss(
    p_final: &[f64],
    p_sparse: &[f64],
    p_dense: &[f64],
    alpha_sparse: f64,
    alpha_dense: f64,
) -> Result<f64> {
    Ok(alpha_sparse * kl_divergence(p_final, p_sparse)?
        + alpha_dense * kl_divergence(p_final, p_dense)?)
}

pub fn total_loss(listwise: f64, regularization: f64, cfg: &LossConfig) -> f64 {
    listwise + cfg.lambda * regularization
}

/// `−[y log p + (1−y) log(1−p)]` with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn binary_ce(prob: f64, label: bool) -> f64 {
    let p = prob.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Cross-entropy of `softmax(logits)` against a one-hot `target`, with
/// gradient w.r.t. the logits. Log-probabilities are floored at
/// `ln(1e-12)`; the gradient is zero where the floor is active.
pub(crate) fn ce_with_grad(logits: &[f64], mask: &[bool], target: usize) -> Result<(f64, Vec<f64>)> {
    let lp = log_softmax(logits, Some(mask))?;
    let floor = PROB_FLOOR.ln();
    if lp[target] < floor {
        return Ok((-floor, vec![0.0; logits.len()]));
    }
    let mut grad: Vec<f64> = lp
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
        .collect();
    grad[target] -= 1.0;
    Ok((-lp[target], grad))
}

/// KL(softmax(p_logits) ‖ softmax(q_logits)) and its gradients w.r.t. both
/// logit vectors, using the same `ln(1e-12)` floor as [`kl_divergence`].
pub(crate) struct KlTerm {
    pub value: f64,
    pub grad_p: Vec<f64>,
    pub grad_q: Vec<f64>,
}

pub(crate) fn kl_with_grad(lp: &[f64], lq: &[f64], mask: &[bool]) -> KlTerm {
    let n = lp.len();
    let floor = PROB_FLOOR.ln();
    let mut value = 0.0;
    let mut g = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut unclamped_mass = 0.0;
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        p[i] = lp[i].exp();
        let lqi = lq[i].max(floor);
        g[i] = lp[i] - lqi;
        value += p[i] * g[i];
        if lq[i] >= floor {
            unclamped_mass += p[i];
        }
    }
    let mut grad_p = vec![0.0; n];
    let mut grad_q = vec![0.0; n];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        grad_p[i] = p[i] * (g[i] - value);
        let q = lq[i].exp();
        let own = if lq[i] >= floor { p[i] } else { 0.0 };
        grad_q[i] = q * unclamped_mass - own;
    }
    KlTerm {
        value,
        grad_p,
        grad_q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn listwise_examples() {
        let m = [true, true];
        assert_abs_diff_eq!(listwise_softmax_ce(&[0.0, 0.0], &[1, 0], &m).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            listwise_softmax_ce(&[0.0, 3f64.ln()], &[0, 1], &m).unwrap(),
            -(0.75f64.ln()),
            epsilon = 1e-12
        );
        assert!(listwise_softmax_ce(&[50.0, 0.0], &[1, 0], &m).unwrap() < 1e-20);
        assert!(listwise_softmax_ce(&[0.0, 0.0], &[1, 1], &m).is_err());
        assert!(listwise_softmax_ce(&[0.0, 0.0], &[0, 0], &m).is_err());
        // a click on a padded slot does not count
        assert!(listwise_softmax_ce(&[0.0, 0.0], &[0, 1], &[true, false]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        // 0.75 ln 1.5 + 0.25 ln 0.5
        assert_abs_diff_eq!(kl_divergence(&[0.75, 0.25], &[0.5, 0.5]).unwrap(), 0.130812, epsilon = 1e-6);
        assert!(kl_divergence(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_divergence(&[1.5, -0.5], &[0.5, 0.5]).is_err());
        // zero in q is floored rather than producing infinity
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn regularization_examples() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(regularization_loss(&p, &p, &p, 0.37, 0.63).unwrap(), 0.0);
        let ps = [0.1, 0.6, 0.3];
        let pd = [0.4, 0.4, 0.2];
        assert_eq!(
            regularization_loss(&p, &ps, &pd, 1.0, 0.0).unwrap(),
            kl_divergence(&p, &ps).unwrap()
        );
        // scalar recomputation
        let kl = |q: &[f64]| (0..3).map(|i| p[i] * (p[i] / q[i]).ln()).sum::<f64>();
        let expected = 0.25 * kl(&ps) + 0.75 * kl(&pd);
        assert_abs_diff_eq!(regularization_loss(&p, &ps, &pd, 0.25, 0.75).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn total_and_binary() {
        let c = LossConfig::new(0.0, Mode::Ranking).unwrap();
        assert_eq!(total_loss(0.7, 0.5, &c), 0.7);
        let c = LossConfig::new(1.0, Mode::Ranking).unwrap();
        assert_abs_diff_eq!(total_loss(0.7, 0.5, &c), 1.2, epsilon = 1e-15);
        assert!(LossConfig::new(-1.0, Mode::Ranking).is_err());

        assert_abs_diff_eq!(binary_ce(0.5, true), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(binary_ce(0.75, true), 0.287682, epsilon = 1e-6);
        assert!(binary_ce(1.0, true) < 1e-11);
        assert!(binary_ce(0.0, true).is_finite());
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mask = [true, true, false, true];
        let f = [0.3, -1.2, 0.0, 0.8];
        let s = [1.1, 0.4, 0.0, -0.6];
        let kl_of = |f: &[f64], s: &[f64]| {
            let lp = log_softmax(f, Some(&mask)).unwrap();
            let lq = log_softmax(s, Some(&mask)).unwrap();
            kl_with_grad(&lp, &lq, &mask).value
        };
        let lp = log_softmax(&f, Some(&mask)).unwrap();
        let lq = log_softmax(&s, Some(&mask)).unwrap();
        let term = kl_with_grad(&lp, &lq, &mask);
        let p = softmax(&f, Some(&mask)).unwrap();
        let q = softmax(&s, Some(&mask)).unwrap();
        assert_abs_diff_eq!(term.value, kl_divergence(&p, &q).unwrap(), epsilon = 1e-12);
        let eps = 1e-6;
        for i in [0, 1, 3] {
            let mut fp = f;
            fp[i] += eps;
            let mut fm = f;
            fm[i] -= eps;
            let num = (kl_of(&fp, &s) - kl_of(&fm, &s)) / (2.0 * eps);
            assert_abs_diff_eq!(num, term.grad_p[i], epsilon = 1e-8);
            let mut sp = s;
            sp[i] += eps;
            let mut sm = s;
            sm[i] -= eps;
            let num = (kl_of(&f, &sp) - kl_of(&f, &sm)) / (2.0 * eps);
            assert_abs_diff_eq!(num, term.grad_q[i], epsilon = 1e-8);
        }
    }

    fn distribution(raw: Vec<f64>) -> Vec<f64> {
        softmax(&raw, None).unwrap()
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(a in prop::collection::vec(-5.0..5.0f64, 2..7), shift in -5.0..5.0f64) {
            let p = distribution(a.clone());
            let q = distribution(a.iter().enumerate().map(|(i, x)| x + shift * (i as f64).sin()).collect());
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= -1e-12);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-9);
        }

        #[test]
        fn total_loss_monotone_in_lambda(list in 0.0..5.0f64, reg in 0.0..5.0f64, l1 in 0.0..3.0f64, dl in 0.0..3.0f64) {
            let a = LossConfig::new(l1, Mode::Ranking).unwrap();
            let b = LossConfig::new(l1 + dl, Mode::Ranking).unwrap();
            prop_assert!(total_loss(list, reg, &b) >= total_loss(list, reg, &a));
        }
    }
}
