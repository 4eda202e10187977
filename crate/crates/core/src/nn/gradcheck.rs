use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Worst finite-difference disagreement within one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FiniteDiffReport {
    pub groups: Vec<GroupError>,
}

impl FiniteDiffReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

/// Gradients below this magnitude are compared absolutely. Central
/// differences with a step near 1e-5 carry rounding noise around 1e-11, so
/// an exactly-zero gradient would otherwise score as a large relative error.
pub const ZERO_GRADIENT_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ZERO_GRADIENT_FLOOR)
}

/// Compares `analytic` against central differences of `loss_fn` for every
/// element of every non-frozen parameter in `store`.
///
/// `store` is perturbed in place and restored before returning.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    analytic: &Gradients,
    eps: f64,
    mut loss_fn: F,
) -> Result<FiniteDiffReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::config(format!("finite-difference step {eps} outside (0, 1e-2]")));
    }
    let mut report = FiniteDiffReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if store.is_frozen(id) {
            continue;
        }
        let len = store.get(id).len();
        let grad = analytic.to_dense(id, len);
        let mut worst = 0.0_f64;
        for i in 0..len {
            let original = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = original + eps;
            let plus = loss_fn(store)?;
            store.get_mut(id).data_mut()[i] = original - eps;
            let minus = loss_fn(store)?;
            store.get_mut(id).data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::data(format!(
                    "non-finite loss while perturbing {}[{i}]",
                    store.param(id).name
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(numeric, grad[i]));
        }
        report.groups.push(GroupError {
            name: store.param(id).name.clone(),
            max_rel_error: worst,
            checked: len,
        });
    }
    Ok(report)
}
