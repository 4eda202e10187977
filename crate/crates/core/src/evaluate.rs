//! Scoring a trained model over a dataset.

use crate::error::Result;
use crate::features::{DenseStats, Mode, RankingExample};
use crate::metrics::{accuracy, rank_of_click, MetricsAccumulator, MetricsReport, PropensityTable, RankResult};
use crate::model::{Model, ModelKind};

/// Per-example outcome. Classification examples without a click have no
/// rank.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub clicked_rank: Option<usize>,
    pub propensity_weight: f64,
    /// Classification mode only.
    pub probability: Option<f64>,
    pub alpha_sparse: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AttentionSummary {
    pub mean_alpha_sparse: f64,
    pub mean_alpha_dense: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub outcomes: Vec<QueryOutcome>,
    pub attention: Option<AttentionSummary>,
}

impl Evaluation {
    /// Accuracy in classification mode, WMRR otherwise.
    pub fn primary_metric(&self) -> f64 {
        self.report.accuracy.unwrap_or(self.report.wmrr)
    }

    /// Reciprocal rank per example, 0 where no click exists.
    pub fn reciprocal_ranks(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| o.clicked_rank.map_or(0.0, |r| 1.0 / r as f64))
            .collect()
    }
}

/// Rank metrics over every example with a click, accuracy in classification
/// mode, and mean attention weights for SepAttn.
///
/// The propensity weight of an example comes from `propensity`, indexed by
/// the clicked position, when given, and from the example itself otherwise.
pub fn evaluate(model: &Model, examples: &[RankingExample], propensity: Option<&PropensityTable>) -> Result<Evaluation> {
    let classification = model.config().mode == Mode::Classification;
    let mut acc = MetricsAccumulator::default();
    let mut outcomes = Vec::with_capacity(examples.len());
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    let (mut sum_s, mut sum_d) = (0.0, 0.0);
    for ex in examples {
        let out = model.forward(ex)?;
        let clicked = ex.clicked_index();
        let weight = match (propensity, clicked) {
            (Some(t), Some(c)) => t.weight(c)?,
            _ => ex.propensity_weight,
        };
        let clicked_rank = match clicked {
            Some(_) => Some(rank_of_click(&out.h_final, &ex.labels, &ex.mask)?),
            None => None,
        };
        if let Some(r) = clicked_rank {
            acc.push(RankResult {
                clicked_rank: r,
                propensity_weight: weight,
            })?;
        }
        let probability = classification.then(|| out.p_final[0]);
        if let Some(p) = probability {
            probs.push(p);
            labels.push(ex.labels[0] == 1);
        }
        let alpha_sparse = out.sepattn.as_ref().map(|s| {
            sum_s += s.alpha_sparse;
            sum_d += s.alpha_dense;
            s.alpha_sparse
        });
        outcomes.push(QueryOutcome {
            clicked_rank,
            propensity_weight: weight,
            probability,
            alpha_sparse,
        });
    }
    let mut report = if acc == MetricsAccumulator::default() && classification {
        // no positives at all: rank metrics are undefined, report the vacuous optimum
        MetricsReport {
            mrr: 1.0,
            wmrr: 1.0,
            arp: 1.0,
            warp: 1.0,
            dcg: 1.0,
            accuracy: None,
            count: 0,
        }
    } else {
        acc.finish()?
    };
    if classification {
        report.accuracy = Some(accuracy(&probs, &labels, 0.5)?);
        report.count = examples.len();
    }
    let attention = (model.config().kind == ModelKind::SepAttn).then(|| {
        let n = examples.len() as f64;
        AttentionSummary {
            mean_alpha_sparse: sum_s / n,
            mean_alpha_dense: sum_d / n,
            count: examples.len(),
        }
    });
    Ok(Evaluation {
        report,
        outcomes,
        attention,
    })
}

/// Standardizes the dense features of every valid document in place.
pub fn normalize_examples(stats: &DenseStats, examples: &mut [RankingExample]) -> Result<()> {
    for ex in examples {
        for (doc, &valid) in ex.docs.iter_mut().zip(&ex.mask) {
            if valid {
                doc.dense = stats.normalize(&doc.dense)?;
            }
        }
    }
    Ok(())
}

/// Fits dense statistics on the valid documents of `examples`.
pub fn fit_dense_stats(examples: &[RankingExample]) -> Result<DenseStats> {
    DenseStats::fit(
        examples
            .iter()
            .flat_map(|ex| ex.docs.iter().zip(&ex.mask).filter(|(_, &m)| m).map(|(d, _)| d.dense.as_slice())),
    )
}
