//! Click-based ranking metrics and classification accuracy.
//!
//! Every query contributes the 1-based rank `r*` of its clicked document and
//! a propensity weight `w`:
//!
//! ```text
//! MRR  = mean(1/r*)            WMRR = Σ w/r* ÷ Σ w
//! ARP  = mean(r*)              WARP = Σ w·r* ÷ Σ w
//! DCG  = mean(1/log₂(1 + r*))
//! ```

use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::loss::single_click;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RankResult {
    pub clicked_rank: usize,
    pub propensity_weight: f64,
}

impl RankResult {
    pub fn reciprocal_rank(&self) -> f64 {
        1.0 / self.clicked_rank as f64
    }
}

/// 1-based rank of the clicked document among valid documents sorted by
/// descending score. Ties go to the lower list index.
pub fn rank_of_click(scores: &[f64], labels: &[u8], mask: &[bool]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::validation("scores and labels lengths differ"));
    }
    let c = single_click(labels, mask)?;
    let ahead = (0..scores.len())
        .filter(|&i| mask[i] && i != c)
        .filter(|&i| scores[i] > scores[c] || (scores[i] == scores[c] && i < c))
        .count();
    Ok(ahead + 1)
}

/// Per-position propensity weights, indexed by the clicked document's
/// position in the logged list.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityTable {
    weights: Vec<f64>,
}

impl PropensityTable {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::config("propensity weights must be positive and finite"));
        }
        Ok(PropensityTable { weights })
    }

    pub fn uniform(list_size: usize) -> Self {
        PropensityTable {
            weights: vec![1.0; list_size],
        }
    }

    pub fn weight(&self, position: usize) -> Result<f64> {
        self.weights.get(position).copied().ok_or_else(|| {
            Error::config(format!(
                "propensity table has {} positions, click at position {position}",
                self.weights.len()
            ))
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mrr: f64,
    pub wmrr: f64,
    pub arp: f64,
    pub warp: f64,
    pub dcg: f64,
    /// Only set in classification mode.
    pub accuracy: Option<f64>,
    pub count: usize,
}

impl MetricsReport {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("mrr", self.mrr),
            ("wmrr", self.wmrr),
            ("arp", self.arp),
            ("warp", self.warp),
            ("dcg", self.dcg),
        ];
        if let Some(a) = self.accuracy {
            out.push(("accuracy", a));
        }
        out.push(("count", self.count as f64));
        out
    }
}

/// Running sums behind [`MetricsReport`]; shards can be merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsAccumulator {
    count: usize,
    sum_rr: f64,
    sum_rank: f64,
    sum_dcg: f64,
    sum_w: f64,
    sum_w_rr: f64,
    sum_w_rank: f64,
}

impl MetricsAccumulator {
    pub fn push(&mut self, r: RankResult) -> Result<()> {
        if r.clicked_rank == 0 {
            return Err(Error::validation("clicked rank is 1-based"));
        }
        if !(r.propensity_weight > 0.0 && r.propensity_weight.is_finite()) {
            return Err(Error::validation("propensity weight must be positive"));
        }
        let rank = r.clicked_rank as f64;
        self.count += 1;
        self.sum_rr += 1.0 / rank;
        self.sum_rank += rank;
        self.sum_dcg += 1.0 / (1.0 + rank).log2();
        self.sum_w += r.propensity_weight;
        self.sum_w_rr += r.propensity_weight / rank;
        self.sum_w_rank += r.propensity_weight * rank;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.count += other.count;
        self.sum_rr += other.sum_rr;
        self.sum_rank += other.sum_rank;
        self.sum_dcg += other.sum_dcg;
        self.sum_w += other.sum_w;
        self.sum_w_rr += other.sum_w_rr;
        self.sum_w_rank += other.sum_w_rank;
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.count == 0 {
            return Err(Error::validation("no queries to evaluate"));
        }
        let n = self.count as f64;
        Ok(MetricsReport {
            mrr: self.sum_rr / n,
            wmrr: self.sum_w_rr / self.sum_w,
            arp: self.sum_rank / n,
            warp: self.sum_w_rank / self.sum_w,
            dcg: self.sum_dcg / n,
            accuracy: None,
            count: self.count,
        })
    }
}

pub fn compute_metrics(results: &[RankResult]) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    for &r in results {
        acc.push(r)?;
    }
    acc.finish()
}

/// Fraction of predictions with `(p ≥ threshold) == label`.
pub fn accuracy(predictions: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::validation("predictions and labels lengths differ"));
    }
    if predictions.is_empty() {
        return Err(Error::validation("no predictions"));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == y)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    /// Two-tailed.
    pub p_value: f64,
}

/// Two-tailed paired t-test on per-query values `a[i] − b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::validation("paired samples differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::validation("paired t-test needs at least two pairs"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Internal(e.to_string()))?;
        (t, 2.0 * dist.sf(t.abs()))
    };
    Ok(PairedTTest {
        mean_difference: mean,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

/// One CSV row of a metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub run: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn from_report(run: &str, split: &str, report: &MetricsReport) -> Vec<MetricRow> {
        report
            .entries()
            .into_iter()
            .map(|(metric, value)| MetricRow {
                run: run.to_string(),
                split: split.to_string(),
                metric: metric.to_string(),
                value,
            })
            .collect()
    }
}

pub const METRICS_CSV_HEADER: &str = "run,split,metric,value";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.run, r.split, r.metric, r.value);
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}
