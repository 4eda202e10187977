//! Ranking metrics from hand-written clicks: reciprocal ranks, propensity
//! weighting, a sharded merge and a paired t-test between two rankers.
//!
//! ```text
//! cargo run --example metrics_report
//! ```

use sepattn::metrics::{
    compute_metrics, metrics_csv, paired_t_test, rank_of_click, MetricRow, MetricsAccumulator, PropensityTable,
    RankResult,
};

fn main() -> sepattn::Result<()> {
    // three queries, four candidates each, one click per list
    let lists: [(&[f64], &[u8]); 3] = [
        (&[2.0, 0.5, 1.0, -1.0], &[1, 0, 0, 0]),
        (&[0.1, 0.9, 0.3, 0.2], &[0, 0, 1, 0]),
        (&[1.0, 1.0, 0.0, 3.0], &[0, 1, 0, 0]),
    ];
    let mask = [true; 4];
    // clicks at lower positions are observed less often and weigh more
    let propensity = PropensityTable::new(vec![1.0, 1.5, 2.0, 3.0])?;

    let mut results = Vec::new();
    for (scores, labels) in lists {
        let rank = rank_of_click(scores, labels, &mask)?;
        let clicked = labels.iter().position(|&l| l == 1).unwrap();
        results.push(RankResult {
            clicked_rank: rank,
            propensity_weight: propensity.weight(clicked)?,
        });
        println!("scores {scores:?}: clicked doc {clicked} ranked {rank}");
    }
    let report = compute_metrics(&results)?;
    for (name, value) in report.entries() {
        println!("{name:>6} = {value:.4}");
    }

    // sharded evaluation merges to the same report
    let mut a = MetricsAccumulator::default();
    let mut b = MetricsAccumulator::default();
    a.push(results[0])?;
    b.push(results[1])?;
    b.push(results[2])?;
    a.merge(&b);
    assert_eq!(a.finish()?, report);

    print!("{}", metrics_csv(&MetricRow::from_report("demo", "test", &report)));

    let ours = [1.0, 0.5, 1.0, 1.0, 0.5, 1.0 / 3.0];
    let baseline = [0.5, 0.5, 1.0 / 3.0, 1.0, 0.25, 1.0 / 3.0];
    let t = paired_t_test(&ours, &baseline)?;
    println!(
        "paired t-test: mean diff {:.4}, t = {:.4}, df = {}, p = {:.4}",
        t.mean_difference, t.t_statistic, t.degrees_of_freedom, t.p_value
    );
    Ok(())
}
