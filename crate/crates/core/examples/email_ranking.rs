//! Ranking lists of six emails with text features and three dense signals
//! (attachments, recipients, age in days). Queries containing a recency word
//! click the newest matching email; other queries click the matching email
//! with the most attachments. Trains SepAttn and the concatenation baseline,
//! reports propensity-weighted metrics and a paired t-test.
//!
//! ```text
//! cargo run --release --example email_ranking -- [epochs]
//! ```

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sepattn::commands::{default_featurizer, evaluate_checkpoint, train, EvaluateOptions};
use sepattn::config::RunConfig;
use sepattn::features::{write_dataset, Dataset, DatasetHeader, Document, Mode, RankingExample};
use sepattn::model::ModelKind;

const TOPICS: [&str; 12] = [
    "flight", "hotel", "invoice", "medical", "meeting", "receipt", "photos", "tax", "party", "contract", "lease",
    "payroll",
];
const FILLER: [&str; 6] = ["my", "the", "from", "about", "for", "with"];
const RECENCY: [&str; 3] = ["recent", "latest", "newest"];
const LIST_SIZE: usize = 6;
const VOCAB: usize = 4096;

fn corpus(n: usize, seed: u64) -> sepattn::Result<Dataset> {
    let featurizer = default_featurizer(VOCAB)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let topic = *TOPICS.choose(&mut rng).unwrap();
        let recency = rng.random_bool(0.5);
        let query = if recency {
            format!("{} {topic}", RECENCY.choose(&mut rng).unwrap())
        } else {
            format!("{} {topic}", FILLER.choose(&mut rng).unwrap())
        };
        let matching = rng.random_range(2..=3);
        let mut docs = Vec::with_capacity(LIST_SIZE);
        let mut keys = Vec::with_capacity(LIST_SIZE);
        for i in 0..LIST_SIZE {
            let t = if i < matching {
                topic
            } else {
                *TOPICS.iter().filter(|&&w| w != topic).collect::<Vec<_>>().choose(&mut rng).unwrap()
            };
            let text = format!("{} {t} {}", FILLER.choose(&mut rng).unwrap(), FILLER.choose(&mut rng).unwrap());
            let attachments = rng.random_range(0..5) as f64;
            let recipients = rng.random_range(1..10) as f64;
            let age_days = rng.random_range(0.0..365.0f64).round();
            keys.push(if recency { -age_days } else { attachments * 1000.0 - age_days });
            docs.push(Document::new(featurizer.featurize(&text), vec![attachments, recipients, age_days]));
        }
        let clicked = (0..matching).max_by(|&a, &b| keys[a].total_cmp(&keys[b])).unwrap();
        // random display order
        let mut order: Vec<usize> = (0..LIST_SIZE).collect();
        for i in (1..LIST_SIZE).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shown: Vec<Document> = order.iter().map(|&i| docs[i].clone()).collect();
        let position = order.iter().position(|&i| i == clicked).unwrap();
        examples.push(RankingExample::ranking(featurizer.featurize(&query), shown, position, LIST_SIZE)?);
    }
    Dataset::new(DatasetHeader::new(Mode::Ranking, LIST_SIZE, 3), examples)
}

fn main() -> sepattn::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let root = std::env::temp_dir().join("sepattn-email");
    std::fs::create_dir_all(&root).unwrap();
    let (train_path, test_path) = (root.join("train.jsonl"), root.join("test.jsonl"));
    write_dataset(&train_path, &corpus(3000, 1)?)?;
    write_dataset(&test_path, &corpus(1000, 2)?)?;

    let propensity = vec![1.0, 1.2, 1.5, 1.9, 2.4, 3.0];
    let mut checkpoints = Vec::new();
    for kind in [ModelKind::SepAttn, ModelKind::Concat] {
        let mut cfg = RunConfig::email(kind);
        cfg.vocab_size = VOCAB;
        cfg.dense_dim = 3;
        cfg.list_size = LIST_SIZE;
        cfg.epochs = epochs;
        cfg.train = Some(train_path.clone());
        cfg.test = Some(test_path.clone());
        cfg.propensity = Some(propensity.clone());
        let dir = root.join(kind.to_string());
        cfg.output_dir = Some(dir.clone());
        let out = train(&cfg)?;
        let report = &out.test_evaluation.as_ref().expect("test set").report;
        println!(
            "{kind:<8} test WMRR {:.4}  MRR {:.4}  WARP {:.3}  DCG {:.4}",
            report.wmrr, report.mrr, report.warp, report.dcg
        );
        checkpoints.push(dir.join(sepattn::commands::CHECKPOINT_FILE));
    }
    let cmp = evaluate_checkpoint(&EvaluateOptions {
        checkpoint: checkpoints[0].clone(),
        dataset: test_path,
        compare: Some(checkpoints[1].clone()),
        propensity: Some(propensity),
        run_name: "sepattn".into(),
        split: "test".into(),
        output_dir: Some(root.join("comparison")),
    })?;
    let t = cmp.t_test.expect("comparison requested");
    println!(
        "sepattn vs concat reciprocal rank: mean diff {:+.4}, t = {:.3}, p = {:.4}",
        t.mean_difference, t.t_statistic, t.p_value
    );
    Ok(())
}
