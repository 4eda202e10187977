//! Trains SepAttn on synthetic datasets 1 and 2 and prints the attention
//! weights of 20 random test examples plus the test-set means.
//!
//! ```text
//! cargo run --release --example attention_inspection -- [epochs]
//! ```

use sepattn::commands::{attention_report, generate, train, GenerateOptions};
use sepattn::config::RunConfig;
use sepattn::features::load_dataset;
use sepattn::model::ModelKind;
use sepattn::synth::{LabelRule, SynthConfig};

fn main() -> sepattn::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let root = std::env::temp_dir().join("sepattn-attention");
    let synth = SynthConfig::default();
    for rule in [LabelRule::Sparse, LabelRule::Dense] {
        let data = generate(&GenerateOptions {
            synth: synth.clone(),
            rule,
            out_dir: root.join(format!("dataset{}", rule.dataset_number())),
            lists: None,
        })?;
        let mut cfg = RunConfig::synthetic(ModelKind::SepAttn);
        cfg.vocab_size = synth.vocab_size + 1;
        cfg.epochs = epochs;
        cfg.train = Some(data.train_path.clone());
        cfg.test = Some(data.test_path.clone());
        cfg.embeddings = Some(data.sidecar_path.clone());
        let out = train(&cfg)?;
        let test = load_dataset(&data.test_path)?;
        let report = attention_report(&out.model, &test.examples[..1000], 20, 0)?;
        println!("dataset {} ({epochs} epochs)", rule.dataset_number());
        print!("{}", report.to_csv());
    }
    Ok(())
}
