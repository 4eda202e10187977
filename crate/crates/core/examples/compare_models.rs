//! Trains all four architectures on one synthetic dataset and prints the
//! final train/test accuracy and mean attention weights.
//!
//! ```text
//! cargo run --release --example compare_models -- [dataset 1|2|3] [epochs]
//! ```

use std::path::PathBuf;

use sepattn::commands::{generate, train, GenerateOptions};
use sepattn::config::RunConfig;
use sepattn::model::ModelKind;
use sepattn::synth::{LabelRule, SynthConfig};

fn main() -> sepattn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rule = match args.get(1).map(String::as_str).unwrap_or("3") {
        "1" => LabelRule::Sparse,
        "2" => LabelRule::Dense,
        _ => LabelRule::Combined,
    };
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let dir = std::env::temp_dir().join(format!("sepattn-compare-{}", rule.dataset_number()));
    let data = generate(&GenerateOptions {
        synth: SynthConfig::default(),
        rule,
        out_dir: dir.clone(),
        lists: None,
    })?;
    println!(
        "dataset {}: {} train, {} test, {} label mismatches",
        rule.dataset_number(),
        data.train_count,
        data.test_count,
        data.label_mismatches
    );
    println!("{:<12} {:>9} {:>9} {:>7} {:>9}", "model", "train", "test", "gap", "α_dense");
    for kind in ModelKind::ALL {
        let mut cfg = RunConfig::synthetic(kind);
        cfg.vocab_size = SynthConfig::default().vocab_size + 1;
        cfg.epochs = epochs;
        cfg.train = Some(data.train_path.clone());
        cfg.test = Some(data.test_path.clone());
        cfg.embeddings = Some(data.sidecar_path.clone());
        cfg.output_dir = Some(PathBuf::from(&dir).join(kind.to_string()));
        let out = train(&cfg)?;
        let tr = out.train_evaluation.primary_metric();
        let te = out.test_evaluation.as_ref().map_or(f64::NAN, |e| e.primary_metric());
        let alpha = out
            .test_evaluation
            .as_ref()
            .and_then(|e| e.attention)
            .map_or(String::from("-"), |a| format!("{:.4}", a.mean_alpha_dense));
        println!("{:<12} {:>9.4} {:>9.4} {:>7.4} {:>9}", kind.to_string(), tr, te, tr - te, alpha);
    }
    Ok(())
}
