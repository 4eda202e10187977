//! Sweeps the regularization weight λ for SepAttn on synthetic dataset 3.
//!
//! ```text
//! cargo run --release --example lambda_sweep -- [epochs]
//! ```

use sepattn::commands::{generate, lambda_sweep, GenerateOptions};
use sepattn::config::RunConfig;
use sepattn::model::ModelKind;
use sepattn::synth::{LabelRule, SynthConfig};

fn main() -> sepattn::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let synth = SynthConfig::default();
    let data = generate(&GenerateOptions {
        synth: synth.clone(),
        rule: LabelRule::Combined,
        out_dir: std::env::temp_dir().join("sepattn-sweep"),
        lists: None,
    })?;
    let mut cfg = RunConfig::synthetic(ModelKind::SepAttn);
    cfg.vocab_size = synth.vocab_size + 1;
    cfg.epochs = epochs;
    cfg.train = Some(data.train_path);
    cfg.test = Some(data.test_path);
    cfg.embeddings = Some(data.sidecar_path);
    let sweep = lambda_sweep(&cfg, &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5])?;
    print!("{}", sweep.to_csv());
    Ok(())
}
