//! Writes the three synthetic datasets and re-derives every label from the
//! stored features.
//!
//! ```text
//! cargo run --release --example generate_synthetic -- [out_dir]
//! ```

use sepattn::commands::{generate, GenerateOptions, ListOptions};
use sepattn::synth::{LabelRule, SynthConfig};

fn main() -> sepattn::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sepattn-synthetic"));
    let synth = SynthConfig::default();
    for rule in LabelRule::ALL {
        let out = generate(&GenerateOptions {
            synth: synth.clone(),
            rule,
            out_dir: root.join(format!("dataset{}", rule.dataset_number())),
            lists: None,
        })?;
        println!(
            "dataset {}: {} + {} examples in {}, {} label mismatches",
            rule.dataset_number(),
            out.train_count,
            out.test_count,
            out.train_path.parent().unwrap().display(),
            out.label_mismatches
        );
    }
    // dataset 3 items grouped into ranking lists of 6
    let out = generate(&GenerateOptions {
        synth: SynthConfig {
            num_train: 2000,
            num_test: 2000,
            ..synth
        },
        rule: LabelRule::Combined,
        out_dir: root.join("dataset3-lists"),
        lists: Some(ListOptions {
            list_size: 6,
            num_train: 2000,
            num_test: 2000,
        }),
    })?;
    println!(
        "dataset 3 lists: {} + {} lists, {} label mismatches",
        out.train_count, out.test_count, out.label_mismatches
    );
    Ok(())
}
