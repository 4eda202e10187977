//! Finite-difference gradient check of every parameter group for all four
//! architectures in both training modes.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use sepattn::commands::gradcheck;
use sepattn::config::RunConfig;
use sepattn::model::ModelKind;
use sepattn::nn::Activation;

fn main() -> sepattn::Result<()> {
    let mut worst = 0.0f64;
    for kind in ModelKind::ALL {
        for (label, mut cfg) in [
            ("classification", RunConfig::synthetic(kind)),
            ("ranking", RunConfig::email(kind)),
        ] {
            // relu kinks at zero make central differences unreliable
            cfg.activation = Activation::Tanh;
            let report = gradcheck(&cfg)?;
            println!("{kind} / {label}: max relative error {:.2e}", report.max_rel_error());
            for g in &report.groups {
                println!("    {:<40} {:>6} {:.2e}", g.name, g.checked, g.max_rel_error);
            }
            worst = worst.max(report.max_rel_error());
        }
    }
    println!("worst: {worst:.2e} ({})", if worst < 1e-4 { "pass" } else { "FAIL" });
    Ok(())
}
