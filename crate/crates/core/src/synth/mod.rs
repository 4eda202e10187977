//! Seeded synthetic datasets with known label rules.
//!
//! Queries and document sparse features are single tokens of a random
//! spherical embedding vocabulary; dense features are uniform in
//! `[-0.5, 0.5]`. Three rules decide the binary label:
//!
//! * [`LabelRule::Sparse`]: `cos(d_sparse, q) > 0`
//! * [`LabelRule::Dense`]: `q ∈ triggers` and `Σ d_dense < 0`
//! * [`LabelRule::Combined`]: both of the above

mod generate;
mod sidecar;

pub use generate::{
    derive_label, gen_dataset, gen_embedding_table, gen_ranking_lists, verify_labels, LabelRule,
    SynthConfig, SynthEmbeddingTable, SynthSplits, DEFAULT_TRIGGER_WORDS,
};
pub use sidecar::{load_sidecar, write_sidecar, Sidecar};
