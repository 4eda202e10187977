//! Feature data model, text featurization, dense-feature normalization and
//! dataset files.

mod example;
pub mod io;
mod normalize;
mod vocab;

pub use example::{DocSparseFeatures, Document, Mode, QueryFeatures, RankingExample, SparseFeatures};
pub use io::{load_dataset, load_dataset_with, write_dataset, Dataset, DatasetHeader, DatasetReader};
pub use normalize::DenseStats;
pub use vocab::{char_ngrams, word_ngrams, TextFeaturizer, Vocab, NGRAM_SEPARATOR};
