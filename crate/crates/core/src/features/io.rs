//! Line-delimited dataset files.
//!
//! The first line is a JSON header:
//!
//! ```text
//! {"format":"sepattn-dataset","version":1,"mode":"ranking","list_size":6,"dense_dim":3}
//! ```
//!
//! Every following line is one example:
//!
//! ```text
//! {"query":{"ngrams":[4,9],"char_ngrams":[17]},
//!  "docs":[{"ngrams":[3],"char_ngrams":[],"dense":[0.5,2.0,-1.0]}, ...],
//!  "mask":[true,...],"labels":[0,1,...],"weight":1.0}
//! ```
//!
//! (shown wrapped; a record is always a single line). `query_text` may
//! replace `query`; such records are featurized on load and require a
//! [`TextFeaturizer`]. `mask` defaults to all-valid and `weight` to 1.0.
//! Floats are written in shortest round-trip form, so write-then-load is
//! exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::example::{Document, Mode, QueryFeatures, RankingExample};
use super::vocab::TextFeaturizer;
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "sepattn-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub list_size: usize,
    pub dense_dim: usize,
}

impl DatasetHeader {
    pub fn new(mode: Mode, list_size: usize, dense_dim: usize) -> Self {
        DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            mode,
            list_size,
            dense_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub examples: Vec<RankingExample>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, examples: Vec<RankingExample>) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            ex.validate(header.mode, header.list_size, header.dense_dim)
                .map_err(|e| Error::validation(format!("example {i}: {e}")))?;
        }
        Ok(Dataset { header, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query: Option<QueryFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_text: Option<String>,
    docs: Vec<Document>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
    labels: Vec<u8>,
    #[serde(default = "default_weight")]
    weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// Streams examples from a dataset file.
pub struct DatasetReader {
    path: PathBuf,
    header: DatasetHeader,
    lines: Lines<BufReader<File>>,
    line_no: usize,
    featurizer: Option<TextFeaturizer>,
}

impl DatasetReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse_err = |message: String| Error::Parse {
            path: path.clone(),
            line: 1,
            message,
        };
        let first = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(&path, e))?,
            None => return Err(parse_err("empty file, missing header".into())),
        };
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| parse_err(format!("bad header: {e}")))?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(parse_err(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        Ok(DatasetReader {
            path,
            header,
            lines,
            line_no: 1,
            featurizer: None,
        })
    }

    /// Enables records carrying `query_text`.
    pub fn with_featurizer(mut self, featurizer: TextFeaturizer) -> Self {
        self.featurizer = Some(featurizer);
        self
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    fn parse_line(&self, line: &str) -> Result<RankingExample> {
        let err = |message: String| Error::Parse {
            path: self.path.clone(),
            line: self.line_no,
            message,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let query = match (record.query, record.query_text) {
            (Some(q), None) => q,
            (None, Some(text)) => match &self.featurizer {
                Some(f) => f.featurize(&text),
                None => return Err(err("query_text record but no featurizer configured".into())),
            },
            _ => return Err(err("exactly one of query / query_text is required".into())),
        };
        let n = record.docs.len();
        let example = RankingExample {
            query,
            mask: record.mask.unwrap_or_else(|| vec![true; n]),
            docs: record.docs,
            labels: record.labels,
            propensity_weight: record.weight,
        };
        example
            .validate(self.header.mode, self.header.list_size, self.header.dense_dim)
            .map_err(|e| err(e.to_string()))?;
        Ok(example)
    }
}

impl Iterator for DatasetReader {
    type Item = Result<RankingExample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = DatasetReader::open(path)?;
    collect(reader)
}

pub fn load_dataset_with(path: impl AsRef<Path>, featurizer: TextFeaturizer) -> Result<Dataset> {
    collect(DatasetReader::open(path)?.with_featurizer(featurizer))
}

fn collect(reader: DatasetReader) -> Result<Dataset> {
    let header = reader.header().clone();
    let examples = reader.collect::<Result<Vec<_>>>()?;
    Ok(Dataset { header, examples })
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let h = &dataset.header;
    writeln!(out, "{}", serde_json::to_string(h).expect("header serializes")).map_err(io)?;
    for (i, ex) in dataset.examples.iter().enumerate() {
        ex.validate(h.mode, h.list_size, h.dense_dim)
            .map_err(|e| Error::validation(format!("example {i}: {e}")))?;
        let record = Record {
            query: Some(ex.query.clone()),
            query_text: None,
            docs: ex.docs.clone(),
            mask: Some(ex.mask.clone()),
            labels: ex.labels.clone(),
            weight: ex.propensity_weight,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::data(format!("example {i}: {e}")))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
