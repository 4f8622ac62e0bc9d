//! Which tokens need normalization.
//!
//! Labels come from gold annotation (upper bound), from the replacement
//! table, or from a label file written by an external detector. Label files
//! hold one `0`/`1` per token with corpus sentence framing.

use std::fmt;
use std::path::Path;

use crate::baselines::ReplacementTable;
use crate::corpus::Corpus;
use crate::error::{decode_utf8, read_file, Error, Result};
use crate::framing::{read_aligned, write_aligned};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Gold,
    TableHeuristic,
    External,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Gold => "gold",
            LabelSource::TableHeuristic => "table",
            LabelSource::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionLabels {
    labels: Vec<bool>,
    source: LabelSource,
}

impl DetectionLabels {
    pub fn new(labels: Vec<bool>, source: LabelSource) -> Self {
        DetectionLabels { labels, source }
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn check_aligned(&self, corpus: &Corpus) -> Result<()> {
        if self.labels.len() != corpus.token_count() {
            return Err(Error::Alignment(format!(
                "{} detection labels for {} tokens",
                self.labels.len(),
                corpus.token_count()
            )));
        }
        Ok(())
    }

    /// Serialize in the label-file format, framed like `corpus`.
    pub fn to_bytes(&self, corpus: &Corpus) -> Result<Vec<u8>> {
        self.check_aligned(corpus)?;
        let items: Vec<&str> = self
            .labels
            .iter()
            .map(|&l| if l { "1" } else { "0" })
            .collect();
        Ok(write_aligned(&items, &corpus.shape()).into_bytes())
    }
}

pub fn gold_labels(gold: &Corpus) -> DetectionLabels {
    DetectionLabels::new(
        gold.tokens().map(|t| gold.needs_norm(t)).collect(),
        LabelSource::Gold,
    )
}

/// Flag a token iff its most frequent training normalization differs from
/// it. Unseen words are never flagged.
pub fn table_labels(table: &ReplacementTable, test: &Corpus) -> DetectionLabels {
    DetectionLabels::new(
        test.tokens()
            .map(|t| match table.majority(t.raw()) {
                Some(cand) => test.fold(cand) != test.fold(t.raw()),
                None => false,
            })
            .collect(),
        LabelSource::TableHeuristic,
    )
}

pub fn parse_labels(input: &[u8], corpus: &Corpus) -> Result<DetectionLabels> {
    let text = decode_utf8(input)?;
    let lines = read_aligned(text, &corpus.shape(), false)?;
    let labels = lines
        .into_iter()
        .map(|line| match line.text {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::Value {
                line: line.number,
                value: other.into(),
                message: "labels must be 0 or 1".into(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionLabels::new(labels, LabelSource::External))
}

pub fn load_external_labels(path: &Path, corpus: &Corpus) -> Result<DetectionLabels> {
    parse_labels(&read_file(path)?, corpus)
}
