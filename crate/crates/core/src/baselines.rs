//! Replacement statistics from training data, the most-frequent-replacement
//! (MFR) baseline and the leave-as-is (LAI) baseline.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{fold, Corpus};
use crate::error::{decode_utf8, read_file, Error, Result};
use crate::metrics::RunOutput;

/// Per raw word, how often each normalization was observed in training.
///
/// Keys are folded according to the corpus' caseless flag; candidates keep
/// their original casing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplacementTable {
    entries: BTreeMap<String, BTreeMap<String, u64>>,
    total_tokens: u64,
    caseless: bool,
}

impl ReplacementTable {
    pub fn entries(&self) -> &BTreeMap<String, BTreeMap<String, u64>> {
        &self.entries
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn caseless(&self) -> bool {
        self.caseless
    }

    pub fn key<'a>(&self, raw: &'a str) -> std::borrow::Cow<'a, str> {
        fold(raw, self.caseless)
    }

    pub fn candidates(&self, raw: &str) -> Option<&BTreeMap<String, u64>> {
        self.entries.get(self.key(raw).as_ref())
    }

    /// Most frequent candidate for `raw`, or `None` if it was never seen.
    pub fn majority(&self, raw: &str) -> Option<&str> {
        let key = self.key(raw);
        let counts = self.entries.get(key.as_ref())?;
        Some(majority_candidate(&key, counts, self.caseless))
    }

    /// TSV rows `raw<TAB>candidate<TAB>count`, sorted by raw then count
    /// descending.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (raw, counts) in &self.entries {
            let mut rows: Vec<_> = counts.iter().collect();
            rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
            for (cand, count) in rows {
                out.push_str(&format!("{raw}\t{cand}\t{count}\n"));
            }
        }
        out
    }

    pub fn from_tsv(input: &[u8], caseless: bool) -> Result<Self> {
        let text = decode_utf8(input)?;
        let mut entries: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut total_tokens = 0;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [raw, cand, count] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            let count: u64 = match count.parse() {
                Ok(c) if c >= 1 => c,
                _ => {
                    return Err(Error::Value {
                        line: line_no,
                        value: count.into(),
                        message: "count must be a positive integer".into(),
                    })
                }
            };
            if raw.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty raw word".into(),
                });
            }
            let prev = entries
                .entry(raw.to_string())
                .or_default()
                .insert(cand.to_string(), count);
            if prev.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate entry for {raw:?} -> {cand:?}"),
                });
            }
            total_tokens += count;
        }
        Ok(ReplacementTable {
            entries,
            total_tokens,
            caseless,
        })
    }

    pub fn from_path(path: &Path, caseless: bool) -> Result<Self> {
        Self::from_tsv(&read_file(path)?, caseless)
    }
}

/// Argmax by count; ties go to the identity candidate, then to the smallest
/// candidate by code point.
pub(crate) fn majority_candidate<'a>(
    key: &str,
    counts: &'a BTreeMap<String, u64>,
    caseless: bool,
) -> &'a str {
    let best = counts.values().copied().max().unwrap_or(0);
    let mut tied = counts.iter().filter(|(_, &c)| c == best).map(|(k, _)| k);
    let first = tied.clone().next().expect("candidate map is never empty");
    tied.find(|cand| fold(cand, caseless) == key)
        .unwrap_or(first)
        .as_str()
}

pub fn build_table(train: &Corpus) -> ReplacementTable {
    let mut entries: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut total_tokens = 0;
    for token in train.tokens() {
        *entries
            .entry(train.fold(token.raw()).into_owned())
            .or_default()
            .entry(token.norm().to_string())
            .or_insert(0) += 1;
        total_tokens += 1;
    }
    ReplacementTable {
        entries,
        total_tokens,
        caseless: train.caseless(),
    }
}

/// Replace every token with its most frequent training normalization;
/// unseen words are left unchanged.
pub fn apply_mfr(table: &ReplacementTable, test: &Corpus) -> RunOutput {
    RunOutput::new(
        test.tokens()
            .map(|t| table.majority(t.raw()).unwrap_or(t.raw()).to_string())
            .collect(),
    )
}

pub fn leave_as_is(test: &Corpus) -> RunOutput {
    RunOutput::new(test.tokens().map(|t| t.raw().to_string()).collect())
}
