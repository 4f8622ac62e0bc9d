//! Error analysis and segmentation statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::detection::DetectionLabels;
use crate::error::{Error, Result};
use crate::metrics::{check_alignment, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorCategory {
    Correct,
    /// Needed normalization, changed to the wrong form.
    WrongCandidate,
    /// Did not need normalization, changed anyway.
    Overnormalized,
    /// Needed normalization, left as is.
    Undernormalized,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::Correct,
        ErrorCategory::WrongCandidate,
        ErrorCategory::Overnormalized,
        ErrorCategory::Undernormalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Correct => "correct",
            ErrorCategory::WrongCandidate => "wrong_candidate",
            ErrorCategory::Overnormalized => "overnormalized",
            ErrorCategory::Undernormalized => "undernormalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorBreakdown {
    pub per_token: Vec<ErrorCategory>,
    pub histogram: BTreeMap<ErrorCategory, usize>,
}

impl ErrorBreakdown {
    pub fn count(&self, category: ErrorCategory) -> usize {
        self.histogram.get(&category).copied().unwrap_or(0)
    }

    /// Share of each error category among all errors (correct excluded).
    pub fn error_distribution(&self) -> BTreeMap<ErrorCategory, f64> {
        let errors: usize = self.per_token.len() - self.count(ErrorCategory::Correct);
        ErrorCategory::ALL[1..]
            .iter()
            .map(|&c| {
                let share = if errors == 0 {
                    0.0
                } else {
                    self.count(c) as f64 / errors as f64
                };
                (c, share)
            })
            .collect()
    }
}

impl fmt::Display for ErrorBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total = self.per_token.len();
        let dist = self.error_distribution();
        writeln!(f, "category\tcount\t%tokens\t%errors")?;
        for (i, c) in ErrorCategory::ALL.iter().enumerate() {
            let n = self.count(*c);
            let of_errors = dist
                .get(c)
                .map(|s| format!("{:.2}", 100.0 * s))
                .unwrap_or_else(|| "-".into());
            write!(
                f,
                "{}\t{n}\t{:.2}\t{of_errors}",
                c.name(),
                100.0 * n as f64 / total as f64
            )?;
            if i + 1 < ErrorCategory::ALL.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

pub fn categorize_errors(gold: &Corpus, run: &RunOutput) -> Result<ErrorBreakdown> {
    check_alignment(gold, run)?;
    let mut histogram: BTreeMap<ErrorCategory, usize> =
        ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let per_token: Vec<ErrorCategory> = gold
        .tokens()
        .zip(run.predictions())
        .map(|(token, pred)| {
            let raw = gold.fold(token.raw());
            let norm = gold.fold(token.norm());
            let pred = gold.fold(pred);
            let category = match (gold.needs_norm(token), pred == norm, pred == raw) {
                (true, true, _) => ErrorCategory::Correct,
                (true, false, true) => ErrorCategory::Undernormalized,
                (true, false, false) => ErrorCategory::WrongCandidate,
                (false, _, true) => ErrorCategory::Correct,
                (false, _, false) => ErrorCategory::Overnormalized,
            };
            *histogram.get_mut(&category).unwrap() += 1;
            category
        })
        .collect();
    Ok(ErrorBreakdown {
        per_token,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegStats {
    pub chars_per_subword: f64,
    pub subwords_per_word: f64,
    pub tokenizer_id: String,
    /// Greedy longest-match stand-in for an external tokenizer.
    pub approximate: bool,
}

impl fmt::Display for SegStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.2}\t{:.2}",
            self.tokenizer_id, self.chars_per_subword, self.subwords_per_word
        )?;
        if self.approximate {
            write!(f, "\t(greedy approximation, raw text)")?;
        } else {
            write!(f, "\t(raw text)")?;
        }
        Ok(())
    }
}

/// Byte-level statistics over raw tokens: every UTF-8 byte is a subword.
pub fn seg_stats_bytes(c: &Corpus) -> SegStats {
    let (mut chars, mut bytes, mut words) = (0usize, 0usize, 0usize);
    for token in c.tokens() {
        chars += token.raw().chars().count();
        bytes += token.raw().len();
        words += 1;
    }
    SegStats {
        chars_per_subword: chars as f64 / bytes as f64,
        subwords_per_word: bytes as f64 / words as f64,
        tokenizer_id: "bytes".into(),
        approximate: false,
    }
}

/// A ranked subword vocabulary segmented by greedy longest match.
#[derive(Debug, Clone)]
pub struct Vocab {
    pieces: Vec<String>,
    set: HashSet<String>,
    max_chars: usize,
    byte_fallback: bool,
}

impl Vocab {
    pub fn new(pieces: Vec<String>, byte_fallback: bool) -> Result<Self> {
        let pieces: Vec<String> = pieces.into_iter().filter(|p| !p.is_empty()).collect();
        if pieces.is_empty() {
            return Err(Error::Domain("subword vocabulary is empty".into()));
        }
        let set = pieces.iter().cloned().collect();
        let max_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Ok(Vocab {
            pieces,
            set,
            max_chars,
            byte_fallback,
        })
    }

    /// One subword per line, rank order = line order.
    pub fn parse(text: &str, byte_fallback: bool) -> Result<Self> {
        Self::new(text.lines().map(str::to_string).collect(), byte_fallback)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Segment one word. Unmatched characters become one `<0xNN>` piece per
    /// byte when byte fallback is enabled.
    pub fn segment(&self, word: &str) -> Result<Vec<String>> {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut out = Vec::new();
        let mut at = 0;
        while at + 1 < bounds.len() {
            let longest = (1..=self.max_chars.min(bounds.len() - 1 - at))
                .rev()
                .find(|&n| self.set.contains(&word[bounds[at]..bounds[at + n]]));
            match longest {
                Some(n) => {
                    out.push(word[bounds[at]..bounds[at + n]].to_string());
                    at += n;
                }
                None if self.byte_fallback => {
                    for b in word[bounds[at]..bounds[at + 1]].bytes() {
                        out.push(format!("<0x{b:02X}>"));
                    }
                    at += 1;
                }
                None => {
                    return Err(Error::Segmentation {
                        word: word.to_string(),
                        offset: bounds[at],
                    })
                }
            }
        }
        Ok(out)
    }
}

pub fn seg_stats_vocab(c: &Corpus, vocab: &Vocab, tokenizer_id: &str) -> Result<SegStats> {
    let (mut chars, mut subwords, mut words) = (0usize, 0usize, 0usize);
    for token in c.tokens() {
        chars += token.raw().chars().count();
        subwords += vocab.segment(token.raw())?.len();
        words += 1;
    }
    Ok(SegStats {
        chars_per_subword: chars as f64 / subwords as f64,
        subwords_per_word: subwords as f64 / words as f64,
        tokenizer_id: tokenizer_id.to_string(),
        approximate: true,
    })
}

pub const SHEET_HEADER: &str = "context\traw\tprediction\tgold\tsubcategory";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub context: String,
    pub raw: String,
    pub prediction: String,
    pub gold: String,
    pub subcategory: String,
}

/// Seeded sample of detected tokens for manual sub-categorization, as TSV
/// with an empty subcategory column. Rows appear in corpus order.
pub fn export_annotation_sheet(
    gold: &Corpus,
    run: &RunOutput,
    labels: &DetectionLabels,
    sample_size: usize,
    seed: u64,
) -> Result<String> {
    check_alignment(gold, run)?;
    labels.check_aligned(gold)?;
    let mut flagged = Vec::new();
    let mut index = 0;
    for (s, sentence) in gold.sentences().iter().enumerate() {
        for t in 0..sentence.len() {
            if labels.labels()[index] {
                flagged.push((index, s, t));
            }
            index += 1;
        }
    }
    if sample_size > flagged.len() {
        return Err(Error::Sampling(format!(
            "asked for {sample_size} rows but only {} tokens are flagged",
            flagged.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, flagged.len(), sample_size).into_vec();
    picked.sort_unstable();

    let mut out = String::from(SHEET_HEADER);
    out.push('\n');
    for i in picked {
        let (index, s, t) = flagged[i];
        let tokens = gold.sentences()[s].tokens();
        let context = tokens
            .iter()
            .enumerate()
            .map(|(j, tok)| {
                if j == t {
                    format!("<<{}>>", tok.raw())
                } else {
                    tok.raw().to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!(
            "{context}\t{}\t{}\t{}\t\n",
            tokens[t].raw(),
            run.predictions()[index],
            tokens[t].norm()
        ));
    }
    Ok(out)
}

pub fn parse_annotation_sheet(text: &str) -> Result<Vec<AnnotationRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SHEET_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SHEET_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [context, raw, prediction, gold, subcategory] = fields[..] else {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        };
        rows.push(AnnotationRow {
            context: context.into(),
            raw: raw.into(),
            prediction: prediction.into(),
            gold: gold.into(),
            subcategory: subcategory.trim().into(),
        });
    }
    Ok(rows)
}

/// Counts per annotated subcategory, each also divided by the largest
/// count. Rows without a subcategory are ignored.
pub fn subcategory_histogram(rows: &[AnnotationRow]) -> BTreeMap<String, (usize, f64)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in rows.iter().filter(|r| !r.subcategory.is_empty()) {
        *counts.entry(row.subcategory.clone()).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(1) as f64;
    counts
        .into_iter()
        .map(|(k, n)| (k, (n, n as f64 / max)))
        .collect()
}
