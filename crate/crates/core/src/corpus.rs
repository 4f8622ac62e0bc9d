//! Word-aligned normalization corpora.
//!
//! One token per line as `raw<TAB>norm`, sentences separated by a single
//! blank line. A norm containing spaces is a 1-n split; a merge is written
//! as a head token carrying the full merged norm followed by continuation
//! tokens with an empty norm:
//!
//! ```text
//! i<TAB>in app
//! pp<TAB>
//! ```

use std::borrow::Cow;
use std::fmt;
use std::path::Path;

use crate::error::{decode_utf8, read_file, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Plain,
    /// Norm contains internal spaces (1-n).
    SplitHead,
    /// Followed by one or more `MergeCont` tokens (n-1).
    MergeHead,
    /// Empty norm; absorbed into the preceding head.
    MergeCont,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    raw: String,
    norm: String,
    kind: TokenKind,
}

impl Token {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    /// Build a sentence from `(raw, norm)` pairs, inferring token kinds.
    ///
    /// Norms are expected in canonical form (single internal spaces, no
    /// leading or trailing whitespace).
    pub fn from_pairs<R, N>(pairs: impl IntoIterator<Item = (R, N)>) -> Result<Self>
    where
        R: Into<String>,
        N: Into<String>,
    {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(r, n)| (r.into(), n.into()))
            .collect();
        for (i, (raw, norm)) in pairs.iter().enumerate() {
            check_raw(raw).map_err(|message| Error::Parse {
                line: i + 1,
                message,
            })?;
            if norm.trim() != norm || norm.contains("  ") || norm.contains(['\t', '\n']) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-canonical norm {norm:?}"),
                });
            }
        }
        let lines: Vec<usize> = (1..=pairs.len()).collect();
        Self::infer(pairs, &lines)
    }

    fn infer(pairs: Vec<(String, String)>, lines: &[usize]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Structure {
                line: lines.first().copied().unwrap_or(1),
                message: "empty sentence".into(),
            });
        }
        if pairs[0].1.is_empty() {
            return Err(Error::Structure {
                line: lines[0],
                message: format!(
                    "merge continuation {:?} cannot start a sentence",
                    pairs[0].0
                ),
            });
        }
        let n = pairs.len();
        let mut tokens = Vec::with_capacity(n);
        for (i, (raw, norm)) in pairs.iter().enumerate() {
            let next_is_cont = i + 1 < n && pairs[i + 1].1.is_empty();
            let kind = if norm.is_empty() {
                TokenKind::MergeCont
            } else if next_is_cont {
                TokenKind::MergeHead
            } else if norm.contains(' ') {
                TokenKind::SplitHead
            } else {
                TokenKind::Plain
            };
            // A merge head may carry a multi-word norm ("i" + "pp" -> "in app");
            // merge takes precedence over split in that case.
            tokens.push(Token {
                raw: raw.clone(),
                norm: norm.clone(),
                kind,
            });
        }
        Ok(Sentence { tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn check_raw(raw: &str) -> std::result::Result<(), String> {
    if raw.is_empty() {
        Err("empty raw token".into())
    } else if raw.chars().any(char::is_whitespace) {
        Err(format!("raw token {raw:?} contains whitespace"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    language: String,
    caseless: bool,
}

impl Corpus {
    pub fn new(
        sentences: Vec<Sentence>,
        language: impl Into<String>,
        caseless: bool,
    ) -> Result<Self> {
        let language = language.into();
        if language.is_empty() {
            return Err(Error::Domain("language tag must not be empty".into()));
        }
        if sentences.iter().all(Sentence::is_empty) {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus {
            sentences,
            language,
            caseless,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn caseless(&self) -> bool {
        self.caseless
    }

    /// Same text under a different comparison regime.
    pub fn with_caseless(mut self, caseless: bool) -> Self {
        self.caseless = caseless;
        self
    }

    /// All tokens in corpus order.
    pub fn tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Sentence lengths, used to align label and prediction files.
    pub fn shape(&self) -> Vec<usize> {
        self.sentences.iter().map(Sentence::len).collect()
    }

    /// Comparison form of a string: lowercased iff the corpus is caseless.
    pub fn fold<'a>(&self, s: &'a str) -> Cow<'a, str> {
        fold(s, self.caseless)
    }

    /// Whether the gold annotation changes this token.
    pub fn needs_norm(&self, token: &Token) -> bool {
        token.kind == TokenKind::MergeCont || self.fold(&token.norm) != self.fold(&token.raw)
    }

    pub fn from_path(path: &Path, language: &str, caseless: bool) -> Result<Self> {
        parse_corpus(&read_file(path)?, language, caseless)
    }
}

pub(crate) fn fold(s: &str, caseless: bool) -> Cow<'_, str> {
    if caseless {
        Cow::Owned(s.to_lowercase())
    } else {
        Cow::Borrowed(s)
    }
}

/// Parse a corpus file.
pub fn parse_corpus(input: &[u8], language: &str, caseless: bool) -> Result<Corpus> {
    let text = decode_utf8(input)?;
    let mut sentences = Vec::new();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    // Line number of a blank line that did not close a sentence. Only an
    // error if more content follows.
    let mut stray_blank: Option<usize> = None;

    let body = text.strip_suffix('\n').unwrap_or(text);
    for (idx, line) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            if pairs.is_empty() {
                stray_blank.get_or_insert(line_no);
            } else {
                sentences.push(Sentence::infer(std::mem::take(&mut pairs), &lines)?);
                lines.clear();
            }
            continue;
        }
        if let Some(blank) = stray_blank {
            return Err(Error::Structure {
                line: blank,
                message: "unexpected blank line (sentences are separated by exactly one)".into(),
            });
        }
        let (raw, norm) = parse_line(line, line_no)?;
        pairs.push((raw, norm));
        lines.push(line_no);
    }
    if !pairs.is_empty() {
        sentences.push(Sentence::infer(pairs, &lines)?);
    }
    Corpus::new(sentences, language, caseless)
}

fn parse_line(line: &str, line_no: usize) -> Result<(String, String)> {
    let parse_err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let mut fields = line.split('\t');
    let raw = fields.next().unwrap_or_default();
    let norm = fields
        .next()
        .ok_or_else(|| parse_err("expected `raw<TAB>norm`, found no tab".into()))?;
    if fields.next().is_some() {
        return Err(parse_err(
            "expected `raw<TAB>norm`, found more than one tab".into(),
        ));
    }
    check_raw(raw).map_err(parse_err)?;
    if norm.trim() != norm {
        let hint = if norm.ends_with('\r') {
            " (CRLF line ending?)"
        } else {
            ""
        };
        return Err(parse_err(format!(
            "leading or trailing whitespace in norm {norm:?}{hint}"
        )));
    }
    let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
    Ok((raw.to_string(), norm))
}

/// Serialize to the on-disk format; every sentence is followed by a blank line.
pub fn serialize_corpus(corpus: &Corpus) -> Vec<u8> {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for token in &sentence.tokens {
            out.push_str(&token.raw);
            out.push('\t');
            out.push_str(&token.norm);
            out.push('\n');
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_words: usize,
    pub n_normalized: usize,
    pub pct_norm: f64,
    pub has_split: bool,
    pub has_merge: bool,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats {
        n_words: 0,
        n_normalized: 0,
        pct_norm: 0.0,
        has_split: false,
        has_merge: false,
    };
    for token in corpus.tokens() {
        stats.n_words += 1;
        if corpus.needs_norm(token) {
            stats.n_normalized += 1;
        }
        match token.kind {
            TokenKind::SplitHead => stats.has_split = true,
            TokenKind::MergeHead | TokenKind::MergeCont => stats.has_merge = true,
            TokenKind::Plain => {}
        }
        // A merge head with a multi-word norm is also a split.
        if token.kind == TokenKind::MergeHead && token.norm.contains(' ') {
            stats.has_split = true;
        }
    }
    stats.pct_norm = 100.0 * stats.n_normalized as f64 / stats.n_words as f64;
    stats
}

impl CorpusStats {
    pub const TSV_HEADER: &'static str = "language\twords\t1-n/n-1\tcaps\t%norm";

    /// One row in the column layout of the usual dataset-statistics table.
    pub fn tsv_row(&self, language: &str, caseless: bool) -> String {
        let split_merge = if self.has_split || self.has_merge {
            "yes"
        } else {
            "-"
        };
        let caps = if caseless { "-" } else { "yes" };
        format!(
            "{language}\t{}\t{split_merge}\t{caps}\t{:.2}",
            self.n_words, self.pct_norm
        )
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "words\t{}", self.n_words)?;
        writeln!(f, "normalized\t{}", self.n_normalized)?;
        writeln!(f, "%norm\t{:.2}", self.pct_norm)?;
        writeln!(f, "split\t{}", self.has_split)?;
        write!(f, "merge\t{}", self.has_merge)
    }
}
