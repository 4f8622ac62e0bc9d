//! Entropy-gated dictionary stage.
//!
//! A raw word is resolved from the replacement table only when its
//! candidate distribution is confident: Miller-Madow entropy at or below a
//! threshold and enough training support. Everything else observed in
//! training is deferred to the LLM stage.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::path::Path;

use crate::baselines::{majority_candidate, ReplacementTable};
use crate::corpus::{fold, Corpus};
use crate::error::{decode_utf8, read_file, Error, Result};

pub const DEFAULT_THRESHOLD_BITS: f64 = 0.3;
pub const DEFAULT_MIN_SUPPORT: u64 = 2;

/// Maximum-likelihood (plug-in) entropy in bits. Zero counts are ignored.
pub fn mle_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Domain("entropy of an empty distribution".into()));
    }
    let n = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Miller-Madow bias-corrected entropy in bits:
/// `H_mle + (m - 1) / (2 N ln 2)` with `m` nonzero categories and `N` total
/// count.
pub fn miller_madow_entropy(counts: &[u64]) -> Result<f64> {
    let h = mle_entropy(counts)?;
    let m = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = counts.iter().sum::<u64>() as f64;
    Ok(h + (m - 1.0) / (2.0 * n * LN_2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateEntry {
    pub replacement: String,
    pub entropy_bits: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateStats {
    pub entropy_bits: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedLookup {
    resolved: BTreeMap<String, GateEntry>,
    deferred: BTreeMap<String, GateStats>,
    threshold_bits: f64,
    min_support: u64,
    caseless: bool,
}

/// What the dictionary stage decided for one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupOutcome {
    /// Not flagged by detection; keep the raw word.
    Kept,
    /// Resolved by the dictionary (possibly to the identity).
    Replaced(String),
    /// Flagged but deferred or unseen; goes to the LLM.
    Forwarded,
}

impl GatedLookup {
    pub fn resolved(&self) -> &BTreeMap<String, GateEntry> {
        &self.resolved
    }

    pub fn deferred(&self) -> &BTreeMap<String, GateStats> {
        &self.deferred
    }

    pub fn threshold_bits(&self) -> f64 {
        self.threshold_bits
    }

    pub fn min_support(&self) -> u64 {
        self.min_support
    }

    /// Replacement for `raw` if the gate resolved it.
    pub fn resolve(&self, raw: &str) -> Option<&str> {
        self.resolved
            .get(fold(raw, self.caseless).as_ref())
            .map(|e| e.replacement.as_str())
    }

    fn passes(&self, stats: GateStats) -> bool {
        stats.entropy_bits <= self.threshold_bits && stats.support >= self.min_support
    }

    /// TSV rows `raw<TAB>replacement<TAB>entropy_bits<TAB>support`; deferred
    /// words carry `*` as replacement.
    pub fn to_tsv(&self) -> String {
        let mut rows: BTreeMap<&str, String> = BTreeMap::new();
        for (raw, e) in &self.resolved {
            rows.insert(
                raw,
                format!(
                    "{raw}\t{}\t{}\t{}\n",
                    e.replacement, e.entropy_bits, e.support
                ),
            );
        }
        for (raw, s) in &self.deferred {
            rows.insert(
                raw,
                format!("{raw}\t*\t{}\t{}\n", s.entropy_bits, s.support),
            );
        }
        rows.into_values().collect()
    }

    /// Load a persisted lookup. The gate parameters must be those it was
    /// built with; they disambiguate a literal `*` replacement from the
    /// deferred sentinel.
    pub fn from_tsv(
        input: &[u8],
        threshold_bits: f64,
        min_support: u64,
        caseless: bool,
    ) -> Result<Self> {
        check_gate(threshold_bits, min_support)?;
        let text = decode_utf8(input)?;
        let mut gl = GatedLookup {
            resolved: BTreeMap::new(),
            deferred: BTreeMap::new(),
            threshold_bits,
            min_support,
            caseless,
        };
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [raw, replacement, entropy, support] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            };
            let value_err = |value: &str, message: &str| Error::Value {
                line: line_no,
                value: value.into(),
                message: message.into(),
            };
            let entropy_bits: f64 = entropy
                .parse()
                .ok()
                .filter(|h: &f64| h.is_finite() && *h >= 0.0)
                .ok_or_else(|| value_err(entropy, "entropy must be a non-negative number"))?;
            let support: u64 = support
                .parse()
                .ok()
                .filter(|&s| s >= 1)
                .ok_or_else(|| value_err(support, "support must be a positive integer"))?;
            let stats = GateStats {
                entropy_bits,
                support,
            };
            if replacement == "*" && !gl.passes(stats) {
                gl.deferred.insert(raw.to_string(), stats);
            } else if gl.passes(stats) {
                gl.resolved.insert(
                    raw.to_string(),
                    GateEntry {
                        replacement: replacement.to_string(),
                        entropy_bits,
                        support,
                    },
                );
            } else {
                return Err(value_err(
                    replacement,
                    "resolved entry does not pass the gate with the given threshold and support",
                ));
            }
        }
        Ok(gl)
    }

    pub fn from_path(
        path: &Path,
        threshold_bits: f64,
        min_support: u64,
        caseless: bool,
    ) -> Result<Self> {
        Self::from_tsv(&read_file(path)?, threshold_bits, min_support, caseless)
    }
}

fn check_gate(threshold_bits: f64, min_support: u64) -> Result<()> {
    if threshold_bits.is_nan() || threshold_bits < 0.0 {
        return Err(Error::Domain(format!(
            "entropy threshold must be non-negative, got {threshold_bits}"
        )));
    }
    if min_support < 1 {
        return Err(Error::Domain("minimum support must be at least 1".into()));
    }
    Ok(())
}

/// Split the table's vocabulary into confidently resolved words and
/// deferred ones. Confident identity-majority words resolve to themselves.
pub fn build_gated_lookup(
    table: &ReplacementTable,
    threshold_bits: f64,
    min_support: u64,
) -> Result<GatedLookup> {
    check_gate(threshold_bits, min_support)?;
    let mut gl = GatedLookup {
        resolved: BTreeMap::new(),
        deferred: BTreeMap::new(),
        threshold_bits,
        min_support,
        caseless: table.caseless(),
    };
    for (raw, counts) in table.entries() {
        let values: Vec<u64> = counts.values().copied().collect();
        let stats = GateStats {
            entropy_bits: miller_madow_entropy(&values)?,
            support: values.iter().sum(),
        };
        if gl.passes(stats) {
            gl.resolved.insert(
                raw.clone(),
                GateEntry {
                    replacement: majority_candidate(raw, counts, table.caseless()).to_string(),
                    entropy_bits: stats.entropy_bits,
                    support: stats.support,
                },
            );
        } else {
            gl.deferred.insert(raw.clone(), stats);
        }
    }
    Ok(gl)
}

/// Dictionary stage over detection flags aligned with `test`.
pub fn apply_lookup(gl: &GatedLookup, test: &Corpus, flags: &[bool]) -> Result<Vec<LookupOutcome>> {
    if flags.len() != test.token_count() {
        return Err(Error::Alignment(format!(
            "{} detection labels for {} tokens",
            flags.len(),
            test.token_count()
        )));
    }
    Ok(test
        .tokens()
        .zip(flags)
        .map(
            |(token, &flagged)| match (flagged, gl.resolve(token.raw())) {
                (false, _) => LookupOutcome::Kept,
                (true, Some(rep)) => LookupOutcome::Replaced(rep.to_string()),
                (true, None) => LookupOutcome::Forwarded,
            },
        )
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::build_table;
    use crate::corpus::parse_corpus;

    const FIXTURE_T: &str = "u\tyou\nr\tare\nok\tok\n\nim\ti'm\ngonna\tgoing to\nhome\thome\n\nim\tim\nso\tso\nhappy\thappy\n\n";

    fn table() -> ReplacementTable {
        build_table(&parse_corpus(FIXTURE_T.as_bytes(), "en", false).unwrap())
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(miller_madow_entropy(&[1]).unwrap(), 0.0);
        let two = 1.0 + 1.0 / (4.0 * LN_2);
        assert!((miller_madow_entropy(&[1, 1]).unwrap() - two).abs() < 1e-9);
        assert!((two - 1.36067).abs() < 1e-5);
        let h_mle = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let three_one = h_mle + 1.0 / (8.0 * LN_2);
        assert!((miller_madow_entropy(&[3, 1]).unwrap() - three_one).abs() < 1e-9);
        assert!((three_one - 0.99162).abs() < 1e-5);
        assert!(matches!(miller_madow_entropy(&[]), Err(Error::Domain(_))));
        assert!(matches!(
            miller_madow_entropy(&[0, 0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_counts_do_not_add_categories() {
        assert_eq!(
            miller_madow_entropy(&[3, 0, 1]).unwrap(),
            miller_madow_entropy(&[3, 1]).unwrap()
        );
    }

    #[test]
    fn gate_examples() {
        let gl = build_gated_lookup(&table(), 0.3, 1).unwrap();
        assert_eq!(gl.resolve("u"), Some("you"));
        assert!(gl.deferred().contains_key("im"));
        assert_eq!(gl.resolve("im"), None);
        assert_eq!(gl.resolve("ok"), Some("ok"));
        assert_eq!(gl.resolve("zzz"), None);
        assert!(!gl.deferred().contains_key("zzz"));
    }

    #[test]
    fn min_support_defers_rare_words() {
        let gl = build_gated_lookup(&table(), 0.3, 2).unwrap();
        assert_eq!(gl.resolve("u"), None);
        assert_eq!(gl.deferred()["u"].support, 1);
    }

    #[test]
    fn bad_gate_parameters() {
        assert!(build_gated_lookup(&table(), -0.1, 1).is_err());
        assert!(build_gated_lookup(&table(), f64::NAN, 1).is_err());
        assert!(build_gated_lookup(&table(), 0.3, 0).is_err());
    }

    #[test]
    fn lookup_stage_outcomes() {
        let gl = build_gated_lookup(&table(), 0.3, 1).unwrap();
        let test = parse_corpus(b"u\tyou\nim\ti'm\nhappy\thappy\n", "en", false).unwrap();
        let out = apply_lookup(&gl, &test, &[true, true, false]).unwrap();
        assert_eq!(
            out,
            [
                LookupOutcome::Replaced("you".into()),
                LookupOutcome::Forwarded,
                LookupOutcome::Kept
            ]
        );
        assert!(apply_lookup(&gl, &test, &[true]).is_err());
    }

    #[test]
    fn tsv_round_trip_with_star_replacement() {
        let c = parse_corpus(b"*\t*\n*\t*\nx\ty\nx\tz\n", "en", false).unwrap();
        let gl = build_gated_lookup(&build_table(&c), 0.3, 1).unwrap();
        assert_eq!(gl.resolve("*"), Some("*"));
        assert!(gl.deferred().contains_key("x"));
        let tsv = gl.to_tsv();
        assert!(tsv.starts_with("*\t*\t0\t2\nx\t*\t"));
        let back = GatedLookup::from_tsv(tsv.as_bytes(), 0.3, 1, false).unwrap();
        assert_eq!(back, gl);
        // under a stricter gate the row cannot be a resolved entry
        assert!(GatedLookup::from_tsv(b"u\tyou\t0\t1\n", 0.3, 5, false).is_err());
    }
}
