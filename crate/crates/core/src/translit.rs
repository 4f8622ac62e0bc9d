//! Canonical decomposition and reversible mapping into the Latin alphabet.
//!
//! Text is decomposed (NFD) into scalar units; each unit is either mapped
//! through a table or, if it already belongs to the output alphabet
//! `[A-Za-z0-9']`, passed through. Units are joined with the table's
//! separator. Decoding inverts the mapping and recomposes (NFC).
//!
//! Mapping files are TSV `U+XXXX<TAB>latin` with an optional first line
//! `#separator=<sep>`; other `#` lines are comments. Without a header the
//! separator is empty when all outputs are single letters and `-`
//! otherwise.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Corpus, Sentence};
use crate::error::{decode_utf8, read_file, Error, Result};

pub const THAI_DEMO_TABLE: &str = include_str!("../data/thai_demo.tsv");
pub const COMBINING_MARKS_TABLE: &str = include_str!("../data/combining_marks.tsv");

fn in_alphabet(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '\''
}

/// NFD, one unit per scalar value.
pub fn decompose(text: &str) -> Vec<char> {
    text.nfd().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    forward: BTreeMap<char, String>,
    reverse: HashMap<String, char>,
    separator: String,
}

impl MappingTable {
    pub fn new(forward: BTreeMap<char, String>, separator: Option<String>) -> Result<Self> {
        let separator = separator.unwrap_or_else(|| {
            if forward.values().all(|v| v.chars().count() == 1) {
                String::new()
            } else {
                "-".into()
            }
        });
        if separator.chars().any(in_alphabet) {
            return Err(Error::Domain(format!(
                "separator {separator:?} overlaps the Latin output alphabet"
            )));
        }
        let mut reverse = HashMap::new();
        for (&c, latin) in &forward {
            if latin.is_empty() || !latin.chars().all(in_alphabet) {
                return Err(Error::Domain(format!(
                    "mapping for U+{:04X} must be non-empty and within [A-Za-z0-9'], got {latin:?}",
                    c as u32
                )));
            }
            if separator.is_empty() && latin.chars().count() > 1 {
                return Err(Error::Domain(format!(
                    "multi-letter mapping {latin:?} requires a separator"
                )));
            }
            if let Some(prev) = reverse.insert(latin.clone(), c) {
                return Err(Error::Domain(format!(
                    "U+{:04X} and U+{:04X} both map to {latin:?}",
                    prev as u32, c as u32
                )));
            }
        }
        Ok(MappingTable {
            forward,
            reverse,
            separator,
        })
    }

    pub fn identity() -> Self {
        MappingTable::new(BTreeMap::new(), Some(String::new())).unwrap()
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    pub fn forward(&self) -> &BTreeMap<char, String> {
        &self.forward
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut separator = None;
        let mut forward = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if idx == 0 {
                if let Some(sep) = line.strip_prefix("#separator=") {
                    separator = Some(sep.to_string());
                    continue;
                }
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let (code, latin) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `U+XXXX<TAB>latin`".into()))?;
            let c = code
                .strip_prefix("U+")
                .and_then(|hex| u32::from_str_radix(hex, 16).ok())
                .and_then(char::from_u32)
                .ok_or_else(|| parse_err(format!("bad code point {code:?}")))?;
            if forward.insert(c, latin.to_string()).is_some() {
                return Err(parse_err(format!("duplicate mapping for {code}")));
            }
        }
        MappingTable::new(forward, separator)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(decode_utf8(&read_file(path)?)?)
    }

    pub fn thai_demo() -> Self {
        Self::parse(THAI_DEMO_TABLE).expect("bundled Thai table is valid")
    }

    pub fn combining_marks() -> Self {
        Self::parse(COMBINING_MARKS_TABLE).expect("bundled combining-mark table is valid")
    }

    /// Union of two tables; the separator of `self` must accommodate both.
    pub fn merged(&self, other: &MappingTable) -> Result<Self> {
        let mut forward = self.forward.clone();
        for (&c, latin) in &other.forward {
            if forward.insert(c, latin.clone()).is_some() {
                return Err(Error::Domain(format!("both tables map U+{:04X}", c as u32)));
            }
        }
        let separator = if self.separator.is_empty() {
            other.separator.clone()
        } else {
            self.separator.clone()
        };
        MappingTable::new(forward, Some(separator))
    }

    fn passthrough_ok(&self, c: char) -> bool {
        in_alphabet(c)
            && !self.forward.contains_key(&c)
            && !self
                .reverse
                .contains_key(c.encode_utf8(&mut [0; 4]) as &str)
    }
}

pub fn to_latin(text: &str, m: &MappingTable) -> Result<String> {
    let mut units = Vec::new();
    let mut missing = Vec::new();
    for c in decompose(text) {
        if let Some(latin) = m.forward.get(&c) {
            units.push(latin.clone());
        } else if m.passthrough_ok(c) {
            units.push(c.to_string());
        } else {
            let code = format!("U+{:04X}", c as u32);
            if !missing.contains(&code) {
                missing.push(code);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    Ok(units.join(&m.separator))
}

pub fn from_latin(latin: &str, m: &MappingTable) -> Result<String> {
    if latin.is_empty() {
        return Ok(String::new());
    }
    let decode_unit = |unit: &str| -> Result<char> {
        if let Some(&c) = m.reverse.get(unit) {
            return Ok(c);
        }
        let mut chars = unit.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if m.passthrough_ok(c) => Ok(c),
            _ => Err(Error::Decode(format!("no inverse for unit {unit:?}"))),
        }
    };
    let decoded: String = if m.separator.is_empty() {
        latin
            .chars()
            .map(|c| decode_unit(c.encode_utf8(&mut [0; 4])))
            .collect::<Result<_>>()?
    } else {
        latin
            .split(m.separator.as_str())
            .map(decode_unit)
            .collect::<Result<_>>()?
    };
    Ok(decoded.nfc().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToLatin,
    FromLatin,
}

/// Transform raw and norm text of every token word by word.
pub fn translit_corpus(c: &Corpus, m: &MappingTable, direction: Direction) -> Result<Corpus> {
    let convert = |text: &str| -> Result<String> {
        text.split(' ')
            .filter(|w| !w.is_empty())
            .map(|w| match direction {
                Direction::ToLatin => to_latin(w, m),
                Direction::FromLatin => from_latin(w, m),
            })
            .collect::<Result<Vec<_>>>()
            .map(|words| words.join(" "))
    };
    let sentences = c
        .sentences()
        .iter()
        .map(|s| {
            let pairs = s
                .tokens()
                .iter()
                .map(|t| Ok((convert(t.raw())?, convert(t.norm())?)))
                .collect::<Result<Vec<_>>>()?;
            Sentence::from_pairs(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(sentences, c.language(), c.caseless())
}
