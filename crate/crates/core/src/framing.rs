//! One-item-per-token files framed like corpora: one line per token, one
//! blank line after each sentence.
//!
//! Reading is positional against the corpus shape, so empty items (merge
//! continuations in prediction files) are unambiguous.

use crate::error::{Error, Result};

/// A line read from an aligned file with its 1-based line number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line<'a> {
    pub number: usize,
    pub text: &'a str,
}

/// Read `text` against sentence lengths `shape`. With `allow_empty` unset,
/// a blank line where a token is expected is reported as misalignment;
/// with it set, the blank line after the last sentence is required.
pub fn read_aligned<'a>(
    text: &'a str,
    shape: &[usize],
    allow_empty: bool,
) -> Result<Vec<Line<'a>>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = if body.is_empty() {
        Vec::new()
    } else {
        body.split('\n').collect()
    };
    let mut out = Vec::with_capacity(shape.iter().sum());
    let mut pos = 0;
    for (s, &len) in shape.iter().enumerate() {
        if s > 0 {
            match lines.get(pos) {
                Some(&"") => pos += 1,
                Some(found) => return Err(Error::Alignment(format!(
                    "line {}: expected blank line after sentence {s} ({} tokens), found {found:?}",
                    pos + 1,
                    shape[s - 1],
                ))),
                None => {
                    return Err(Error::Alignment(format!(
                        "line {}: file ends after sentence {s} of {}",
                        pos + 1,
                        shape.len()
                    )))
                }
            }
        }
        for t in 0..len {
            match lines.get(pos) {
                Some(&"") if !allow_empty => {
                    return Err(Error::Alignment(format!(
                        "line {}: blank line inside sentence {} (expected {len} tokens, found {t})",
                        pos + 1,
                        s + 1
                    )))
                }
                Some(text) => out.push(Line {
                    number: pos + 1,
                    text,
                }),
                None => {
                    return Err(Error::Alignment(format!(
                        "line {}: file ends inside sentence {} (expected {len} tokens, found {t})",
                        pos + 1,
                        s + 1
                    )))
                }
            }
            pos += 1;
        }
    }
    // Where items may be empty, the final terminator is what tells an empty
    // last item from a truncated file. Elsewhere it is optional.
    if allow_empty && !shape.is_empty() && lines.get(pos) != Some(&"") {
        return Err(Error::Alignment(format!(
            "line {}: expected blank line after the last sentence",
            pos + 1
        )));
    }
    if let Some(extra) = lines[pos.min(lines.len())..]
        .iter()
        .position(|l| !l.is_empty())
    {
        return Err(Error::Alignment(format!(
            "line {}: content after the last sentence",
            pos + extra + 1
        )));
    }
    Ok(out)
}

/// Write items with sentence framing. `items.len()` must equal `shape` total.
pub fn write_aligned<S: AsRef<str>>(items: &[S], shape: &[usize]) -> String {
    debug_assert_eq!(items.len(), shape.iter().sum::<usize>());
    let mut out = String::new();
    let mut it = items.iter();
    for &len in shape {
        for item in it.by_ref().take(len) {
            out.push_str(item.as_ref());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
