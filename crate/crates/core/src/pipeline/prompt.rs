//! Marked-word few-shot prompts.
//!
//! A prompt is the instruction, `k` solved exemplars drawn from training
//! data, and the query sentence with the target word wrapped in markers:
//!
//! ```text
//! <instruction>
//!
//! Input: ich <<bin>> da
//! Output: bin
//!
//! Input: <<u>> r ok
//! Output:
//! ```
//!
//! The prompt bytes are the cache key, so rendering is fully deterministic.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Sentence, TokenKind};
use crate::error::{Error, Result};

pub const DEFAULT_INSTRUCTION: &str = include_str!("../../data/instruction.txt");

/// How many longer marker pairs to try before giving up on a collision.
const MAX_ESCALATIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub k_shots: usize,
    pub seed: u64,
    pub marker_open: String,
    pub marker_close: String,
    /// Instruction text; `{open}` and `{close}` are replaced by the markers.
    pub instruction: String,
    /// Responses longer than this many times the target word are refusals.
    pub max_output_chars_factor: f64,
    /// Lengthen markers instead of failing when they occur in the text.
    pub escalate_markers: bool,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            k_shots: 8,
            seed: 42,
            marker_open: "<<".into(),
            marker_close: ">>".into(),
            instruction: DEFAULT_INSTRUCTION.trim_end().to_string(),
            max_output_chars_factor: 5.0,
            escalate_markers: true,
        }
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.marker_open.is_empty() || self.marker_close.is_empty() {
            return Err(Error::Domain("prompt markers must not be empty".into()));
        }
        if self.max_output_chars_factor.is_nan() || self.max_output_chars_factor <= 0.0 {
            return Err(Error::Domain(
                "max_output_chars_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One solved exemplar: a training sentence, the position of the marked
/// word and its gold normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub words: Vec<String>,
    pub target: usize,
    pub gold: String,
}

/// Draw `k` distinct needs-normalization tokens from `train`, uniformly
/// and deterministically for a given seed.
///
/// Merge continuations are not eligible: their gold form is empty and is
/// carried by the merge head.
pub fn sample_shots(train: &Corpus, k: usize, seed: u64) -> Result<Vec<Shot>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut pool = Vec::new();
    for (s, sentence) in train.sentences().iter().enumerate() {
        for (t, token) in sentence.tokens().iter().enumerate() {
            if token.kind() != TokenKind::MergeCont && train.needs_norm(token) {
                pool.push((s, t));
            }
        }
    }
    if pool.len() < k {
        return Err(Error::Sampling(format!(
            "requested {k} shots but training data has only {} tokens needing normalization",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| {
            let (s, t) = pool[i];
            let sentence = &train.sentences()[s];
            Shot {
                words: raw_words(sentence),
                target: t,
                gold: sentence.tokens()[t].norm().to_string(),
            }
        })
        .collect())
}

fn raw_words(sentence: &Sentence) -> Vec<String> {
    sentence
        .tokens()
        .iter()
        .map(|t| t.raw().to_string())
        .collect()
}

/// A rendered prompt and the markers actually used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub target: String,
    pub marker_open: String,
    pub marker_close: String,
}

impl Prompt {
    /// SHA-256 of the prompt bytes, hex encoded.
    pub fn hash(&self) -> String {
        prompt_hash(&self.text)
    }
}

pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn mark(words: &[String], target: usize, open: &str, close: &str) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if i == target {
            out.push_str(open);
            out.push_str(w);
            out.push_str(close);
        } else {
            out.push_str(w);
        }
    }
    out
}

fn collides<'a>(
    mut words: impl Iterator<Item = &'a String>,
    open: &str,
    close: &str,
) -> Option<&'a String> {
    words.find(|w| w.contains(open) || w.contains(close))
}

/// Render the prompt for `sentence[target]`.
pub fn build_prompt(
    spec: &PromptSpec,
    shots: &[Shot],
    sentence: &Sentence,
    target: usize,
) -> Result<Prompt> {
    spec.validate()?;
    if target >= sentence.len() {
        return Err(Error::Domain(format!(
            "target index {target} out of range for a sentence of {} tokens",
            sentence.len()
        )));
    }
    let query = raw_words(sentence);
    let all_words = || {
        query
            .iter()
            .chain(shots.iter().flat_map(|s| s.words.iter()))
    };

    let (mut open, mut close) = (spec.marker_open.clone(), spec.marker_close.clone());
    let mut attempts = 0;
    while let Some(word) = collides(all_words(), &open, &close) {
        if !spec.escalate_markers || attempts == MAX_ESCALATIONS {
            return Err(Error::MarkerCollision(format!(
                "word {word:?} contains marker {open:?} or {close:?}"
            )));
        }
        open.insert_str(
            0,
            &spec.marker_open[..spec.marker_open.chars().next().unwrap().len_utf8()],
        );
        close.push(spec.marker_close.chars().last().unwrap());
        attempts += 1;
    }

    let mut text = spec
        .instruction
        .replace("{open}", &open)
        .replace("{close}", &close);
    text.push_str("\n\n");
    for shot in shots {
        text.push_str("Input: ");
        text.push_str(&mark(&shot.words, shot.target, &open, &close));
        text.push_str("\nOutput: ");
        text.push_str(&shot.gold);
        text.push_str("\n\n");
    }
    text.push_str("Input: ");
    text.push_str(&mark(&query, target, &open, &close));
    text.push_str("\nOutput:");
    Ok(Prompt {
        text,
        target: query[target].clone(),
        marker_open: open,
        marker_close: close,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    const FIXTURE_T: &str = "u\tyou\nr\tare\nok\tok\n\nim\ti'm\ngonna\tgoing to\nhome\thome\n\nim\tim\nso\tso\nhappy\thappy\n\n";

    fn train() -> Corpus {
        parse_corpus(FIXTURE_T.as_bytes(), "en", false).unwrap()
    }

    fn query() -> Sentence {
        Sentence::from_pairs([("u", "you"), ("r", "are"), ("ok", "ok")]).unwrap()
    }

    #[test]
    fn zero_shots() {
        assert!(sample_shots(&train(), 0, 1).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_shots(&train(), 2, 42).unwrap();
        assert_eq!(a, sample_shots(&train(), 2, 42).unwrap());
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);
        for shot in &a {
            assert_ne!(shot.words[shot.target], shot.gold);
        }
    }

    #[test]
    fn too_many_shots() {
        // four tokens in T need normalization: u, r, im, gonna
        assert_eq!(sample_shots(&train(), 4, 0).unwrap().len(), 4);
        assert!(matches!(
            sample_shots(&train(), 5, 0),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn query_line_marks_target() {
        let spec = PromptSpec::default();
        let p = build_prompt(&spec, &[], &query(), 0).unwrap();
        assert!(p.text.contains("\nInput: <<u>> r ok\nOutput:"));
        assert!(p.text.ends_with("Output:"));
        assert_eq!(p.target, "u");
        assert_eq!(
            p.hash(),
            build_prompt(&spec, &[], &query(), 0).unwrap().hash()
        );
        assert_ne!(
            p.hash(),
            build_prompt(&spec, &[], &query(), 1).unwrap().hash()
        );
    }

    #[test]
    fn instruction_mentions_markers() {
        let p = build_prompt(&PromptSpec::default(), &[], &query(), 0).unwrap();
        assert!(p.text.starts_with("You are normalizing"));
        assert!(p.text.contains("marked with << and >>"));
    }

    #[test]
    fn exemplar_blocks() {
        let shots = sample_shots(&train(), 3, 7).unwrap();
        let p = build_prompt(&PromptSpec::default(), &shots, &query(), 2).unwrap();
        assert_eq!(p.text.matches("Input: ").count(), 4);
        for shot in &shots {
            assert!(p.text.contains(&format!("\nOutput: {}\n\n", shot.gold)));
        }
    }

    #[test]
    fn marker_collision() {
        let s = Sentence::from_pairs([("a<<b", "a<<b"), ("x", "y")]).unwrap();
        let p = build_prompt(&PromptSpec::default(), &[], &s, 1).unwrap();
        assert_eq!(
            (p.marker_open.as_str(), p.marker_close.as_str()),
            ("<<<", ">>>")
        );
        assert!(p.text.contains("Input: a<<b <<<x>>>"));
        assert!(p.text.contains("marked with <<< and >>>"));

        let strict = PromptSpec {
            escalate_markers: false,
            ..PromptSpec::default()
        };
        assert!(matches!(
            build_prompt(&strict, &[], &s, 1),
            Err(Error::MarkerCollision(_))
        ));
    }

    #[test]
    fn target_out_of_range() {
        assert!(build_prompt(&PromptSpec::default(), &[], &query(), 3).is_err());
    }
}
