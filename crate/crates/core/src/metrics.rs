//! Word-level scoring against a gold corpus.
//!
//! Every metric compares tokens after the corpus' comparison folding
//! (lowercasing for caseless corpora). Wrongly normalized tokens that
//! needed normalization are counted as false positives, not false
//! negatives: a false negative is only a needed edit left as raw.

use std::fmt;
use std::path::Path;

use log::warn;

use crate::corpus::Corpus;
use crate::error::{decode_utf8, read_file, Error, Result};
use crate::framing::{read_aligned, write_aligned};

/// System predictions, one per corpus token in corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    predictions: Vec<String>,
}

impl RunOutput {
    pub fn new(predictions: Vec<String>) -> Self {
        RunOutput { predictions }
    }

    pub fn predictions(&self) -> &[String] {
        &self.predictions
    }

    pub fn into_predictions(self) -> Vec<String> {
        self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Read a prediction file framed like `corpus`.
    pub fn parse(input: &[u8], corpus: &Corpus) -> Result<Self> {
        let text = decode_utf8(input)?;
        let lines = read_aligned(text, &corpus.shape(), true)?;
        Ok(RunOutput::new(
            lines.into_iter().map(|l| l.text.to_string()).collect(),
        ))
    }

    pub fn from_path(path: &Path, corpus: &Corpus) -> Result<Self> {
        Self::parse(&read_file(path)?, corpus)
    }

    pub fn to_bytes(&self, corpus: &Corpus) -> Result<Vec<u8>> {
        check_alignment(corpus, self)?;
        Ok(write_aligned(&self.predictions, &corpus.shape()).into_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub accuracy: f64,
    pub lai_accuracy: f64,
    pub err: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

pub(crate) fn check_alignment(gold: &Corpus, run: &RunOutput) -> Result<()> {
    let expected = gold.token_count();
    if run.len() != expected {
        return Err(Error::Alignment(format!(
            "{} predictions for {expected} gold tokens",
            run.len()
        )));
    }
    Ok(())
}

fn ratio(num: usize, den: usize, what: &str) -> f64 {
    if den == 0 {
        warn!("{what}: zero denominator, reporting 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Fraction of tokens left unchanged in the gold annotation.
pub fn lai_accuracy(gold: &Corpus) -> f64 {
    let same = gold.tokens().filter(|t| !gold.needs_norm(t)).count();
    same as f64 / gold.token_count() as f64
}

pub fn word_accuracy(gold: &Corpus, run: &RunOutput) -> Result<f64> {
    Ok(tally(gold, run)?.accuracy())
}

/// Error Reduction Rate in percent: accuracy gain over leave-as-is,
/// relative to the error leave-as-is leaves behind. Negative when the
/// system breaks more than it fixes.
pub fn err_score(gold: &Corpus, run: &RunOutput) -> Result<f64> {
    let accuracy = word_accuracy(gold, run)?;
    err_from(accuracy, lai_accuracy(gold))
}

fn err_from(accuracy: f64, lai: f64) -> Result<f64> {
    if lai >= 1.0 {
        return Err(Error::UndefinedErr);
    }
    Ok(100.0 * (accuracy - lai) / (1.0 - lai))
}

pub fn prf_scores(gold: &Corpus, run: &RunOutput) -> Result<Prf> {
    Ok(tally(gold, run)?.prf())
}

/// F1 of the positive (needs-normalization) class; the O class is not scored.
pub fn detection_f1(gold: &[bool], pred: &[bool]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment(format!(
            "{} predicted labels for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&g, &p) in gold.iter().zip(pred) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fn_ == 0 {
        warn!("detection F1: gold labels contain no positives");
    }
    let p = ratio(tp, tp + fp, "detection precision");
    let r = ratio(tp, tp + fn_, "detection recall");
    Ok(harmonic(p, r))
}

/// All metrics in one pass.
pub fn score_run(gold: &Corpus, run: &RunOutput) -> Result<ScoreReport> {
    let tally = tally(gold, run)?;
    let accuracy = tally.accuracy();
    let lai = tally.lai_correct as f64 / tally.confusion.total as f64;
    let err = err_from(accuracy, lai)?;
    let prf = tally.prf();
    Ok(ScoreReport {
        accuracy,
        lai_accuracy: lai,
        err,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        confusion: prf.confusion,
    })
}

struct Tally {
    confusion: Confusion,
    lai_correct: usize,
}

impl Tally {
    fn accuracy(&self) -> f64 {
        self.confusion.correct as f64 / self.confusion.total as f64
    }

    fn prf(&self) -> Prf {
        let c = self.confusion;
        let precision = ratio(c.tp, c.tp + c.fp, "precision");
        let recall = ratio(c.tp, c.tp + c.fn_, "recall");
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
            confusion: c,
        }
    }
}

fn tally(gold: &Corpus, run: &RunOutput) -> Result<Tally> {
    check_alignment(gold, run)?;
    let mut confusion = Confusion::default();
    let mut lai_correct = 0;
    for (token, pred) in gold.tokens().zip(run.predictions()) {
        let raw = gold.fold(token.raw());
        let norm = gold.fold(token.norm());
        let pred = gold.fold(pred);
        let needs_norm = gold.needs_norm(token);
        confusion.total += 1;
        if pred == norm {
            confusion.correct += 1;
        }
        if !needs_norm {
            lai_correct += 1;
        }
        if needs_norm && pred == norm {
            confusion.tp += 1;
        } else if needs_norm && pred == raw {
            confusion.fn_ += 1;
        } else if pred != raw && pred != norm {
            confusion.fp += 1;
        }
    }
    Ok(Tally {
        confusion,
        lai_correct,
    })
}

impl ScoreReport {
    pub const TSV_HEADER: &'static str =
        "language\taccuracy\terr\tprecision\trecall\tf1\ttp\tfp\tfn";

    /// Single-line machine-readable record.
    pub fn tsv_record(&self, language: &str) -> String {
        let c = &self.confusion;
        format!(
            "{language}\t{:.6}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
            self.accuracy, self.err, self.precision, self.recall, self.f1, c.tp, c.fp, c.fn_
        )
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "accuracy: {:.6}", self.accuracy)?;
        writeln!(f, "lai_accuracy: {:.6}", self.lai_accuracy)?;
        writeln!(f, "err: {:.4}", self.err)?;
        writeln!(f, "precision: {:.6}", self.precision)?;
        writeln!(f, "recall: {:.6}", self.recall)?;
        writeln!(f, "f1: {:.6}", self.f1)?;
        writeln!(f, "tp: {}", c.tp)?;
        writeln!(f, "fp: {}", c.fp)?;
        writeln!(f, "fn: {}", c.fn_)?;
        writeln!(f, "correct: {}", c.correct)?;
        write!(f, "total: {}", c.total)
    }
}
