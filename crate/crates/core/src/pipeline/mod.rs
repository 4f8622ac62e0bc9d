//! The three-stage normalization pipeline: detection flags select tokens,
//! the entropy-gated dictionary resolves the confident ones, and the rest
//! are normalized by a few-shot prompted LLM.

pub mod backend;
pub mod cache;
pub mod cost;
pub mod prompt;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::detection::DetectionLabels;
use crate::error::{Error, Result};
use crate::lookup::{apply_lookup, GatedLookup, LookupOutcome};
use crate::metrics::RunOutput;

pub use backend::{
    BackendKind, CompletionRequest, EchoBackend, HttpBackend, LlmBackend, LlmBackendConfig,
};
pub use cache::{CacheRecord, CachedBackend, PromptCache};
pub use cost::{estimate_cost, reduction_percent, CostReport};
pub use prompt::{build_prompt, sample_shots, Prompt, PromptSpec, Shot};

/// One LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// Position of the token in the test corpus.
    pub token_index: usize,
    pub prompt_hash: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Token counts were estimated as bytes/4 (no usage from the backend).
    pub usage_estimated: bool,
    pub response: String,
    pub prediction: String,
    pub refused: bool,
    pub cached: bool,
    /// Wall time of the call. Not serialized, so call logs stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub latency: Duration,
}

/// Rough token count for text without a tokenizer: one token per 4 bytes.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// First line of the trimmed response, or `None` if the response looks like
/// a refusal: empty, still marked, or far longer than the target word.
pub fn postprocess(
    response: &str,
    prompt: &Prompt,
    max_output_chars_factor: f64,
) -> Option<String> {
    let first = response.trim().lines().next().unwrap_or_default().trim();
    let limit = max_output_chars_factor * prompt.target.chars().count() as f64;
    if first.is_empty()
        || first.contains(&prompt.marker_open)
        || first.contains(&prompt.marker_close)
        || first.chars().count() as f64 > limit
    {
        None
    } else {
        Some(first.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

/// Ask the backend for one marked word. Refusals fall back to the raw word.
pub fn normalize_token_llm(
    backend: &dyn LlmBackend,
    prompt: &Prompt,
    spec: &PromptSpec,
) -> Result<(String, CallRecord)> {
    let hash = prompt.hash();
    let started = Instant::now();
    let completion = backend.complete(&CompletionRequest {
        prompt: &prompt.text,
        prompt_hash: &hash,
        target: &prompt.target,
    })?;
    let latency = started.elapsed();
    let cleaned = postprocess(&completion.text, prompt, spec.max_output_chars_factor);
    let refused = cleaned.is_none();
    let prediction = cleaned.unwrap_or_else(|| prompt.target.clone());
    let (input_tokens, output_tokens, usage_estimated) = match completion.usage {
        Some(u) => (u.input_tokens, u.output_tokens, false),
        None => (
            estimate_tokens(&prompt.text),
            estimate_tokens(&completion.text),
            true,
        ),
    };
    Ok((
        prediction.clone(),
        CallRecord {
            token_index: 0,
            prompt_hash: hash,
            input_tokens,
            output_tokens,
            usage_estimated,
            response: completion.text,
            prediction,
            refused,
            cached: completion.cached,
            latency,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub detection: DetectionLabels,
    pub use_lookup: bool,
    pub lookup: Option<GatedLookup>,
    pub prompt: PromptSpec,
    pub backend: LlmBackendConfig,
    pub concurrency_limit: usize,
    /// Draw fresh shots for every token instead of once per run.
    pub resample_shots_per_token: bool,
}

impl PipelineConfig {
    pub fn new(detection: DetectionLabels) -> Self {
        PipelineConfig {
            detection,
            use_lookup: false,
            lookup: None,
            prompt: PromptSpec::default(),
            backend: LlmBackendConfig::default(),
            concurrency_limit: 4,
            resample_shots_per_token: false,
        }
    }

    pub fn validate(&self, test: &Corpus) -> Result<()> {
        if self.use_lookup && self.lookup.is_none() {
            return Err(Error::Domain(
                "lookup enabled but no gated lookup supplied".into(),
            ));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::Domain("concurrency limit must be at least 1".into()));
        }
        self.prompt.validate()?;
        self.detection.check_aligned(test)
    }
}

/// Where a prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    /// Not flagged; raw word copied.
    Raw,
    Lookup,
    Llm,
    /// LLM answer rejected; raw word copied.
    Refused,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub output: RunOutput,
    pub sources: Vec<PredictionSource>,
    /// In token order; one per LLM-visited token.
    pub records: Vec<CallRecord>,
    pub shots: Vec<Shot>,
}

impl PipelineRun {
    pub fn llm_calls(&self) -> usize {
        self.records.len()
    }

    pub fn count(&self, source: PredictionSource) -> usize {
        self.sources.iter().filter(|&&s| s == source).count()
    }
}

/// A failed run with everything completed before the failure. Unfinished
/// LLM tokens hold the raw word.
#[derive(Debug)]
pub struct PipelineAbort {
    pub error: Error,
    pub partial: Box<PipelineRun>,
}

impl fmt::Display for PipelineAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pipeline aborted after {} LLM calls: {}",
            self.partial.records.len(),
            self.error
        )
    }
}

impl std::error::Error for PipelineAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<PipelineAbort> for Error {
    fn from(abort: PipelineAbort) -> Self {
        abort.error
    }
}

fn shot_seed(seed: u64, token_index: usize) -> u64 {
    seed ^ (token_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Job {
    index: usize,
    prompt: Prompt,
}

/// Run detection-gated lookup and LLM normalization over `test`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    backend: &dyn LlmBackend,
    test: &Corpus,
    train: &Corpus,
) -> std::result::Result<PipelineRun, PipelineAbort> {
    let empty = || PipelineRun {
        output: crate::baselines::leave_as_is(test),
        sources: vec![PredictionSource::Raw; test.token_count()],
        records: Vec::new(),
        shots: Vec::new(),
    };
    let abort = |error: Error, partial: PipelineRun| PipelineAbort {
        error,
        partial: Box::new(partial),
    };
    if let Err(e) = cfg.validate(test) {
        return Err(abort(e, empty()));
    }

    let flags = cfg.detection.labels();
    let outcomes = match (&cfg.lookup, cfg.use_lookup) {
        (Some(gl), true) => match apply_lookup(gl, test, flags) {
            Ok(o) => o,
            Err(e) => return Err(abort(e, empty())),
        },
        _ => flags
            .iter()
            .map(|&f| {
                if f {
                    LookupOutcome::Forwarded
                } else {
                    LookupOutcome::Kept
                }
            })
            .collect(),
    };

    let shots = if cfg.resample_shots_per_token {
        Vec::new()
    } else {
        match sample_shots(train, cfg.prompt.k_shots, cfg.prompt.seed) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, empty())),
        }
    };

    let mut predictions = Vec::with_capacity(outcomes.len());
    let mut sources = Vec::with_capacity(outcomes.len());
    let mut jobs = Vec::new();
    let positions = test
        .sentences()
        .iter()
        .flat_map(|s| (0..s.len()).map(move |t| (s, t)));
    for (index, ((sentence, t), outcome)) in positions.zip(outcomes).enumerate() {
        let raw = sentence.tokens()[t].raw().to_string();
        match outcome {
            LookupOutcome::Kept => {
                predictions.push(raw);
                sources.push(PredictionSource::Raw);
            }
            LookupOutcome::Replaced(rep) => {
                predictions.push(rep);
                sources.push(PredictionSource::Lookup);
            }
            LookupOutcome::Forwarded => {
                let token_shots = if cfg.resample_shots_per_token {
                    sample_shots(train, cfg.prompt.k_shots, shot_seed(cfg.prompt.seed, index))
                } else {
                    Ok(shots.clone())
                };
                let prompt = token_shots.and_then(|s| build_prompt(&cfg.prompt, &s, sentence, t));
                let prompt = match prompt {
                    Ok(p) => p,
                    Err(e) => return Err(abort(e, PipelineRun { shots, ..empty() })),
                };
                predictions.push(raw);
                sources.push(PredictionSource::Llm);
                jobs.push(Job { index, prompt });
            }
        }
    }

    let results: Vec<OnceLock<Result<(String, CallRecord)>>> =
        jobs.iter().map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let workers = cfg.concurrency_limit.min(jobs.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let result = normalize_token_llm(backend, &job.prompt, &cfg.prompt).map(
                    |(prediction, mut record)| {
                        record.token_index = job.index;
                        (prediction, record)
                    },
                );
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                let _ = results[i].set(result);
            });
        }
    });

    let mut records = Vec::with_capacity(jobs.len());
    let mut first_error = None;
    for (job, result) in jobs.iter().zip(results) {
        match result.into_inner() {
            Some(Ok((prediction, record))) => {
                if record.refused {
                    sources[job.index] = PredictionSource::Refused;
                }
                predictions[job.index] = prediction;
                records.push(record);
            }
            Some(Err(e)) => {
                first_error.get_or_insert(e);
            }
            None => {}
        }
    }
    let run = PipelineRun {
        output: RunOutput::new(predictions),
        sources,
        records,
        shots,
    };
    match first_error {
        Some(e) => Err(abort(e, run)),
        None => Ok(run),
    }
}

/// Estimated tokens if every test token were sent to the LLM with the given
/// shots, prompt and answer included.
pub fn counterfactual_tokens(spec: &PromptSpec, shots: &[Shot], test: &Corpus) -> Result<u64> {
    let mut total = 0;
    for sentence in test.sentences() {
        for (t, token) in sentence.tokens().iter().enumerate() {
            let prompt = build_prompt(spec, shots, sentence, t)?;
            total += estimate_tokens(&prompt.text) + estimate_tokens(token.raw());
        }
    }
    Ok(total)
}
