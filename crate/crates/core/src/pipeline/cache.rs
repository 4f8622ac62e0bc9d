//! Append-only prompt cache, one JSON record per line.
//!
//! Records are keyed by the SHA-256 of the prompt bytes. Later records win
//! on duplicate keys; with deterministic decoding duplicates are identical.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{Completion, CompletionRequest, LlmBackend, Usage};
use super::prompt::prompt_hash;
use crate::error::{decode_utf8, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_hash: String,
    pub prompt: String,
    pub response: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

impl CacheRecord {
    pub fn new(prompt: &str, response: &str, usage: Option<Usage>) -> Self {
        CacheRecord {
            prompt_hash: prompt_hash(prompt),
            prompt: prompt.to_string(),
            response: response.to_string(),
            input_tokens: usage.map(|u| u.input_tokens),
            output_tokens: usage.map(|u| u.output_tokens),
        }
    }

    fn usage(&self) -> Option<Usage> {
        Some(Usage {
            input_tokens: self.input_tokens?,
            output_tokens: self.output_tokens?,
        })
    }
}

#[derive(Default)]
pub struct PromptCache {
    entries: Mutex<HashMap<String, CacheRecord>>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl PromptCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (creating if absent) a cache file; new records are appended.
    pub fn open(path: &Path) -> Result<Self> {
        let entries = if path.exists() {
            Self::parse(&std::fs::read(path).map_err(|e| Error::io(path, e))?)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(PromptCache {
            entries: Mutex::new(entries),
            writer: Mutex::new(Some((path.to_path_buf(), file))),
        })
    }

    /// Load a cache file read-only.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(PromptCache {
            entries: Mutex::new(Self::parse(&bytes)?),
            writer: Mutex::new(None),
        })
    }

    fn parse(bytes: &[u8]) -> Result<HashMap<String, CacheRecord>> {
        let mut entries = HashMap::new();
        for (idx, line) in decode_utf8(bytes)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad cache record: {e}"),
            })?;
            if prompt_hash(&record.prompt) != record.prompt_hash {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "cache record hash does not match its prompt".into(),
                });
            }
            entries.insert(record.prompt_hash.clone(), record);
        }
        Ok(entries)
    }

    pub fn get(&self, hash: &str) -> Option<CacheRecord> {
        self.entries.lock().unwrap().get(hash).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: CacheRecord) -> Result<()> {
        if let Some((path, file)) = self.writer.lock().unwrap().as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.entries
            .lock()
            .unwrap()
            .insert(record.prompt_hash.clone(), record);
        Ok(())
    }
}

/// Serves cached responses and forwards misses to `inner`. Without an inner
/// backend this is the replay backend: a miss is an error.
pub struct CachedBackend {
    inner: Option<Box<dyn LlmBackend>>,
    cache: PromptCache,
    misses: AtomicUsize,
}

impl CachedBackend {
    pub fn new(inner: Box<dyn LlmBackend>, cache: PromptCache) -> Self {
        CachedBackend {
            inner: Some(inner),
            cache,
            misses: AtomicUsize::new(0),
        }
    }

    pub fn replay(cache: PromptCache) -> Self {
        CachedBackend {
            inner: None,
            cache,
            misses: AtomicUsize::new(0),
        }
    }

    pub fn cache(&self) -> &PromptCache {
        &self.cache
    }

    /// Requests forwarded to the inner backend.
    pub fn forwarded(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }
}

impl LlmBackend for CachedBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        if let Some(hit) = self.cache.get(request.prompt_hash) {
            if hit.prompt == request.prompt {
                return Ok(Completion {
                    usage: hit.usage(),
                    text: hit.response,
                    cached: true,
                });
            }
        }
        let Some(inner) = &self.inner else {
            return Err(Error::CacheMiss {
                prompt_hash: request.prompt_hash.to_string(),
            });
        };
        self.misses.fetch_add(1, Ordering::SeqCst);
        let completion = inner.complete(request)?;
        self.cache.insert(CacheRecord::new(
            request.prompt,
            &completion.text,
            completion.usage,
        ))?;
        Ok(completion)
    }
}
