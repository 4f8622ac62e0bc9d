//! Fixtures, generators and an independent scorer shared by the integration
//! tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use lexnorm::{parse_corpus, Corpus};
use proptest::prelude::*;

pub const FIXTURE_T: &str = "u\tyou\nr\tare\nok\tok\n\nim\ti'm\ngonna\tgoing to\nhome\thome\n\nim\tim\nso\tso\nhappy\thappy\n\n";
pub const FIXTURE_E: &str = "u\tyou\nim\ti'm\nok\tok\n\n";

pub fn fixture_t() -> Corpus {
    parse_corpus(FIXTURE_T.as_bytes(), "en", false).unwrap()
}

pub fn fixture_e() -> Corpus {
    parse_corpus(FIXTURE_E.as_bytes(), "en", false).unwrap()
}

pub fn lexnorm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexnorm"))
        .args(args)
        .current_dir(dir)
        .env_remove("LEXNORM_API_BASE")
        .env_remove("LEXNORM_API_KEY")
        .env_remove("LEXNORM_MODEL")
        .output()
        .expect("spawn lexnorm")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Temp dir holding `train.tsv` (fixture T) and `test.tsv` (fixture E).
pub fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.tsv"), FIXTURE_T).unwrap();
    std::fs::write(dir.path().join("test.tsv"), FIXTURE_E).unwrap();
    dir
}

/// Minimal chat-completion server answering every request with the text
/// between the last `<<`/`>>` pair of the prompt. Counts requests.
pub struct FakeChatServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl FakeChatServer {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let counter = counter.clone();
                thread::spawn(move || serve(stream, &counter));
            }
        });
        FakeChatServer { url, requests }
    }

    pub fn count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn serve(stream: std::net::TcpStream, counter: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0;
        loop {
            let mut header = String::new();
            reader.read_line(&mut header).unwrap();
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    length = value.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        counter.fetch_add(1, Ordering::SeqCst);
        let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let prompt = request["messages"][0]["content"]
            .as_str()
            .unwrap_or_default();
        let answer = prompt
            .rsplit_once("<<")
            .and_then(|(_, rest)| rest.split_once(">>"))
            .map(|(word, _)| word)
            .unwrap_or_default();
        let answer = match answer {
            "u" => "you",
            "im" => "i'm",
            other => other,
        };
        let response = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": answer}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 2},
        })
        .to_string();
        let head = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n",
            response.len()
        );
        if writer.write_all(head.as_bytes()).is_err()
            || writer.write_all(response.as_bytes()).is_err()
        {
            return;
        }
    }
}

// Corpus generation.

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-z]{1,5}",
        1 => "[A-Z][a-z]{0,3}",
        1 => "[a-z]{1,3}'[a-z]{1,2}",
        1 => "(é|ü|ñ|ก|ข|ง)[a-z]{0,2}",
        1 => "[0-9]{1,3}",
    ]
}

#[derive(Debug, Clone)]
enum Unit {
    Plain(String, String),
    Split(String, Vec<String>),
    Merge(Vec<String>, String),
}

fn unit() -> impl Strategy<Value = Unit> {
    prop_oneof![
        6 => (word(), word()).prop_map(|(r, n)| Unit::Plain(r.clone(), if n.len() % 2 == 0 { r } else { n })),
        1 => (word(), prop::collection::vec(word(), 2..4)).prop_map(|(r, n)| Unit::Split(r, n)),
        1 => (prop::collection::vec(word(), 2..4), word()).prop_map(|(r, n)| Unit::Merge(r, n)),
    ]
}

/// Canonical corpus text with plain, split and merged tokens.
pub fn corpus_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(unit(), 1..5), 1..5).prop_map(|sentences| {
        let mut out = String::new();
        for units in sentences {
            for u in units {
                match u {
                    Unit::Plain(r, n) => out.push_str(&format!("{r}\t{n}\n")),
                    Unit::Split(r, n) => out.push_str(&format!("{r}\t{}\n", n.join(" "))),
                    Unit::Merge(r, n) => {
                        out.push_str(&format!("{}\t{n}\n", r[0]));
                        for cont in &r[1..] {
                            out.push_str(&format!("{cont}\t\n"));
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    })
}

/// A small corpus (at most 8 tokens) and a prediction per token drawn from
/// raw, gold, a case variant or an unrelated word.
pub fn scored_case() -> impl Strategy<Value = (Corpus, Vec<String>)> {
    (
        prop::collection::vec((word(), word(), 0u8..3), 1..=8),
        any::<bool>(),
        prop::collection::vec((0u8..5, word()), 8),
    )
        .prop_map(|(tokens, caseless, picks)| {
            let mut text = String::new();
            for (i, (r, n, mode)) in tokens.iter().enumerate() {
                let norm = match mode {
                    0 => r.clone(),
                    1 if i > 0 => String::new(),
                    _ => n.clone(),
                };
                text.push_str(&format!("{r}\t{norm}\n"));
            }
            text.push('\n');
            let c = parse_corpus(text.as_bytes(), "xx", caseless).unwrap();
            let preds = c
                .tokens()
                .zip(&picks)
                .map(|(t, (pick, other))| match pick {
                    0 => t.raw().to_string(),
                    1 => t.norm().to_string(),
                    2 => t.norm().to_uppercase(),
                    3 => t.raw().to_uppercase(),
                    _ => other.clone(),
                })
                .collect();
            (c, preds)
        })
}

/// Scores computed directly from the definitions, as exact ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveScores {
    pub correct: usize,
    pub total: usize,
    pub unchanged: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn naive_score(gold: &Corpus, preds: &[String]) -> NaiveScores {
    let fold = |s: &str| {
        if gold.caseless() {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    };
    let mut s = NaiveScores {
        correct: 0,
        total: 0,
        unchanged: 0,
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    for (t, p) in gold.tokens().zip(preds) {
        let (raw, norm, pred) = (fold(t.raw()), fold(t.norm()), fold(p));
        s.total += 1;
        if pred == norm {
            s.correct += 1;
        }
        if raw == norm {
            s.unchanged += 1;
            if pred != raw {
                s.fp += 1;
            }
        } else if pred == norm {
            s.tp += 1;
        } else if pred == raw {
            s.fn_ += 1;
        } else {
            s.fp += 1;
        }
    }
    s
}

impl NaiveScores {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// `None` when every token is already normalized.
    pub fn err(&self) -> Option<f64> {
        (self.unchanged < self.total).then(|| {
            100.0 * (self.correct as f64 - self.unchanged as f64)
                / (self.total - self.unchanged) as f64
        })
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}
