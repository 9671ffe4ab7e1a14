use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{label_form, parse_label, render_prompt, PromptConfig, PromptTemplate};
use crate::corpus::{Label, Sample, Task};
use crate::error::{Error, Result};

/// Environment variable a real completion client would read its key from.
pub const API_KEY_ENV: &str = "CODEMIX_API_KEY";

pub trait CompletionClient {
    fn name(&self) -> &str;
    fn is_mock(&self) -> bool;
    fn send(&self, prompt: &str) -> Result<String>;
}

/// Answers from a hash of `(seed, prompt)`: the same prompt always gets the
/// same answer. About one answer in ten is unparseable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockClient {
    pub task: Task,
    pub seed: u64,
}

impl MockClient {
    pub fn new(task: Task, seed: u64) -> Self {
        MockClient { task, seed }
    }
}

impl CompletionClient for MockClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_mock(&self) -> bool {
        true
    }

    fn send(&self, prompt: &str) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.as_bytes());
        let digest = h.finalize();
        let response = match digest[0] % 10 {
            0 => "I am not sure about this one.".to_string(),
            b => {
                let label = if b % 2 == 1 { Label::Positive } else { Label::Negative };
                format!("Label: {}", label_form(self.task, label).expect("binary label"))
            }
        };
        Ok(response)
    }
}

/// Client by configuration name. Only the mock ships with this crate.
pub fn select_client(name: &str, task: Task, seed: u64) -> Result<Box<dyn CompletionClient>> {
    match name {
        "mock" => Ok(Box::new(MockClient::new(task, seed))),
        other => Err(Error::Client(format!(
            "no `{other}` client is available; only `mock` is built in (a real client would read {API_KEY_ENV})"
        ))),
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query_id: String,
    pub prompt_hash: String,
    pub response: String,
    /// `None` when the response could not be parsed (an abstention).
    pub parsed_label: Option<u8>,
}

/// Render, send and parse every query in order.
pub fn run_queries(
    client: &dyn CompletionClient,
    template: &PromptTemplate,
    cfg: &PromptConfig,
    shots: &[Sample],
    queries: &[Sample],
) -> Result<Vec<TranscriptRecord>> {
    queries
        .iter()
        .map(|q| {
            let prompt = render_prompt(template, cfg, shots, q)?;
            let response = client.send(&prompt)?;
            let parsed_label = parse_label(&response, cfg.task).and_then(|l| l.class()).map(|c| c as u8);
            Ok(TranscriptRecord {
                query_id: q.id.clone(),
                prompt_hash: prompt_hash(&prompt),
                response,
                parsed_label,
            })
        })
        .collect()
}

pub fn write_transcript(path: impl AsRef<Path>, records: &[TranscriptRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
