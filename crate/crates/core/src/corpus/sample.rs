use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Sentinel label for rows that carry no gold annotation for a task.
pub const IGNORE: i64 = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Humor,
    Sarcasm,
    Hate,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Humor, Task::Sarcasm, Task::Hate];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Humor => "humor",
            Task::Sarcasm => "sarcasm",
            Task::Hate => "hate",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "humor" | "humour" => Ok(Task::Humor),
            "sarcasm" => Ok(Task::Sarcasm),
            "hate" => Ok(Task::Hate),
            other => Err(Error::Invalid(format!("unknown task `{other}`"))),
        }
    }
}

/// Binary label or the ignore marker; serialized as the integers 0, 1 and 999.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
    Ignore,
}

impl Label {
    pub fn as_i64(self) -> i64 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
            Label::Ignore => IGNORE,
        }
    }

    /// Class index for non-ignored labels.
    pub fn class(self) -> Option<usize> {
        match self {
            Label::Negative => Some(0),
            Label::Positive => Some(1),
            Label::Ignore => None,
        }
    }

    pub fn from_class(class: u8) -> Label {
        if class == 0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    pub fn is_ignore(self) -> bool {
        self == Label::Ignore
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            IGNORE => Ok(Label::Ignore),
            other => Err(Error::Invalid(format!(
                "label must be 0, 1 or {IGNORE}, got {other}"
            ))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.as_i64())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::try_from(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    CodeMixed,
    NativeEn,
    NativeHiTranslated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub task: Task,
    pub label: Label,
    pub origin: Origin,
    pub dataset: String,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        task: Task,
        label: Label,
        origin: Origin,
        dataset: impl Into<String>,
    ) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            task,
            label,
            origin,
            dataset: dataset.into(),
        }
    }
}

/// On-disk record before domain validation. Field types are loose so that a
/// well-formed line with an out-of-domain value is reported as a validation
/// failure rather than a parse failure.
#[derive(Deserialize)]
struct RawRecord {
    id: serde_json::Value,
    text: String,
    task: String,
    label: i64,
    origin: String,
    dataset: String,
}

fn validate(raw: RawRecord, line: usize) -> Result<Sample> {
    let invalid = |message: String| Error::InvalidRecord { line, message };
    let id = match raw.id {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(invalid(format!("id must be a string, got {other}"))),
    };
    if raw.text.trim().is_empty() {
        return Err(invalid(format!("sample `{id}` has empty text")));
    }
    let task = raw
        .task
        .parse::<Task>()
        .map_err(|e| invalid(e.to_string()))?;
    let label = Label::try_from(raw.label).map_err(|e| invalid(e.to_string()))?;
    let origin: Origin = serde_json::from_value(serde_json::Value::String(raw.origin.clone()))
        .map_err(|_| invalid(format!("unknown origin `{}`", raw.origin)))?;
    Ok(Sample {
        id,
        text: raw.text,
        task,
        label,
        origin,
        dataset: raw.dataset,
    })
}

/// Parse line-delimited sample records. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = validate(raw, line_no)?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::InvalidRecord {
                line: line_no,
                message: format!("duplicate id `{}`", sample.id),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl<'a, I>(path: impl AsRef<Path>, samples: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Count of (negative, positive) labels, ignoring IGNORE.
pub fn class_counts(samples: &[Sample]) -> (usize, usize) {
    samples.iter().fold((0, 0), |(n, p), s| match s.label {
        Label::Negative => (n + 1, p),
        Label::Positive => (n, p + 1),
        Label::Ignore => (n, p),
    })
}

/// Hook for producing synthetic Hindi versions of English samples.
/// No implementation ships with this crate.
pub trait Translator {
    fn translate(&self, text: &str) -> Result<String>;
}
