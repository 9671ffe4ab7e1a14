//! Few-shot prompting: templates, label surface forms, response parsing,
//! clustering-based shot selection and the completion-client boundary.

mod client;
mod shots;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use client::{
    prompt_hash, read_transcript, run_queries, select_client, write_transcript, CompletionClient,
    MockClient, TranscriptRecord, API_KEY_ENV,
};
pub use shots::select_shots;

use crate::corpus::{Label, Sample, Task};
use crate::error::{Error, Result};

pub const K_GRID: [usize; 5] = [0, 2, 4, 8, 12];
pub const DEFAULT_TEMPLATE: &str = include_str!("default_template.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub task: Task,
    pub k: usize,
    #[serde(default = "default_template_id")]
    pub template_id: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_template_id() -> String {
    "default".into()
}

impl PromptConfig {
    pub fn new(task: Task, k: usize, seed: u64) -> Result<Self> {
        let cfg = PromptConfig {
            task,
            k,
            template_id: default_template_id(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !K_GRID.contains(&self.k) {
            return Err(Error::Config(format!("k = {} is not one of {K_GRID:?}", self.k)));
        }
        Ok(())
    }
}

/// Surface forms that label values take inside prompts and responses.
pub fn label_form(task: Task, label: Label) -> Option<&'static str> {
    Some(match (task, label) {
        (Task::Humor, Label::Positive) => "humorous",
        (Task::Humor, Label::Negative) => "non-humorous",
        (Task::Sarcasm, Label::Positive) => "sarcastic",
        (Task::Sarcasm, Label::Negative) => "not sarcastic",
        (Task::Hate, Label::Positive) => "hateful",
        (Task::Hate, Label::Negative) => "non-hateful",
        (_, Label::Ignore) => return None,
    })
}

pub fn task_definition(task: Task) -> &'static str {
    match task {
        Task::Humor => "decide whether the post is humorous, i.e. written to amuse or make the reader laugh.",
        Task::Sarcasm => "decide whether the post is sarcastic, i.e. says the opposite of what it means in order to mock or criticise.",
        Task::Hate => "decide whether the post is hateful, i.e. attacks or demeans a person or group.",
    }
}

/// Negative forms are listed (and searched) before the positive ones so
/// that "non-humorous" is never read as "humorous".
fn surface_forms(task: Task) -> (&'static [&'static str], &'static [&'static str]) {
    match task {
        Task::Humor => (
            &["non-humorous", "non humorous", "not humorous", "nonhumorous"],
            &["humorous", "humourous"],
        ),
        Task::Sarcasm => (
            &["not sarcastic", "non-sarcastic", "non sarcastic", "nonsarcastic"],
            &["sarcastic"],
        ),
        Task::Hate => (
            &["non-hateful", "non hateful", "not hateful", "nonhateful"],
            &["hateful"],
        ),
    }
}

/// Case-insensitive scan for a label surface form; `None` is an abstention.
pub fn parse_label(response: &str, task: Task) -> Option<Label> {
    let text = response.to_lowercase();
    let (neg, pos) = surface_forms(task);
    if neg.iter().any(|f| text.contains(f)) {
        Some(Label::Negative)
    } else if pos.iter().any(|f| text.contains(f)) {
        Some(Label::Positive)
    } else {
        None
    }
}

/// Text template with `{name}` placeholders. `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    pub shot: String,
    pub query: String,
}

const PLACEHOLDERS: [&str; 6] = ["task", "definition", "positive", "negative", "text", "label"];

impl PromptTemplate {
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TEMPLATE).expect("built-in template is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| Error::Config(format!("prompt template: {e}")))?;
        for part in [&t.system, &t.shot, &t.query] {
            fill(part, |_| Some(""))?;
        }
        if !t.query.contains("{text}") {
            return Err(Error::Config("prompt template: the query section must contain {text}".into()));
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Substitute placeholders in one left-to-right pass; substituted values are
/// never scanned again.
fn fill<'v>(template: &str, value: impl Fn(&str) -> Option<&'v str>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(r) = tail.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = tail.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else if tail.starts_with('}') {
            return Err(Error::Config("prompt template: unmatched `}`".into()));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| Error::Config("prompt template: unterminated placeholder".into()))?;
            let name = &tail[1..end];
            if !PLACEHOLDERS.contains(&name) {
                return Err(Error::Config(format!("prompt template: unknown placeholder `{{{name}}}`")));
            }
            let v = value(name)
                .ok_or_else(|| Error::Config(format!("prompt template: `{{{name}}}` is not available here")))?;
            out.push_str(v);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// System section, one block per shot, then the query; sections are
/// separated by a newline. The query's label is never rendered.
pub fn render_prompt(template: &PromptTemplate, cfg: &PromptConfig, shots: &[Sample], query: &Sample) -> Result<String> {
    if shots.len() != cfg.k {
        return Err(Error::Invalid(format!("expected {} shots, got {}", cfg.k, shots.len())));
    }
    let task = cfg.task;
    let positive = label_form(task, Label::Positive).expect("binary label");
    let negative = label_form(task, Label::Negative).expect("binary label");
    let common = |name: &str| -> Option<&str> {
        match name {
            "task" => Some(task.as_str()),
            "definition" => Some(task_definition(task)),
            "positive" => Some(positive),
            "negative" => Some(negative),
            _ => None,
        }
    };
    let mut parts = vec![fill(&template.system, common)?];
    for s in shots {
        let label = label_form(task, s.label)
            .ok_or_else(|| Error::Invalid(format!("shot `{}` has no label", s.id)))?;
        parts.push(fill(&template.shot, |n| match n {
            "text" => Some(s.text.as_str()),
            "label" => Some(label),
            other => common(other),
        })?);
    }
    parts.push(fill(&template.query, |n| match n {
        "text" => Some(query.text.as_str()),
        other => common(other),
    })?);
    Ok(parts.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;

    fn s(id: &str, text: &str, label: Label) -> Sample {
        Sample::new(id, text, Task::Humor, label, Origin::CodeMixed, "cm")
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_label("Label: humorous", Task::Humor), Some(Label::Positive));
        assert_eq!(parse_label("this is non-humorous.", Task::Humor), Some(Label::Negative));
        assert_eq!(parse_label("I cannot decide", Task::Humor), None);
        assert_eq!(parse_label("NOT SARCASTIC at all", Task::Sarcasm), Some(Label::Negative));
        assert_eq!(parse_label("Sarcastic!", Task::Sarcasm), Some(Label::Positive));
        for task in Task::ALL {
            for label in [Label::Positive, Label::Negative] {
                let form = label_form(task, label).unwrap();
                assert_eq!(parse_label(form, task), Some(label), "{task} {form}");
            }
        }
    }

    #[test]
    fn zero_shot_layout() {
        let t = PromptTemplate::builtin();
        let cfg = PromptConfig::new(Task::Humor, 0, 0).unwrap();
        let out = render_prompt(&t, &cfg, &[], &s("q", "kya baat hai", Label::Positive)).unwrap();
        assert!(out.starts_with("You are an expert annotator"));
        assert!(out.ends_with("Input: kya baat hai\nLabel:"));
        assert!(!out.contains("Label: humorous"));
        assert_eq!(out.matches("Input:").count(), 1);
    }

    #[test]
    fn shots_in_order_and_query_label_hidden() {
        let t = PromptTemplate::builtin();
        let cfg = PromptConfig::new(Task::Humor, 2, 0).unwrap();
        let shots = [s("a", "first", Label::Positive), s("b", "second", Label::Negative)];
        let q = s("q", "query text", Label::Positive);
        let out = render_prompt(&t, &cfg, &shots, &q).unwrap();
        let i1 = out.find("Input: first\nLabel: humorous").unwrap();
        let i2 = out.find("Input: second\nLabel: non-humorous").unwrap();
        let i3 = out.find("Input: query text\nLabel:").unwrap();
        assert!(i1 < i2 && i2 < i3);
        assert!(out[i3..].trim_end().ends_with("Label:"));
        assert_eq!(out, render_prompt(&t, &cfg, &shots, &q).unwrap());
    }

    #[test]
    fn render_errors() {
        let t = PromptTemplate::builtin();
        let cfg = PromptConfig::new(Task::Humor, 2, 0).unwrap();
        let q = s("q", "x", Label::Positive);
        assert!(render_prompt(&t, &cfg, &[s("a", "y", Label::Positive)], &q).is_err());
        let bad = [s("a", "y", Label::Positive), s("b", "z", Label::Ignore)];
        assert!(render_prompt(&t, &cfg, &bad, &q).is_err());
        assert!(PromptConfig::new(Task::Humor, 3, 0).is_err());
    }

    #[test]
    fn single_pass_substitution() {
        let t = PromptTemplate::builtin();
        let cfg = PromptConfig::new(Task::Humor, 0, 0).unwrap();
        let out = render_prompt(&t, &cfg, &[], &s("q", "braces {label} {{x}}", Label::Positive)).unwrap();
        assert!(out.contains("Input: braces {label} {{x}}\n"));
    }

    #[test]
    fn template_validation() {
        let ok = "id = \"t\"\nsystem = \"{{literal}} {task}\"\nshot = \"{text}={label}\"\nquery = \"{text}?\"\n";
        let t = PromptTemplate::from_toml_str(ok).unwrap();
        let cfg = PromptConfig::new(Task::Hate, 0, 0).unwrap();
        let q = Sample::new("q", "x", Task::Hate, Label::Negative, Origin::CodeMixed, "cm");
        assert_eq!(render_prompt(&t, &cfg, &[], &q).unwrap(), "{literal} hate\nx?");
        for bad in [
            "id = \"t\"\nsystem = \"{nope}\"\nshot = \"\"\nquery = \"{text}\"\n",
            "id = \"t\"\nsystem = \"{task\"\nshot = \"\"\nquery = \"{text}\"\n",
            "id = \"t\"\nsystem = \"\"\nshot = \"\"\nquery = \"no text\"\n",
            "id = \"t\"\nsystem = \"\"\nshot = \"\"\nquery = \"{text}\"\nextra = 1\n",
        ] {
            assert!(PromptTemplate::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}
