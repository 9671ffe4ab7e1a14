//! Separable pattern tasks for end-to-end runs without real corpora.
//!
//! Every task draws filler words from its own vocabulary, so tasks never
//! share a token. A positive sample additionally contains one or more of the
//! task's trigger words; negatives never do.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Origin, Sample, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub tasks: Vec<Task>,
    pub per_task: usize,
    pub positive_fraction: f64,
    pub filler_words: usize,
    pub trigger_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            tasks: vec![Task::Humor, Task::Sarcasm],
            per_task: 2000,
            positive_fraction: 0.5,
            filler_words: 24,
            trigger_words: 4,
            min_len: 4,
            max_len: 8,
            seed: 0,
        }
    }
}

pub fn filler_word(task: Task, i: usize) -> String {
    format!("{}{i}", task.as_str())
}

pub fn trigger_word(task: Task, i: usize) -> String {
    format!("{}x{i}", task.as_str())
}

/// Samples per task, ids `"{task}-{i}"`.
pub fn generate(cfg: &SyntheticConfig) -> Result<BTreeMap<Task, Vec<Sample>>> {
    if cfg.tasks.is_empty() || cfg.filler_words == 0 || cfg.trigger_words == 0 {
        return Err(Error::Config("synthetic data needs tasks, filler words and trigger words".into()));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!("bad length range {}..={}", cfg.min_len, cfg.max_len)));
    }
    if !(0.0..=1.0).contains(&cfg.positive_fraction) {
        return Err(Error::Config(format!("positive_fraction {} outside [0, 1]", cfg.positive_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = BTreeMap::new();
    for &task in &cfg.tasks {
        let fillers: Vec<String> = (0..cfg.filler_words).map(|i| filler_word(task, i)).collect();
        let triggers: Vec<String> = (0..cfg.trigger_words).map(|i| trigger_word(task, i)).collect();
        let n_pos = (cfg.positive_fraction * cfg.per_task as f64).round() as usize;
        let mut samples = Vec::with_capacity(cfg.per_task);
        for i in 0..cfg.per_task {
            let positive = i < n_pos;
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let mut words: Vec<&str> = (0..len)
                .map(|_| fillers.choose(&mut rng).expect("fillers").as_str())
                .collect();
            if positive {
                let k = rng.random_range(1..=len.min(2));
                for _ in 0..k {
                    let at = rng.random_range(0..len);
                    words[at] = triggers.choose(&mut rng).expect("triggers");
                }
            }
            let label = if positive { Label::Positive } else { Label::Negative };
            samples.push(Sample::new(
                format!("{task}-{i}"),
                words.join(" "),
                task,
                label,
                Origin::CodeMixed,
                "synthetic",
            ));
        }
        out.insert(task, samples);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::class_counts;
    use crate::text::tokenize;

    #[test]
    fn disjoint_and_labelled_by_triggers() {
        let cfg = SyntheticConfig {
            tasks: vec![Task::Humor, Task::Hate],
            per_task: 200,
            ..SyntheticConfig::default()
        };
        let data = generate(&cfg).unwrap();
        for (task, samples) in &data {
            assert_eq!(class_counts(samples), (100, 100));
            for s in samples {
                let toks = tokenize(&s.text);
                assert!(toks.iter().all(|t| t.starts_with(task.as_str())));
                let has_trigger = toks.iter().any(|t| t.starts_with(&format!("{}x", task.as_str())));
                assert_eq!(has_trigger, s.label == Label::Positive, "{}", s.text);
            }
        }
        assert_eq!(generate(&cfg).unwrap(), data);
    }
}
