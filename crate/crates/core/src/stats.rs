//! Corpus statistics: class-conditional word distributions, symmetrized
//! smoothed KL divergence between them, and hurtful-keyword coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{class_counts, Label, Sample};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// An add-alpha smoothed unigram distribution over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDist {
    pub probs: BTreeMap<String, f64>,
    pub alpha: f64,
}

impl WordDist {
    pub fn prob(&self, token: &str) -> Option<f64> {
        self.probs.get(token).copied()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Every token appearing in the given samples.
pub fn union_vocab(samples: &[Sample]) -> BTreeSet<String> {
    samples.iter().flat_map(|s| tokenize(&s.text)).collect()
}

fn check_class(label: Label) -> Result<u8> {
    match label.class() {
        Some(c) => Ok(c as u8),
        None => Err(Error::Invalid("statistics are per class 0 or 1, not the ignore label".into())),
    }
}

/// `p(w) = (count(w) + alpha) / (total + alpha |V|)` over `union_vocab`,
/// counting tokens of the samples labelled `label`.
pub fn word_distribution(
    samples: &[Sample],
    label: Label,
    alpha: f64,
    union_vocab: &BTreeSet<String>,
) -> Result<WordDist> {
    let class = check_class(label)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
    }
    let mut counts: BTreeMap<&str, usize> = union_vocab.iter().map(|w| (w.as_str(), 0)).collect();
    let mut total = 0usize;
    let mut seen = false;
    for s in samples.iter().filter(|s| s.label == label) {
        seen = true;
        for tok in tokenize(&s.text) {
            match counts.get_mut(tok.as_str()) {
                Some(c) => *c += 1,
                None => return Err(Error::Invalid(format!("token `{tok}` is missing from the union vocabulary"))),
            }
            total += 1;
        }
    }
    if !seen {
        return Err(Error::EmptyClass { class });
    }
    let denom = total as f64 + alpha * union_vocab.len() as f64;
    let probs = counts
        .into_iter()
        .map(|(w, c)| (w.to_string(), (c as f64 + alpha) / denom))
        .collect();
    Ok(WordDist { probs, alpha })
}

/// `KL(p||q) + KL(q||p) = sum_w (p_w - q_w) ln(p_w / q_w)`.
pub fn symmetric_kl(p: &WordDist, q: &WordDist) -> Result<f64> {
    if p.probs.len() != q.probs.len() || p.probs.keys().ne(q.probs.keys()) {
        return Err(Error::Invalid(format!(
            "distributions have different vocabularies ({} vs {} entries)",
            p.len(),
            q.len()
        )));
    }
    let kl = p
        .probs
        .values()
        .zip(q.probs.values())
        .map(|(a, b)| (a - b) * (a / b).ln())
        .sum::<f64>();
    // each term is non-negative; clamp away rounding residue
    Ok(kl.max(0.0))
}

/// Hurtful-keyword list. Terms are lowercased token sequences; a multiword
/// term matches consecutive tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    terms: BTreeSet<Vec<String>>,
}

impl Lexicon {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = terms
            .into_iter()
            .map(|t| tokenize(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        Lexicon { terms }
    }

    /// One term per line; blank lines and lines starting with `#` are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<lexicon>", e))?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                lines.push(t.to_string());
            }
        }
        Ok(Lexicon::new(lines))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_reader(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn insert(&mut self, term: &str) {
        let t = tokenize(term);
        if !t.is_empty() {
            self.terms.insert(t);
        }
    }

    /// True if any term occurs as a run of whole tokens.
    pub fn matches(&self, tokens: &[String]) -> bool {
        self.terms
            .iter()
            .any(|term| tokens.windows(term.len()).any(|w| w == term.as_slice()))
    }
}

/// Fraction of class-`label` samples containing at least one lexicon term.
pub fn hurtful_fraction(samples: &[Sample], lexicon: &Lexicon, label: Label) -> Result<f64> {
    let class = check_class(label)?;
    let (mut n, mut hits) = (0usize, 0usize);
    for s in samples.iter().filter(|s| s.label == label) {
        n += 1;
        if lexicon.matches(&tokenize(&s.text)) {
            hits += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyClass { class });
    }
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub positives: usize,
    pub negatives: usize,
    pub alpha: f64,
    pub vocab_size: usize,
    pub kl: f64,
    pub hurtful_fraction_pos: f64,
    pub hurtful_fraction_neg: f64,
}

pub fn dataset_report(samples: &[Sample], lexicon: &Lexicon, alpha: f64) -> Result<StatReport> {
    let vocab = union_vocab(samples);
    let p = word_distribution(samples, Label::Positive, alpha, &vocab)?;
    let q = word_distribution(samples, Label::Negative, alpha, &vocab)?;
    let (negatives, positives) = class_counts(samples);
    Ok(StatReport {
        positives,
        negatives,
        alpha,
        vocab_size: vocab.len(),
        kl: symmetric_kl(&p, &q)?,
        hurtful_fraction_pos: hurtful_fraction(samples, lexicon, Label::Positive)?,
        hurtful_fraction_neg: hurtful_fraction(samples, lexicon, Label::Negative)?,
    })
}
