//! Word n-gram features and a multinomial Naive Bayes classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, NB_FORMAT};
use crate::corpus::{Label, Sample};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_N_SET: [usize; 3] = [1, 2, 3];

/// All contiguous n-token windows for each `n` in `n_set`, tokens joined
/// with `_`. The result is a multiset; order carries no meaning.
pub fn extract_ngrams(text: &str, n_set: &BTreeSet<usize>) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    for &n in n_set {
        if n == 0 || n > tokens.len() {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join("_")));
    }
    out
}

pub fn ngram_counts(text: &str, n_set: &BTreeSet<usize>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for g in extract_ngrams(text, n_set) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// A binary text classifier that can be fitted on samples.
pub trait Classifier: Sized + Send + Sync {
    type Config;

    fn fit(train: &[Sample], cfg: &Self::Config) -> Result<Self>;

    /// `(label, score)` where the score is larger for the positive class.
    fn predict(&self, text: &str) -> (Label, f64);

    fn predict_all(&self, texts: &[&str]) -> Vec<(Label, f64)> {
        texts.iter().map(|t| self.predict(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbConfig {
    pub n_set: BTreeSet<usize>,
    pub alpha: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig {
            n_set: DEFAULT_N_SET.into_iter().collect(),
            alpha: 1.0,
        }
    }
}

/// Multinomial Naive Bayes over n-gram counts with add-alpha smoothing.
///
/// Each class distributes its mass over the training vocabulary plus one
/// shared slot for unseen n-grams:
/// `p(g | c) = (count_c(g) + alpha) / (total_c + alpha (|V| + 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramNB {
    pub n_set: BTreeSet<usize>,
    pub alpha: f64,
    /// Log-priors, indexed by class.
    pub class_priors: [f64; 2],
    /// Per class, log-probability of each vocabulary n-gram.
    pub cond_logprob: [BTreeMap<String, f64>; 2],
    /// Per class, log-probability of any n-gram outside the vocabulary.
    pub unseen_logprob: [f64; 2],
}

pub fn fit_nb(train: &[Sample], n_set: &BTreeSet<usize>, alpha: f64) -> Result<NGramNB> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
    }
    if n_set.is_empty() || n_set.contains(&0) {
        return Err(Error::Config(format!("n-gram orders must be positive and non-empty, got {n_set:?}")));
    }
    let mut docs = [0usize; 2];
    let mut counts: [BTreeMap<String, usize>; 2] = Default::default();
    for s in train {
        let c = s
            .label
            .class()
            .ok_or_else(|| Error::Invalid(format!("sample `{}` has the ignore label", s.id)))?;
        docs[c] += 1;
        for g in extract_ngrams(&s.text, n_set) {
            *counts[c].entry(g).or_insert(0) += 1;
        }
    }
    for (class, &n) in docs.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass { class: class as u8 });
        }
    }
    let vocab: BTreeSet<&String> = counts[0].keys().chain(counts[1].keys()).collect();
    let n_docs = (docs[0] + docs[1]) as f64;
    let slots = (vocab.len() + 1) as f64;

    let mut cond_logprob: [BTreeMap<String, f64>; 2] = Default::default();
    let mut unseen_logprob = [0.0; 2];
    for c in 0..2 {
        let total: usize = counts[c].values().sum();
        let log_denom = (total as f64 + alpha * slots).ln();
        cond_logprob[c] = vocab
            .iter()
            .map(|g| {
                let k = counts[c].get(*g).copied().unwrap_or(0) as f64;
                ((*g).clone(), (k + alpha).ln() - log_denom)
            })
            .collect();
        unseen_logprob[c] = alpha.ln() - log_denom;
    }
    Ok(NGramNB {
        n_set: n_set.clone(),
        alpha,
        class_priors: [(docs[0] as f64 / n_docs).ln(), (docs[1] as f64 / n_docs).ln()],
        cond_logprob,
        unseen_logprob,
    })
}

/// `(label, log_odds)` with `log_odds = score(1) - score(0)`; ties go to 0.
pub fn predict_nb(model: &NGramNB, text: &str) -> (Label, f64) {
    let scores = model.scores(text);
    let log_odds = scores[1] - scores[0];
    let label = if scores[1] > scores[0] { Label::Positive } else { Label::Negative };
    (label, log_odds)
}

impl NGramNB {
    pub fn vocab_size(&self) -> usize {
        self.cond_logprob[0].len()
    }

    /// Unnormalized log-posterior per class.
    pub fn scores(&self, text: &str) -> [f64; 2] {
        let mut s = self.class_priors;
        for g in extract_ngrams(text, &self.n_set) {
            for (c, score) in s.iter_mut().enumerate() {
                *score += self.cond_logprob[c].get(&g).copied().unwrap_or(self.unseen_logprob[c]);
            }
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, NB_FORMAT, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        checkpoint::load(path, NB_FORMAT)
    }
}

impl Classifier for NGramNB {
    type Config = NbConfig;

    fn fit(train: &[Sample], cfg: &NbConfig) -> Result<Self> {
        fit_nb(train, &cfg.n_set, cfg.alpha)
    }

    fn predict(&self, text: &str) -> (Label, f64) {
        predict_nb(self, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Origin, Task};
    use proptest::prelude::*;

    fn ns(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn sample(i: usize, text: &str, label: Label) -> Sample {
        Sample::new(format!("d{i}"), text, Task::Humor, label, Origin::CodeMixed, "toy")
    }

    fn sorted(mut v: Vec<String>) -> Vec<String> {
        v.sort();
        v
    }

    #[test]
    fn ngram_enumeration() {
        assert_eq!(
            sorted(extract_ngrams("a b c", &ns(&[1, 2]))),
            sorted(["a", "b", "c", "a_b", "b_c"].map(String::from).to_vec())
        );
        assert!(extract_ngrams("a", &ns(&[2, 3])).is_empty());
        assert_eq!(extract_ngrams("a a", &ns(&[1])), vec!["a", "a"]);
        assert!(extract_ngrams("", &ns(&[1, 2, 3])).is_empty());
    }

    #[test]
    fn four_doc_worked_example() {
        // class 1: "x x", "x y"  -> x:3 y:1 total 4
        // class 0: "y", "y y"    -> x:0 y:3 total 3
        // |V| = 2 plus the unseen slot
        let train = [
            sample(0, "x x", Label::Positive),
            sample(1, "x y", Label::Positive),
            sample(2, "y", Label::Negative),
            sample(3, "y y", Label::Negative),
        ];
        let m = fit_nb(&train, &ns(&[1]), 1.0).unwrap();
        let p = |c: usize, g: &str| m.cond_logprob[c][g].exp();
        assert!((p(1, "x") - 4.0 / 7.0).abs() < 1e-12);
        assert!((p(1, "y") - 2.0 / 7.0).abs() < 1e-12);
        assert!((m.unseen_logprob[1].exp() - 1.0 / 7.0).abs() < 1e-12);
        assert!((p(0, "x") - 1.0 / 6.0).abs() < 1e-12);
        assert!((p(0, "y") - 4.0 / 6.0).abs() < 1e-12);
        assert!((m.unseen_logprob[0].exp() - 1.0 / 6.0).abs() < 1e-12);
        assert!((m.class_priors[0].exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_normalize() {
        let train = [
            sample(0, "a b c a", Label::Positive),
            sample(1, "b c d", Label::Negative),
            sample(2, "e", Label::Negative),
        ];
        let m = fit_nb(&train, &ns(&[1, 2, 3]), 0.5).unwrap();
        for c in 0..2 {
            let mass: f64 = m.cond_logprob[c].values().map(|l| l.exp()).sum::<f64>() + m.unseen_logprob[c].exp();
            assert!((mass - 1.0).abs() < 1e-9);
        }
        assert!((m.class_priors.iter().map(|l| l.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn priors_three_to_one() {
        let train = [
            sample(0, "a", Label::Positive),
            sample(1, "b", Label::Positive),
            sample(2, "c", Label::Positive),
            sample(3, "d", Label::Negative),
        ];
        let m = fit_nb(&train, &ns(&[1]), 1.0).unwrap();
        assert!((m.class_priors[1] - (0.75f64).ln()).abs() < 1e-15);
        assert!((m.class_priors[0] - (0.25f64).ln()).abs() < 1e-15);
        // empty text: priors alone
        let (label, lo) = predict_nb(&m, "");
        assert_eq!(label, Label::Positive);
        assert!((lo - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn funny_only_in_positive() {
        let train = [
            sample(0, "so funny", Label::Positive),
            sample(1, "that is", Label::Negative),
            sample(2, "so it is", Label::Negative),
        ];
        let m = fit_nb(&train, &ns(&[1]), 1.0).unwrap();
        // V = {so, funny, that, is, it}; class 1 total 2, class 0 total 5
        // score1 = ln(1/3) + 2 ln(2/8), score0 = ln(2/3) + 2 ln(1/11)
        let (label, lo) = predict_nb(&m, "funny funny");
        let want = ((1.0f64 / 3.0).ln() + 2.0 * (2.0f64 / 8.0).ln()) - ((2.0f64 / 3.0).ln() + 2.0 * (1.0f64 / 11.0).ln());
        assert_eq!(label, Label::Positive);
        assert!((lo - want).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_negative() {
        let train = [sample(0, "a", Label::Positive), sample(1, "b", Label::Negative)];
        let m = fit_nb(&train, &ns(&[1]), 1.0).unwrap();
        assert_eq!(predict_nb(&m, "zzz"), (Label::Negative, 0.0));
    }

    #[test]
    fn single_class_rejected() {
        let train = [sample(0, "a", Label::Positive)];
        assert!(matches!(fit_nb(&train, &ns(&[1]), 1.0), Err(Error::EmptyClass { class: 0 })));
        assert!(fit_nb(&train, &ns(&[]), 1.0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let train = [sample(0, "a b", Label::Positive), sample(1, "b c", Label::Negative)];
        let m = fit_nb(&train, &ns(&[1, 2]), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.json");
        m.save(&path).unwrap();
        assert_eq!(NGramNB::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format\":\"codemix-ngram-nb\""));
    }

    fn docs_strategy() -> impl Strategy<Value = Vec<(Vec<u8>, bool)>> {
        prop::collection::vec((prop::collection::vec(0u8..8, 0..7), any::<bool>()), 2..16)
    }

    fn to_samples(docs: &[(Vec<u8>, bool)]) -> Vec<Sample> {
        let mut out: Vec<Sample> = docs
            .iter()
            .enumerate()
            .map(|(i, (toks, pos))| {
                let text: Vec<String> = toks.iter().map(|t| format!("t{t}")).collect();
                let label = if *pos { Label::Positive } else { Label::Negative };
                sample(i, &text.join(" "), label)
            })
            .collect();
        out.push(sample(900, "t0", Label::Positive));
        out.push(sample(901, "t1", Label::Negative));
        out
    }

    proptest! {
        #[test]
        fn ngram_count_formula(toks in prop::collection::vec(0u8..5, 0..10), n_set in prop::collection::btree_set(1usize..5, 1..4)) {
            let text: Vec<String> = toks.iter().map(|t| format!("w{t}")).collect();
            let got = extract_ngrams(&text.join(" "), &n_set).len();
            let want: usize = n_set.iter().map(|&n| (toks.len() + 1).saturating_sub(n)).sum();
            prop_assert_eq!(got, want);
        }

        // Doubling every count scales numerators and denominators by two when
        // the pseudo-count is doubled as well; the decision function is unchanged.
        #[test]
        fn duplication_invariance(docs in docs_strategy(), query in prop::collection::vec(0u8..10, 0..6)) {
            let once = to_samples(&docs);
            let mut twice = once.clone();
            twice.extend(once.iter().map(|s| Sample { id: format!("{}-dup", s.id), ..s.clone() }));
            let n_set = ns(&[1, 2]);
            let a = fit_nb(&once, &n_set, 1.0).unwrap();
            let b = fit_nb(&twice, &n_set, 2.0).unwrap();
            let q: Vec<String> = query.iter().map(|t| format!("t{t}")).collect();
            let (la, oa) = predict_nb(&a, &q.join(" "));
            let (lb, ob) = predict_nb(&b, &q.join(" "));
            prop_assert!((oa - ob).abs() < 1e-9);
            if oa.abs() > 1e-9 {
                prop_assert_eq!(la, lb);
            }
        }
    }
}
