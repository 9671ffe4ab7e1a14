//! Positive-class precision, recall and F1, and an approximate
//! randomization test for the F1 difference of two systems.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::error::{Error, Result};

pub const MIN_PERMUTATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Predictions that could not be mapped to a label; already folded into
    /// `fp` / `fn_` as wrong answers.
    #[serde(default)]
    pub abstained: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let (precision, recall, f1) = scores(tp, fp, fn_);
        EvalReport {
            tp,
            fp,
            fn_,
            tn,
            abstained: 0,
            precision,
            recall,
            f1,
            p_value: None,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let p = ratio(tp, fp);
    let r = ratio(tp, fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

fn check_labels(name: &str, v: &[u8]) -> Result<()> {
    match v.iter().find(|&&x| x > 1) {
        Some(x) => Err(Error::Invalid(format!("{name} must be 0/1, found {x}"))),
        None => Ok(()),
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Invalid(format!("{a} predictions but {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::Invalid("no predictions to evaluate".into()));
    }
    Ok(())
}

/// Metrics of the positive class (label 1).
pub fn prf1(preds: &[u8], golds: &[u8]) -> Result<EvalReport> {
    check_lengths(preds.len(), golds.len())?;
    check_labels("predictions", preds)?;
    check_labels("gold labels", golds)?;
    let mut c = [[0usize; 2]; 2];
    for (&p, &g) in preds.iter().zip(golds) {
        c[g as usize][p as usize] += 1;
    }
    Ok(EvalReport::from_counts(c[1][1], c[0][1], c[1][0], c[0][0]))
}

/// Like [`prf1`], with `None` for an abstention. An abstention is always
/// wrong: a false negative on a positive item, a false positive otherwise.
pub fn prf1_with_abstain(preds: &[Option<u8>], golds: &[u8]) -> Result<EvalReport> {
    check_lengths(preds.len(), golds.len())?;
    check_labels("gold labels", golds)?;
    let resolved: Vec<u8> = preds
        .iter()
        .zip(golds)
        .map(|(p, &g)| p.unwrap_or(1 - g))
        .collect();
    let mut r = prf1(&resolved, golds)?;
    r.abstained = preds.iter().filter(|p| p.is_none()).count();
    Ok(r)
}

fn f1_of(tp: usize, fp: usize, fn_: usize) -> f64 {
    scores(tp, fp, fn_).2
}

/// Two-sided approximate randomization test on the positive-class F1
/// difference. Each permutation swaps the two systems' predictions on every
/// item independently with probability 1/2;
/// `p = (1 + #{|d_perm| >= |d_obs|}) / (1 + n_perm)`.
pub fn significance(preds_a: &[u8], preds_b: &[u8], golds: &[u8], n_perm: usize, seed: u64) -> Result<f64> {
    check_lengths(preds_a.len(), golds.len())?;
    check_lengths(preds_b.len(), golds.len())?;
    check_labels("predictions", preds_a)?;
    check_labels("predictions", preds_b)?;
    check_labels("gold labels", golds)?;
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::Config(format!("need at least {MIN_PERMUTATIONS} permutations, got {n_perm}")));
    }

    // Per-item contribution to (tp, fp, fn) for each system.
    let contrib = |p: u8, g: u8| -> [usize; 3] {
        match (p, g) {
            (1, 1) => [1, 0, 0],
            (1, 0) => [0, 1, 0],
            (0, 1) => [0, 0, 1],
            _ => [0, 0, 0],
        }
    };
    let ca: Vec<[usize; 3]> = preds_a.iter().zip(golds).map(|(&p, &g)| contrib(p, g)).collect();
    let cb: Vec<[usize; 3]> = preds_b.iter().zip(golds).map(|(&p, &g)| contrib(p, g)).collect();
    let sum = |c: &[[usize; 3]]| c.iter().fold([0; 3], |acc, x| [acc[0] + x[0], acc[1] + x[1], acc[2] + x[2]]);
    let (sa, sb) = (sum(&ca), sum(&cb));
    let observed = (f1_of(sa[0], sa[1], sa[2]) - f1_of(sb[0], sb[1], sb[2])).abs();
    // guard against rounding making an equal permuted difference look smaller
    let threshold = observed - 1e-12;

    let differing: Vec<usize> = (0..golds.len()).filter(|&i| ca[i] != cb[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        let (mut a, mut b) = (sa, sb);
        let mut bits = 0u64;
        for (k, &i) in differing.iter().enumerate() {
            if k % 64 == 0 {
                bits = rng.next_u64();
            }
            if bits & 1 == 1 {
                for j in 0..3 {
                    a[j] = a[j] - ca[i][j] + cb[i][j];
                    b[j] = b[j] - cb[i][j] + ca[i][j];
                }
            }
            bits >>= 1;
        }
        let d = (f1_of(a[0], a[1], a[2]) - f1_of(b[0], b[1], b[2])).abs();
        if d >= threshold {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + n_perm) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub task: Task,
    pub pred: u8,
    pub prob: f64,
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if r.pred > 1 {
            return Err(Error::InvalidRecord {
                line: i + 1,
                message: format!("pred must be 0 or 1, got {}", r.pred),
            });
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect() {
        let g = [1, 0, 1, 1, 0];
        let r = prf1(&g, &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_positive_sarcasm_test_split() {
        let golds: Vec<u8> = (0..525).map(|i| u8::from(i < 50)).collect();
        let r = prf1(&vec![1; 525], &golds).unwrap();
        assert!((r.precision - 50.0 / 525.0).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.1739).abs() < 5e-4, "{}", r.f1);
    }

    #[test]
    fn hand_counts() {
        let r = EvalReport::from_counts(8, 2, 2, 0);
        assert!((r.precision - 0.8).abs() < 1e-15);
        assert!((r.recall - 0.8).abs() < 1e-15);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        assert_eq!(EvalReport::from_counts(0, 0, 3, 2).f1, 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(prf1(&[1, 0], &[1]).is_err());
        assert!(prf1(&[], &[]).is_err());
        assert!(prf1(&[2], &[1]).is_err());
    }

    #[test]
    fn abstentions_are_wrong() {
        let r = prf1_with_abstain(&[Some(1), None, None, Some(0)], &[1, 1, 0, 0]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn, r.abstained), (1, 1, 1, 1, 2));
    }

    #[test]
    fn identical_systems() {
        let g: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let a: Vec<u8> = (0..50).map(|i| (i % 2 == 0) as u8).collect();
        assert_eq!(significance(&a, &a, &g, 1000, 3).unwrap(), 1.0);
    }

    #[test]
    fn clear_winner() {
        let g: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let wrong: Vec<u8> = g.iter().map(|x| 1 - x).collect();
        let p = significance(&g, &wrong, &g, 10_000, 1).unwrap();
        assert!(p < 0.05, "{p}");
        assert!(p > 0.0);
        assert!(significance(&g, &wrong, &g, 999, 1).is_err());
    }

    #[test]
    fn swapping_systems_gives_same_p() {
        let g: Vec<u8> = (0..80).map(|i| (i % 3 == 0) as u8).collect();
        let a: Vec<u8> = (0..80).map(|i| (i % 4 != 1) as u8 & g[i] | (i % 7 == 0) as u8).collect();
        let b: Vec<u8> = (0..80).map(|i| (i % 2) as u8).collect();
        let pab = significance(&a, &b, &g, 10_000, 9).unwrap();
        let pba = significance(&b, &a, &g, 10_000, 9).unwrap();
        assert!((pab - pba).abs() <= 0.01);
    }

    #[test]
    fn prediction_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        let recs = vec![
            PredictionRecord { id: "a".into(), task: Task::Humor, pred: 1, prob: 0.75 },
            PredictionRecord { id: "b".into(), task: Task::Hate, pred: 0, prob: 0.1 },
        ];
        write_predictions(&path, &recs).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), recs);
        std::fs::write(&path, "{\"id\":\"a\",\"task\":\"humor\",\"pred\":3,\"prob\":0.5}\n").unwrap();
        assert!(matches!(read_predictions(&path), Err(Error::InvalidRecord { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let r = prf1(&p, &g).unwrap();
            let count = |pp: u8, gg: u8| p.iter().zip(&g).filter(|(a, b)| **a == pp && **b == gg).count();
            prop_assert_eq!((r.tp, r.fp, r.fn_, r.tn), (count(1, 1), count(1, 0), count(0, 1), count(0, 0)));
            prop_assert_eq!(r.total(), p.len());
        }

        #[test]
        fn f1_permutation_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..40), rot in 0usize..40) {
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k = rot % p.len();
            let (mut p2, mut g2) = (p.clone(), g.clone());
            p2.rotate_left(k);
            g2.rotate_left(k);
            prop_assert_eq!(prf1(&p, &g).unwrap().f1, prf1(&p2, &g2).unwrap().f1);
        }
    }
}
