use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Label, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_ratio: f64, val_ratio: f64, test_ratio: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_ratio,
            val_ratio,
            test_ratio,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 80/10/10 partition used for every code-mixed dataset.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios must lie in [0,1]: {ratios:?}")));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Per-class (val, test) sizes for a class of `n` samples.
    pub fn held_out_sizes(&self, n: usize) -> (usize, usize) {
        let val = ((self.val_ratio * n as f64).round() as usize).min(n);
        let test = ((self.test_ratio * n as f64).round() as usize).min(n - val);
        (val, test)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Stratified train/val/test partition.
///
/// Within each class the held-out sizes are `round(ratio * class_count)` and
/// the remainder goes to train, so no sample is dropped. Which samples land
/// where is fixed by the seed; each part keeps the input order.
pub fn stratified_split(samples: &[Sample], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let Some(first) = samples.first() else {
        return Err(Error::EmptyClass { class: 0 });
    };
    if let Some(other) = samples.iter().find(|s| s.task != first.task) {
        return Err(Error::Invalid(format!(
            "split needs a single task, found {} and {}",
            first.task, other.task
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.label.is_ignore()) {
        return Err(Error::Invalid(format!("sample `{}` has the ignore label", s.id)));
    }

    // 0 = train, 1 = val, 2 = test
    let mut part = vec![0u8; samples.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (class, label) in [(0u8, Label::Negative), (1u8, Label::Positive)] {
        let mut idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].label == label)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyClass { class });
        }
        idx.shuffle(&mut rng);
        let (n_val, n_test) = spec.held_out_sizes(idx.len());
        for &i in &idx[..n_val] {
            part[i] = 1;
        }
        for &i in &idx[n_val..n_val + n_test] {
            part[i] = 2;
        }
    }

    let mut out = Split::default();
    for (s, p) in samples.iter().zip(part) {
        match p {
            0 => out.train.push(s.clone()),
            1 => out.val.push(s.clone()),
            _ => out.test.push(s.clone()),
        }
    }
    Ok(out)
}
