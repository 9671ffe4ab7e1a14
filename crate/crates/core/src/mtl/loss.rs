use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Task};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};

/// The regularization strengths explored for soft parameter sharing.
pub const LAMBDA_GRID: [f64; 5] = [0.0, 5e-1, 5e-2, 5e-3, 5e-4];

/// Class-weighted cross-entropy settings for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskLossSpec {
    pub task: Task,
    /// `[w_neg, w_pos]`
    pub class_weights: [f64; 2],
}

impl TaskLossSpec {
    /// Inverse-frequency weights from the training counts:
    /// `w_pos = N / (P + N)`, `w_neg = P / (P + N)`.
    pub fn from_counts(task: Task, positives: usize, negatives: usize) -> Result<Self> {
        let total = (positives + negatives) as f64;
        if positives == 0 || negatives == 0 {
            return Err(Error::Invalid(format!(
                "{task}: class weights need both classes (P = {positives}, N = {negatives})"
            )));
        }
        Ok(TaskLossSpec {
            task,
            class_weights: [positives as f64 / total, negatives as f64 / total],
        })
    }

    pub fn uniform(task: Task) -> Self {
        TaskLossSpec {
            task,
            class_weights: [1.0, 1.0],
        }
    }
}

/// Which layer of each task-specific top module the sharing penalty compares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegLayer {
    #[default]
    Last,
    SecondLast,
}

impl RegLayer {
    /// Index into a top module of `n_top` layers.
    pub fn index(self, n_top: usize) -> Result<usize> {
        let offset = match self {
            RegLayer::Last => 1,
            RegLayer::SecondLast => 2,
        };
        n_top
            .checked_sub(offset)
            .ok_or_else(|| Error::Config(format!("{self:?} layer requested but the top module has {n_top} layers")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLossConfig {
    pub lambda: f64,
    pub reg_layer: RegLayer,
    pub task_specs: Vec<TaskLossSpec>,
}

impl JointLossConfig {
    pub fn new(lambda: f64, task_specs: Vec<TaskLossSpec>) -> Self {
        JointLossConfig {
            lambda,
            reg_layer: RegLayer::Last,
            task_specs,
        }
    }

    /// Weights for `task`; unlisted tasks get equal weights.
    pub fn weights(&self, task: Task) -> [f64; 2] {
        self.task_specs
            .iter()
            .find(|s| s.task == task)
            .map_or([1.0, 1.0], |s| s.class_weights)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be a finite non-negative number, got {}", self.lambda)));
        }
        if let Some(s) = self
            .task_specs
            .iter()
            .find(|s| s.class_weights.iter().any(|w| !(*w > 0.0)))
        {
            return Err(Error::Config(format!("{}: class weights must be positive", s.task)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_task: BTreeMap<Task, f64>,
    pub reg: f64,
}

/// Sum of the class weights of the non-ignored rows.
pub(crate) fn weight_mass(labels: &[Label], weights: [f64; 2]) -> f64 {
    labels.iter().filter_map(|l| l.class()).map(|c| weights[c]).sum()
}

/// Loss contribution and logit gradient of one row, given the task's weight
/// mass. Ignored rows contribute exactly nothing.
pub(crate) fn row_ce(logits: &[f64], label: Label, weights: [f64; 2], mass: f64) -> (f64, [f64; 2]) {
    let Some(c) = label.class() else {
        return (0.0, [0.0, 0.0]);
    };
    if mass <= 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let lse = log_sum_exp(logits);
    let scale = weights[c] / mass;
    let loss = scale * (lse - logits[c]);
    let mut g = [(logits[0] - lse).exp(), (logits[1] - lse).exp()];
    g[c] -= 1.0;
    (loss, [g[0] * scale, g[1] * scale])
}

/// Class-weighted cross-entropy: `sum_i w_{y_i} CE_i / sum_i w_{y_i}` over
/// rows whose label is not IGNORE; zero when every row is ignored.
pub fn weighted_cross_entropy(logits: &Matrix, labels: &[Label], weights: [f64; 2]) -> Result<f64> {
    if logits.rows() != labels.len() || logits.cols() != 2 {
        return Err(Error::Shape(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let mass = weight_mass(labels, weights);
    Ok((0..logits.rows())
        .map(|r| row_ce(logits.row(r), labels[r], weights, mass).0)
        .sum())
}

/// λ · Σ over unordered pairs of ‖W_i − W_j‖_F.
pub fn pairwise_penalty(lambda: f64, weights: &[Vec<&Matrix>]) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..weights.len() {
        for j in i + 1..weights.len() {
            total += frobenius_distance(&weights[i], &weights[j]);
        }
    }
    lambda * total
}

/// Frobenius norm of the difference of two equally shaped lists of
/// matrices viewed as one concatenated matrix.
pub fn frobenius_distance(a: &[&Matrix], b: &[&Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Combine logits and labels into per-task losses plus the penalty term.
pub fn assemble_loss(
    logits: &BTreeMap<Task, Matrix>,
    labels: &BTreeMap<Task, Vec<Label>>,
    cfg: &JointLossConfig,
    reg: f64,
) -> Result<LossBreakdown> {
    let mut per_task = BTreeMap::new();
    for (task, l) in logits {
        let loss = match labels.get(task) {
            Some(y) => weighted_cross_entropy(l, y, cfg.weights(*task))?,
            None => 0.0,
        };
        per_task.insert(*task, loss);
    }
    let total = per_task.values().sum::<f64>() + reg;
    Ok(LossBreakdown { total, per_task, reg })
}
