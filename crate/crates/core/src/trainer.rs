//! Training loops with early stopping, multi-seed aggregation and a
//! finite-difference gradient checker.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{batch_iter, Label, MultiTaskBatch, MultiTaskRow, Task};
use crate::encoder::Tokenizer;
use crate::error::{Error, Result};
use crate::eval::{prf1, EvalReport};
use crate::mtl::{JointLossConfig, RegLayer, TaskLossSpec, TaskModel};
use crate::optim::{AnyOptimizer, Optimizer, OptimizerKind};

pub const LR_GRID: [f64; 6] = [2e-6, 2e-5, 2e-4, 3e-3, 9e-3, 1e-2];
pub const GAMMA_GRID: [f64; 2] = [0.9, 0.8];
pub const BATCH_GRID: [usize; 3] = [16, 32, 64];
pub const SEQ_LEN_GRID: [usize; 3] = [64, 128, 248];
pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 87];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub scheduler_gamma: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    pub reg_layer: RegLayer,
    /// Inverse-frequency class weights from the training counts; equal
    /// weights when off.
    pub class_weighted: bool,
    /// Task whose validation F1 drives model selection; the model's first
    /// task when unset.
    pub primary_task: Option<Task>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-3,
            optimizer: OptimizerKind::Adamw,
            weight_decay: 0.01,
            scheduler_gamma: 0.9,
            batch_size: 32,
            seq_len: 64,
            patience: 4,
            max_epochs: 30,
            seeds: DEFAULT_SEEDS.to_vec(),
            lambda: 5e-3,
            reg_layer: RegLayer::Last,
            class_weighted: true,
            primary_task: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.scheduler_gamma > 0.0 && self.scheduler_gamma <= 1.0) {
            return bad(format!("scheduler_gamma must lie in (0, 1], got {}", self.scheduler_gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.seq_len < 2 {
            return bad(format!("seq_len must be at least 2, got {}", self.seq_len));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        Ok(())
    }

    /// Names of settings that lie outside the published search grids.
    pub fn off_grid(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !LR_GRID.contains(&self.lr) {
            out.push("lr");
        }
        if !GAMMA_GRID.contains(&self.scheduler_gamma) {
            out.push("scheduler_gamma");
        }
        if !BATCH_GRID.contains(&self.batch_size) {
            out.push("batch_size");
        }
        if !SEQ_LEN_GRID.contains(&self.seq_len) {
            out.push("seq_len");
        }
        if !crate::mtl::LAMBDA_GRID.contains(&self.lambda) {
            out.push("lambda");
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Joint-loss settings for a training view: the configured λ and layer,
    /// and class weights from that view's per-task counts.
    pub fn loss_config(&self, train: &[MultiTaskRow], tasks: &[Task]) -> Result<JointLossConfig> {
        let mut specs = Vec::new();
        for &task in tasks {
            let (mut pos, mut neg) = (0, 0);
            for l in train.iter().filter_map(|r| r.labels.get(&task)) {
                match l {
                    Label::Positive => pos += 1,
                    Label::Negative => neg += 1,
                    Label::Ignore => {}
                }
            }
            specs.push(if self.class_weighted {
                TaskLossSpec::from_counts(task, pos, neg)?
            } else {
                TaskLossSpec::uniform(task)
            });
        }
        let mut cfg = JointLossConfig::new(self.lambda, specs);
        cfg.reg_layer = self.reg_layer;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a score to maximize. Only a strict
/// improvement resets the counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if !(score > b) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best.map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_reg: f64,
    pub val_f1: BTreeMap<Task, f64>,
    pub primary_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub chosen_epoch: Option<usize>,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    /// One JSON line per epoch, flagged with whether it was the chosen one.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            #[serde(flatten)]
            record: &'a EpochRecord,
            chosen: bool,
        }
        let path = path.as_ref();
        let mut out = Vec::new();
        for r in &self.epochs {
            serde_json::to_writer(
                &mut out,
                &Line {
                    record: r,
                    chosen: Some(r.epoch) == self.chosen_epoch,
                },
            )?;
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

/// Positive-class probabilities for every row and every model task.
pub fn predict_rows<M: TaskModel>(
    model: &M,
    rows: &[MultiTaskRow],
    tokenizer: &Tokenizer,
    seq_len: usize,
) -> Result<BTreeMap<Task, Vec<f64>>> {
    let mut out: BTreeMap<Task, Vec<f64>> = model.tasks().into_iter().map(|t| (t, Vec::new())).collect();
    for chunk in rows.chunks(64) {
        let batch = MultiTaskBatch::from_rows(chunk, &[], tokenizer, seq_len)?;
        for (t, p) in model.predict_proba(&batch.token_ids, &batch.attention_mask)? {
            out.entry(t).or_default().extend(p);
        }
    }
    Ok(out)
}

/// Per-task report over the rows labelled for that task; a task with no
/// labelled rows is left out. Predictions threshold the probability at 0.5.
pub fn evaluate_rows<M: TaskModel>(
    model: &M,
    rows: &[MultiTaskRow],
    tokenizer: &Tokenizer,
    seq_len: usize,
) -> Result<BTreeMap<Task, EvalReport>> {
    let probs = predict_rows(model, rows, tokenizer, seq_len)?;
    let mut out = BTreeMap::new();
    for (task, p) in probs {
        let (mut preds, mut golds) = (Vec::new(), Vec::new());
        for (row, prob) in rows.iter().zip(&p) {
            if let Some(c) = row.labels.get(&task).and_then(|l| l.class()) {
                preds.push(u8::from(*prob > 0.5));
                golds.push(c as u8);
            }
        }
        if !golds.is_empty() {
            out.insert(task, prf1(&preds, &golds)?);
        }
    }
    Ok(out)
}

/// Train with shuffled mixed-task batches, per-epoch exponential learning
/// rate decay and early stopping on the primary task's validation F1. The
/// parameters of the best epoch are returned.
pub fn train<M: TaskModel>(
    model: M,
    train_rows: &[MultiTaskRow],
    val_rows: &[MultiTaskRow],
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(M, TrainHistory)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((model, history));
    }
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Invalid("training and validation sets must be non-empty".into()));
    }
    let tasks = model.tasks();
    let primary = cfg.primary_task.unwrap_or(tasks[0]);
    if !tasks.contains(&primary) {
        return Err(Error::Config(format!("primary task {primary} is not one of the model's tasks")));
    }
    let loss_cfg = cfg.loss_config(train_rows, &tasks)?;

    let mut model = model;
    let mut best = model.clone();
    let mut opt = AnyOptimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut lr = cfg.lr;

    for epoch in 1..=cfg.max_epochs {
        opt.set_lr(lr);
        let batches = batch_iter(train_rows, cfg.batch_size, epoch_seed(seed, epoch), tokenizer, cfg.seq_len)?;
        let (mut loss_sum, mut reg_sum, mut n) = (0.0, 0.0, 0usize);
        for (step, batch) in batches.enumerate() {
            let (loss, grad) = model.loss_and_grad(&batch, &loss_cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: loss.total,
                });
            }
            opt.step(&mut model, &grad)?;
            loss_sum += loss.total;
            reg_sum += loss.reg;
            n += 1;
        }
        let reports = evaluate_rows(&model, val_rows, tokenizer, cfg.seq_len)?;
        let primary_f1 = reports.get(&primary).map_or(0.0, |r| r.f1);
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n.max(1) as f64,
            train_reg: reg_sum / n.max(1) as f64,
            val_f1: reports.iter().map(|(t, r)| (*t, r.f1)).collect(),
            primary_f1,
        });
        match stopper.update(epoch, primary_f1) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
        lr *= cfg.scheduler_gamma;
    }
    history.chosen_epoch = stopper.best_epoch();
    history.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((best, history))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(epoch as u64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: BTreeMap<Task, EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub per_seed: Vec<SeedRun>,
    pub mean: BTreeMap<Task, MeanMetrics>,
}

/// Average per-task precision, recall and F1 over runs.
pub fn summarize(per_seed: Vec<SeedRun>) -> Result<SeedSummary> {
    if per_seed.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut sums: BTreeMap<Task, (MeanMetrics, usize)> = BTreeMap::new();
    for run in &per_seed {
        for (t, r) in &run.reports {
            let e = sums.entry(*t).or_default();
            e.0.precision += r.precision;
            e.0.recall += r.recall;
            e.0.f1 += r.f1;
            e.1 += 1;
        }
    }
    let mean = sums
        .into_iter()
        .map(|(t, (m, k))| {
            let k = k as f64;
            (
                t,
                MeanMetrics {
                    precision: m.precision / k,
                    recall: m.recall / k,
                    f1: m.f1 / k,
                },
            )
        })
        .collect();
    Ok(SeedSummary { per_seed, mean })
}

/// Run `run` once per seed and aggregate the per-task reports it returns.
pub fn run_seeds<F>(seeds: &[u64], mut run: F) -> Result<SeedSummary>
where
    F: FnMut(u64) -> Result<BTreeMap<Task, EvalReport>>,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let per_seed = seeds
        .iter()
        .map(|&seed| Ok(SeedRun { seed, reports: run(seed)? }))
        .collect::<Result<Vec<_>>>()?;
    summarize(per_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub max_rel_err: f64,
    pub checked: Vec<CoordinateCheck>,
    /// Coordinates of non-trainable tensors inspected.
    pub frozen_coordinates: usize,
    /// Of those, how many had a non-zero analytic gradient.
    pub frozen_nonzero: usize,
}

/// Gradients below this magnitude are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare the analytic gradient of the joint loss with central differences
/// `(L(x + h) - L(x - h)) / 2h` on a random sample of at least `n_coords`
/// coordinates drawn from every trainable tensor. Every coordinate of every
/// frozen tensor is checked for an exactly zero analytic gradient.
pub fn grad_check<M: TaskModel>(
    model: &M,
    batch: &MultiTaskBatch,
    loss_cfg: &JointLossConfig,
    step: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let (_, grad) = model.loss_and_grad(batch, loss_cfg)?;
    let grads = grad.tensors();
    let meta: Vec<(String, usize, bool)> = model
        .tensors()
        .into_iter()
        .map(|(n, m, t)| (n, m.len(), t))
        .collect();

    let (mut frozen_coordinates, mut frozen_nonzero) = (0, 0);
    for ((_, len, trainable), (_, g, _)) in meta.iter().zip(&grads) {
        if !trainable {
            frozen_coordinates += len;
            frozen_nonzero += g.as_slice().iter().filter(|v| **v != 0.0).count();
        }
    }

    let trainable: Vec<usize> = (0..meta.len()).filter(|&i| meta[i].2 && meta[i].1 > 0).collect();
    if trainable.is_empty() {
        return Err(Error::Invalid("model has no trainable parameters".into()));
    }
    let per_tensor = n_coords.div_ceil(trainable.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::new();
    for &t in &trainable {
        let len = meta[t].1;
        let mut idx = index::sample(&mut rng, len, per_tensor.min(len)).into_vec();
        idx.sort_unstable();
        picks.extend(idx.into_iter().map(|i| (t, i)));
    }

    let mut probe = model.clone();
    let mut checked = Vec::with_capacity(picks.len());
    let mut max_rel_err: f64 = 0.0;
    for (t, i) in picks {
        let original = probe.tensors()[t].1.as_slice()[i];
        let mut eval_at = |x: f64| -> Result<f64> {
            probe.tensors_mut()[t].1.as_mut_slice()[i] = x;
            Ok(probe.loss(batch, loss_cfg)?.total)
        };
        let plus = eval_at(original + step)?;
        let minus = eval_at(original - step)?;
        eval_at(original)?;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads[t].1.as_slice()[i];
        let rel_err = relative_error(analytic, numeric);
        max_rel_err = max_rel_err.max(rel_err);
        checked.push(CoordinateCheck {
            tensor: meta[t].0.clone(),
            index: i,
            analytic,
            numeric,
            rel_err,
        });
    }
    Ok(GradCheckReport {
        step,
        max_rel_err,
        checked,
        frozen_coordinates,
        frozen_nonzero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_trace() {
        let mut s = EarlyStopping::new(4);
        let trace = [0.5, 0.6, 0.6, 0.6, 0.6, 0.6];
        let mut stopped_at = None;
        for (i, f) in trace.iter().enumerate() {
            if s.update(i + 1, *f) == StopDecision::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(6));
        assert_eq!(s.best_epoch(), Some(2));
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = EarlyStopping::new(2);
        assert_eq!(s.update(1, 0.1), StopDecision::Improved);
        assert_eq!(s.update(2, 0.1), StopDecision::Continue);
        assert_eq!(s.update(3, 0.2), StopDecision::Improved);
        assert_eq!(s.update(4, 0.0), StopDecision::Continue);
        assert_eq!(s.update(5, 0.2), StopDecision::Stop);
        assert_eq!(s.best_epoch(), Some(3));
    }

    #[test]
    fn defaults_on_grid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert!(c.off_grid().is_empty());
        assert_eq!(c.patience, 4);
        assert_eq!(c.seeds.len(), 3);
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            primary_task: Some(Task::Sarcasm),
            ..TrainConfig::default()
        };
        let text = c.to_toml_string().unwrap();
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), c);
        let partial = TrainConfig::from_toml_str("lr = 0.0002\noptimizer = \"sgd\"\n").unwrap();
        assert_eq!(partial.lr, 2e-4);
        assert_eq!(partial.batch_size, 32);
        assert!(TrainConfig::from_toml_str("patience = 0").is_err());
        assert!(TrainConfig::from_toml_str("learning_rate = 1.0").is_err());
    }

    #[test]
    fn seed_means() {
        let report = |f1: f64| {
            let mut r = EvalReport::from_counts(1, 0, 0, 1);
            r.f1 = f1;
            BTreeMap::from([(Task::Humor, r)])
        };
        let f1s = [0.80, 0.82, 0.84];
        let mut i = 0;
        let s = run_seeds(&[1, 2, 3], |_| {
            i += 1;
            Ok(report(f1s[i - 1]))
        })
        .unwrap();
        assert!((s.mean[&Task::Humor].f1 - 0.82).abs() < 1e-12);
        let one = run_seeds(&[5], |_| Ok(report(0.7))).unwrap();
        assert_eq!(one.mean[&Task::Humor].f1, 0.7);
        assert!(run_seeds(&[], |_| Ok(report(0.7))).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }
}
