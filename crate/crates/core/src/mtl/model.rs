use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gate::{Gate, GateTrace};
use super::loss::{frobenius_distance, assemble_loss, pairwise_penalty, row_ce, weight_mass, JointLossConfig, LossBreakdown};
use crate::corpus::{Label, MultiTaskBatch, Task};
use crate::encoder::{
    backward_pooled, run_pooled, BottomTrace, Encoder, EncoderConfig, EncoderLayer, LayerCache, Linear,
};
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::params::{impl_parameters, join, Parameters};

/// Interface the trainer and gradient checker need from a model.
pub trait TaskModel: Parameters + Clone + Send + Sync {
    fn tasks(&self) -> Vec<Task>;

    /// Per-task `rows × 2` logits.
    fn forward_logits(&self, token_ids: &[Vec<u32>], mask: &[Vec<u8>]) -> Result<BTreeMap<Task, Matrix>>;

    /// Soft-sharing penalty (zero for models without task-specific tops).
    fn penalty(&self, cfg: &JointLossConfig) -> Result<f64>;

    /// Loss and its gradient, stored in a model-shaped value. Frozen tensors
    /// get exactly zero gradient.
    fn loss_and_grad(&self, batch: &MultiTaskBatch, cfg: &JointLossConfig) -> Result<(LossBreakdown, Self)>;

    fn loss(&self, batch: &MultiTaskBatch, cfg: &JointLossConfig) -> Result<LossBreakdown> {
        check_batch_tasks(&self.tasks(), batch)?;
        let logits = self.forward_logits(&batch.token_ids, &batch.attention_mask)?;
        assemble_loss(&logits, &batch.labels, cfg, self.penalty(cfg)?)
    }

    /// Positive-class probability per task and row.
    fn predict_proba(&self, token_ids: &[Vec<u32>], mask: &[Vec<u8>]) -> Result<BTreeMap<Task, Vec<f64>>> {
        let logits = self.forward_logits(token_ids, mask)?;
        Ok(logits
            .into_iter()
            .map(|(t, l)| {
                let p = (0..l.rows())
                    .map(|r| crate::linalg::sigmoid(l.get(r, 1) - l.get(r, 0)))
                    .collect();
                (t, p)
            })
            .collect())
    }
}

pub(crate) fn check_batch_tasks(model_tasks: &[Task], batch: &MultiTaskBatch) -> Result<()> {
    for t in batch.tasks() {
        if !model_tasks.contains(&t) {
            return Err(Error::Invalid(format!("batch carries labels for {t}, which the model has no head for")));
        }
    }
    Ok(())
}

/// How the task-specific top modules are initialized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopInit {
    /// Copies of the encoder's top layers.
    #[default]
    Replicate,
    /// Fresh random layers per task.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlConfig {
    pub encoder: EncoderConfig,
    pub tasks: Vec<Task>,
    pub gate_enabled: bool,
    pub top_init: TopInit,
    pub freeze_bottom: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBranch {
    pub top: Vec<EncoderLayer>,
    pub gate: Gate,
    /// `2 × D`
    pub head: Linear,
}

impl Parameters for TaskBranch {
    fn visit<'a>(&'a self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a Matrix, bool)) {
        for (i, l) in self.top.iter().enumerate() {
            l.visit(&join(prefix, &format!("top.{i}")), trainable, f);
        }
        self.gate.visit(&join(prefix, "gate"), trainable, f);
        self.head.visit(&join(prefix, "head"), trainable, f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a mut Matrix, bool)) {
        for (i, l) in self.top.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("top.{i}")), trainable, f);
        }
        self.gate.visit_mut(&join(prefix, "gate"), trainable, f);
        self.head.visit_mut(&join(prefix, "head"), trainable, f);
    }
}

impl TaskBranch {
    fn zeros_like(&self) -> Self {
        TaskBranch {
            top: self.top.iter().map(EncoderLayer::zeros_like).collect(),
            gate: self.gate.zeros_like(),
            head: self.head.zeros_like(),
        }
    }
}

/// Shared bottom module, a shared replica of the top layers (inside the
/// encoder), one top module per task, per-task gates and heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedMtl {
    pub encoder: Encoder,
    pub branches: BTreeMap<Task, TaskBranch>,
    pub gate_enabled: bool,
}

impl Parameters for GatedMtl {
    fn visit<'a>(&'a self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a Matrix, bool)) {
        self.encoder.visit(&join(prefix, "encoder"), trainable, f);
        for (t, b) in &self.branches {
            b.visit(&join(prefix, t.as_str()), trainable, f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a mut Matrix, bool)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), trainable, f);
        for (t, b) in self.branches.iter_mut() {
            b.visit_mut(&join(prefix, t.as_str()), trainable, f);
        }
    }
}

struct BranchTrace {
    caches: Vec<LayerCache>,
    h_task: Vec<f64>,
    gate: Option<GateTrace>,
    fused: Vec<f64>,
    logits: Vec<f64>,
}

struct RowTrace {
    bottom: BottomTrace,
    shared_caches: Vec<LayerCache>,
    h_shared: Vec<f64>,
    branches: Vec<(Task, BranchTrace)>,
}

impl GatedMtl {
    pub fn new(cfg: &MtlConfig, seed: u64) -> Result<Self> {
        let tasks: std::collections::BTreeSet<Task> = cfg.tasks.iter().copied().collect();
        if tasks.is_empty() || tasks.len() != cfg.tasks.len() {
            return Err(Error::Config(format!("tasks must be non-empty and distinct: {:?}", cfg.tasks)));
        }
        let mut encoder = Encoder::new(cfg.encoder.clone(), seed)?;
        if cfg.freeze_bottom {
            encoder.freeze_bottom();
        }
        let d = encoder.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let branches = tasks
            .into_iter()
            .map(|t| {
                let top = match cfg.top_init {
                    TopInit::Replicate => encoder.top_layers().to_vec(),
                    TopInit::Independent => (0..cfg.encoder.n_top())
                        .map(|_| EncoderLayer::new(d, cfg.encoder.n_heads, cfg.encoder.ffn_dim, &mut rng))
                        .collect(),
                };
                let branch = TaskBranch {
                    top,
                    gate: Gate::new(d, &mut rng),
                    head: Linear::new(d, 2, &mut rng),
                };
                (t, branch)
            })
            .collect();
        Ok(GatedMtl {
            encoder,
            branches,
            gate_enabled: cfg.gate_enabled,
        })
    }

    /// Mark the bottom module (and embeddings) as non-trainable.
    pub fn freeze_bottom(mut self) -> Self {
        self.encoder.freeze_bottom();
        self
    }

    pub fn zeros_like(&self) -> Self {
        GatedMtl {
            encoder: self.encoder.zeros_like(),
            branches: self.branches.iter().map(|(t, b)| (*t, b.zeros_like())).collect(),
            gate_enabled: self.gate_enabled,
        }
    }

    /// Weight matrices of the compared layer for each task, in task order.
    pub fn reg_weights(&self, cfg: &JointLossConfig) -> Result<Vec<Vec<&Matrix>>> {
        let idx = cfg.reg_layer.index(self.encoder.config.n_top())?;
        Ok(self
            .branches
            .values()
            .map(|b| b.top[idx].weight_matrices().to_vec())
            .collect())
    }

    /// ‖W_a − W_b‖_F between two tasks' compared layers.
    pub fn task_distance(&self, a: Task, b: Task, cfg: &JointLossConfig) -> Result<f64> {
        let idx = cfg.reg_layer.index(self.encoder.config.n_top())?;
        let get = |t: Task| {
            self.branches
                .get(&t)
                .map(|br| br.top[idx].weight_matrices())
                .ok_or_else(|| Error::Invalid(format!("model has no {t} branch")))
        };
        Ok(frobenius_distance(&get(a)?, &get(b)?))
    }

    fn forward_row(&self, ids: &[u32], mask: &[u8]) -> Result<RowTrace> {
        let bottom = self.encoder.forward_bottom(ids, mask)?;
        let (h_shared, shared_caches) = if self.gate_enabled {
            run_pooled(self.encoder.top_layers(), &bottom.hidden)
        } else {
            // The shared replica only feeds the gates.
            (Vec::new(), Vec::new())
        };
        let mut branches = Vec::with_capacity(self.branches.len());
        for (&task, br) in &self.branches {
            let (h_task, caches) = run_pooled(&br.top, &bottom.hidden);
            let (fused, gate) = if self.gate_enabled {
                let (o, tr) = br.gate.forward_traced(&h_shared, &h_task)?;
                (o, Some(tr))
            } else {
                (h_task.clone(), None)
            };
            let logits = br.head.forward_vec(&fused);
            branches.push((
                task,
                BranchTrace {
                    caches,
                    h_task,
                    gate,
                    fused,
                    logits,
                },
            ));
        }
        Ok(RowTrace {
            bottom,
            shared_caches,
            h_shared,
            branches,
        })
    }

    fn add_penalty_grad(&self, cfg: &JointLossConfig, grad: &mut GatedMtl) -> Result<()> {
        if cfg.lambda == 0.0 || self.branches.len() < 2 {
            return Ok(());
        }
        let idx = cfg.reg_layer.index(self.encoder.config.n_top())?;
        let tasks: Vec<Task> = self.branches.keys().copied().collect();
        for i in 0..tasks.len() {
            for j in i + 1..tasks.len() {
                let wi = self.branches[&tasks[i]].top[idx].weight_matrices();
                let wj = self.branches[&tasks[j]].top[idx].weight_matrices();
                let dist = frobenius_distance(&wi, &wj);
                if dist == 0.0 {
                    // subgradient 0 at the kink
                    continue;
                }
                let scale = cfg.lambda / dist;
                let diffs: Vec<Vec<f64>> = wi
                    .iter()
                    .zip(&wj)
                    .map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| scale * (x - y)).collect())
                    .collect();
                {
                    let gi = grad.branches.get_mut(&tasks[i]).expect("branch");
                    for (g, d) in gi.top[idx].weight_matrices_mut().into_iter().zip(&diffs) {
                        axpy(1.0, d, g.as_mut_slice());
                    }
                }
                let gj = grad.branches.get_mut(&tasks[j]).expect("branch");
                for (g, d) in gj.top[idx].weight_matrices_mut().into_iter().zip(&diffs) {
                    axpy(-1.0, d, g.as_mut_slice());
                }
            }
        }
        Ok(())
    }
}

impl TaskModel for GatedMtl {
    fn tasks(&self) -> Vec<Task> {
        self.branches.keys().copied().collect()
    }

    fn forward_logits(&self, token_ids: &[Vec<u32>], mask: &[Vec<u8>]) -> Result<BTreeMap<Task, Matrix>> {
        if token_ids.len() != mask.len() {
            return Err(Error::Shape(format!("{} id rows but {} mask rows", token_ids.len(), mask.len())));
        }
        let mut out: BTreeMap<Task, Matrix> =
            self.branches.keys().map(|&t| (t, Matrix::zeros(token_ids.len(), 2))).collect();
        for (r, (ids, m)) in token_ids.iter().zip(mask).enumerate() {
            let trace = self.forward_row(ids, m)?;
            for (task, bt) in &trace.branches {
                out.get_mut(task).expect("task").row_mut(r).copy_from_slice(&bt.logits);
            }
        }
        Ok(out)
    }

    fn penalty(&self, cfg: &JointLossConfig) -> Result<f64> {
        if self.branches.len() < 2 {
            return Ok(0.0);
        }
        Ok(pairwise_penalty(cfg.lambda, &self.reg_weights(cfg)?))
    }

    fn loss_and_grad(&self, batch: &MultiTaskBatch, cfg: &JointLossConfig) -> Result<(LossBreakdown, Self)> {
        check_batch_tasks(&self.tasks(), batch)?;
        let mut grad = self.zeros_like();
        let n_bottom = self.encoder.config.n_bottom;
        let shared_frozen = self.encoder.frozen.layers.saturating_sub(n_bottom);
        let need_bottom = self.encoder.bottom_trainable();

        let masses: BTreeMap<Task, f64> = batch
            .labels
            .iter()
            .map(|(t, l)| (*t, weight_mass(l, cfg.weights(*t))))
            .collect();
        let mut per_task: BTreeMap<Task, f64> = self.branches.keys().map(|&t| (t, 0.0)).collect();

        for r in 0..batch.len() {
            let trace = self.forward_row(&batch.token_ids[r], &batch.attention_mask[r])?;
            let n = trace.bottom.hidden.rows();
            let d = self.encoder.d_model();
            let mut d_bottom = Matrix::zeros(n, d);
            let mut d_shared = vec![0.0; d];
            let mut any = false;

            for (task, bt) in &trace.branches {
                let label = batch.labels.get(task).map_or(Label::Ignore, |l| l[r]);
                let mass = masses.get(task).copied().unwrap_or(0.0);
                let (loss, dl) = row_ce(&bt.logits, label, cfg.weights(*task), mass);
                *per_task.get_mut(task).expect("task") += loss;
                if dl == [0.0, 0.0] {
                    continue;
                }
                any = true;
                let br = &self.branches[task];
                let gbr = grad.branches.get_mut(task).expect("task");
                let d_fused = br.head.backward_vec(&bt.fused, &dl, &mut gbr.head);
                let d_task = match &bt.gate {
                    Some(gt) => {
                        let (ds, dt) = br.gate.backward(gt, &trace.h_shared, &bt.h_task, &d_fused, &mut gbr.gate);
                        axpy(1.0, &ds, &mut d_shared);
                        dt
                    }
                    None => d_fused,
                };
                if let Some(dx) = backward_pooled(&br.top, &bt.caches, n, &d_task, &mut gbr.top, 0, need_bottom) {
                    d_bottom.add_assign(&dx);
                }
            }
            if !any {
                continue;
            }
            if self.gate_enabled {
                let grads = &mut grad.encoder.layers[n_bottom..];
                if let Some(dx) = backward_pooled(
                    self.encoder.top_layers(),
                    &trace.shared_caches,
                    n,
                    &d_shared,
                    grads,
                    shared_frozen,
                    need_bottom,
                ) {
                    d_bottom.add_assign(&dx);
                }
            }
            if need_bottom {
                self.encoder.backward_bottom(&trace.bottom, d_bottom, &mut grad.encoder);
            }
        }

        let reg = self.penalty(cfg)?;
        self.add_penalty_grad(cfg, &mut grad)?;
        let total = per_task.values().sum::<f64>() + reg;
        Ok((LossBreakdown { total, per_task, reg }, grad))
    }
}

/// Whole-encoder classifier for one task, with the head on the pooled output
/// of the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTaskModel {
    pub task: Task,
    pub encoder: Encoder,
    pub head: Linear,
}

impl_parameters!(SingleTaskModel { tensors: [], modules: [encoder, head] });

impl SingleTaskModel {
    pub fn new(task: Task, encoder: EncoderConfig, seed: u64) -> Result<Self> {
        let encoder = Encoder::new(encoder, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
        let head = Linear::new(encoder.d_model(), 2, &mut rng);
        Ok(SingleTaskModel { task, encoder, head })
    }

    /// Freeze everything except the last `trainable` encoder layers (and the head).
    pub fn freeze_all_but_last(mut self, trainable: usize) -> Self {
        self.encoder.freeze_all_but_last(trainable);
        self
    }
}

impl TaskModel for SingleTaskModel {
    fn tasks(&self) -> Vec<Task> {
        vec![self.task]
    }

    fn forward_logits(&self, token_ids: &[Vec<u32>], mask: &[Vec<u8>]) -> Result<BTreeMap<Task, Matrix>> {
        if token_ids.len() != mask.len() {
            return Err(Error::Shape(format!("{} id rows but {} mask rows", token_ids.len(), mask.len())));
        }
        let mut logits = Matrix::zeros(token_ids.len(), 2);
        for (r, (ids, m)) in token_ids.iter().zip(mask).enumerate() {
            let emb = self.encoder.embed(ids, m)?;
            let (h, _) = run_pooled(&self.encoder.layers, &emb.x);
            logits.row_mut(r).copy_from_slice(&self.head.forward_vec(&h));
        }
        Ok(BTreeMap::from([(self.task, logits)]))
    }

    fn penalty(&self, _cfg: &JointLossConfig) -> Result<f64> {
        Ok(0.0)
    }

    fn loss_and_grad(&self, batch: &MultiTaskBatch, cfg: &JointLossConfig) -> Result<(LossBreakdown, Self)> {
        check_batch_tasks(&self.tasks(), batch)?;
        let mut grad = SingleTaskModel {
            task: self.task,
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        };
        let weights = cfg.weights(self.task);
        let labels = batch.labels.get(&self.task).cloned().unwrap_or_else(|| vec![Label::Ignore; batch.len()]);
        let mass = weight_mass(&labels, weights);
        let mut loss = 0.0;
        for r in 0..batch.len() {
            if labels[r].is_ignore() {
                continue;
            }
            let emb = self.encoder.embed(&batch.token_ids[r], &batch.attention_mask[r])?;
            let (h, caches) = run_pooled(&self.encoder.layers, &emb.x);
            let logits = self.head.forward_vec(&h);
            let (l, dl) = row_ce(&logits, labels[r], weights, mass);
            loss += l;
            let dh = self.head.backward_vec(&h, &dl, &mut grad.head);
            let d_emb = backward_pooled(
                &self.encoder.layers,
                &caches,
                emb.x.rows(),
                &dh,
                &mut grad.encoder.layers,
                self.encoder.frozen.layers,
                !self.encoder.frozen.embeddings,
            );
            if let Some(d) = d_emb {
                self.encoder.embed_backward(&emb, &d, &mut grad.encoder);
            }
        }
        let per_task = BTreeMap::from([(self.task, loss)]);
        Ok((LossBreakdown { total: loss, per_task, reg: 0.0 }, grad))
    }
}
