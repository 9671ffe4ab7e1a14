//! Gated multi-task model: shared bottom module, per-task top modules, a
//! shared top replica, gating fusion, classification heads and the joint
//! loss with the soft parameter-sharing penalty.

mod gate;
mod loss;
mod model;

use std::collections::BTreeMap;

pub use gate::{gate, Gate};
pub use loss::{
    frobenius_distance, pairwise_penalty, weighted_cross_entropy, JointLossConfig, LossBreakdown, RegLayer,
    TaskLossSpec, LAMBDA_GRID,
};
pub use model::{GatedMtl, MtlConfig, SingleTaskModel, TaskBranch, TaskModel, TopInit};

use crate::corpus::{Label, MultiTaskBatch, Task};
use crate::error::Result;
use crate::linalg::Matrix;

/// Logits for every task of the model on every row of the batch.
pub fn forward_mtl<M: TaskModel>(model: &M, batch: &MultiTaskBatch) -> Result<BTreeMap<Task, Matrix>> {
    model::check_batch_tasks(&model.tasks(), batch)?;
    model.forward_logits(&batch.token_ids, &batch.attention_mask)
}

/// Per-task weighted cross-entropy, the model's sharing penalty, and their sum.
pub fn joint_loss<M: TaskModel>(
    logits: &BTreeMap<Task, Matrix>,
    labels: &BTreeMap<Task, Vec<Label>>,
    cfg: &JointLossConfig,
    model: &M,
) -> Result<LossBreakdown> {
    loss::assemble_loss(logits, labels, cfg, model.penalty(cfg)?)
}

/// Functional form of [`GatedMtl::freeze_bottom`].
pub fn freeze_bottom(model: GatedMtl) -> GatedMtl {
    model.freeze_bottom()
}
