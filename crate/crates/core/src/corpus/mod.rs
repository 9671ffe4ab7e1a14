//! Dataset ingestion, stratified splits, native-sample mixing and the
//! multi-task view with its batches.

mod mix;
mod multitask;
mod sample;
mod split;

pub use mix::mix_native;
pub use multitask::{
    batch_iter, build_multitask_view, read_multitask_jsonl, single_task_rows, split_views,
    write_multitask_jsonl, BatchIter, MultiTaskBatch, MultiTaskRow, SplitViews,
};
pub use sample::{
    class_counts, load_jsonl, read_jsonl, write_jsonl, Label, Origin, Sample, Task, Translator,
    IGNORE,
};
pub use split::{stratified_split, Split, SplitSpec};
