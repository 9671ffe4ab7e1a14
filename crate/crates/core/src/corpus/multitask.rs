use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Label, Sample, Task};
use super::split::{stratified_split, Split, SplitSpec};
use crate::encoder::Tokenizer;
use crate::error::{Error, Result};

/// One text with a label slot for every task of the view; tasks the text was
/// not annotated for carry [`Label::Ignore`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiTaskRow {
    pub id: String,
    pub text: String,
    #[serde(flatten)]
    pub labels: BTreeMap<Task, Label>,
}

impl MultiTaskRow {
    /// The task this row is annotated for, if exactly one.
    pub fn own_task(&self) -> Option<Task> {
        let mut it = self.labels.iter().filter(|(_, l)| !l.is_ignore());
        match (it.next(), it.next()) {
            (Some((t, _)), None) => Some(*t),
            _ => None,
        }
    }
}

pub fn build_multitask_view(task_sets: &BTreeMap<Task, Vec<Sample>>) -> Result<Vec<MultiTaskRow>> {
    if task_sets.len() < 2 {
        return Err(Error::Invalid(format!(
            "a multi-task view needs at least two tasks, got {}",
            task_sets.len()
        )));
    }
    let tasks: Vec<Task> = task_sets.keys().copied().collect();
    let mut rows = Vec::with_capacity(task_sets.values().map(Vec::len).sum());
    for (&task, samples) in task_sets {
        for s in samples {
            if s.task != task {
                return Err(Error::Invalid(format!(
                    "sample `{}` is a {} sample but was listed under {task}",
                    s.id, s.task
                )));
            }
            if s.label.is_ignore() {
                return Err(Error::Invalid(format!(
                    "sample `{}` has no label for its own task",
                    s.id
                )));
            }
            let labels = tasks
                .iter()
                .map(|&t| (t, if t == task { s.label } else { Label::Ignore }))
                .collect();
            rows.push(MultiTaskRow {
                id: s.id.clone(),
                text: s.text.clone(),
                labels,
            });
        }
    }
    Ok(rows)
}

/// Rows for one task's samples, with a single label column.
pub fn single_task_rows(samples: &[Sample]) -> Result<Vec<MultiTaskRow>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    samples
        .iter()
        .map(|s| {
            if s.task != first.task {
                return Err(Error::Invalid(format!("sample `{}` is a {} sample, expected {}", s.id, s.task, first.task)));
            }
            if s.label.is_ignore() {
                return Err(Error::Invalid(format!("sample `{}` has no label for its own task", s.id)));
            }
            Ok(MultiTaskRow {
                id: s.id.clone(),
                text: s.text.clone(),
                labels: BTreeMap::from([(s.task, s.label)]),
            })
        })
        .collect()
}

/// Per-task splits and the train/val/test views built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitViews {
    pub splits: BTreeMap<Task, Split>,
    pub train: Vec<MultiTaskRow>,
    pub val: Vec<MultiTaskRow>,
    pub test: Vec<MultiTaskRow>,
}

/// Split every task set with `spec`, then build one view per part. A single
/// task yields single-column rows.
pub fn split_views(task_sets: &BTreeMap<Task, Vec<Sample>>, spec: &SplitSpec) -> Result<SplitViews> {
    let mut splits = BTreeMap::new();
    for (&task, samples) in task_sets {
        splits.insert(task, stratified_split(samples, spec)?);
    }
    let view = |pick: fn(&Split) -> &Vec<Sample>| -> Result<Vec<MultiTaskRow>> {
        if splits.len() == 1 {
            single_task_rows(pick(splits.values().next().expect("one task")))
        } else {
            build_multitask_view(&splits.iter().map(|(t, s)| (*t, pick(s).clone())).collect())
        }
    };
    Ok(SplitViews {
        train: view(|s| &s.train)?,
        val: view(|s| &s.val)?,
        test: view(|s| &s.test)?,
        splits,
    })
}

/// Write a view as line records with one integer column per task (999 = no label).
pub fn write_multitask_jsonl(path: impl AsRef<Path>, rows: &[MultiTaskRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_multitask_jsonl(path: impl AsRef<Path>) -> Result<Vec<MultiTaskRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MultiTaskRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskBatch {
    pub ids: Vec<String>,
    pub token_ids: Vec<Vec<u32>>,
    pub attention_mask: Vec<Vec<u8>>,
    pub labels: BTreeMap<Task, Vec<Label>>,
}

impl MultiTaskBatch {
    pub fn from_rows<'a, I>(rows: I, tasks: &[Task], tokenizer: &Tokenizer, seq_len: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a MultiTaskRow>,
    {
        let mut batch = MultiTaskBatch {
            ids: Vec::new(),
            token_ids: Vec::new(),
            attention_mask: Vec::new(),
            labels: tasks.iter().map(|&t| (t, Vec::new())).collect(),
        };
        for row in rows {
            let (ids, mask) = tokenizer.encode(&row.text, seq_len)?;
            batch.ids.push(row.id.clone());
            batch.token_ids.push(ids);
            batch.attention_mask.push(mask);
            for (t, col) in batch.labels.iter_mut() {
                col.push(row.labels.get(t).copied().unwrap_or(Label::Ignore));
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        self.labels.keys().copied()
    }

    /// Whether rows annotated for more than one task occur in this batch.
    pub fn mixes_tasks(&self) -> bool {
        self.labels
            .values()
            .filter(|col| col.iter().any(|l| !l.is_ignore()))
            .count()
            > 1
    }
}

/// Shuffled fixed-size batches over a multi-task view.
pub struct BatchIter<'a> {
    rows: &'a [MultiTaskRow],
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    tasks: Vec<Task>,
    tokenizer: &'a Tokenizer,
    seq_len: usize,
}

impl<'a> BatchIter<'a> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }
}

impl Iterator for BatchIter<'_> {
    type Item = MultiTaskBatch;

    fn next(&mut self) -> Option<MultiTaskBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let chunk = &self.order[self.cursor..end];
        self.cursor = end;
        let batch = MultiTaskBatch::from_rows(
            chunk.iter().map(|&i| &self.rows[i]),
            &self.tasks,
            self.tokenizer,
            self.seq_len,
        )
        .expect("sequence length validated when the iterator was built");
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

/// One global permutation of `rows` (seeded), cut into consecutive batches.
/// The last batch may be short. Every batch carries a label column for every
/// task that occurs anywhere in the view.
pub fn batch_iter<'a>(
    rows: &'a [MultiTaskRow],
    batch_size: usize,
    seed: u64,
    tokenizer: &'a Tokenizer,
    seq_len: usize,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    tokenizer.check_seq_len(seq_len)?;
    let tasks: BTreeSet<Task> = rows.iter().flat_map(|r| r.labels.keys().copied()).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BatchIter {
        rows,
        order,
        cursor: 0,
        batch_size,
        tasks: tasks.into_iter().collect(),
        tokenizer,
        seq_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample::Origin;

    fn set(task: Task, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                Sample::new(
                    format!("{task}{i}"),
                    format!("{task} word{i}"),
                    task,
                    Label::from_class((i % 2) as u8),
                    Origin::CodeMixed,
                    "cm",
                )
            })
            .collect()
    }

    fn tokenizer_for(rows: &[MultiTaskRow]) -> Tokenizer {
        let texts: Vec<&str> = rows.iter().map(|r| r.text.as_str()).collect();
        Tokenizer::from_texts(texts, 1, 64)
    }

    #[test]
    fn ignore_layout() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 1));
        sets.insert(Task::Sarcasm, set(Task::Sarcasm, 1));
        let rows = build_multitask_view(&sets).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].labels[&Task::Humor], Label::Negative);
        assert_eq!(rows[0].labels[&Task::Sarcasm], Label::Ignore);
        assert_eq!(rows[1].labels[&Task::Humor], Label::Ignore);
        assert_eq!(rows[1].labels[&Task::Sarcasm], Label::Negative);
        assert_eq!(rows[1].own_task(), Some(Task::Sarcasm));
    }

    #[test]
    fn three_tasks_two_ignores_each() {
        let sets: BTreeMap<_, _> = Task::ALL.iter().map(|&t| (t, set(t, 10))).collect();
        let rows = build_multitask_view(&sets).unwrap();
        assert_eq!(rows.len(), 30);
        for r in &rows {
            assert_eq!(r.labels.values().filter(|l| l.is_ignore()).count(), 2);
        }
    }

    #[test]
    fn single_task_or_mislabelled_rejected() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 3));
        assert!(build_multitask_view(&sets).is_err());
        sets.insert(Task::Hate, set(Task::Sarcasm, 1));
        assert!(build_multitask_view(&sets).is_err());
    }

    #[test]
    fn export_uses_literal_999() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 2));
        sets.insert(Task::Hate, set(Task::Hate, 2));
        let rows = build_multitask_view(&sets).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("view.jsonl");
        write_multitask_jsonl(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"id":"humor0","text":"humor word0","humor":0,"hate":999}"#);
        assert_eq!(read_multitask_jsonl(&path).unwrap(), rows);
    }

    #[test]
    fn batch_sizes_and_last_partial() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 50));
        sets.insert(Task::Sarcasm, set(Task::Sarcasm, 50));
        let rows = build_multitask_view(&sets).unwrap();
        let tok = tokenizer_for(&rows);
        let it = batch_iter(&rows, 32, 0, &tok, 8).unwrap();
        assert_eq!(it.len(), 4);
        let sizes: Vec<_> = it.map(|b| b.len()).collect();
        assert_eq!(sizes, [32, 32, 32, 4]);
    }

    #[test]
    fn zero_batch_size_errors() {
        let tok = Tokenizer::from_texts(["a"], 1, 8);
        assert!(batch_iter(&[], 0, 0, &tok, 8).is_err());
    }

    #[test]
    fn batches_cover_rows_once_and_mask_matches_padding() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 20));
        sets.insert(Task::Hate, set(Task::Hate, 13));
        let rows = build_multitask_view(&sets).unwrap();
        let tok = tokenizer_for(&rows);
        let mut seen: Vec<String> = batch_iter(&rows, 16, 5, &tok, 6)
            .unwrap()
            .flat_map(|b| {
                for (ids, mask) in b.token_ids.iter().zip(&b.attention_mask) {
                    assert!(mask[0] == 1);
                    for (&t, &m) in ids.iter().zip(mask) {
                        assert_eq!(m == 0, t == Tokenizer::PAD);
                    }
                }
                b.ids
            })
            .collect();
        seen.sort();
        let mut expected: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
        expected.sort();
        assert_eq!(seen, expected);
    }

    #[test]
    fn shuffle_is_seeded() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 30));
        sets.insert(Task::Sarcasm, set(Task::Sarcasm, 30));
        let rows = build_multitask_view(&sets).unwrap();
        let tok = tokenizer_for(&rows);
        let a = batch_iter(&rows, 16, 1, &tok, 8).unwrap().order().to_vec();
        let b = batch_iter(&rows, 16, 1, &tok, 8).unwrap().order().to_vec();
        let c = batch_iter(&rows, 16, 2, &tok, 8).unwrap().order().to_vec();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn balanced_view_yields_mixed_batches() {
        let mut sets = BTreeMap::new();
        sets.insert(Task::Humor, set(Task::Humor, 32));
        sets.insert(Task::Sarcasm, set(Task::Sarcasm, 32));
        let rows = build_multitask_view(&sets).unwrap();
        let tok = tokenizer_for(&rows);
        for seed in 0..100 {
            let mixed = batch_iter(&rows, 16, seed, &tok, 8)
                .unwrap()
                .any(|b| b.mixes_tasks());
            assert!(mixed, "seed {seed} produced only single-task batches");
        }
    }
}
