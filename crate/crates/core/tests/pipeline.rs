mod common;

use codemix_core::corpus::{load_jsonl, split_views, Label, SplitSpec, Task};
use codemix_core::encoder::build_vocab;
use codemix_core::mtl::{GatedMtl, MtlConfig, TaskModel, TopInit};
use codemix_core::optim::OptimizerKind;
use codemix_core::params::Parameters;
use codemix_core::prompting::{
    read_transcript, render_prompt, run_queries, select_client, select_shots, write_transcript, PromptConfig,
    PromptTemplate,
};
use codemix_core::synthetic::{generate, SyntheticConfig};
use codemix_core::trainer::{evaluate_rows, train, TrainConfig};

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Setup {
    views: codemix_core::corpus::SplitViews,
    tok: codemix_core::encoder::Tokenizer,
    model: GatedMtl,
}

fn setup(seed: u64) -> Setup {
    let data = generate(&SyntheticConfig { per_task: 120, seed, ..Default::default() }).unwrap();
    let views = split_views(&data, &SplitSpec::standard(seed)).unwrap();
    let all: Vec<_> = views.splits.values().flat_map(|s| s.train.clone()).collect();
    let tok = build_vocab(&all, 1);
    let mut enc = common::encoder_config(8, 2, 16, 2, 1);
    enc.vocab_size = tok.vocab_size();
    let cfg = MtlConfig {
        encoder: enc,
        tasks: vec![Task::Humor, Task::Sarcasm],
        gate_enabled: true,
        top_init: TopInit::Replicate,
        freeze_bottom: true,
    };
    let model = GatedMtl::new(&cfg, seed).unwrap();
    Setup { views, tok, model }
}

fn small_cfg(optimizer: OptimizerKind) -> TrainConfig {
    TrainConfig { optimizer, seq_len: 16, batch_size: 16, max_epochs: 3, lambda: 0.05, ..Default::default() }
}

#[test]
fn training_is_deterministic_per_seed() {
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adamw] {
        let s = setup(3);
        let cfg = small_cfg(kind);
        let (a, ha) = train(s.model.clone(), &s.views.train, &s.views.val, &s.tok, &cfg, 3).unwrap();
        let (b, hb) = train(s.model.clone(), &s.views.train, &s.views.val, &s.tok, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.epochs, hb.epochs);
        assert_ne!(a, s.model);
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let s = setup(4);
    let cfg = TrainConfig { max_epochs: 0, ..small_cfg(OptimizerKind::Sgd) };
    let (m, h) = train(s.model.clone(), &s.views.train, &s.views.val, &s.tok, &cfg, 4).unwrap();
    assert_eq!(m, s.model);
    assert!(h.epochs.is_empty());
}

#[test]
fn chosen_epoch_has_maximal_validation_f1() {
    let s = setup(5);
    let cfg = TrainConfig { max_epochs: 6, patience: 2, ..small_cfg(OptimizerKind::Adamw) };
    let (m, h) = train(s.model.clone(), &s.views.train, &s.views.val, &s.tok, &cfg, 5).unwrap();
    let chosen = h.chosen_epoch.unwrap();
    let best = h.epochs.iter().map(|e| e.primary_f1).fold(f64::MIN, f64::max);
    let rec = h.epochs.iter().find(|e| e.epoch == chosen).unwrap();
    assert_eq!(rec.primary_f1, best);
    assert!(h.epochs.iter().filter(|e| e.epoch < chosen).all(|e| e.primary_f1 < best));
    // the returned parameters reproduce the chosen epoch's score
    let reports = evaluate_rows(&m, &s.views.val, &s.tok, cfg.seq_len).unwrap();
    assert_eq!(reports[&Task::Humor].f1, rec.primary_f1);
    for w in h.epochs.windows(2) {
        assert!((w[1].lr - w[0].lr * cfg.scheduler_gamma).abs() < 1e-15);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    h.write_jsonl(&path).unwrap();
    let lines = std::fs::read_to_string(&path).unwrap();
    assert_eq!(lines.lines().count(), h.epochs.len());
    assert_eq!(lines.matches("\"chosen\":true").count(), 1);
}

#[test]
fn frozen_parameters_untouched_by_training() {
    let s = setup(6);
    let (m, _) = train(s.model.clone(), &s.views.train, &s.views.val, &s.tok, &small_cfg(OptimizerKind::Adamw), 6).unwrap();
    for ((name, before, trainable), (_, after, _)) in s.model.tensors().into_iter().zip(m.tensors()) {
        if !trainable {
            assert_eq!(before, after, "{name}");
        }
    }
}

#[test]
fn few_shot_transcript_round_trip() {
    let pool = load_jsonl(fixture("shots.jsonl")).unwrap();
    let template = PromptTemplate::load(fixture("template.toml")).unwrap();
    let shots = select_shots(&pool[..2], 2, 0).unwrap();
    assert!(shots.iter().any(|s| s.label == Label::Positive) && shots.iter().any(|s| s.label == Label::Negative));
    let cfg = PromptConfig::new(Task::Humor, 2, 9).unwrap();
    let client = select_client("mock", Task::Humor, 9).unwrap();
    let recs = run_queries(client.as_ref(), &template, &cfg, &shots, &pool[2..]).unwrap();
    assert_eq!(recs.len(), 1);
    let prompt = render_prompt(&template, &cfg, &shots, &pool[2]).unwrap();
    assert_eq!(recs[0].prompt_hash, codemix_core::prompting::prompt_hash(&prompt));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    write_transcript(&path, &recs).unwrap();
    assert_eq!(read_transcript(&path).unwrap(), recs);
}

#[test]
fn single_task_model_trains_on_one_column() {
    let s = setup(7);
    let humor = &s.views.splits[&Task::Humor];
    let train_rows = codemix_core::corpus::single_task_rows(&humor.train).unwrap();
    let val_rows = codemix_core::corpus::single_task_rows(&humor.val).unwrap();
    let mut enc = common::encoder_config(8, 2, 16, 2, 1);
    enc.vocab_size = s.tok.vocab_size();
    let m = codemix_core::mtl::SingleTaskModel::new(Task::Humor, enc, 7).unwrap().freeze_all_but_last(1);
    let (m, h) = train(m, &train_rows, &val_rows, &s.tok, &small_cfg(OptimizerKind::Adamw), 7).unwrap();
    assert_eq!(m.tasks(), vec![Task::Humor]);
    assert!(!h.epochs.is_empty());
}
