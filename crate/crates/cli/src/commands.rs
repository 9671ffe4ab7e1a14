use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use codemix_core::baselines::{fit_nb, predict_nb};
use codemix_core::checkpoint::{self, MTL_FORMAT, SINGLE_FORMAT};
use codemix_core::corpus::{
    build_multitask_view, class_counts, load_jsonl, mix_native, single_task_rows, split_views, stratified_split,
    write_jsonl, write_multitask_jsonl, Label, MultiTaskBatch, MultiTaskRow, Sample, SplitSpec, Task,
};
use codemix_core::encoder::{build_vocab, EncoderConfig, Tokenizer};
use codemix_core::eval::{prf1, prf1_with_abstain, read_predictions, significance, write_predictions, EvalReport, PredictionRecord};
use codemix_core::mtl::{GatedMtl, MtlConfig, SingleTaskModel, TaskModel, TopInit};
use codemix_core::prompting::{
    prompt_hash, render_prompt, run_queries, select_client, select_shots, write_transcript, PromptConfig,
    PromptTemplate,
};
use codemix_core::stats::{dataset_report, Lexicon};
use codemix_core::synthetic::{generate, SyntheticConfig};
use codemix_core::trainer::{evaluate_rows, grad_check, predict_rows, summarize, train, SeedRun, TrainConfig, DEFAULT_SEEDS};
use codemix_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::RunDir;
use crate::{
    BaselineArgs, Command, DataArgs, EvalArgs, GradcheckArgs, MixArgs, ModelArgs, MtlArgs, PromptArgs, ShotsArgs,
    SignificanceArgs, SingleArgs, SplitArgs, StatsArgs, TopInitArg, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// A check the command runs did not hold.
    Check(String),
}

impl CliError {
    pub fn is_validation(&self) -> bool {
        match self {
            CliError::Core(e) => e.is_validation(),
            CliError::Check(_) => false,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Stats(a) => stats(cmd, a),
        Command::Split(a) => split(cmd, a),
        Command::Mix(a) => mix(cmd, a),
        Command::TrainBaseline(a) => train_baseline(cmd, a),
        Command::TrainSingle(a) => train_single(cmd, a),
        Command::TrainMtl(a) => train_mtl(cmd, a),
        Command::Eval(a) => eval(cmd, a),
        Command::Significance(a) => signif(cmd, a),
        Command::PromptRender(a) => prompt_render(cmd, a),
        Command::Shots(a) => shots(cmd, a),
        Command::Gradcheck(a) => gradcheck(cmd, a),
    }
}

fn counts(samples: &[Sample]) -> Value {
    let (neg, pos) = class_counts(samples);
    json!({ "positive": pos, "negative": neg })
}

fn stats(cmd: &Command, a: &StatsArgs) -> Result<Value> {
    let samples = load_jsonl(&a.data)?;
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let report = dataset_report(&samples, &lexicon, a.alpha)?;
    let mut dir = RunDir::create(&a.out.out)?;
    dir.write_json("report.json", &report)?;
    let out = dir.finish(cmd, Value::Null, &[])?;
    Ok(json!({ "out": out, "report": report, "lexicon_terms": lexicon.len() }))
}

fn split(cmd: &Command, a: &SplitArgs) -> Result<Value> {
    let samples = load_jsonl(&a.data)?;
    let spec = SplitSpec::new(a.train_ratio, a.val_ratio, a.test_ratio, a.seed)?;
    let s = stratified_split(&samples, &spec)?;
    let mut dir = RunDir::create(&a.out.out)?;
    for (name, part) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        write_jsonl(dir.file(&format!("{name}.jsonl"))?, part.iter())?;
    }
    let out = dir.finish(cmd, Value::Null, &[a.seed])?;
    Ok(json!({
        "out": out,
        "train": counts(&s.train),
        "val": counts(&s.val),
        "test": counts(&s.test),
    }))
}

fn mix(cmd: &Command, a: &MixArgs) -> Result<Value> {
    let cm = load_jsonl(&a.cm)?;
    let pool = load_jsonl(&a.pool)?;
    let mixed = mix_native(&cm, &pool, a.per_class, a.seed)?;
    let mut dir = RunDir::create(&a.out.out)?;
    write_jsonl(dir.file("mixed.jsonl")?, mixed.iter())?;
    let out = dir.finish(cmd, Value::Null, &[a.seed])?;
    Ok(json!({ "out": out, "code_mixed": counts(&cm), "mixed": counts(&mixed) }))
}

fn labelled(samples: &[Sample]) -> (Vec<&Sample>, Vec<u8>) {
    samples
        .iter()
        .filter_map(|s| s.label.class().map(|c| (s, c as u8)))
        .unzip()
}

fn train_baseline(cmd: &Command, a: &BaselineArgs) -> Result<Value> {
    let train_set = load_jsonl(&a.train)?;
    let n_set: BTreeSet<usize> = a.ngrams.iter().copied().collect();
    let model = fit_nb(&train_set, &n_set, a.alpha)?;
    let mut dir = RunDir::create(&a.out.out)?;
    model.save(dir.file("model.json")?)?;
    let mut summary = json!({ "vocab_size": model.vocab_size(), "train": counts(&train_set) });
    if let Some(test_path) = &a.test {
        let test = load_jsonl(test_path)?;
        let records: Vec<PredictionRecord> = test
            .iter()
            .map(|s| {
                let (label, log_odds) = predict_nb(&model, &s.text);
                PredictionRecord {
                    id: s.id.clone(),
                    task: s.task,
                    pred: u8::from(label == Label::Positive),
                    prob: 1.0 / (1.0 + (-log_odds).exp()),
                }
            })
            .collect();
        write_predictions(dir.file("predictions.jsonl")?, &records)?;
        let (kept, golds) = labelled(&test);
        let preds: Vec<u8> = kept
            .iter()
            .map(|s| u8::from(predict_nb(&model, &s.text).0 == Label::Positive))
            .collect();
        let report = prf1(&preds, &golds)?;
        dir.write_json("report.json", &report)?;
        summary["test"] = serde_json::to_value(&report)?;
    }
    let out = dir.finish(cmd, json!({ "ngrams": n_set, "alpha": a.alpha }), &[])?;
    summary["out"] = out;
    Ok(summary)
}

fn resolve_train_config(t: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &t.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $arg:ident),*) => {
            $(if let Some(v) = t.$arg.clone() { cfg.$field = v.into(); })*
        };
    }
    set!(lr <- lr, optimizer <- optimizer, weight_decay <- weight_decay, scheduler_gamma <- gamma,
        batch_size <- batch_size, seq_len <- seq_len, patience <- patience, max_epochs <- max_epochs,
        lambda <- lambda, reg_layer <- reg_layer);
    if t.primary_task.is_some() {
        cfg.primary_task = t.primary_task;
    }
    if t.no_class_weights {
        cfg.class_weighted = false;
    }
    if let Some(list) = &t.seed_list {
        cfg.seeds = list.clone();
    } else if let Some(n) = t.seeds {
        // the default seeds first, then 101, 102, ...
        cfg.seeds = DEFAULT_SEEDS.iter().copied().chain(101..).take(n).collect();
    }
    cfg.validate()?;
    let off = cfg.off_grid();
    if !off.is_empty() {
        eprintln!("note: off the tuning grid: {}", off.join(", "));
    }
    Ok(cfg)
}

fn load_tasks(d: &DataArgs, tasks: Option<&[Task]>) -> Result<BTreeMap<Task, Vec<Sample>>> {
    if d.data.is_empty() {
        let tasks = tasks.map_or_else(|| Task::ALL.to_vec(), <[Task]>::to_vec);
        let cfg = SyntheticConfig {
            tasks,
            per_task: d.synthetic_size,
            seed: d.split_seed,
            ..Default::default()
        };
        return Ok(generate(&cfg)?);
    }
    let mut by_task: BTreeMap<Task, Vec<Sample>> = BTreeMap::new();
    for p in &d.data {
        for s in load_jsonl(p)? {
            by_task.entry(s.task).or_default().push(s);
        }
    }
    if let Some(wanted) = tasks {
        for t in wanted {
            if !by_task.contains_key(t) {
                return Err(Error::Invalid(format!("no samples for task {t} in the data files")).into());
            }
        }
        by_task.retain(|t, _| wanted.contains(t));
    }
    Ok(by_task)
}

fn encoder_config(m: &ModelArgs, tok: &Tokenizer) -> Result<EncoderConfig> {
    let cfg = EncoderConfig {
        d_model: m.d_model,
        n_heads: m.heads,
        ffn_dim: m.ffn,
        n_layers: m.layers,
        n_bottom: m.bottom,
        ..EncoderConfig::for_tokenizer(tok)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn test_predictions<M: TaskModel>(
    model: &M,
    rows: &[MultiTaskRow],
    tok: &Tokenizer,
    seq_len: usize,
) -> Result<Vec<PredictionRecord>> {
    let probs = predict_rows(model, rows, tok, seq_len)?;
    let mut out = Vec::new();
    for (task, p) in probs {
        for (row, prob) in rows.iter().zip(p) {
            if row.labels.get(&task).is_some_and(|l| !l.is_ignore()) {
                out.push(PredictionRecord {
                    id: row.id.clone(),
                    task,
                    pred: u8::from(prob > 0.5),
                    prob,
                });
            }
        }
    }
    Ok(out)
}

struct Rows<'a> {
    train: &'a [MultiTaskRow],
    val: &'a [MultiTaskRow],
    test: &'a [MultiTaskRow],
}

/// Train one model per seed, saving checkpoint, history and test
/// predictions under `seed-<n>/`.
fn seed_runs<M, F>(dir: &mut RunDir, rows: &Rows, tok: &Tokenizer, cfg: &TrainConfig, format: &str, build: F) -> Result<Value>
where
    M: TaskModel + Serialize,
    F: Fn(u64) -> codemix_core::Result<M>,
{
    let mut runs = Vec::new();
    let mut details = Vec::new();
    for &seed in &cfg.seeds {
        let (model, history) = train(build(seed)?, rows.train, rows.val, tok, cfg, seed)?;
        let prefix = format!("seed-{seed}");
        checkpoint::save(dir.file(&format!("{prefix}/model.json"))?, format, &model)?;
        history.write_jsonl(dir.file(&format!("{prefix}/history.jsonl"))?)?;
        write_predictions(
            dir.file(&format!("{prefix}/predictions.jsonl"))?,
            &test_predictions(&model, rows.test, tok, cfg.seq_len)?,
        )?;
        let reports = evaluate_rows(&model, rows.test, tok, cfg.seq_len)?;
        details.push(json!({
            "seed": seed,
            "epochs_run": history.epochs.len(),
            "chosen_epoch": history.chosen_epoch,
            "stopped_early": history.stopped_early,
        }));
        runs.push(SeedRun { seed, reports });
    }
    let summary = summarize(runs)?;
    dir.write_json("results.json", &summary)?;

    let mut table: Vec<Value> = summary
        .per_seed
        .iter()
        .map(|r| {
            let mut row = json!({ "seed": r.seed.to_string() });
            for (t, rep) in &r.reports {
                row[t.as_str()] = json!(rep.f1);
            }
            row
        })
        .collect();
    let mut mean = json!({ "seed": "mean" });
    for (t, m) in &summary.mean {
        mean[t.as_str()] = json!(m.f1);
    }
    table.push(mean);
    Ok(json!({ "f1_table": table, "runs": details, "per_seed": summary.per_seed, "mean": summary.mean }))
}

fn train_single(cmd: &Command, a: &SingleArgs) -> Result<Value> {
    let cfg = resolve_train_config(&a.train)?;
    let data = load_tasks(&a.data, Some(&[a.task]))?;
    let spec = SplitSpec::standard(a.data.split_seed);
    let split = stratified_split(&data[&a.task], &spec)?;
    let tok = build_vocab(&split.train, a.model.min_freq);
    let enc = encoder_config(&a.model, &tok)?;
    if a.trainable_layers > enc.n_layers {
        return Err(Error::Config(format!(
            "{} trainable layers requested from a {}-layer encoder",
            a.trainable_layers, enc.n_layers
        ))
        .into());
    }
    let (train_rows, val_rows, test_rows) =
        (single_task_rows(&split.train)?, single_task_rows(&split.val)?, single_task_rows(&split.test)?);

    let mut dir = RunDir::create(&a.out.out)?;
    tok.save(dir.file("tokenizer.json")?)?;
    let rows = Rows {
        train: &train_rows,
        val: &val_rows,
        test: &test_rows,
    };
    let mut summary = seed_runs(&mut dir, &rows, &tok, &cfg, SINGLE_FORMAT, |seed| {
        Ok(SingleTaskModel::new(a.task, enc.clone(), seed)?.freeze_all_but_last(a.trainable_layers))
    })?;
    let config = json!({ "train": cfg, "encoder": enc });
    summary["out"] = dir.finish(cmd, config, &cfg.seeds)?;
    Ok(summary)
}

fn train_mtl(cmd: &Command, a: &MtlArgs) -> Result<Value> {
    let cfg = resolve_train_config(&a.train)?;
    let data = load_tasks(&a.data, a.tasks.as_deref())?;
    if data.len() < 2 {
        return Err(Error::Config("multi-task training needs at least two tasks".into()).into());
    }
    let views = split_views(&data, &SplitSpec::standard(a.data.split_seed))?;
    let train_samples: Vec<Sample> = views.splits.values().flat_map(|s| s.train.iter().cloned()).collect();
    let tok = build_vocab(&train_samples, a.model.min_freq);
    let enc = encoder_config(&a.model, &tok)?;
    let mcfg = MtlConfig {
        encoder: enc,
        tasks: data.keys().copied().collect(),
        gate_enabled: a.gate,
        top_init: match a.top_init {
            TopInitArg::Replicate => TopInit::Replicate,
            TopInitArg::Independent => TopInit::Independent,
        },
        freeze_bottom: !a.train_bottom,
    };

    let mut dir = RunDir::create(&a.out.out)?;
    tok.save(dir.file("tokenizer.json")?)?;
    for (name, rows) in [("train", &views.train), ("val", &views.val), ("test", &views.test)] {
        write_multitask_jsonl(dir.file(&format!("views/{name}.jsonl"))?, rows)?;
    }
    let rows = Rows {
        train: &views.train,
        val: &views.val,
        test: &views.test,
    };
    let mut summary = seed_runs(&mut dir, &rows, &tok, &cfg, MTL_FORMAT, |seed| GatedMtl::new(&mcfg, seed))?;
    let config = json!({ "train": cfg, "model": mcfg });
    summary["out"] = dir.finish(cmd, config, &cfg.seeds)?;
    Ok(summary)
}

/// Gold class per `(task, id)`; ignore labels are left out.
fn gold_index(golds: &[Sample]) -> BTreeMap<(Task, &str), u8> {
    golds
        .iter()
        .filter_map(|s| s.label.class().map(|c| ((s.task, s.id.as_str()), c as u8)))
        .collect()
}

/// `(ids, preds, golds)` of one task.
type Aligned = (Vec<String>, Vec<u8>, Vec<u8>);

/// Per task, the records with a gold label.
fn align(records: &[PredictionRecord], golds: &BTreeMap<(Task, &str), u8>) -> Result<BTreeMap<Task, Aligned>> {
    let mut out: BTreeMap<Task, Aligned> = BTreeMap::new();
    for r in records {
        let g = golds.get(&(r.task, r.id.as_str())).ok_or_else(|| {
            Error::Invalid(format!("prediction for `{}` ({}) has no gold label", r.id, r.task))
        })?;
        let e = out.entry(r.task).or_default();
        e.0.push(r.id.clone());
        e.1.push(r.pred);
        e.2.push(*g);
    }
    Ok(out)
}

fn eval(cmd: &Command, a: &EvalArgs) -> Result<Value> {
    let records = read_predictions(&a.pred)?;
    let golds = load_jsonl(&a.gold)?;
    let index = gold_index(&golds);
    let mut reports: BTreeMap<Task, EvalReport> = BTreeMap::new();
    for (task, (_, preds, g)) in align(&records, &index)? {
        reports.insert(task, prf1(&preds, &g)?);
    }
    let mut dir = RunDir::create(&a.out.out)?;
    dir.write_json("report.json", &reports)?;
    let out = dir.finish(cmd, Value::Null, &[])?;
    Ok(json!({ "out": out, "reports": reports }))
}

fn signif(cmd: &Command, a: &SignificanceArgs) -> Result<Value> {
    let golds = load_jsonl(&a.gold)?;
    let index = gold_index(&golds);
    let sys_a = align(&read_predictions(&a.a)?, &index)?;
    let mut sys_b = align(&read_predictions(&a.b)?, &index)?;
    let mut results = BTreeMap::new();
    for (task, (ids, preds_a, g)) in sys_a {
        let Some((ids_b, preds_b, _)) = sys_b.remove(&task) else {
            return Err(Error::Invalid(format!("second prediction file has no {task} records")).into());
        };
        let by_id: BTreeMap<&str, u8> = ids_b.iter().map(String::as_str).zip(preds_b).collect();
        if by_id.len() != ids.len() {
            return Err(Error::Invalid(format!("{task}: the prediction files cover different items")).into());
        }
        let preds_b: Vec<u8> = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("{task}: `{id}` missing from the second prediction file")))
            })
            .collect::<codemix_core::Result<_>>()?;
        let p = significance(&preds_a, &preds_b, &g, a.permutations, a.seed)?;
        let ra = prf1(&preds_a, &g)?;
        let mut rb = prf1(&preds_b, &g)?;
        rb.p_value = Some(p);
        results.insert(task, json!({ "a": ra, "b": rb, "p_value": p }));
    }
    if let Some(task) = sys_b.keys().next() {
        return Err(Error::Invalid(format!("first prediction file has no {task} records")).into());
    }
    let mut dir = RunDir::create(&a.out.out)?;
    dir.write_json("significance.json", &results)?;
    let out = dir.finish(cmd, json!({ "permutations": a.permutations }), &[a.seed])?;
    Ok(json!({ "out": out, "tasks": results }))
}

fn prompt_render(cmd: &Command, a: &PromptArgs) -> Result<Value> {
    let template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::builtin(),
    };
    let cfg = PromptConfig {
        task: a.task,
        k: a.k,
        template_id: template.id.clone(),
        seed: a.seed,
    };
    cfg.validate()?;
    let shots = match (&a.pool, a.k) {
        (_, 0) => Vec::new(),
        (Some(p), k) => {
            let pool: Vec<Sample> = load_jsonl(p)?.into_iter().filter(|s| s.task == a.task).collect();
            select_shots(&pool, k, a.seed)?
        }
        (None, _) => return Err(Error::Config("--pool is required when k > 0".into()).into()),
    };
    let queries: Vec<Sample> = load_jsonl(&a.queries)?.into_iter().filter(|s| s.task == a.task).collect();
    if queries.is_empty() {
        return Err(Error::Invalid(format!("no {} queries in {}", a.task, a.queries.display())).into());
    }

    let mut dir = RunDir::create(&a.out.out)?;
    let mut lines = String::new();
    for q in &queries {
        let prompt = render_prompt(&template, &cfg, &shots, q)?;
        lines.push_str(&serde_json::to_string(&json!({
            "query_id": q.id,
            "prompt_hash": prompt_hash(&prompt),
            "prompt": prompt,
        }))?);
        lines.push('\n');
    }
    dir.write_text("prompts.jsonl", &lines)?;
    write_jsonl(dir.file("shots.jsonl")?, shots.iter())?;

    let mut summary = json!({
        "prompts": queries.len(),
        "shots": shots.iter().map(|s| json!({ "id": s.id, "label": s.label.as_i64() })).collect::<Vec<_>>(),
    });
    if let Some(name) = &a.client {
        let client = select_client(name, a.task, a.seed)?;
        let records = run_queries(client.as_ref(), &template, &cfg, &shots, &queries)?;
        write_transcript(dir.file("transcript.jsonl")?, &records)?;
        let (preds, golds): (Vec<Option<u8>>, Vec<u8>) = records
            .iter()
            .zip(&queries)
            .filter_map(|(r, q)| q.label.class().map(|c| (r.parsed_label, c as u8)))
            .unzip();
        if !golds.is_empty() {
            let report = prf1_with_abstain(&preds, &golds)?;
            dir.write_json("report.json", &report)?;
            summary["report"] = serde_json::to_value(report)?;
        }
        summary["client"] = json!({ "name": client.name(), "mock": client.is_mock() });
    }
    summary["out"] = dir.finish(cmd, serde_json::to_value(&cfg)?, &[a.seed])?;
    Ok(summary)
}

fn shots(cmd: &Command, a: &ShotsArgs) -> Result<Value> {
    let pool = load_jsonl(&a.pool)?;
    let chosen = select_shots(&pool, a.k, a.seed)?;
    let mut dir = RunDir::create(&a.out.out)?;
    write_jsonl(dir.file("shots.jsonl")?, chosen.iter())?;
    let out = dir.finish(cmd, Value::Null, &[a.seed])?;
    Ok(json!({
        "out": out,
        "shots": chosen.iter().map(|s| json!({ "id": s.id, "label": s.label.as_i64() })).collect::<Vec<_>>(),
    }))
}

fn gradcheck(cmd: &Command, a: &GradcheckArgs) -> Result<Value> {
    let tasks = vec![Task::Humor, Task::Sarcasm];
    let data = generate(&SyntheticConfig {
        tasks: tasks.clone(),
        per_task: 6,
        seed: a.seed,
        ..Default::default()
    })?;
    let rows = build_multitask_view(&data)?;
    let samples: Vec<Sample> = data.values().flatten().cloned().collect();
    let tok = build_vocab(&samples, 1);
    let batch = MultiTaskBatch::from_rows(&rows, &tasks, &tok, 12)?;
    let enc = EncoderConfig {
        d_model: a.d_model,
        n_heads: if a.d_model % 2 == 0 { 2 } else { 1 },
        ffn_dim: 2 * a.d_model,
        n_layers: a.layers,
        n_bottom: a.bottom,
        ..EncoderConfig::for_tokenizer(&tok)
    };
    let mcfg = MtlConfig {
        encoder: enc,
        tasks: tasks.clone(),
        gate_enabled: !a.no_gate,
        // independent tops keep the sharing penalty away from its kink at zero distance
        top_init: TopInit::Independent,
        freeze_bottom: true,
    };
    let model = GatedMtl::new(&mcfg, a.seed)?;
    let train_cfg = TrainConfig { lambda: a.lambda, ..Default::default() };
    let loss_cfg = train_cfg.loss_config(&rows, &tasks)?;
    let report = grad_check(&model, &batch, &loss_cfg, a.step, a.coords, a.seed)?;

    let mut dir = RunDir::create(&a.out.out)?;
    dir.write_json("gradcheck.json", &report)?;
    let root = dir.root().display().to_string();
    dir.finish(cmd, json!({ "model": mcfg, "lambda": a.lambda }), &[a.seed])?;
    let passed = report.max_rel_err <= a.tolerance && report.frozen_nonzero == 0;
    if !passed {
        return Err(CliError::Check(format!(
            "gradient check failed: max relative error {:.3e} (tolerance {:.1e}), {} non-zero frozen gradients; see {root}/gradcheck.json",
            report.max_rel_err, a.tolerance, report.frozen_nonzero
        )));
    }
    Ok(json!({
        "out": root,
        "passed": passed,
        "max_rel_err": report.max_rel_err,
        "checked": report.checked.len(),
        "frozen_coordinates": report.frozen_coordinates,
    }))
}
