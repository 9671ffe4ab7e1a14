//! Fixtures and a deliberately naive reference forward pass shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use codemix_core::corpus::{Label, MultiTaskBatch, MultiTaskRow, Task};
use codemix_core::encoder::{EncoderConfig, EncoderLayer, LayerNorm, Linear, Tokenizer};
use codemix_core::linalg::Matrix;
use codemix_core::mtl::{GatedMtl, MtlConfig, TopInit};

pub const WORDS: [&str; 8] = ["ha", "lol", "news", "today", "wow", "sure", "great", "idea"];

pub fn tokenizer() -> Tokenizer {
    Tokenizer::from_texts(WORDS.iter().copied(), 1, 32)
}

pub fn row(id: &str, text: &str, labels: &[(Task, Label)]) -> MultiTaskRow {
    MultiTaskRow {
        id: id.into(),
        text: text.into(),
        labels: labels.iter().copied().collect(),
    }
}

/// Six rows over humor and sarcasm, each annotated for one task.
pub fn mixed_rows() -> Vec<MultiTaskRow> {
    use Label::*;
    use Task::*;
    vec![
        row("h0", "ha lol wow", &[(Humor, Positive), (Sarcasm, Ignore)]),
        row("h1", "news today", &[(Humor, Negative), (Sarcasm, Ignore)]),
        row("h2", "lol lol ha great", &[(Humor, Positive), (Sarcasm, Ignore)]),
        row("s0", "sure great idea", &[(Humor, Ignore), (Sarcasm, Positive)]),
        row("s1", "today news wow", &[(Humor, Ignore), (Sarcasm, Negative)]),
        row("s2", "great", &[(Humor, Ignore), (Sarcasm, Positive)]),
    ]
}

pub fn batch(rows: &[MultiTaskRow], seq_len: usize) -> MultiTaskBatch {
    MultiTaskBatch::from_rows(rows, &[Task::Humor, Task::Sarcasm], &tokenizer(), seq_len).unwrap()
}

pub fn encoder_config(d: usize, heads: usize, ffn: usize, layers: usize, bottom: usize) -> EncoderConfig {
    let tok = tokenizer();
    EncoderConfig {
        d_model: d,
        n_heads: heads,
        ffn_dim: ffn,
        n_layers: layers,
        n_bottom: bottom,
        ..EncoderConfig::for_tokenizer(&tok)
    }
}

pub fn gated(d: usize, layers: usize, bottom: usize, top_init: TopInit, freeze: bool, seed: u64) -> GatedMtl {
    let cfg = MtlConfig {
        encoder: encoder_config(d, if d % 2 == 0 { 2 } else { 1 }, 2 * d, layers, bottom),
        tasks: vec![Task::Humor, Task::Sarcasm],
        gate_enabled: true,
        top_init,
        freeze_bottom: freeze,
    };
    GatedMtl::new(&cfg, seed).unwrap()
}

// ---- reference implementation --------------------------------------------

type Rows = Vec<Vec<f64>>;

fn linear(l: &Linear, x: &[f64]) -> Vec<f64> {
    let (out, inp) = l.weight.shape();
    (0..out)
        .map(|o| (0..inp).map(|i| l.weight.get(o, i) * x[i]).sum::<f64>() + l.bias.as_slice()[o])
        .collect()
}

fn layer_norm(n: &LayerNorm, x: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    x.iter()
        .enumerate()
        .map(|(j, v)| n.gamma.as_slice()[j] * (v - mean) / (var + 1e-5).sqrt() + n.beta.as_slice()[j])
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// One post-norm block over the whole padded sequence; padded keys are
/// excluded with a -inf score.
fn block(l: &EncoderLayer, x: &Rows, mask: &[u8]) -> Rows {
    let n = x.len();
    let d = x[0].len();
    let dh = d / l.n_heads;
    let q: Rows = x.iter().map(|r| linear(&l.query, r)).collect();
    let k: Rows = x.iter().map(|r| linear(&l.key, r)).collect();
    let v: Rows = x.iter().map(|r| linear(&l.value, r)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut ctx = vec![0.0; d];
        for h in 0..l.n_heads {
            let r = h * dh..(h + 1) * dh;
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    if mask[j] == 0 {
                        f64::NEG_INFINITY
                    } else {
                        q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt()
                    }
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..n {
                for c in r.clone() {
                    ctx[c] += e[j] / z * v[j][c];
                }
            }
        }
        let a = linear(&l.output, &ctx);
        let y1 = layer_norm(&l.attn_norm, &x[i].iter().zip(&a).map(|(p, q)| p + q).collect::<Vec<_>>());
        let g: Vec<f64> = linear(&l.ff_in, &y1).into_iter().map(gelu).collect();
        let f = linear(&l.ff_out, &g);
        out.push(layer_norm(&l.ff_norm, &y1.iter().zip(&f).map(|(p, q)| p + q).collect::<Vec<_>>()));
    }
    out
}

fn stack(layers: &[EncoderLayer], x: Rows, mask: &[u8]) -> Rows {
    layers.iter().fold(x, |h, l| block(l, &h, mask))
}

fn embed(token: &Matrix, pos: &Matrix, ids: &[u32]) -> Rows {
    ids.iter()
        .enumerate()
        .map(|(p, &t)| (0..token.cols()).map(|c| token.get(t as usize, c) + pos.get(p, c)).collect())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step logits of the gated model: bottom, shared replica, task
/// tops, gates, heads.
pub fn reference_logits(m: &GatedMtl, ids: &[u32], mask: &[u8]) -> BTreeMap<Task, Vec<f64>> {
    let e = &m.encoder;
    let b = e.config.n_bottom;
    let x = embed(&e.token_embedding, &e.position_embedding, ids);
    let bottom = stack(&e.layers[..b], x, mask);
    let h_bert = stack(&e.layers[b..], bottom.clone(), mask)[0].clone();
    let mut out = BTreeMap::new();
    for (task, br) in &m.branches {
        let h_task = stack(&br.top, bottom.clone(), mask)[0].clone();
        let fused = if m.gate_enabled {
            let concat: Vec<f64> = h_bert.iter().chain(&h_task).copied().collect();
            let alpha: Vec<f64> = linear(&Linear { weight: br.gate.weight.clone(), bias: br.gate.bias.clone() }, &concat)
                .into_iter()
                .map(sigmoid)
                .collect();
            (0..h_bert.len()).map(|i| alpha[i] * h_bert[i] + (1.0 - alpha[i]) * h_task[i]).collect()
        } else {
            h_task
        };
        out.insert(*task, linear(&br.head, &fused));
    }
    out
}
