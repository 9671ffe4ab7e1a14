//! A small configurable transformer encoder with a bottom/top layer split.
//!
//! Sequences are processed one at a time. Only unmasked positions enter the
//! computation, so padding can never influence any hidden state. The pooled
//! representation is the hidden vector at the first (`[CLS]`) position.

mod layer;
mod tokenizer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layer::{EncoderLayer, LayerNorm, Linear};
pub(crate) use layer::LayerCache;
pub use tokenizer::{build_vocab, Tokenizer, DEFAULT_MAX_LEN};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::params::{join, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Total number of layers.
    pub n_layers: usize,
    /// Layers in the bottom module shared by every task.
    pub n_bottom: usize,
    /// Std of the token embedding init; position embeddings use a tenth of it.
    pub embedding_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            max_positions: DEFAULT_MAX_LEN,
            d_model: 64,
            n_heads: 4,
            ffn_dim: 256,
            n_layers: 6,
            n_bottom: 4,
            embedding_std: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn for_tokenizer(tokenizer: &Tokenizer) -> Self {
        EncoderConfig {
            vocab_size: tokenizer.vocab_size(),
            max_positions: tokenizer.max_len(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_bottom >= self.n_layers {
            return fail(format!(
                "bottom module ({} layers) must be smaller than the encoder ({} layers)",
                self.n_bottom, self.n_layers
            ));
        }
        if self.vocab_size < 3 || self.max_positions < 2 || self.ffn_dim == 0 {
            return fail("vocab_size >= 3, max_positions >= 2 and ffn_dim > 0 required".into());
        }
        Ok(())
    }

    pub fn n_top(&self) -> usize {
        self.n_layers - self.n_bottom
    }
}

/// Which leading parts of the encoder receive no updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frozen {
    pub embeddings: bool,
    /// Number of leading layers frozen.
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<EncoderLayer>,
    pub frozen: Frozen,
}

impl Parameters for Encoder {
    fn visit<'a>(&'a self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a Matrix, bool)) {
        let emb = trainable && !self.frozen.embeddings;
        f(join(prefix, "token_embedding"), &self.token_embedding, emb);
        f(join(prefix, "position_embedding"), &self.position_embedding, emb);
        for (i, layer) in self.layers.iter().enumerate() {
            let t = trainable && i >= self.frozen.layers;
            layer.visit(&join(prefix, &format!("layers.{i}")), t, f);
        }
    }

    fn visit_mut<'a>(
        &'a mut self,
        prefix: &str,
        trainable: bool,
        f: &mut dyn FnMut(String, &'a mut Matrix, bool),
    ) {
        let emb = trainable && !self.frozen.embeddings;
        f(join(prefix, "token_embedding"), &mut self.token_embedding, emb);
        f(join(prefix, "position_embedding"), &mut self.position_embedding, emb);
        let frozen_layers = self.frozen.layers;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let t = trainable && i >= frozen_layers;
            layer.visit_mut(&join(prefix, &format!("layers.{i}")), t, f);
        }
    }
}

/// Unmasked positions of one sequence after the embedding layer.
pub(crate) struct Embedded {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    pub x: Matrix,
}

/// Forward record of one sequence through the bottom module.
pub(crate) struct BottomTrace {
    pub embedded: Embedded,
    pub caches: Vec<LayerCache>,
    /// Output of the last bottom layer, `active × D`.
    pub hidden: Matrix,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let token_embedding = Matrix::randn(config.vocab_size, d, config.embedding_std, &mut rng);
        let position_embedding =
            Matrix::randn(config.max_positions, d, 0.1 * config.embedding_std, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer::new(d, config.n_heads, config.ffn_dim, &mut rng))
            .collect();
        Ok(Encoder {
            config,
            token_embedding,
            position_embedding,
            layers,
            frozen: Frozen::default(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Encoder {
            config: self.config.clone(),
            token_embedding: self.token_embedding.zeros_like(),
            position_embedding: self.position_embedding.zeros_like(),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            frozen: self.frozen,
        }
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn bottom_layers(&self) -> &[EncoderLayer] {
        &self.layers[..self.config.n_bottom]
    }

    /// Layers above the bottom module; in the multi-task model these form the
    /// shared replica.
    pub fn top_layers(&self) -> &[EncoderLayer] {
        &self.layers[self.config.n_bottom..]
    }

    /// Mark embeddings and the bottom module as non-trainable.
    pub fn freeze_bottom(&mut self) {
        self.frozen = Frozen {
            embeddings: true,
            layers: self.config.n_bottom,
        };
    }

    /// Freeze embeddings and every layer except the last `trainable` ones.
    pub fn freeze_all_but_last(&mut self, trainable: usize) {
        self.frozen = Frozen {
            embeddings: true,
            layers: self.config.n_layers.saturating_sub(trainable),
        };
    }

    pub fn unfreeze(&mut self) {
        self.frozen = Frozen::default();
    }

    pub fn layer_trainable(&self, i: usize) -> bool {
        i >= self.frozen.layers
    }

    /// Placeholder for importing third-party pretrained weights. Only this
    /// crate's own checkpoints are supported.
    pub fn load_pretrained(path: impl AsRef<std::path::Path>) -> Result<Self> {
        crate::checkpoint::load(path, crate::checkpoint::ENCODER_FORMAT)
    }

    pub(crate) fn embed(&self, ids: &[u32], mask: &[u8]) -> Result<Embedded> {
        if ids.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} token ids but {} mask entries",
                ids.len(),
                mask.len()
            )));
        }
        let positions: Vec<usize> = (0..ids.len()).filter(|&j| mask[j] != 0).collect();
        if positions.is_empty() {
            return Err(Error::Shape("sequence has no unmasked position".into()));
        }
        if positions[0] != 0 {
            return Err(Error::Shape("first position must be unmasked".into()));
        }
        if let Some(&last) = positions.last() {
            if last >= self.config.max_positions {
                return Err(Error::Shape(format!(
                    "position {last} beyond the {} position embeddings",
                    self.config.max_positions
                )));
            }
        }
        let d = self.d_model();
        let mut x = Matrix::zeros(positions.len(), d);
        let mut tokens = Vec::with_capacity(positions.len());
        for (r, &p) in positions.iter().enumerate() {
            let tok = ids[p];
            if tok as usize >= self.config.vocab_size {
                return Err(Error::Shape(format!(
                    "token id {tok} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            let row = x.row_mut(r);
            row.copy_from_slice(self.token_embedding.row(tok as usize));
            axpy(1.0, self.position_embedding.row(p), row);
            tokens.push(tok);
        }
        Ok(Embedded { tokens, positions, x })
    }

    pub(crate) fn embed_backward(&self, emb: &Embedded, dx: &Matrix, grad: &mut Encoder) {
        for (r, (&tok, &p)) in emb.tokens.iter().zip(&emb.positions).enumerate() {
            axpy(1.0, dx.row(r), grad.token_embedding.row_mut(tok as usize));
            axpy(1.0, dx.row(r), grad.position_embedding.row_mut(p));
        }
    }

    pub(crate) fn forward_bottom(&self, ids: &[u32], mask: &[u8]) -> Result<BottomTrace> {
        let embedded = self.embed(ids, mask)?;
        let (hidden, caches) = run_full(self.bottom_layers(), embedded.x.clone());
        Ok(BottomTrace {
            embedded,
            caches,
            hidden,
        })
    }

    /// Whether any parameter at or below the bottom output is trainable.
    pub(crate) fn bottom_trainable(&self) -> bool {
        !(self.frozen.embeddings && self.frozen.layers >= self.config.n_bottom)
    }

    /// Backpropagate `d_hidden` (gradient w.r.t. the bottom output) into the
    /// trainable part of the bottom module and the embeddings.
    pub(crate) fn backward_bottom(&self, trace: &BottomTrace, d_hidden: Matrix, grad: &mut Encoder) {
        let n_bottom = self.config.n_bottom;
        let d = backward_layers(
            self.bottom_layers(),
            &trace.caches,
            d_hidden,
            &mut grad.layers[..n_bottom],
            self.frozen.layers,
            !self.frozen.embeddings,
        );
        if let Some(d) = d {
            self.embed_backward(&trace.embedded, &d, grad);
        }
    }
}

/// Run every layer over all positions.
pub(crate) fn run_full(layers: &[EncoderLayer], x: Matrix) -> (Matrix, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = x;
    for layer in layers {
        let (out, cache) = layer.forward(&h, false);
        caches.push(cache);
        h = out;
    }
    (h, caches)
}

/// Run a stack and return only the first-position output. The last layer
/// computes the first position alone.
pub(crate) fn run_pooled(layers: &[EncoderLayer], x: &Matrix) -> (Vec<f64>, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        let (out, cache) = layer.forward(&h, i + 1 == layers.len());
        caches.push(cache);
        h = out;
    }
    (h.row(0).to_vec(), caches)
}

/// Backward through a stack of layers starting from the output gradient.
///
/// Layers with index below `frozen_prefix` receive no gradient. When
/// `need_input_grad` is false, propagation stops at the first frozen layer
/// and `None` is returned.
pub(crate) fn backward_layers(
    layers: &[EncoderLayer],
    caches: &[LayerCache],
    d_out: Matrix,
    grads: &mut [EncoderLayer],
    frozen_prefix: usize,
    need_input_grad: bool,
) -> Option<Matrix> {
    let mut g = d_out;
    for i in (0..layers.len()).rev() {
        if i < frozen_prefix {
            if !need_input_grad {
                return None;
            }
            let mut scratch = layers[i].zeros_like();
            g = layers[i].backward(&caches[i], &g, &mut scratch);
        } else {
            g = layers[i].backward(&caches[i], &g, &mut grads[i]);
        }
    }
    Some(g)
}

/// Backward through a stack run by [`run_pooled`], starting from the
/// gradient of the pooled vector. Returns the gradient w.r.t. the stack
/// input (`input_rows × D`).
pub(crate) fn backward_pooled(
    layers: &[EncoderLayer],
    caches: &[LayerCache],
    input_rows: usize,
    d_pooled: &[f64],
    grads: &mut [EncoderLayer],
    frozen_prefix: usize,
    need_input_grad: bool,
) -> Option<Matrix> {
    if layers.is_empty() {
        let mut dx = Matrix::zeros(input_rows, d_pooled.len());
        dx.row_mut(0).copy_from_slice(d_pooled);
        return Some(dx);
    }
    backward_layers(
        layers,
        caches,
        Matrix::row_vector(d_pooled.to_vec()),
        grads,
        frozen_prefix,
        need_input_grad,
    )
}

/// Pooled outputs after the bottom module and after the full encoder, one row
/// per sequence.
pub fn forward_encoder(encoder: &Encoder, token_ids: &[Vec<u32>], mask: &[Vec<u8>]) -> Result<(Matrix, Matrix)> {
    if token_ids.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} id rows but {} mask rows",
            token_ids.len(),
            mask.len()
        )));
    }
    let d = encoder.d_model();
    let mut bottom = Matrix::zeros(token_ids.len(), d);
    let mut full = Matrix::zeros(token_ids.len(), d);
    for (r, (ids, m)) in token_ids.iter().zip(mask).enumerate() {
        let trace = encoder.forward_bottom(ids, m)?;
        bottom.row_mut(r).copy_from_slice(trace.hidden.row(0));
        let (h, _) = run_pooled(encoder.top_layers(), &trace.hidden);
        full.row_mut(r).copy_from_slice(&h);
    }
    Ok((bottom, full))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Encoder {
        Encoder::new(
            EncoderConfig {
                vocab_size: 12,
                max_positions: 16,
                d_model: 8,
                n_heads: 2,
                ffn_dim: 16,
                n_layers: 3,
                n_bottom: 2,
                embedding_std: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    fn batch() -> (Vec<Vec<u32>>, Vec<Vec<u8>>) {
        (
            vec![vec![2, 5, 6, 0], vec![2, 7, 0, 0], vec![2, 3, 4, 9]],
            vec![vec![1, 1, 1, 0], vec![1, 1, 0, 0], vec![1, 1, 1, 1]],
        )
    }

    #[test]
    fn output_shapes() {
        let enc = tiny(0);
        let (ids, mask) = batch();
        let (b, f) = forward_encoder(&enc, &ids, &mask).unwrap();
        assert_eq!(b.shape(), (3, 8));
        assert_eq!(f.shape(), (3, 8));
    }

    #[test]
    fn pad_extension_invariant() {
        let enc = tiny(1);
        let (ids, mask) = batch();
        let (b0, f0) = forward_encoder(&enc, &ids, &mask).unwrap();
        let ids2: Vec<_> = ids.iter().map(|r| [r.clone(), vec![0; 5]].concat()).collect();
        let mask2: Vec<_> = mask.iter().map(|r| [r.clone(), vec![0; 5]].concat()).collect();
        let (b1, f1) = forward_encoder(&enc, &ids2, &mask2).unwrap();
        for (x, y) in b0.as_slice().iter().zip(b1.as_slice()).chain(f0.as_slice().iter().zip(f1.as_slice())) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn masked_tokens_do_not_matter() {
        let enc = tiny(2);
        let (b0, f0) = forward_encoder(&enc, &[vec![2, 5, 0]], &[vec![1, 1, 0]]).unwrap();
        // a real token id under a zero mask is ignored as well
        let (b1, f1) = forward_encoder(&enc, &[vec![2, 5, 9]], &[vec![1, 1, 0]]).unwrap();
        assert_eq!(b0, b1);
        assert_eq!(f0, f1);
    }

    #[test]
    fn duplicated_rows_and_permutation() {
        let enc = tiny(3);
        let (ids, mask) = batch();
        let (_, f) = forward_encoder(&enc, &ids, &mask).unwrap();
        let perm = [2usize, 0, 1, 2];
        let ids_p: Vec<_> = perm.iter().map(|&i| ids[i].clone()).collect();
        let mask_p: Vec<_> = perm.iter().map(|&i| mask[i].clone()).collect();
        let (_, fp) = forward_encoder(&enc, &ids_p, &mask_p).unwrap();
        for (r, &i) in perm.iter().enumerate() {
            assert_eq!(fp.row(r), f.row(i));
        }
        assert_eq!(fp.row(0), fp.row(3));
    }

    #[test]
    fn repeated_forward_bitwise_identical() {
        let mut enc = tiny(4);
        enc.freeze_all_but_last(0);
        let (ids, mask) = batch();
        assert_eq!(
            forward_encoder(&enc, &ids, &mask).unwrap(),
            forward_encoder(&enc, &ids, &mask).unwrap()
        );
    }

    #[test]
    fn shape_errors() {
        let enc = tiny(0);
        assert!(forward_encoder(&enc, &[vec![2, 3]], &[vec![1]]).is_err());
        assert!(forward_encoder(&enc, &[vec![2, 3]], &[]).is_err());
        assert!(forward_encoder(&enc, &[vec![2, 99]], &[vec![1, 1]]).is_err());
        assert!(forward_encoder(&enc, &[vec![0, 0]], &[vec![0, 0]]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig {
            vocab_size: 10,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        assert_eq!((c.n_layers, c.n_bottom, c.d_model, c.n_heads), (6, 4, 64, 4));
        c.n_heads = 5;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.n_bottom = 6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn freezing_marks_tensors() {
        let mut enc = tiny(0);
        enc.freeze_bottom();
        for (name, _, trainable) in enc.tensors() {
            let bottom = name.contains("embedding") || name.starts_with("layers.0") || name.starts_with("layers.1");
            assert_eq!(trainable, !bottom, "{name}");
        }
    }

    #[test]
    fn freeze_all_but_last_four_of_six() {
        let mut enc = Encoder::new(
            EncoderConfig {
                vocab_size: 10,
                d_model: 8,
                n_heads: 2,
                ffn_dim: 8,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        enc.freeze_all_but_last(4);
        let trainable: Vec<bool> = (0..6).map(|i| enc.layer_trainable(i)).collect();
        assert_eq!(trainable, [false, false, true, true, true, true]);
        assert!(enc.frozen.embeddings);
    }
}
