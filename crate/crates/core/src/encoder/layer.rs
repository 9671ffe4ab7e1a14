use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, gelu, gelu_grad, softmax_in_place, Matrix};
use crate::params::impl_parameters;

const LN_EPS: f64 = 1e-5;

/// Affine map `y = x W^T + b` with `W: out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl_parameters!(Linear { tensors: [weight, bias], modules: [] });

impl Linear {
    /// Scaled-normal init, std = 1/sqrt(fan_in); zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: Matrix::randn(fan_out, fan_in, 1.0 / (fan_in as f64).sqrt(), rng),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_nt(&self.weight);
        let b = self.bias.as_slice();
        for r in 0..y.rows() {
            for (v, bi) in y.row_mut(r).iter_mut().zip(b) {
                *v += bi;
            }
        }
        y
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim())
            .map(|o| dot(self.weight.row(o), x) + self.bias.as_slice()[o])
            .collect()
    }

    /// Accumulate parameter gradients into `grad` and return `dL/dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        grad.weight.add_matmul_tn(dy, x);
        let gb = grad.bias.as_mut_slice();
        for r in 0..dy.rows() {
            for (g, d) in gb.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        dy.matmul(&self.weight)
    }

    pub fn backward_vec(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim()];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            axpy(d, x, grad.weight.row_mut(o));
            grad.bias.as_mut_slice()[o] += d;
            axpy(d, self.weight.row(o), &mut dx);
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
}

impl_parameters!(LayerNorm { tensors: [gamma, beta], modules: [] });

pub(crate) struct NormCache {
    xhat: Matrix,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Matrix::filled(1, dim, 1.0),
            beta: Matrix::zeros(1, dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: self.gamma.zeros_like(),
            beta: self.beta.zeros_like(),
        }
    }

    pub(crate) fn forward(&self, x: &Matrix) -> (Matrix, NormCache) {
        let d = x.cols() as f64;
        let mut xhat = x.clone();
        let mut rstd = Vec::with_capacity(x.rows());
        let mut y = x.zeros_like();
        for r in 0..x.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let s = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * s;
            }
            rstd.push(s);
            let (g, b) = (self.gamma.as_slice(), self.beta.as_slice());
            for (j, out) in y.row_mut(r).iter_mut().enumerate() {
                *out = g[j] * xhat.get(r, j) + b[j];
            }
        }
        (y, NormCache { xhat, rstd })
    }

    pub(crate) fn backward(&self, cache: &NormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let d = dy.cols() as f64;
        let g = self.gamma.as_slice();
        let mut dx = dy.zeros_like();
        for r in 0..dy.rows() {
            let (dyr, xh) = (dy.row(r), cache.xhat.row(r));
            {
                let gg = grad.gamma.as_mut_slice();
                for j in 0..dyr.len() {
                    gg[j] += dyr[j] * xh[j];
                }
            }
            for (gb, d) in grad.beta.as_mut_slice().iter_mut().zip(dyr) {
                *gb += d;
            }
            let dxhat: Vec<f64> = dyr.iter().zip(g).map(|(a, b)| a * b).collect();
            let mean_d = dxhat.iter().sum::<f64>() / d;
            let mean_dx = dot(&dxhat, xh) / d;
            let s = cache.rstd[r];
            for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = s * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        dx
    }
}

/// Post-norm transformer block: self-attention, residual, LayerNorm, GELU
/// feed-forward, residual, LayerNorm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub n_heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

impl_parameters!(EncoderLayer {
    tensors: [],
    modules: [query, key, value, output, attn_norm, ff_in, ff_out, ff_norm]
});

pub(crate) struct LayerCache {
    x: Matrix,
    xq: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention probabilities per head, `queries × keys`.
    probs: Vec<Matrix>,
    ctx: Matrix,
    norm1: NormCache,
    y1: Matrix,
    h1: Matrix,
    g: Matrix,
    norm2: NormCache,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(d_model: usize, n_heads: usize, ffn_dim: usize, rng: &mut R) -> Self {
        EncoderLayer {
            n_heads,
            query: Linear::new(d_model, d_model, rng),
            key: Linear::new(d_model, d_model, rng),
            value: Linear::new(d_model, d_model, rng),
            output: Linear::new(d_model, d_model, rng),
            attn_norm: LayerNorm::new(d_model),
            ff_in: Linear::new(d_model, ffn_dim, rng),
            ff_out: Linear::new(ffn_dim, d_model, rng),
            ff_norm: LayerNorm::new(d_model),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderLayer {
            n_heads: self.n_heads,
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            attn_norm: self.attn_norm.zeros_like(),
            ff_in: self.ff_in.zeros_like(),
            ff_out: self.ff_out.zeros_like(),
            ff_norm: self.ff_norm.zeros_like(),
        }
    }

    /// The weight matrices of the block (biases and norms excluded), in
    /// traversal order.
    pub fn weight_matrices(&self) -> [&Matrix; 6] {
        [
            &self.query.weight,
            &self.key.weight,
            &self.value.weight,
            &self.output.weight,
            &self.ff_in.weight,
            &self.ff_out.weight,
        ]
    }

    pub fn weight_matrices_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.query.weight,
            &mut self.key.weight,
            &mut self.value.weight,
            &mut self.output.weight,
            &mut self.ff_in.weight,
            &mut self.ff_out.weight,
        ]
    }

    /// Forward over a sequence `x` (`n × D`). Every position attends to every
    /// row of `x`; with `first_only` only position 0 is carried through the
    /// block and the output is `1 × D`.
    pub(crate) fn forward(&self, x: &Matrix, first_only: bool) -> (Matrix, LayerCache) {
        let n = x.rows();
        let d = x.cols();
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let xq = if first_only { x.select_rows(&[0]) } else { x.clone() };
        let m = xq.rows();

        let q = self.query.forward(&xq);
        let k = self.key.forward(x);
        let v = self.value.forward(x);

        let mut ctx = Matrix::zeros(m, d);
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let off = h * dh;
            let mut p = Matrix::zeros(m, n);
            for i in 0..m {
                let qi = &q.row(i)[off..off + dh];
                let pr = p.row_mut(i);
                for (j, s) in pr.iter_mut().enumerate() {
                    *s = dot(qi, &k.row(j)[off..off + dh]) * scale;
                }
                softmax_in_place(pr);
            }
            for i in 0..m {
                let mut acc = vec![0.0; dh];
                for j in 0..n {
                    axpy(p.get(i, j), &v.row(j)[off..off + dh], &mut acc);
                }
                ctx.row_mut(i)[off..off + dh].copy_from_slice(&acc);
            }
            probs.push(p);
        }

        let mut z1 = self.output.forward(&ctx);
        z1.add_assign(&xq);
        let (y1, norm1) = self.attn_norm.forward(&z1);

        let h1 = self.ff_in.forward(&y1);
        let mut g = h1.clone();
        for v in g.as_mut_slice() {
            *v = gelu(*v);
        }
        let mut z2 = self.ff_out.forward(&g);
        z2.add_assign(&y1);
        let (y2, norm2) = self.ff_norm.forward(&z2);

        let cache = LayerCache {
            x: x.clone(),
            xq,
            q,
            k,
            v,
            probs,
            ctx,
            norm1,
            y1,
            h1,
            g,
            norm2,
        };
        (y2, cache)
    }

    /// Backward through one block; returns `dL/dx` for the full input sequence.
    pub(crate) fn backward(&self, cache: &LayerCache, dy: &Matrix, grad: &mut EncoderLayer) -> Matrix {
        let (n, d) = cache.x.shape();
        let m = cache.xq.rows();
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dz2 = self.ff_norm.backward(&cache.norm2, dy, &mut grad.ff_norm);
        let mut dg = self.ff_out.backward(&cache.g, &dz2, &mut grad.ff_out);
        for (dv, &pre) in dg.as_mut_slice().iter_mut().zip(cache.h1.as_slice()) {
            *dv *= gelu_grad(pre);
        }
        let mut dy1 = self.ff_in.backward(&cache.y1, &dg, &mut grad.ff_in);
        dy1.add_assign(&dz2);

        let dz1 = self.attn_norm.backward(&cache.norm1, &dy1, &mut grad.attn_norm);
        let dctx = self.output.backward(&cache.ctx, &dz1, &mut grad.output);

        let mut dq = Matrix::zeros(m, d);
        let mut dk = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        let mut da = vec![0.0; n];
        for h in 0..self.n_heads {
            let off = h * dh;
            let p = &cache.probs[h];
            for i in 0..m {
                let dci = &dctx.row(i)[off..off + dh];
                for j in 0..n {
                    da[j] = dot(dci, &cache.v.row(j)[off..off + dh]);
                    axpy(p.get(i, j), dci, &mut dv.row_mut(j)[off..off + dh]);
                }
                let pr = p.row(i);
                let weighted: f64 = dot(pr, &da);
                let qi = &cache.q.row(i)[off..off + dh];
                for j in 0..n {
                    let ds = pr[j] * (da[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    axpy(ds, &cache.k.row(j)[off..off + dh], &mut dq.row_mut(i)[off..off + dh]);
                    axpy(ds, qi, &mut dk.row_mut(j)[off..off + dh]);
                }
            }
        }

        let mut dxq = self.query.backward(&cache.xq, &dq, &mut grad.query);
        dxq.add_assign(&dz1);
        let mut dx = self.key.backward(&cache.x, &dk, &mut grad.key);
        dx.add_assign(&self.value.backward(&cache.x, &dv, &mut grad.value));
        for i in 0..m {
            axpy(1.0, dxq.row(i), dx.row_mut(i));
        }
        dx
    }
}
