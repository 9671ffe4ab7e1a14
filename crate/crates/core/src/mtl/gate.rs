use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sigmoid, Matrix};
use crate::params::impl_parameters;

/// Per-task fusion of the shared representation with the task representation:
/// `alpha = sigmoid(W [h_shared ; h_task] + b)`,
/// `o = alpha * h_shared + (1 - alpha) * h_task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// `D × 2D`
    pub weight: Matrix,
    /// `1 × D`
    pub bias: Matrix,
}

impl_parameters!(Gate { tensors: [weight, bias], modules: [] });

pub(crate) struct GateTrace {
    pub alpha: Vec<f64>,
}

impl Gate {
    pub fn new<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Gate {
            weight: Matrix::randn(d, 2 * d, 1.0 / ((2 * d) as f64).sqrt(), rng),
            bias: Matrix::zeros(1, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Gate {
            weight: Matrix::zeros(d, 2 * d),
            bias: Matrix::zeros(1, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Gate::zeros(self.bias.cols())
    }

    pub fn dim(&self) -> usize {
        self.bias.cols()
    }

    fn check(&self, h_shared: &[f64], h_task: &[f64]) -> Result<()> {
        let d = self.dim();
        if self.weight.shape() != (d, 2 * d) || h_shared.len() != d || h_task.len() != d {
            return Err(Error::Shape(format!(
                "gate W {:?}, b {}, h_shared {}, h_task {}",
                self.weight.shape(),
                d,
                h_shared.len(),
                h_task.len()
            )));
        }
        Ok(())
    }

    /// The gate coefficients `alpha`, each strictly inside (0, 1) for finite
    /// pre-activations.
    pub fn coefficients(&self, h_shared: &[f64], h_task: &[f64]) -> Result<Vec<f64>> {
        self.check(h_shared, h_task)?;
        let d = self.dim();
        let b = self.bias.as_slice();
        Ok((0..d)
            .map(|i| {
                let row = self.weight.row(i);
                sigmoid(dot(&row[..d], h_shared) + dot(&row[d..], h_task) + b[i])
            })
            .collect())
    }

    pub fn forward(&self, h_shared: &[f64], h_task: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_traced(h_shared, h_task)?.0)
    }

    pub(crate) fn forward_traced(&self, h_shared: &[f64], h_task: &[f64]) -> Result<(Vec<f64>, GateTrace)> {
        let alpha = self.coefficients(h_shared, h_task)?;
        let out = alpha
            .iter()
            .zip(h_shared.iter().zip(h_task))
            .map(|(a, (s, t))| a * s + (1.0 - a) * t)
            .collect();
        Ok((out, GateTrace { alpha }))
    }

    /// Returns `(dL/dh_shared, dL/dh_task)` and accumulates parameter grads.
    pub(crate) fn backward(
        &self,
        trace: &GateTrace,
        h_shared: &[f64],
        h_task: &[f64],
        d_out: &[f64],
        grad: &mut Gate,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut d_shared: Vec<f64> = d_out.iter().zip(&trace.alpha).map(|(g, a)| g * a).collect();
        let mut d_task: Vec<f64> = d_out.iter().zip(&trace.alpha).map(|(g, a)| g * (1.0 - a)).collect();
        for i in 0..d {
            let a = trace.alpha[i];
            let dz = d_out[i] * (h_shared[i] - h_task[i]) * a * (1.0 - a);
            if dz == 0.0 {
                continue;
            }
            let grow = grad.weight.row_mut(i);
            axpy(dz, h_shared, &mut grow[..d]);
            axpy(dz, h_task, &mut grow[d..]);
            grad.bias.as_mut_slice()[i] += dz;
            let wrow = self.weight.row(i);
            axpy(dz, &wrow[..d], &mut d_shared);
            axpy(dz, &wrow[d..], &mut d_task);
        }
        (d_shared, d_task)
    }
}

/// Gate fusion with explicit parameters.
pub fn gate(h_shared: &[f64], h_task: &[f64], weight: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    Gate {
        weight: weight.clone(),
        bias: Matrix::row_vector(bias.to_vec()),
    }
    .forward(h_shared, h_task)
}
