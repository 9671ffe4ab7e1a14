//! SGD and AdamW over any [`Parameters`] value, with gradients held in a
//! value of the same type. Non-trainable tensors are never touched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adamw,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adamw" => Ok(OptimizerKind::Adamw),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (expected sgd or adamw)"))),
        }
    }
}

pub trait Optimizer {
    fn lr(&self) -> f64;
    fn set_lr(&mut self, lr: f64);
    fn step<M: Parameters>(&mut self, params: &mut M, grads: &M) -> Result<()>;
}

fn paired<'a, M: Parameters>(params: &'a mut M, grads: &'a M) -> Result<Vec<(&'a mut Matrix, &'a Matrix, bool)>> {
    let g = grads.tensors();
    let p = params.tensors_mut();
    if p.len() != g.len() {
        return Err(Error::Shape(format!("{} parameter tensors but {} gradients", p.len(), g.len())));
    }
    p.into_iter()
        .zip(g)
        .map(|((name, pm, trainable), (_, gm, _))| {
            if pm.shape() != gm.shape() {
                return Err(Error::Shape(format!("{name}: parameter {:?} vs gradient {:?}", pm.shape(), gm.shape())));
            }
            Ok((pm, gm, trainable))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }
}

impl Optimizer for Sgd {
    fn lr(&self) -> f64 {
        self.lr
    }

    fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn step<M: Parameters>(&mut self, params: &mut M, grads: &M) -> Result<()> {
        for (p, g, trainable) in paired(params, grads)? {
            if !trainable {
                continue;
            }
            for (x, dx) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x -= self.lr * dx;
            }
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for AdamW {
    fn lr(&self) -> f64 {
        self.lr
    }

    fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn step<M: Parameters>(&mut self, params: &mut M, grads: &M) -> Result<()> {
        let pairs = paired(params, grads)?;
        if self.m.is_empty() {
            self.m = pairs.iter().map(|(p, _, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != pairs.len() {
            return Err(Error::Shape("optimizer state belongs to a different model".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g, trainable)) in pairs.into_iter().enumerate() {
            if !trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (x, &dx)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * dx;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * dx * dx;
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                *x -= self.lr * (update + self.weight_decay * *x);
            }
        }
        Ok(())
    }
}

/// Either optimizer behind one type, selected from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyOptimizer {
    Sgd(Sgd),
    AdamW(AdamW),
}

impl AnyOptimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => AnyOptimizer::Sgd(Sgd::new(lr)),
            OptimizerKind::Adamw => AnyOptimizer::AdamW(AdamW::new(lr, weight_decay)),
        }
    }
}

impl Optimizer for AnyOptimizer {
    fn lr(&self) -> f64 {
        match self {
            AnyOptimizer::Sgd(o) => o.lr(),
            AnyOptimizer::AdamW(o) => o.lr(),
        }
    }

    fn set_lr(&mut self, lr: f64) {
        match self {
            AnyOptimizer::Sgd(o) => o.set_lr(lr),
            AnyOptimizer::AdamW(o) => o.set_lr(lr),
        }
    }

    fn step<M: Parameters>(&mut self, params: &mut M, grads: &M) -> Result<()> {
        match self {
            AnyOptimizer::Sgd(o) => o.step(params, grads),
            AnyOptimizer::AdamW(o) => o.step(params, grads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::impl_parameters;

    #[derive(Debug, Clone, PartialEq)]
    struct Toy {
        a: Matrix,
        b: Matrix,
        frozen: bool,
    }

    impl Parameters for Toy {
        fn visit<'a>(&'a self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a Matrix, bool)) {
            f(crate::params::join(prefix, "a"), &self.a, trainable && !self.frozen);
            f(crate::params::join(prefix, "b"), &self.b, trainable);
        }

        fn visit_mut<'a>(&'a mut self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a mut Matrix, bool)) {
            let frozen = self.frozen;
            f(crate::params::join(prefix, "a"), &mut self.a, trainable && !frozen);
            f(crate::params::join(prefix, "b"), &mut self.b, trainable);
        }
    }

    struct Pair {
        x: Matrix,
    }
    impl_parameters!(Pair { tensors: [x], modules: [] });

    fn toy(v: f64, frozen: bool) -> Toy {
        Toy {
            a: Matrix::filled(1, 2, v),
            b: Matrix::filled(2, 1, v),
            frozen,
        }
    }

    #[test]
    fn sgd_step_and_frozen() {
        let mut p = toy(1.0, true);
        let g = toy(0.5, false);
        Sgd::new(0.1).step(&mut p, &g).unwrap();
        assert_eq!(p.a, Matrix::filled(1, 2, 1.0));
        assert_eq!(p.b, Matrix::filled(2, 1, 0.95));
    }

    #[test]
    fn adamw_first_step_is_lr_sized() {
        // bias-corrected first step moves by lr * sign(g) (plus decay)
        let mut p = Pair { x: Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap() };
        let g = Pair { x: Matrix::from_vec(1, 2, vec![3.0, -0.01]).unwrap() };
        let mut opt = AdamW::new(0.01, 0.0);
        opt.step(&mut p, &g).unwrap();
        assert!((p.x.get(0, 0) - 0.99).abs() < 1e-8);
        assert!((p.x.get(0, 1) + 1.99).abs() < 1e-6);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adamw_decay_without_gradient() {
        let mut p = Pair { x: Matrix::filled(1, 1, 2.0) };
        let g = Pair { x: Matrix::zeros(1, 1) };
        AdamW::new(0.1, 0.5).step(&mut p, &g).unwrap();
        assert!((p.x.get(0, 0) - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Pair { x: Matrix::zeros(1, 2) };
        let g = Pair { x: Matrix::zeros(2, 1) };
        assert!(Sgd::new(0.1).step(&mut p, &g).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("SGD".parse::<OptimizerKind>().unwrap(), OptimizerKind::Sgd);
        assert_eq!("adamw".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adamw);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
