//! Uniform traversal over model tensors, used by optimizers, checkpoints and
//! the gradient checker. Gradients are stored in a value of the same type as
//! the model, so traversal order pairs every parameter with its gradient.

use crate::linalg::Matrix;

pub trait Parameters {
    /// Visit every tensor as `(name, tensor, trainable)` in a fixed order.
    fn visit<'a>(&'a self, prefix: &str, trainable: bool, f: &mut dyn FnMut(String, &'a Matrix, bool));

    fn visit_mut<'a>(
        &'a mut self,
        prefix: &str,
        trainable: bool,
        f: &mut dyn FnMut(String, &'a mut Matrix, bool),
    );

    fn tensors(&self) -> Vec<(String, &Matrix, bool)> {
        let mut out = Vec::new();
        self.visit("", true, &mut |n, m, t| out.push((n, m, t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix, bool)> {
        let mut out = Vec::new();
        self.visit_mut("", true, &mut |n, m, t| out.push((n, m, t)));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", true, &mut |_, m, _| n += m.len());
        n
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", true, &mut |_, m, t| {
            if t {
                n += m.len()
            }
        });
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Implements [`Parameters`] for a struct by listing its tensor and
/// sub-module fields.
macro_rules! impl_parameters {
    ($ty:ty { tensors: [$($t:ident),*], modules: [$($m:ident),*] }) => {
        impl $crate::params::Parameters for $ty {
            fn visit<'a>(
                &'a self,
                prefix: &str,
                trainable: bool,
                f: &mut dyn FnMut(String, &'a $crate::linalg::Matrix, bool),
            ) {
                $( f($crate::params::join(prefix, stringify!($t)), &self.$t, trainable); )*
                $( self.$m.visit(&$crate::params::join(prefix, stringify!($m)), trainable, f); )*
            }

            fn visit_mut<'a>(
                &'a mut self,
                prefix: &str,
                trainable: bool,
                f: &mut dyn FnMut(String, &'a mut $crate::linalg::Matrix, bool),
            ) {
                $( f($crate::params::join(prefix, stringify!($t)), &mut self.$t, trainable); )*
                $( self.$m.visit_mut(&$crate::params::join(prefix, stringify!($m)), trainable, f); )*
            }
        }
    };
}

pub(crate) use impl_parameters;
