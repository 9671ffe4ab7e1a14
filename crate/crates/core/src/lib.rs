//! Toolkit for code-mixed (Hindi-English) humour, sarcasm and hate
//! classification experiments.
//!
//! * [`corpus`]: sample files, stratified splits, native-sample mixing and
//!   the multi-task view with its batches (ignore label 999).
//! * [`stats`]: class-conditional word distributions, symmetrized KL and
//!   hurtful-keyword coverage.
//! * [`baselines`]: word n-gram multinomial Naive Bayes.
//! * [`encoder`], [`mtl`]: a small transformer encoder and the gated
//!   multi-task model with soft parameter sharing.
//! * [`trainer`]: training loops, early stopping, multi-seed runs and
//!   finite-difference gradient checks.
//! * [`eval`]: positive-class precision/recall/F1 and approximate
//!   randomization significance tests.
//! * [`prompting`]: few-shot prompt construction, shot selection and
//!   response parsing.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mtl;
pub mod optim;
pub mod params;
pub mod prompting;
pub mod stats;
pub mod synthetic;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
