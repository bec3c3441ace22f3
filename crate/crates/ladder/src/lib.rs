//! Ladder networks for semi-supervised classification, built on a
//! from-scratch reverse-mode tape.
//!
//! The crate trains a shared-parameter noisy/clean encoder pair with a
//! denoising decoder, supporting the full family of combinator functions and
//! ablation variants, on MNIST-format data. Everything downstream of the
//! BLAS matrix product (autodiff, batch normalization, the optimizer, data
//! handling, evaluation protocol, hyperparameter search) lives here.

pub mod error;
pub mod combinators;
pub mod data;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod search;
pub mod trainer;
pub mod variants;

pub use error::{Error, ErrorClass, Result};
