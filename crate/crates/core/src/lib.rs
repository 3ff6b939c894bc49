//! Computational potential theory for Schrödinger operators `−A + ν` with
//! measure potentials, where `A` is the Dirichlet Laplacian or fractional
//! Laplacian on a bounded domain.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod error;
pub mod feynman_kac;
pub mod geom;
pub mod harness;
pub mod kernels;
pub mod maxprinciple;
pub mod model;
pub mod paths;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
