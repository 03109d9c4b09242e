//! After-kernel analysis of small networks: train a binary classifier,
//! extract tangent and conjugate kernels at checkpoints, and measure how
//! well they classify, how aligned and how invariant they are.

pub mod data;
mod error;
pub mod harness;
pub mod image;
pub mod kernel;
pub mod linalg;
pub mod nn;
pub mod perturb;
pub mod svm;

pub use error::{Error, Result, ResultExt};
pub use image::{Image, Shape};
