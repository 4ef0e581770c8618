//! Minimal reverse-mode autodiff over `ndarray`, shaped for volumetric
//! segmentation workloads: GEMM-lowered 3D convolutions (system BLAS),
//! windowed-attention building blocks, and an AdamW optimizer.
//!
//! The graph is define-by-run: build [`Var`]s on a [`Tape`], call
//! [`Tape::backward`] on a scalar loss. Vars without a tape are constants and
//! record nothing, which is the inference path. Everything is deterministic
//! for a fixed thread count; see [`set_blas_threads`].

mod blas;
mod element;
pub mod fdcheck;
pub mod ops;
mod optim;
mod params;
mod tape;

pub use blas::set_blas_threads;
pub use element::Element;
pub use optim::{AdamW, AdamWConfig};
pub use params::{Initializer, ParamId, ParamStore, ParamVars};
pub use tape::{Arr, Gradients, Shared, Tape, Var};
