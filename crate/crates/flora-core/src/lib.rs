//! Sublinear-memory optimizer states via seeded random projections.
//!
//! A gradient for an `n x m` weight matrix is compressed to `n x r` by
//! right-multiplying with the transpose of a seeded Gaussian matrix
//! `A in R^{r x m}` (entries `N(0, 1/r)`), accumulated or EMA-averaged in
//! that space, and decompressed by multiplying with `A` again. Since `A` is
//! a pure function of its seed, only the `n x r` buffer and one seed word
//! persist between steps. Periodic reseeding lifts the low-rank restriction
//! that a fixed projection would impose on the total weight change.
//!
//! The crate also ships an executable model of low-rank-adapter SGD dynamics
//! (`lora_dynamics`), which is both the motivation for the compression and
//! the oracle the `verify` suite checks it against, plus a small MLP training
//! harness for end-to-end experiments.

pub mod accum;
pub mod data;
pub mod error;
pub mod gauss;
pub mod lora_dynamics;
pub mod matrix;
pub mod model;
pub mod momentum;
pub mod optim;
pub mod pilot;
pub mod projection;
pub mod verify;

pub use error::{Error, Result};
pub use gauss::{derive_seed, GaussStream};
pub use matrix::Matrix;
pub use projection::{ProjectionSpec, ProjectorKind};
