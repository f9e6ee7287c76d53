//! Gradient accumulation in the projected space.
//!
//! An `n x m` gradient stream is summed as `C += g · A^T` into an `n x r`
//! buffer. After exactly `capacity` steps the caller reconstructs
//! `(1/capacity) · C · A` (or the unscaled sum) and resets, which also
//! reseeds the projection so consecutive cycles use independent matrices.

use crate::error::{Error, Result};
use crate::gauss::derive_seed;
use crate::matrix::Matrix;
use crate::projection::{down_project_with, up_project_with, ProjectionSpec, ProjectorKind};

/// How to scale the reconstructed cycle total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// Arithmetic mean of the accumulated gradients (the default: the whole
    /// point of accumulation is simulating a larger batch).
    #[default]
    Mean,
    /// Plain sum.
    Sum,
}

#[derive(Debug, Clone)]
pub struct CompressedAccumulator {
    c: Matrix,
    spec: ProjectionSpec,
    steps_seen: usize,
    capacity: usize,
    kind: ProjectorKind,
    seed_root: u64,
    epoch: u64,
}

impl CompressedAccumulator {
    /// `rows x dim` gradients compressed at `rank`, over cycles of
    /// `capacity` steps. `seed` is the per-parameter seed root; each cycle's
    /// projection seed is derived from it and the cycle index.
    pub fn new(rows: usize, dim: usize, rank: usize, capacity: usize, seed: u64) -> Result<Self> {
        Self::with_projector(rows, dim, rank, capacity, seed, ProjectorKind::Gaussian)
    }

    pub fn with_projector(
        rows: usize,
        dim: usize,
        rank: usize,
        capacity: usize,
        seed: u64,
        kind: ProjectorKind,
    ) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config(
                "accumulation capacity must be positive".to_string(),
            ));
        }
        if rows == 0 {
            return Err(Error::config(
                "accumulator rows must be positive".to_string(),
            ));
        }
        let spec = ProjectionSpec::new(derive_seed(seed, 0, 0), rank, dim)?;
        if rank > dim {
            log::warn!("accumulator rank {rank} exceeds dim {dim}: no compression benefit");
        }
        Ok(CompressedAccumulator {
            c: Matrix::zeros(rows, rank),
            spec,
            steps_seen: 0,
            capacity,
            kind,
            seed_root: seed,
            epoch: 0,
        })
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.steps_seen == self.capacity
    }

    pub fn state(&self) -> &Matrix {
        &self.c
    }

    /// Scalars held in the compressed buffer (`rows * rank`).
    pub fn state_scalars(&self) -> usize {
        self.c.len()
    }

    /// Adds one gradient to the cycle: `C += g · A^T`.
    pub fn accumulate(&mut self, g: &Matrix) -> Result<()> {
        if self.steps_seen == self.capacity {
            return Err(Error::state(format!(
                "accumulation cycle already complete ({} steps); reconstruct and reset first",
                self.capacity
            )));
        }
        if g.rows() != self.c.rows() || g.cols() != self.spec.dim {
            return Err(Error::shape(format!(
                "accumulate: gradient is {}x{}, expected {}x{}",
                g.rows(),
                g.cols(),
                self.c.rows(),
                self.spec.dim
            )));
        }
        if !g.is_finite() {
            return Err(Error::data(
                "accumulate: gradient contains non-finite entries".to_string(),
            ));
        }
        let down = down_project_with(g, &self.kind.materialize(&self.spec))?;
        self.c.add_assign_scaled(&down, 1.0)?;
        self.steps_seen += 1;
        Ok(())
    }

    /// Decompresses the completed cycle: `(1/capacity) · C · A` for
    /// [`Scaling::Mean`], `C · A` for [`Scaling::Sum`]. Errors before the
    /// cycle is complete; a partial average would silently hide bugs.
    pub fn reconstruct(&self, scaling: Scaling) -> Result<Matrix> {
        if self.steps_seen != self.capacity {
            return Err(Error::state(format!(
                "reconstruct before cycle completion: {} of {} steps seen",
                self.steps_seen, self.capacity
            )));
        }
        let up = up_project_with(&self.c, &self.kind.materialize(&self.spec))?;
        Ok(match scaling {
            Scaling::Mean => up.scale(1.0 / self.capacity as f64),
            Scaling::Sum => up,
        })
    }

    /// Zeroes the buffer and reseeds the projection for the next cycle.
    pub fn reset(&mut self) {
        self.c = Matrix::zeros(self.c.rows(), self.spec.rank);
        self.steps_seen = 0;
        self.epoch += 1;
        self.spec = ProjectionSpec {
            seed: derive_seed(self.seed_root, 0, self.epoch),
            ..self.spec
        };
    }

    pub fn reconstruct_and_reset(&mut self, scaling: Scaling) -> Result<Matrix> {
        let out = self.reconstruct(scaling)?;
        self.reset();
        Ok(out)
    }
}
