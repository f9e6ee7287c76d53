//! EMA momentum maintained in the projected space.
//!
//! The `n x r` buffer tracks `M = beta * M + (1 - beta) * g · A^T`. Every
//! `resample_every` steps the projection is reseeded and the buffer is
//! carried over through `M · A_old · A_new^T`, which is approximately
//! lossless because both Gram matrices sit near the identity. The yielded
//! update is the decompressed momentum `M · A`; learning-rate application
//! is the optimizer's business, not this module's. Any other EMA-tracked
//! statistic of gradients would compress the same way; momentum is just the
//! one built here.

use crate::error::{Error, Result};
use crate::gauss::derive_seed;
use crate::matrix::Matrix;
use crate::projection::{down_project_with, up_project_with, ProjectionSpec, ProjectorKind};

#[derive(Debug, Clone)]
pub struct CompressedMomentum {
    m_state: Matrix,
    spec: ProjectionSpec,
    t: u64,
    resample_every: Option<u64>,
    beta: f64,
    kind: ProjectorKind,
    seed_root: u64,
    epoch: u64,
}

impl CompressedMomentum {
    /// `rows x dim` gradients at decay `beta`, reseeding every
    /// `resample_every` steps (`None` keeps one projection forever).
    pub fn new(
        rows: usize,
        dim: usize,
        rank: usize,
        resample_every: Option<u64>,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::with_projector(
            rows,
            dim,
            rank,
            resample_every,
            beta,
            seed,
            ProjectorKind::Gaussian,
        )
    }

    pub fn with_projector(
        rows: usize,
        dim: usize,
        rank: usize,
        resample_every: Option<u64>,
        beta: f64,
        seed: u64,
        kind: ProjectorKind,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::config(format!(
                "momentum decay must be in [0, 1], got {beta}"
            )));
        }
        if resample_every == Some(0) {
            return Err(Error::config(
                "resample interval must be positive".to_string(),
            ));
        }
        if rows == 0 {
            return Err(Error::config("momentum rows must be positive".to_string()));
        }
        let spec = ProjectionSpec::new(derive_seed(seed, 0, 0), rank, dim)?;
        if rank > dim {
            log::warn!("momentum rank {rank} exceeds dim {dim}: no compression benefit");
        }
        Ok(CompressedMomentum {
            m_state: Matrix::zeros(rows, rank),
            spec,
            t: 0,
            resample_every,
            beta,
            kind,
            seed_root: seed,
            epoch: 0,
        })
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn state(&self) -> &Matrix {
        &self.m_state
    }

    pub fn state_scalars(&self) -> usize {
        self.m_state.len()
    }

    /// One momentum step. Returns the decompressed update direction
    /// `M_{t+1} · A`. Resampling fires when `t > 0` and `t % kappa == 0`
    /// (at `t = 0` there is nothing to transfer).
    pub fn step(&mut self, g: &Matrix) -> Result<Matrix> {
        if g.rows() != self.m_state.rows() || g.cols() != self.spec.dim {
            return Err(Error::shape(format!(
                "momentum step: gradient is {}x{}, expected {}x{}",
                g.rows(),
                g.cols(),
                self.m_state.rows(),
                self.spec.dim
            )));
        }
        if !g.is_finite() {
            return Err(Error::data(
                "momentum step: gradient contains non-finite entries".to_string(),
            ));
        }

        let due = self.t > 0
            && self
                .resample_every
                .is_some_and(|k| self.t.is_multiple_of(k));
        let a_new = if due {
            let a_old = self.kind.materialize(&self.spec);
            self.epoch += 1;
            self.spec = ProjectionSpec {
                seed: derive_seed(self.seed_root, 0, self.epoch),
                ..self.spec
            };
            let a_new = self.kind.materialize(&self.spec);
            // Transfer: M · A_old · A_new^T keeps the history in the new basis.
            let carried = up_project_with(&self.m_state, &a_old)?;
            self.m_state = down_project_with(&carried, &a_new)?;
            a_new
        } else {
            self.kind.materialize(&self.spec)
        };

        let down = down_project_with(g, &a_new)?;
        self.m_state = self
            .m_state
            .scale(self.beta)
            .add(&down.scale(1.0 - self.beta))?;
        self.t += 1;
        up_project_with(&self.m_state, &a_new)
    }
}

/// Relative Frobenius loss of carrying `m_state` from `old` to `new`:
/// `||m · A_old · A_new^T · A_new - m · A_old||_F / ||m · A_old||_F`.
/// Zero state returns 0 by convention.
pub fn transfer_distortion(
    old: &ProjectionSpec,
    new: &ProjectionSpec,
    m_state: &Matrix,
) -> Result<f64> {
    if old.dim != new.dim {
        return Err(Error::shape(format!(
            "transfer_distortion: specs disagree on dim ({} vs {})",
            old.dim, new.dim
        )));
    }
    let decompressed = up_project_with(m_state, &old.materialize())?;
    let denom = decompressed.frobenius_norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let a_new = new.materialize();
    let transferred = down_project_with(&decompressed, &a_new)?;
    let replayed = up_project_with(&transferred, &a_new)?;
    Ok(replayed.sub(&decompressed)?.frobenius_norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::GaussStream;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = GaussStream::new(seed);
        Matrix::from_fn(rows, cols, |_, _| s.next_gauss())
    }

    #[test]
    fn init_is_zero_state() {
        let mom = CompressedMomentum::new(4, 10, 3, Some(5), 0.9, 1).unwrap();
        assert_eq!(mom.state(), &Matrix::zeros(4, 3));
        assert_eq!(mom.t(), 0);
        assert_eq!(mom.state_scalars(), 12);
    }

    #[test]
    fn same_seed_same_spec() {
        let a = CompressedMomentum::new(4, 10, 3, Some(5), 0.9, 1).unwrap();
        let b = CompressedMomentum::new(4, 10, 3, Some(5), 0.9, 1).unwrap();
        assert_eq!(a.spec(), b.spec());
    }

    #[test]
    fn beta_out_of_range_is_config_error() {
        assert!(matches!(
            CompressedMomentum::new(4, 10, 3, Some(5), 1.5, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            CompressedMomentum::new(4, 10, 3, Some(0), 0.9, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn beta_zero_yields_projected_gradient() {
        let mut mom = CompressedMomentum::new(3, 12, 4, None, 0.0, 5).unwrap();
        let g = random_matrix(3, 12, 8);
        let update = mom.step(&g).unwrap();
        let a = mom.spec().materialize();
        let want = g.matmul(&a.transpose()).unwrap().matmul(&a).unwrap();
        assert!(update.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn step_rejects_bad_gradients() {
        let mut mom = CompressedMomentum::new(3, 12, 4, Some(2), 0.9, 5).unwrap();
        assert!(matches!(
            mom.step(&Matrix::zeros(3, 11)),
            Err(Error::Shape(_))
        ));
        let mut bad = Matrix::zeros(3, 12);
        bad.data_mut()[5] = f64::INFINITY;
        assert!(matches!(mom.step(&bad), Err(Error::Data(_))));
        let other_dim = ProjectionSpec::new(4, 4, 20).unwrap();
        let same_dim = ProjectionSpec::new(5, 4, 12).unwrap();
        assert!(matches!(
            transfer_distortion(&same_dim, &other_dim, &Matrix::zeros(3, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_gradients_keep_zero_state() {
        let mut mom = CompressedMomentum::new(3, 12, 4, Some(2), 0.9, 5).unwrap();
        for _ in 0..7 {
            let update = mom.step(&Matrix::zeros(3, 12)).unwrap();
            assert_eq!(update, Matrix::zeros(3, 12));
        }
        assert_eq!(mom.state(), &Matrix::zeros(3, 4));
    }

    #[test]
    fn fixed_projection_equals_projected_naive_ema() {
        // With no resampling, linearity forces the compressed state to equal
        // down_project(naive EMA) exactly (up to f64 roundoff).
        let (n, m, r, beta, steps) = (5, 24, 6, 0.9, 40);
        let mut mom = CompressedMomentum::new(n, m, r, None, beta, 17).unwrap();
        let a = mom.spec().materialize();
        let mut naive = Matrix::zeros(n, m);
        for k in 0..steps {
            let g = random_matrix(n, m, 300 + k);
            naive = naive.scale(beta).add(&g.scale(1.0 - beta)).unwrap();
            mom.step(&g).unwrap();
        }
        let want = down_project_with(&naive, &a).unwrap();
        assert!(mom.state().max_abs_diff(&want).unwrap() <= 1e-10);
    }

    #[test]
    fn transfer_event_matches_brute_force_recurrence() {
        // kappa = 3, T = 5: one transfer at t = 3. Replay the recurrence with
        // explicitly materialized projection matrices.
        let (n, m, r, beta) = (4, 16, 3, 0.8);
        let mut mom = CompressedMomentum::new(n, m, r, Some(3), beta, 23).unwrap();
        let spec0 = *mom.spec();

        let grads: Vec<Matrix> = (0..5).map(|k| random_matrix(n, m, 400 + k)).collect();
        for g in &grads {
            mom.step(g).unwrap();
        }
        let spec1 = *mom.spec();
        assert_ne!(spec0.seed, spec1.seed);

        let a0 = spec0.materialize();
        let a1 = spec1.materialize();
        let mut expect = Matrix::zeros(n, r);
        for (t, g) in grads.iter().enumerate() {
            let a = if t < 3 { &a0 } else { &a1 };
            if t == 3 {
                expect = expect.matmul(&a0).unwrap().matmul(&a1.transpose()).unwrap();
            }
            let down = g.matmul(&a.transpose()).unwrap();
            expect = expect.scale(beta).add(&down.scale(1.0 - beta)).unwrap();
        }
        assert!(mom.state().max_abs_diff(&expect).unwrap() <= 1e-10);
    }

    #[test]
    fn resampling_fires_only_on_schedule() {
        let mut mom = CompressedMomentum::new(2, 8, 2, Some(4), 0.9, 31).unwrap();
        let mut seeds = vec![mom.spec().seed];
        for _ in 0..9 {
            mom.step(&random_matrix(2, 8, 600 + seeds.len() as u64))
                .unwrap();
            seeds.push(mom.spec().seed);
        }
        // seeds[t] is the seed after step t; transfers happen entering t = 4, 8.
        assert_eq!(seeds[0], seeds[4]);
        assert_ne!(seeds[4], seeds[5]);
        assert_eq!(seeds[5], seeds[8]);
        assert_ne!(seeds[8], seeds[9]);
    }

    #[test]
    fn update_norm_stays_bounded() {
        let (n, m, r, beta) = (4, 32, 8, 0.95);
        let mut mom = CompressedMomentum::new(n, m, r, Some(10), beta, 37).unwrap();
        let mut worst = 0.0_f64;
        for k in 0..200 {
            let g = random_matrix(n, m, 800 + k);
            let g = g.scale(1.0 / g.frobenius_norm());
            let update = mom.step(&g).unwrap();
            worst = worst.max(update.frobenius_norm());
        }
        assert!(worst.is_finite());
        // Gradients have unit norm; the EMA of their projections cannot blow up.
        assert!(worst < 50.0, "update norm grew to {worst}");
    }

    #[test]
    fn distortion_zero_for_zero_state() {
        let old = ProjectionSpec::new(1, 4, 16).unwrap();
        let new = ProjectionSpec::new(2, 4, 16).unwrap();
        let d = transfer_distortion(&old, &new, &Matrix::zeros(3, 4)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn distortion_nonzero_for_same_spec() {
        // Replaying a state through its own projection is biased: the
        // decompressed state lives in the projection's row space, where the
        // Gram matrix scales vectors by about dim/rank instead of 1. The
        // distortion is therefore near dim/rank - 1, not near zero.
        let spec = ProjectionSpec::new(9, 32, 256).unwrap();
        let m_state = random_matrix(4, 32, 901);
        let d = transfer_distortion(&spec, &spec, &m_state).unwrap();
        assert!(d > 0.0, "A^T A is not exactly the identity");
        let dim_over_rank = 256.0 / 32.0;
        assert!(
            d < 2.0 * dim_over_rank,
            "distortion {d} above the empirical r-dependent bound"
        );
        // At rank = dim the row-space bias vanishes and only the Gram
        // spectrum's O(1) spread remains.
        let square = ProjectionSpec::new(9, 256, 256).unwrap();
        let state = random_matrix(4, 256, 902);
        let d_square = transfer_distortion(&square, &square, &state).unwrap();
        assert!(
            d_square > 0.0 && d_square < 2.0,
            "square-case distortion {d_square}"
        );
        assert!(
            d_square < d,
            "distortion must shrink as rank approaches dim"
        );
    }

    #[test]
    fn distortion_shrinks_with_rank() {
        let m = 256;
        let median = |rank: usize, tag: u64| {
            let mut ds: Vec<f64> = (0..100)
                .map(|t| {
                    let old = ProjectionSpec::new(derive_seed(tag, t, 0), rank, m).unwrap();
                    let new = ProjectionSpec::new(derive_seed(tag, t, 1), rank, m).unwrap();
                    let state = random_matrix(2, rank, 1000 + t);
                    transfer_distortion(&old, &new, &state).unwrap()
                })
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (ds[49] + ds[50]) / 2.0
        };
        let lo = median(256, 40);
        let hi = median(16, 41);
        assert!(
            lo < hi,
            "median distortion r=256 ({lo}) should beat r=16 ({hi})"
        );
    }
}
