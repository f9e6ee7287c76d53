//! Seeded random projections: generate, down-project, up-project, and
//! measure how far `A^T A` sits from the identity.
//!
//! Convention: the projection compresses the second dimension (columns).
//! `A in R^{r x m}` has i.i.d. `N(0, 1/r)` entries, so `E[A^T A] = I` and
//! decompression needs no extra scale factor.

use crate::error::{Error, Result};
use crate::gauss::GaussStream;
use crate::matrix::Matrix;

/// A projection matrix, denoted by the three words that regenerate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub rank: usize,
    pub dim: usize,
}

impl ProjectionSpec {
    pub fn new(seed: u64, rank: usize, dim: usize) -> Result<Self> {
        if rank == 0 || dim == 0 {
            return Err(Error::config(format!(
                "projection rank and dim must be positive, got rank={rank} dim={dim}"
            )));
        }
        Ok(ProjectionSpec { seed, rank, dim })
    }

    /// Regenerates the `rank x dim` matrix with entries `N(0, 1/rank)`.
    /// Bit-identical across calls with the same spec.
    pub fn materialize(&self) -> Matrix {
        let mut stream = GaussStream::new(self.seed);
        let scale = 1.0 / (self.rank as f64).sqrt();
        let mut m = Matrix::zeros(self.rank, self.dim);
        for v in m.data_mut() {
            *v = stream.next_gauss() * scale;
        }
        m
    }
}

/// Which matrix a spec denotes. `Gaussian` is the production path;
/// `Identity` substitutes `I_dim` (sensible only when `rank == dim`) so
/// compressed code paths can be checked against their uncompressed
/// counterparts exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorKind {
    #[default]
    Gaussian,
    Identity,
}

impl ProjectorKind {
    pub fn materialize(&self, spec: &ProjectionSpec) -> Matrix {
        match self {
            ProjectorKind::Gaussian => spec.materialize(),
            ProjectorKind::Identity => Matrix::identity(spec.dim),
        }
    }
}

/// Compress: `g · A^T`, mapping `n x m` to `n x r`.
pub fn down_project(g: &Matrix, spec: &ProjectionSpec) -> Result<Matrix> {
    down_project_with(g, &spec.materialize())
}

/// Compress against an explicitly materialized projection.
pub fn down_project_with(g: &Matrix, a: &Matrix) -> Result<Matrix> {
    if g.cols() != a.cols() {
        return Err(Error::shape(format!(
            "down_project: gradient is {}x{}, projection is {}x{}",
            g.rows(),
            g.cols(),
            a.rows(),
            a.cols()
        )));
    }
    g.matmul(&a.transpose())
}

/// Decompress: `c · A`, mapping `n x r` back to `n x m`.
pub fn up_project(c: &Matrix, spec: &ProjectionSpec) -> Result<Matrix> {
    up_project_with(c, &spec.materialize())
}

/// Decompress against an explicitly materialized projection.
pub fn up_project_with(c: &Matrix, a: &Matrix) -> Result<Matrix> {
    if c.cols() != a.rows() {
        return Err(Error::shape(format!(
            "up_project: state is {}x{}, projection is {}x{}",
            c.rows(),
            c.cols(),
            a.rows(),
            a.cols()
        )));
    }
    c.matmul(a)
}

/// `max_{i,j} |[A^T A - I]_{i,j}|` for the matrix this projection denotes.
pub fn reconstruction_error(spec: &ProjectionSpec) -> f64 {
    reconstruction_error_of(&spec.materialize())
}

/// Same measure for an explicit matrix.
pub fn reconstruction_error_of(a: &Matrix) -> f64 {
    let gram = a
        .transpose()
        .matmul(a)
        .expect("gram product is always conformant");
    let mut worst = 0.0_f64;
    for i in 0..gram.rows() {
        for j in 0..gram.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram.get(i, j) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::derive_seed;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = GaussStream::new(seed);
        Matrix::from_fn(rows, cols, |_, _| s.next_gauss())
    }

    #[test]
    fn materialize_is_deterministic() {
        let spec = ProjectionSpec::new(5, 4, 9).unwrap();
        assert_eq!(spec.materialize(), spec.materialize());
    }

    #[test]
    fn entry_variance_matches_one_over_rank() {
        let spec = ProjectionSpec::new(17, 256, 512).unwrap();
        let a = spec.materialize();
        let n = a.len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        let var = a
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let want = 1.0 / 256.0;
        assert!(var > 0.9 * want && var < 1.1 * want, "var {var} vs {want}");
    }

    #[test]
    fn mean_gram_approaches_identity() {
        // E[A^T A] = I with the 1/r scaling folded into sampling.
        let (r, m, specs) = (64, 32, 200);
        let mut acc = Matrix::zeros(m, m);
        for k in 0..specs {
            let spec = ProjectionSpec::new(derive_seed(400, k, 0), r, m).unwrap();
            let a = spec.materialize();
            let gram = a.transpose().matmul(&a).unwrap();
            acc.add_assign_scaled(&gram, 1.0 / specs as f64).unwrap();
        }
        let dev = acc.max_abs_diff(&Matrix::identity(m)).unwrap();
        assert!(dev <= 0.05, "max |mean gram - I| = {dev}");
    }

    #[test]
    fn down_project_zero_is_zero() {
        let spec = ProjectionSpec::new(3, 4, 8).unwrap();
        let got = down_project(&Matrix::zeros(5, 8), &spec).unwrap();
        assert_eq!(got, Matrix::zeros(5, 4));
    }

    #[test]
    fn identity_projection_is_transparent() {
        let g = random_matrix(4, 6, 21);
        let eye = Matrix::identity(6);
        let down = down_project_with(&g, &eye).unwrap();
        assert_eq!(down, g);
        let round = up_project_with(&down, &eye).unwrap();
        assert_eq!(round, g);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = ProjectionSpec::new(3, 4, 8).unwrap();
        assert!(down_project(&Matrix::zeros(5, 7), &spec).is_err());
        assert!(up_project(&Matrix::zeros(5, 5), &spec).is_err());
    }

    #[test]
    fn row_norms_largely_preserved() {
        // Per-row norm ratio within [0.5, 1.5] for >= 99% of seeds.
        let (n, m, r, trials) = (8, 512, 128, 1000);
        let g = random_matrix(n, m, 77);
        let mut ok = 0;
        for t in 0..trials {
            let spec = ProjectionSpec::new(derive_seed(500, t, 0), r, m).unwrap();
            let down = down_project(&g, &spec).unwrap();
            let all_rows_ok = (0..n).all(|i| {
                let orig: f64 = g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let proj: f64 = down.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let ratio = proj / orig;
                (0.5..=1.5).contains(&ratio)
            });
            if all_rows_ok {
                ok += 1;
            }
        }
        assert!(
            ok as f64 / trials as f64 >= 0.99,
            "only {ok}/{trials} seeds preserved norms"
        );
    }

    #[test]
    fn up_project_zero_is_zero() {
        let spec = ProjectionSpec::new(3, 4, 8).unwrap();
        let got = up_project(&Matrix::zeros(5, 4), &spec).unwrap();
        assert_eq!(got, Matrix::zeros(5, 8));
    }

    #[test]
    fn round_trip_is_unbiased() {
        // Mean of up(down(g)) over seeds within 3 standard errors of g.
        let (n, m, r, trials) = (4, 64, 16, 2000);
        let g = random_matrix(n, m, 333);
        let mut sum = Matrix::zeros(n, m);
        let mut sum_sq = Matrix::zeros(n, m);
        for t in 0..trials {
            let spec = ProjectionSpec::new(derive_seed(600, t, 0), r, m).unwrap();
            let rt = up_project(&down_project(&g, &spec).unwrap(), &spec).unwrap();
            sum.add_assign_scaled(&rt, 1.0).unwrap();
            for (acc, v) in sum_sq.data_mut().iter_mut().zip(rt.data()) {
                *acc += v * v;
            }
        }
        let inv = 1.0 / trials as f64;
        let mut worst = 0.0_f64;
        for idx in 0..g.len() {
            let mean = sum.data()[idx] * inv;
            let var = (sum_sq.data()[idx] * inv - mean * mean).max(0.0);
            let se = (var * inv).sqrt();
            let dev = (mean - g.data()[idx]).abs();
            if se > 0.0 {
                worst = worst.max(dev / se);
            }
        }
        assert!(worst <= 3.0, "worst deviation {worst} standard errors");
    }

    #[test]
    fn reconstruction_error_of_identity_is_zero() {
        assert_eq!(reconstruction_error_of(&Matrix::identity(16)), 0.0);
    }

    #[test]
    fn reconstruction_error_shrinks_with_rank() {
        let m = 256;
        let median = |rank: usize, tag: u64| {
            let mut errs: Vec<f64> = (0..100)
                .map(|t| {
                    let spec = ProjectionSpec::new(derive_seed(tag, t, 0), rank, m).unwrap();
                    reconstruction_error(&spec)
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (errs[49] + errs[50]) / 2.0
        };
        let lo = median(256, 700);
        let hi = median(16, 701);
        assert!(
            lo < hi,
            "median error at r=256 ({lo}) should beat r=16 ({hi})"
        );
    }

    #[test]
    fn linearity_of_down_projection() {
        let spec = ProjectionSpec::new(8, 6, 24).unwrap();
        let g1 = random_matrix(5, 24, 81);
        let g2 = random_matrix(5, 24, 82);
        let both = down_project(&g1.add(&g2).unwrap(), &spec).unwrap();
        let split = down_project(&g1, &spec)
            .unwrap()
            .add(&down_project(&g2, &spec).unwrap())
            .unwrap();
        assert!(both.max_abs_diff(&split).unwrap() <= 1e-10);
    }
}
