//! Executable model of low-rank-adapter SGD dynamics.
//!
//! Simulates the coupled updates of the adapter pair `(A, B)` under SGD,
//! tracks the closed-form recursion matrices `f_A`, `f_B` that describe the
//! same trajectory, and evaluates the geometric bound on `||f_A||`. The two
//! routes (simulation vs recursion) must agree; that equivalence is the
//! crate's deepest oracle. Also hosts the single-matrix update-rule variants
//! (full SGD, fixed/resampled random projection, adapters) that the pilot
//! experiment compares.

use crate::error::{Error, Result};
use crate::gauss::derive_seed;
use crate::matrix::Matrix;
use crate::projection::ProjectionSpec;

/// Simulated adapter trajectory plus the recursion state it must match.
///
/// Invariants: `b` starts all-zero, `f_a` and `f_b` start zero, and the
/// gradient history is aligned with the step counter.
#[derive(Debug, Clone)]
pub struct LoraDynState {
    a0: Matrix,
    a: Matrix,
    b: Matrix,
    f_a: Matrix,
    f_b: Matrix,
    eta: f64,
    grads: Vec<Matrix>,
    t: usize,
}

impl LoraDynState {
    /// Starts from `a0 (r x m)` with `b = 0 (rows x r)`.
    pub fn new(a0: Matrix, rows: usize, eta: f64) -> Result<Self> {
        if rows == 0 {
            return Err(Error::config("adapter rows must be positive".to_string()));
        }
        let (r, m) = a0.shape();
        Ok(LoraDynState {
            a: a0.clone(),
            b: Matrix::zeros(rows, r),
            f_a: Matrix::zeros(m, m),
            f_b: Matrix::zeros(rows, m),
            a0,
            eta,
            grads: Vec::new(),
            t: 0,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a0(&self) -> &Matrix {
        &self.a0
    }

    pub fn f_a(&self) -> &Matrix {
        &self.f_a
    }

    pub fn f_b(&self) -> &Matrix {
        &self.f_b
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn history(&self) -> &[Matrix] {
        &self.grads
    }

    /// One SGD step on both adapters, applied simultaneously from the
    /// time-`t` values:
    /// `A <- A - eta * B^T g`, `B <- B - eta * g A^T`.
    /// The recursion state advances in lockstep.
    pub fn step(&mut self, g: &Matrix) -> Result<()> {
        if g.rows() != self.b.rows() || g.cols() != self.a.cols() {
            return Err(Error::shape(format!(
                "lora step: gradient is {}x{}, expected {}x{}",
                g.rows(),
                g.cols(),
                self.b.rows(),
                self.a.cols()
            )));
        }
        let a_next = self.a.sub(&self.b.transpose().matmul(g)?.scale(self.eta))?;
        let b_next = self
            .b
            .sub(&g.matmul(&self.a.transpose())?.scale(self.eta))?;

        // f_A(t+1) = f_A(t) - eta f_B(t)^T g;  f_B(t+1) = f_B(t) - g (eta f_A(t)^T + I).
        let f_a_next = self
            .f_a
            .sub(&self.f_b.transpose().matmul(g)?.scale(self.eta))?;
        let f_b_next = self
            .f_b
            .sub(&g.matmul(&self.f_a.transpose())?.scale(self.eta))?
            .sub(g)?;

        self.a = a_next;
        self.b = b_next;
        self.f_a = f_a_next;
        self.f_b = f_b_next;
        self.grads.push(g.clone());
        self.t += 1;
        Ok(())
    }

    /// The closed-form trajectory implied by the recursion:
    /// `(A0 + eta A0 f_A(t), eta f_B(t) A0^T)`.
    pub fn closed_form(&self) -> Result<(Matrix, Matrix)> {
        let a = self.a0.add(&self.a0.matmul(&self.f_a)?.scale(self.eta))?;
        let b = self.f_b.matmul(&self.a0.transpose())?.scale(self.eta);
        Ok((a, b))
    }
}

/// Evaluates the recursion over a gradient history:
/// `f_A(t+1) = f_A(t) - eta f_B(t)^T G_t`,
/// `f_B(t+1) = f_B(t) - G_t (eta f_A(t)^T + I)`,
/// both starting from zero. Returns `(f_A(T), f_B(T))` at `T = grads.len()`.
pub fn recursion_eval(grads: &[Matrix], eta: f64) -> Result<(Matrix, Matrix)> {
    let first = grads
        .first()
        .ok_or_else(|| Error::state("recursion_eval needs a nonempty history".to_string()))?;
    let (n, m) = first.shape();
    let mut f_a = Matrix::zeros(m, m);
    let mut f_b = Matrix::zeros(n, m);
    for g in grads {
        if g.shape() != (n, m) {
            return Err(Error::shape(format!(
                "recursion_eval: inconsistent gradient shape {:?} vs {:?}",
                g.shape(),
                (n, m)
            )));
        }
        let f_a_next = f_a.sub(&f_b.transpose().matmul(g)?.scale(eta))?;
        let f_b_next = f_b.sub(&g.matmul(&f_a.transpose())?.scale(eta))?.sub(g)?;
        f_a = f_a_next;
        f_b = f_b_next;
    }
    Ok((f_a, f_b))
}

/// Outcome of checking `||f_A(t)||_F` against the geometric bound
/// `eta L^2 (1 - (eta^2 L^2)^t) / (1 - eta^2 L^2)`.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    /// `||f_A(T)||_F` from the recursion.
    pub lhs: f64,
    /// The geometric bound evaluated at `T`.
    pub rhs: f64,
    /// Empirical `L`: the largest prefix-sum Frobenius norm realized by the
    /// history, so the check needs no assumed constant.
    pub l: f64,
    pub ok: bool,
}

/// Evaluates the bound on a realized history. Requires `eta * L < 1`; the
/// bound is vacuous or divergent outside that regime.
pub fn fa_bound_check(grads: &[Matrix], eta: f64) -> Result<BoundCheck> {
    let first = grads
        .first()
        .ok_or_else(|| Error::state("fa_bound_check needs a nonempty history".to_string()))?;
    let mut running = Matrix::zeros(first.rows(), first.cols());
    let mut l = 0.0_f64;
    for g in grads {
        running.add_assign_scaled(g, 1.0)?;
        l = l.max(running.frobenius_norm());
    }
    if eta * l >= 1.0 {
        return Err(Error::Regime(format!(
            "fa_bound_check requires eta * L < 1, got eta = {eta}, L = {l}"
        )));
    }
    let (f_a, _) = recursion_eval(grads, eta)?;
    let lhs = f_a.frobenius_norm();
    let q = eta * eta * l * l;
    let t = grads.len() as i32;
    let rhs = if q == 0.0 {
        0.0
    } else {
        eta * l * l * (1.0 - q.powi(t)) / (1.0 - q)
    };
    Ok(BoundCheck {
        lhs,
        rhs,
        l,
        ok: lhs <= rhs,
    })
}

/// The update rules compared in the pilot experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    FullSgd,
    Lora,
    LoraB,
    Rp,
    Rrp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::FullSgd,
        Variant::Lora,
        Variant::LoraB,
        Variant::Rp,
        Variant::Rrp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::FullSgd => "full_sgd",
            Variant::Lora => "lora",
            Variant::LoraB => "lora_b",
            Variant::Rp => "rp",
            Variant::Rrp => "rrp",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateRule {
    pub variant: Variant,
    pub rank: usize,
    pub eta: f64,
}

/// Per-variant auxiliary state. `Fixed` holds the materialized projection
/// directly, which doubles as the injection point for exact-identity tests.
#[derive(Debug, Clone)]
pub enum VariantState {
    Direct,
    Fixed {
        a0: Matrix,
    },
    Resampled {
        seed_root: u64,
        step: u64,
    },
    Adapters {
        a: Matrix,
        b: Matrix,
        freeze_a: bool,
    },
}

/// Allocates the auxiliary state for a rule applied to a `rows x dim` weight.
/// The same `seed` gives LoRA variants and fixed RP the same `A0`, which is
/// what makes their trajectories directly comparable.
pub fn init_variant_state(
    rule: &UpdateRule,
    rows: usize,
    dim: usize,
    seed: u64,
) -> Result<VariantState> {
    match rule.variant {
        Variant::FullSgd => Ok(VariantState::Direct),
        Variant::Rp => {
            let a0 = ProjectionSpec::new(seed, rule.rank, dim)?.materialize();
            Ok(VariantState::Fixed { a0 })
        }
        Variant::Rrp => Ok(VariantState::Resampled {
            seed_root: seed,
            step: 0,
        }),
        Variant::Lora | Variant::LoraB => {
            let a0 = ProjectionSpec::new(seed, rule.rank, dim)?.materialize();
            Ok(VariantState::Adapters {
                a: a0,
                b: Matrix::zeros(rows, rule.rank),
                freeze_a: rule.variant == Variant::LoraB,
            })
        }
    }
}

/// Applies one step of the rule to weight `w` with gradient `g`. For adapter
/// variants `w` itself is frozen and only the state moves; use
/// [`effective_weight`] to observe the result.
pub fn variant_update(
    rule: &UpdateRule,
    w: &Matrix,
    g: &Matrix,
    state: VariantState,
) -> Result<(Matrix, VariantState)> {
    if g.shape() != w.shape() {
        return Err(Error::shape(format!(
            "variant_update: gradient {:?} vs weight {:?}",
            g.shape(),
            w.shape()
        )));
    }
    match state {
        VariantState::Direct => Ok((w.sub(&g.scale(rule.eta))?, VariantState::Direct)),
        VariantState::Fixed { a0 } => {
            let step = g.matmul(&a0.transpose())?.matmul(&a0)?;
            Ok((w.sub(&step.scale(rule.eta))?, VariantState::Fixed { a0 }))
        }
        VariantState::Resampled { seed_root, step } => {
            let spec = ProjectionSpec::new(derive_seed(seed_root, step, 0), rule.rank, w.cols())?;
            let a = spec.materialize();
            let delta = g.matmul(&a.transpose())?.matmul(&a)?;
            Ok((
                w.sub(&delta.scale(rule.eta))?,
                VariantState::Resampled {
                    seed_root,
                    step: step + 1,
                },
            ))
        }
        VariantState::Adapters { a, b, freeze_a } => {
            let b_next = b.sub(&g.matmul(&a.transpose())?.scale(rule.eta))?;
            let a_next = if freeze_a {
                a
            } else {
                a.sub(&b.transpose().matmul(g)?.scale(rule.eta))?
            };
            Ok((
                w.clone(),
                VariantState::Adapters {
                    a: a_next,
                    b: b_next,
                    freeze_a,
                },
            ))
        }
    }
}

/// The weight the forward pass should use: `w + b a` for adapter variants,
/// `w` itself otherwise.
pub fn effective_weight(w: &Matrix, state: &VariantState) -> Result<Matrix> {
    match state {
        VariantState::Adapters { a, b, .. } => w.add(&b.matmul(a)?),
        _ => Ok(w.clone()),
    }
}
