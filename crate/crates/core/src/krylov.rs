//! Preconditioned conjugate gradients.

use crate::vecops::{axpy, divide, dot, dot_pair, xpby};
use crate::{Error, Result};
use std::time::{Duration, Instant};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_BENCH_ITERS: usize = 20;

/// A symmetric linear operator on vectors of length `size()`.
pub trait LinearOperator: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    None,
    /// Divide by the operator diagonal.
    Jacobi(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Iterate until the relative residual reaches the tolerance.
    Solve,
    /// Run exactly this many iterations regardless of the residual.
    FixedIterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol_rel: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_rel: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            mode: SolveMode::Solve,
        }
    }
}

impl SolveOptions {
    pub fn bench(iterations: usize) -> Self {
        Self {
            mode: SolveMode::FixedIterations(iterations),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||r_k||_2` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub apply_time_seconds: f64,
    pub total_time_seconds: f64,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

/// Solves `A x = b` from `x = 0`.
///
/// Each iteration performs one operator application, one preconditioner
/// application, two inner products and three vector updates. The residual
/// norm for the stopping test is fused into the `r . z` reduction.
pub fn pcg(
    op: &dyn LinearOperator,
    precond: &Preconditioner,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = op.size();
    if b.len() != n {
        return Err(Error::ShapeMismatch {
            what: "right-hand side",
            expected: n,
            got: b.len(),
        });
    }
    if let Preconditioner::Jacobi(d) = precond {
        if d.len() != n {
            return Err(Error::ShapeMismatch {
                what: "Jacobi diagonal",
                expected: n,
                got: d.len(),
            });
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration: 0 });
    }

    let mut apply_time = Duration::ZERO;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let precondition = |r: &[f64], z: &mut [f64]| match precond {
        Preconditioner::None => z.copy_from_slice(r),
        Preconditioner::Jacobi(d) => divide(r, d, z),
    };

    let b_norm = dot(b, b).sqrt();
    let mut history = vec![b_norm];
    let (target, max_iter) = match opts.mode {
        SolveMode::Solve => (opts.tol_rel * b_norm, opts.max_iter),
        SolveMode::FixedIterations(k) => (f64::NEG_INFINITY, k),
    };
    let mut converged = b_norm <= target || b_norm == 0.0;

    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut k = 0;
    while !converged && k < max_iter {
        let t = Instant::now();
        op.apply(&p, &mut ap)?;
        apply_time += t.elapsed();
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { iteration: k, pap });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        precondition(&r, &mut z);
        let (rz_new, rr) = dot_pair(&r, &z);
        let r_norm = rr.sqrt();
        k += 1;
        history.push(r_norm);
        if !r_norm.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        if r_norm <= target || r_norm == 0.0 {
            converged = true;
            break;
        }
        xpby(&z, rz_new / rz, &mut p);
        rz = rz_new;
    }
    let report = SolveReport {
        iterations: k,
        residual_history: history,
        converged,
        apply_time_seconds: apply_time.as_secs_f64(),
        total_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}
