//! Self-checks run by the `verify` and `quadcheck` commands.

use super::{bp_setup, BpConfig, BpProblem};
use crate::krylov::{pcg, SolveMode, SolveOptions};
use crate::mesh::Deformation;
use crate::operator::{MatFreeOperator, MAX_DENSE_SIZE};
use crate::quadrature::{max_exactness_error, QuadratureKind, QuadratureRule};
use crate::vecops::{dot, norm_inf};
use crate::Result;
use serde::Serialize;

/// Relative tolerance for matrix-free versus assembled results.
pub const ORACLE_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const CONSTANT_NULLSPACE_TOL: f64 = 1e-11;
pub const VOLUME_TOL: f64 = 1e-10;
pub const QUADRATURE_TOL: f64 = 1e-13;
/// Accepted band around the ideal `2^{p+1}` error ratio under refinement.
pub const CONVERGENCE_BAND: (f64, f64) = (0.7, 1.3);
/// Tolerance used for the solves of the convergence check.
pub const CONVERGENCE_SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit: format!("<= {max:e}"),
            passed: value <= max,
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn relative_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = norm_inf(b).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn test_vector(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 0.5) * seed).sin() + 0.25 * ((i as f64) * 0.37 * seed).cos()).collect()
}

/// Matrix-free apply and diagonal against dense assembly.
pub fn oracle_checks(op: &MatFreeOperator) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if op.size() > MAX_DENSE_SIZE {
        return Ok(checks);
    }
    let dense = op.reference_assemble()?;
    let x = test_vector(op.size(), 0.731);
    let y = op.apply(&x)?;
    let mut xp = x.clone();
    op.project(&mut xp);
    let mut y_ref = dense.matvec(&xp);
    for &i in &op.constrained {
        y_ref[i] = x[i];
    }
    checks.push(Check::at_most("apply vs assembled", relative_max_diff(&y, &y_ref), ORACLE_TOL));
    let d = op.diagonal()?;
    checks.push(Check::at_most("diagonal vs assembled", relative_max_diff(&d, &dense.diagonal()), ORACLE_TOL));
    Ok(checks)
}

/// `|<Ax, y> - <x, Ay>| / max(|<Ax, y>|, |<x, Ay>|)`.
pub fn symmetry_defect(op: &MatFreeOperator, x: &[f64], y: &[f64]) -> Result<f64> {
    let ax = op.apply(x)?;
    let ay = op.apply(y)?;
    let (a, b) = (dot(&ax, y), dot(x, &ay));
    Ok((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
}

/// Runs the verification suite for one configuration.
pub fn verify_suite(config: &BpConfig) -> Result<Vec<Check>> {
    config.validate()?;
    crate::with_workers(config.threads, || {
        let mut checks = Vec::new();
        let (kind, q) = config.bp.quadrature(config.p);
        let rule = QuadratureRule::new(kind, q)?;
        checks.push(Check::at_most(
            format!("{kind:?} q={q} exactness"),
            max_exactness_error(&rule),
            QUADRATURE_TOL,
        ));

        let problem = bp_setup(config)?;
        let op = &problem.op;
        checks.extend(oracle_checks(op)?);
        let x = test_vector(op.size(), 0.913);
        let y = test_vector(op.size(), 0.277);
        checks.push(Check::at_most("symmetry", symmetry_defect(op, &x, &y)?, SYMMETRY_TOL));

        if config.bp.is_mass() {
            mass_checks(config, &problem, &mut checks)?;
        } else {
            poisson_checks(config, &problem, &mut checks)?;
        }
        Ok(checks)
    })
}

fn mass_checks(config: &BpConfig, problem: &BpProblem, checks: &mut Vec<Check>) -> Result<()> {
    // Gauss-Legendre q = p+2 integrates det J exactly up to p = 4 or on affine meshes
    if config.deformation == Deformation::None || config.p <= 4 {
        let scalar = MatFreeOperator::new(
            &problem.mesh,
            problem.op.basis.clone(),
            1,
            0.0,
            1.0,
            false,
        )?;
        let ones = vec![1.0; scalar.size()];
        let volume = dot(&ones, &scalar.apply(&ones)?);
        checks.push(Check::at_most("1^T B 1 - |Omega|", (volume - 1.0).abs(), VOLUME_TOL));
    }
    let opts = SolveOptions {
        mode: SolveMode::Solve,
        ..config.solve_options()
    };
    let (u, _) = pcg(&problem.op, &problem.precond, &problem.rhs, &opts)?;
    let err = u
        .iter()
        .zip(&problem.f_nodal)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    checks.push(Check::at_most("mass solve |u - f|_inf", err, 10.0 * config.tol));
    Ok(())
}

fn poisson_checks(config: &BpConfig, problem: &BpProblem, checks: &mut Vec<Check>) -> Result<()> {
    let unconstrained = MatFreeOperator::new(&problem.mesh, problem.op.basis.clone(), 1, 1.0, 0.0, false)?;
    let ones = vec![1.0; unconstrained.size()];
    let a1 = unconstrained.apply(&ones)?;
    let scale = unconstrained.diagonal()?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    checks.push(Check::at_most("|A 1|_inf (relative)", norm_inf(&a1) / scale, CONSTANT_NULLSPACE_TOL));

    let (ratio, _) = convergence_ratio(config, config.dims, config.dims.map(|n| 2 * n))?;
    let ideal = 2f64.powi(config.p as i32 + 1);
    checks.push(Check::within(
        format!("L2 error ratio / 2^{}", config.p + 1),
        ratio / ideal,
        CONVERGENCE_BAND.0,
        CONVERGENCE_BAND.1,
    ));
    Ok(())
}

/// Solves the manufactured problem on two meshes and returns the ratio of
/// coarse to fine L2 errors together with both errors.
pub fn convergence_ratio(config: &BpConfig, coarse: [usize; 3], fine: [usize; 3]) -> Result<(f64, [f64; 2])> {
    let mut errors = [0.0; 2];
    for (slot, dims) in [coarse, fine].into_iter().enumerate() {
        let cfg = BpConfig {
            dims,
            mode: SolveMode::Solve,
            tol: CONVERGENCE_SOLVE_TOL,
            ..config.clone()
        };
        let problem = bp_setup(&cfg)?;
        let (u, _) = problem.solve()?;
        errors[slot] = problem.l2_error(&u)?;
    }
    Ok((errors[0] / errors[1], errors))
}

/// Exactness of every rule with up to `max_points` points.
pub fn quadrature_report(max_points: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for q in 1..=max_points {
        for kind in [QuadratureKind::GaussLegendre, QuadratureKind::GaussLobattoLegendre] {
            if kind == QuadratureKind::GaussLobattoLegendre && q < 2 {
                continue;
            }
            let rule = QuadratureRule::new(kind, q)?;
            checks.push(Check::at_most(
                format!("{kind:?} q={q} degree<={}", kind.exact_degree(q)),
                max_exactness_error(&rule),
                QUADRATURE_TOL,
            ));
        }
    }
    Ok(checks)
}
