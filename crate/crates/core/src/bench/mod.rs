//! The bake-off problems BP1-BP6 and their benchmark driver.
//!
//! | BP | operator | components | quadrature |
//! |----|----------|------------|------------|
//! | 1  | mass     | 1 | Gauss-Legendre, `q = p + 2` |
//! | 2  | mass     | 3 | Gauss-Legendre, `q = p + 2` |
//! | 3  | Poisson  | 1 | Gauss-Legendre, `q = p + 2` |
//! | 4  | Poisson  | 3 | Gauss-Legendre, `q = p + 2` |
//! | 5  | Poisson  | 1 | Gauss-Lobatto-Legendre, `q = p + 1` (collocated) |
//! | 6  | Poisson  | 3 | Gauss-Lobatto-Legendre, `q = p + 1` (collocated) |
//!
//! Poisson problems carry homogeneous Dirichlet constraints on the whole
//! boundary; mass problems are unconstrained.

mod metrics;
mod verify;

pub use metrics::*;
pub use verify::*;

use crate::basis::{make_basis, EvalMode, TensorBasis};
use crate::geometry::{self, evaluate_elements};
use crate::krylov::{pcg, Preconditioner, SolveMode, SolveOptions, SolveReport, DEFAULT_BENCH_ITERS, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::mesh::{Deformation, HexMesh};
use crate::operator::MatFreeOperator;
use crate::quadrature::{QuadratureKind, QuadratureRule};
use crate::restriction::ElemRestriction;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Repetitions of the timed CG loop; the minimum is reported.
pub const TIMING_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BpKind {
    Bp1,
    Bp2,
    Bp3,
    Bp4,
    Bp5,
    Bp6,
}

impl BpKind {
    pub const ALL: [BpKind; 6] = [BpKind::Bp1, BpKind::Bp2, BpKind::Bp3, BpKind::Bp4, BpKind::Bp5, BpKind::Bp6];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    /// Scalar for odd problems, 3-vector for even ones.
    pub fn components(self) -> usize {
        if self.number() % 2 == 1 {
            1
        } else {
            3
        }
    }

    pub fn is_mass(self) -> bool {
        matches!(self, BpKind::Bp1 | BpKind::Bp2)
    }

    /// `(alpha, beta)` of `alpha A + beta B`.
    pub fn coefficients(self) -> (f64, f64) {
        if self.is_mass() {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        }
    }

    pub fn quadrature(self, p: usize) -> (QuadratureKind, usize) {
        match self {
            BpKind::Bp5 | BpKind::Bp6 => (QuadratureKind::GaussLobattoLegendre, p + 1),
            _ => (QuadratureKind::GaussLegendre, p + 2),
        }
    }
}

impl fmt::Display for BpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bp{}", self.number())
    }
}

impl FromStr for BpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let n: usize = lower
            .strip_prefix("bp")
            .unwrap_or(&lower)
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("unknown problem '{s}'")))?;
        BpKind::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown problem '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpConfig {
    pub bp: BpKind,
    pub p: usize,
    pub dims: [usize; 3],
    pub deformation: Deformation,
    pub mode: SolveMode,
    pub tol: f64,
    pub max_iter: usize,
    /// Worker threads, the stand-in for ranks.
    pub threads: usize,
    pub jacobi: bool,
}

impl BpConfig {
    pub fn new(bp: BpKind, p: usize, dims: [usize; 3]) -> Self {
        Self {
            bp,
            p,
            dims,
            deformation: Deformation::None,
            mode: SolveMode::FixedIterations(DEFAULT_BENCH_ITERS),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            threads: 1,
            jacobi: true,
        }
    }

    pub fn q(&self) -> usize {
        self.bp.quadrature(self.p).1
    }

    pub fn m(&self) -> usize {
        self.bp.components()
    }

    pub fn num_elements(&self) -> usize {
        self.dims.iter().product()
    }

    /// Solved degrees of freedom: components times unconstrained scalar nodes.
    pub fn dofs(&self) -> usize {
        let lattice = self.dims.map(|n| n * self.p + 1);
        let scalar: usize = if self.bp.is_mass() {
            lattice.iter().product()
        } else {
            lattice.iter().map(|&n| n - 2).product()
        };
        self.m() * scalar
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol_rel: self.tol,
            max_iter: self.max_iter,
            mode: self.mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("degree must be at least 1".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("element counts must be positive, got {:?}", self.dims)));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("thread count must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let SolveMode::FixedIterations(0) = self.mode {
            return Err(Error::InvalidConfig("iteration count must be at least 1".into()));
        }
        Ok(())
    }
}

/// `sin(pi x) sin(pi y) sin(pi z)`, zero on the boundary of the unit cube.
pub fn exact_solution(x: [f64; 3]) -> f64 {
    x.iter().map(|&t| (PI * t).sin()).product()
}

/// Right-hand side field `f` with `-alpha lap u + beta u = f` for the
/// manufactured solution.
pub fn forcing(bp: BpKind, x: [f64; 3]) -> f64 {
    if bp.is_mass() {
        exact_solution(x)
    } else {
        3.0 * PI * PI * exact_solution(x)
    }
}

pub fn make_bp_basis(bp: BpKind, p: usize) -> Result<TensorBasis> {
    let (kind, q) = bp.quadrature(p);
    make_basis(p, QuadratureRule::new(kind, q)?)
}

/// Nodal interpolant of a scalar field, replicated over `m` components.
pub fn interpolate(mesh: &HexMesh, m: usize, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    let scalar: Vec<f64> = (0..mesh.n_l).map(|i| f(mesh.node_coords(i))).collect();
    scalar.repeat(m)
}

#[derive(Debug)]
pub struct BpProblem {
    pub config: BpConfig,
    pub mesh: HexMesh,
    pub op: MatFreeOperator,
    /// `B f` with constrained entries zeroed.
    pub rhs: Vec<f64>,
    /// Nodal interpolant of `f`.
    pub f_nodal: Vec<f64>,
    pub precond: Preconditioner,
}

impl BpProblem {
    pub fn solve(&self) -> Result<(Vec<f64>, SolveReport)> {
        pcg(&self.op, &self.precond, &self.rhs, &self.config.solve_options())
    }

    pub fn l2_error(&self, u: &[f64]) -> Result<f64> {
        l2_error(&self.mesh, self.config.m(), u, exact_solution)
    }
}

/// Builds the operator, right-hand side and preconditioner of a problem.
/// Runs on the caller's thread pool.
pub fn bp_setup(config: &BpConfig) -> Result<BpProblem> {
    config.validate()?;
    let bp = config.bp;
    let m = config.m();
    let mesh = HexMesh::new(config.dims, config.p, config.deformation)?;
    let basis = make_bp_basis(bp, config.p)?;
    let (alpha, beta) = bp.coefficients();
    let op = MatFreeOperator::new(&mesh, basis.clone(), m, alpha, beta, !bp.is_mass())?;
    let f_nodal = interpolate(&mesh, m, |x| forcing(bp, x));
    let mut rhs = if bp.is_mass() {
        op.apply(&f_nodal)?
    } else {
        MatFreeOperator::new(&mesh, basis, m, 0.0, 1.0, false)?.apply(&f_nodal)?
    };
    op.project(&mut rhs);
    let precond = if config.jacobi {
        Preconditioner::Jacobi(op.diagonal()?)
    } else {
        Preconditioner::None
    };
    Ok(BpProblem {
        config: config.clone(),
        mesh,
        op,
        rhs,
        f_nodal,
        precond,
    })
}

/// `sqrt(sum_e sum_k w det J |u_h - u*|^2)` over all components, evaluated
/// with Gauss-Legendre `q = p + 2` regardless of the problem's own rule.
pub fn l2_error(mesh: &HexMesh, m: usize, u_h: &[f64], exact: impl Fn([f64; 3]) -> f64) -> Result<f64> {
    let basis = make_basis(mesh.p, QuadratureRule::new(QuadratureKind::GaussLegendre, mesh.p + 2)?)?;
    let r = ElemRestriction::new(mesh, m)?;
    let num_elem = r.num_elem;
    let nq = basis.num_qpts();
    let u_q = evaluate_elements(&basis, m, EvalMode::Interp, &r.apply_g(u_h)?, num_elem)?;
    let x_q = geometry::qpoint_coordinates(mesh, &basis)?;
    let jac = geometry::coordinate_jacobians(mesh, &basis)?;
    let mut sum = 0.0;
    for e in 0..num_elem {
        for k in 0..nq {
            let x = [0, 1, 2].map(|c| x_q[(e * 3 + c) * nq + k]);
            let wdet = basis.qweight(k) * geometry::det3(&geometry::jacobian_at(&jac, nq, e, k));
            let u_star = exact(x);
            for c in 0..m {
                let diff = u_q[(e * m + c) * nq + k] - u_star;
                sum += wdet * diff * diff;
            }
        }
    }
    Ok(sum.sqrt())
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub bp: BpKind,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "E")]
    pub num_elem: usize,
    pub n: usize,
    #[serde(rename = "P")]
    pub workers: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub dofs_rate: f64,
    pub n_per_rank: f64,
}

/// Degrees of freedom times iterations per second.
pub fn dofs_rate(n: usize, iterations: usize, seconds: f64) -> f64 {
    n as f64 * iterations as f64 / seconds
}

impl BenchRecord {
    pub fn new(config: &BpConfig, iterations: usize, seconds: f64) -> Self {
        let n = config.dofs();
        Self {
            bp: config.bp,
            p: config.p,
            q: config.q(),
            num_elem: config.num_elements(),
            n,
            workers: config.threads,
            iterations,
            seconds,
            dofs_rate: dofs_rate(n, iterations, seconds),
            n_per_rank: n as f64 / config.threads as f64,
        }
    }
}

/// Sets up the problem, then times the CG loop [`TIMING_REPEATS`] times on
/// `config.threads` workers and records the fastest run.
pub fn run_bench(config: &BpConfig) -> Result<BenchRecord> {
    config.validate()?;
    crate::with_workers(config.threads, || {
        let problem = bp_setup(config)?;
        let mut best: Option<SolveReport> = None;
        for _ in 0..TIMING_REPEATS {
            let (_, report) = problem.solve()?;
            if best.as_ref().is_none_or(|b| report.total_time_seconds < b.total_time_seconds) {
                best = Some(report);
            }
        }
        let best = best.expect("at least one repetition");
        Ok(BenchRecord::new(config, best.iterations, best.total_time_seconds))
    })
}
