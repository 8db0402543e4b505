//! Matrix-free high-order finite element operators on hexahedral meshes.
//!
//! An operator is applied as the composition `G^T B^T D B G`:
//!
//! * `G` ([`restriction::ElemRestriction`]) copies shared nodal values into
//!   per-element blocks, and its transpose sums them back,
//! * `B` ([`basis::TensorBasis`]) interpolates or differentiates from element
//!   nodes to quadrature points with sum-factorized 1D contractions
//!   ([`kernels`]),
//! * `D` ([`geometry::QData`]) multiplies pointwise by precomputed geometric
//!   factors.
//!
//! The [`bench`] module defines the six bake-off problems (mass and Poisson,
//! scalar and vector, Gauss-Legendre and collocated Gauss-Lobatto-Legendre
//! quadrature) and the throughput and strong-scaling metrics built on top of
//! a Jacobi-preconditioned conjugate gradient solver ([`krylov`]).

pub mod basis;
pub mod bench;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod krylov;
pub mod mesh;
pub mod operator;
pub mod quadrature;
pub mod restriction;
pub mod vecops;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::basis::{EvalMode, TensorBasis, TransposeMode};
    pub use crate::bench::{BpConfig, BpKind, BenchRecord, ScalingRecord};
    pub use crate::geometry::{QData, QDataKind};
    pub use crate::kernels::{KernelPath, KernelPlan};
    pub use crate::krylov::{pcg, LinearOperator, Preconditioner, SolveMode, SolveOptions, SolveReport};
    pub use crate::mesh::{Deformation, HexMesh};
    pub use crate::operator::MatFreeOperator;
    pub use crate::quadrature::{QuadratureKind, QuadratureRule};
    pub use crate::restriction::ElemRestriction;
    pub use crate::{Error, Result};
}

/// Runs `f` on a dedicated pool of `workers` threads.
///
/// Worker threads stand in for ranks: every parallel loop in this crate picks
/// up the pool it is installed in.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to build worker pool");
    pool.install(f)
}
