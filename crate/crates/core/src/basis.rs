//! Tensor-product Lagrange bases on Gauss-Lobatto-Legendre nodes.

use crate::kernels::{self, KernelPlan, KernelScratch};
use crate::quadrature::{QuadratureKind, QuadratureRule};
use crate::{Error, Result};

pub use crate::kernels::{EvalMode, TransposeMode};

/// Degree-`p` nodal basis evaluated at a 1D quadrature rule.
///
/// `interp1d` and `grad1d` are `q x (p+1)` row-major: row `i` holds the basis
/// values (derivatives) at quadrature point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    pub p: usize,
    pub q: usize,
    pub nodes: Vec<f64>,
    pub quad: QuadratureRule,
    pub interp1d: Vec<f64>,
    pub grad1d: Vec<f64>,
}

/// Values of the Lagrange polynomials through `nodes` at `x`.
pub fn lagrange_values(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| (x - xk) / (nodes[j] - xk))
                .product()
        })
        .collect()
}

/// Derivatives of the Lagrange polynomials through `nodes` at `x`.
pub fn lagrange_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut sum = 0.0;
            for k in (0..n).filter(|&k| k != j) {
                let mut term = 1.0 / (nodes[j] - nodes[k]);
                for l in (0..n).filter(|&l| l != j && l != k) {
                    term *= (x - nodes[l]) / (nodes[j] - nodes[l]);
                }
                sum += term;
            }
            sum
        })
        .collect()
}

impl TensorBasis {
    pub fn new(p: usize, quad: QuadratureRule) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidConfig("basis degree must be at least 1".into()));
        }
        let nodes = QuadratureRule::new(QuadratureKind::GaussLobattoLegendre, p + 1)?.points;
        let q = quad.len();
        let mut interp1d = Vec::with_capacity(q * (p + 1));
        let mut grad1d = Vec::with_capacity(q * (p + 1));
        for &x in &quad.points {
            interp1d.extend(lagrange_values(&nodes, x));
            let mut d = lagrange_derivatives(&nodes, x);
            // each row differentiates a constant; remove the rounding drift
            // from the largest entry
            let drift: f64 = d.iter().sum();
            let jmax = (0..d.len()).max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs())).unwrap();
            d[jmax] -= drift;
            grad1d.extend(d);
        }
        Ok(Self {
            p,
            q,
            nodes,
            quad,
            interp1d,
            grad1d,
        })
    }

    pub fn nodes_1d(&self) -> usize {
        self.p + 1
    }

    /// Nodes per element, `(p+1)^3`.
    pub fn elem_size(&self) -> usize {
        self.nodes_1d().pow(3)
    }

    /// Quadrature points per element, `q^3`.
    pub fn num_qpts(&self) -> usize {
        self.q.pow(3)
    }

    /// True when the interpolation matrix is exactly the identity.
    pub fn is_collocated(&self) -> bool {
        self.q == self.nodes_1d()
            && (0..self.q).all(|i| {
                (0..self.q).all(|j| self.interp1d[i * self.q + j] == if i == j { 1.0 } else { 0.0 })
            })
    }

    /// Tensor-product quadrature weight of 3D point `k` (lexicographic).
    pub fn qweight(&self, k: usize) -> f64 {
        let q = self.q;
        let w = &self.quad.weights;
        w[k % q] * w[(k / q) % q] * w[k / (q * q)]
    }

    /// Sum-factorized kernel plan for `m`-component fields on this basis.
    pub fn plan(&self, m: usize) -> KernelPlan {
        let mut plan = KernelPlan::new(self.p, self.q, m);
        plan.collocated = self.is_collocated();
        plan
    }

    /// Applies the basis to a batch of elements using a caller-supplied plan
    /// and scratch. See [`kernels::apply_tensor_batch`] for layouts.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_batch(
        &self,
        plan: &KernelPlan,
        mode: EvalMode,
        tmode: TransposeMode,
        nelem: usize,
        u: &[f64],
        v: &mut [f64],
        scratch: &mut KernelScratch,
    ) -> Result<()> {
        kernels::apply_tensor_batch(plan, &self.interp1d, &self.grad1d, mode, tmode, nelem, u, v, scratch)
    }
}

pub fn make_basis(p: usize, quad: QuadratureRule) -> Result<TensorBasis> {
    TensorBasis::new(p, quad)
}

/// Single-element application of the interpolation or gradient operator to
/// an `m`-component field, returning a freshly allocated result.
pub fn apply_tensor_3d(
    basis: &TensorBasis,
    mode: EvalMode,
    tmode: TransposeMode,
    m: usize,
    u: &[f64],
) -> Result<Vec<f64>> {
    let plan = basis.plan(m);
    let (_, out) = kernels::element_sizes(&plan, mode, tmode);
    let mut v = vec![0.0; m * out];
    let mut scratch = KernelScratch::new(&plan);
    basis.apply_batch(&plan, mode, tmode, 1, u, &mut v, &mut scratch)?;
    Ok(v)
}
