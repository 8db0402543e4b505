//! The composed operator `G^T B^T D B G` acting on L-vectors.
//!
//! Essential (Dirichlet) constraints are imposed by projection: constrained
//! entries of the input are zeroed before the element action, and the output
//! takes the input value on constrained entries. The operator stays
//! symmetric, and positive definite whenever the unconstrained block is.

use crate::basis::{EvalMode, TensorBasis, TransposeMode};
use crate::geometry::{compute_qdata, QData, QDataKind};
use crate::kernels::{self, FlopCounter, KernelPlan, KernelScratch, Matrix1d, TensorBatch};
use crate::krylov::LinearOperator;
use crate::mesh::HexMesh;
use crate::restriction::ElemRestriction;
use crate::{Error, Result};
use rayon::prelude::*;
use std::sync::{Arc, Mutex};

/// Largest system [`MatFreeOperator::reference_assemble`] will build.
pub const MAX_DENSE_SIZE: usize = 20_000;

/// Role of a vector in the operator decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorRole {
    /// True degrees of freedom: an L-vector whose constrained entries are zero.
    T,
    /// Shared nodal values, `m * n_l`.
    L,
    /// Per-element nodal blocks, `m * E * (p+1)^3`.
    E,
    /// Values at quadrature points, `m * E * q^3` (times 3 for gradients).
    Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveVector {
    pub role: VectorRole,
    pub values: Vec<f64>,
}

impl SolveVector {
    pub fn new(op: &MatFreeOperator, role: VectorRole, values: Vec<f64>) -> Result<Self> {
        let expected = op.role_len(role);
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "solve vector",
                expected,
                got: values.len(),
            });
        }
        Ok(Self { role, values })
    }
}

#[derive(Debug, Default)]
struct Workspace {
    x: Vec<f64>,
    e_in: Vec<f64>,
    e_out: Vec<f64>,
}

#[derive(Debug)]
pub struct MatFreeOperator {
    pub restriction: ElemRestriction,
    pub basis: TensorBasis,
    pub mass: Option<QData>,
    pub diffusion: Option<QData>,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Constrained L-vector entries (`c * n_l + node`), ascending.
    pub constrained: Vec<usize>,
    plan: KernelPlan,
    workspaces: Mutex<Vec<Workspace>>,
}

/// Per-worker buffers for one element batch.
struct ElementScratch {
    kernel: KernelScratch,
    q_in: Vec<f64>,
    q_out: Vec<f64>,
    e_tmp: Vec<f64>,
}

impl ElementScratch {
    fn new(plan: &KernelPlan, elem_size: usize, nq: usize) -> Self {
        let qlen = plan.block * plan.m * 3 * nq;
        Self {
            kernel: KernelScratch::new(plan),
            q_in: vec![0.0; qlen],
            q_out: vec![0.0; qlen],
            e_tmp: vec![0.0; plan.block * plan.m * elem_size],
        }
    }
}

impl MatFreeOperator {
    /// Builds `alpha A + beta B` for an `m`-component field on `mesh`, with
    /// homogeneous Dirichlet constraints on every boundary node when
    /// `dirichlet` is set.
    pub fn new(
        mesh: &HexMesh,
        basis: TensorBasis,
        m: usize,
        alpha: f64,
        beta: f64,
        dirichlet: bool,
    ) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) || (alpha == 0.0 && beta == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "coefficients must be non-negative and not both zero, got alpha={alpha} beta={beta}"
            )));
        }
        if basis.p != mesh.p {
            return Err(Error::InvalidConfig(format!(
                "basis degree {} differs from mesh degree {}",
                basis.p, mesh.p
            )));
        }
        let restriction = ElemRestriction::new(mesh, m)?;
        let mass = (beta != 0.0)
            .then(|| compute_qdata(mesh, &basis, QDataKind::Mass))
            .transpose()?;
        let diffusion = (alpha != 0.0)
            .then(|| compute_qdata(mesh, &basis, QDataKind::Diffusion))
            .transpose()?;
        let constrained = if dirichlet {
            (0..m)
                .flat_map(|c| mesh.boundary_nodes.iter().map(move |&b| c * mesh.n_l + b))
                .collect()
        } else {
            Vec::new()
        };
        let plan = basis.plan(m);
        Ok(Self {
            restriction,
            basis,
            mass,
            diffusion,
            m,
            alpha,
            beta,
            constrained,
            plan,
            workspaces: Mutex::new(Vec::new()),
        })
    }

    pub fn plan(&self) -> &KernelPlan {
        &self.plan
    }

    /// Replaces the kernel plan's batch size and path; results do not depend
    /// on the batch size.
    pub fn set_plan(&mut self, block: usize, path: kernels::KernelPath) {
        self.plan = self.plan.clone().with_block(block).with_path(path);
    }

    pub fn set_flop_counter(&mut self, counter: Option<Arc<FlopCounter>>) {
        self.plan.flop_counter = counter;
    }

    pub fn size(&self) -> usize {
        self.restriction.l_size()
    }

    pub fn num_elements(&self) -> usize {
        self.restriction.num_elem
    }

    pub fn role_len(&self, role: VectorRole) -> usize {
        match role {
            VectorRole::T | VectorRole::L => self.size(),
            VectorRole::E => self.restriction.e_size(),
            VectorRole::Q => self.m * self.num_elements() * self.basis.num_qpts(),
        }
    }

    /// Mask with `true` on constrained entries.
    pub fn constraint_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.size()];
        for &i in &self.constrained {
            mask[i] = true;
        }
        mask
    }

    /// Zeroes constrained entries.
    pub fn project(&self, x: &mut [f64]) {
        for &i in &self.constrained {
            x[i] = 0.0;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.size()];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.size();
        for (what, len) in [("operator input", x.len()), ("operator output", y.len())] {
            if len != n {
                return Err(Error::ShapeMismatch { what, expected: n, got: len });
            }
        }
        let mut ws = self.workspaces.lock().unwrap().pop().unwrap_or_default();
        ws.x.clear();
        ws.x.extend_from_slice(x);
        self.project(&mut ws.x);
        let e_size = self.restriction.e_size();
        ws.e_in.resize(e_size, 0.0);
        ws.e_out.resize(e_size, 0.0);
        let result = self
            .restriction
            .apply_g_into(&ws.x, &mut ws.e_in)
            .and_then(|_| self.apply_elements(&ws.e_in, &mut ws.e_out))
            .and_then(|_| self.restriction.apply_g_transpose_into(&ws.e_out, y));
        for &i in &self.constrained {
            y[i] = x[i];
        }
        self.workspaces.lock().unwrap().push(ws);
        result
    }

    /// `B^T D B` on every element of an E-vector.
    pub fn apply_elements(&self, e_in: &[f64], e_out: &mut [f64]) -> Result<()> {
        let plan = &self.plan;
        let m = self.m;
        let elem_size = self.basis.elem_size();
        let nq = self.basis.num_qpts();
        let chunk = plan.block * m * elem_size;
        e_out
            .par_chunks_mut(chunk)
            .zip(e_in.par_chunks(chunk))
            .enumerate()
            .try_for_each_init(
                || ElementScratch::new(plan, elem_size, nq),
                |s, (batch, (out, inp))| {
                    let first = batch * plan.block;
                    let nelem = inp.len() / (m * elem_size);
                    let mut wrote = false;
                    if let Some(mass) = &self.mass {
                        let qlen = nelem * m * nq;
                        let (qi, qo) = (&mut s.q_in[..qlen], &mut s.q_out[..qlen]);
                        self.basis
                            .apply_batch(plan, EvalMode::Interp, TransposeMode::Forward, nelem, inp, qi, &mut s.kernel)?;
                        mass.mass_block(first, m, self.beta, qi, qo);
                        self.basis
                            .apply_batch(plan, EvalMode::Interp, TransposeMode::Transpose, nelem, qo, out, &mut s.kernel)?;
                        wrote = true;
                    }
                    if let Some(diff) = &self.diffusion {
                        let qlen = nelem * m * 3 * nq;
                        let (qi, qo) = (&mut s.q_in[..qlen], &mut s.q_out[..qlen]);
                        self.basis
                            .apply_batch(plan, EvalMode::Grad, TransposeMode::Forward, nelem, inp, qi, &mut s.kernel)?;
                        diff.diffusion_block(first, m, self.alpha, qi, qo);
                        if wrote {
                            let tmp = &mut s.e_tmp[..out.len()];
                            self.basis
                                .apply_batch(plan, EvalMode::Grad, TransposeMode::Transpose, nelem, qo, tmp, &mut s.kernel)?;
                            out.iter_mut().zip(tmp.iter()).for_each(|(o, t)| *o += t);
                        } else {
                            self.basis
                                .apply_batch(plan, EvalMode::Grad, TransposeMode::Transpose, nelem, qo, out, &mut s.kernel)?;
                        }
                    }
                    Ok(())
                },
            )
    }

    /// Diagonal of the operator matrix, computed without assembling it.
    ///
    /// Per element, the diagonal of `B^T D B` is the contraction of the
    /// quadrature data with squared basis values: for the mass term
    /// `sum_k w_k (B0 B1 B2)[k, n]^2`, which is a tensor product of the
    /// elementwise-squared 1D matrices applied transposed. The diffusion term
    /// splits into the six symmetric coefficient fields `S_dd'` contracted
    /// with products of interpolation and derivative columns.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        let b = &self.basis;
        let (p1, q) = (b.nodes_1d(), b.q);
        let nq = b.num_qpts();
        let elem_size = b.elem_size();
        let hadamard = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| a * c).collect::<Vec<f64>>();
        let bb = hadamard(&b.interp1d, &b.interp1d);
        let db = hadamard(&b.grad1d, &b.interp1d);
        let dd = hadamard(&b.grad1d, &b.grad1d);
        let plan = KernelPlan { m: 1, collocated: false, ..self.plan.clone() };
        let num_elem = self.num_elements();
        let mut local = vec![0.0; num_elem * elem_size];
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        local
            .par_chunks_mut(elem_size)
            .enumerate()
            .try_for_each_init(
                || (KernelScratch::new(&plan), vec![0.0; nq], vec![0.0; elem_size]),
                |(scratch, field, tmp), (e, out)| -> Result<()> {
                    out.fill(0.0);
                    let batch = TensorBatch::strided([q, q, q], 1, nq, elem_size);
                    if let Some(mass) = &self.mass {
                        let w = &mass.data[e * nq..(e + 1) * nq];
                        let mb = Matrix1d::new(&bb, q, p1).t();
                        kernels::contract_tensor_product(&plan, [mb; 3], batch, w, tmp, false, scratch)?;
                        out.iter_mut().zip(tmp.iter()).for_each(|(o, t)| *o += self.beta * t);
                    }
                    if let Some(diff) = &self.diffusion {
                        let s = &diff.data[e * nq * 6..(e + 1) * nq * 6];
                        for (slot, &(d0, d1)) in pairs.iter().enumerate() {
                            for (k, f) in field.iter_mut().enumerate() {
                                *f = s[6 * k + slot];
                            }
                            let mats = [0, 1, 2].map(|t| {
                                let data = match ((t == d0) as u8) + ((t == d1) as u8) {
                                    0 => &bb,
                                    1 => &db,
                                    _ => &dd,
                                };
                                Matrix1d::new(data, q, p1).t()
                            });
                            kernels::contract_tensor_product(&plan, mats, batch, field, tmp, false, scratch)?;
                            let factor = if d0 == d1 { self.alpha } else { 2.0 * self.alpha };
                            out.iter_mut().zip(tmp.iter()).for_each(|(o, t)| *o += factor * t);
                        }
                    }
                    Ok(())
                },
            )?;
        // replicate across components, then sum into the L-vector
        let m = self.m;
        let mut e_diag = vec![0.0; self.restriction.e_size()];
        e_diag
            .par_chunks_mut(m * elem_size)
            .zip(local.par_chunks(elem_size))
            .for_each(|(dst, src)| {
                for c in 0..m {
                    dst[c * elem_size..(c + 1) * elem_size].copy_from_slice(src);
                }
            });
        let mut d = self.restriction.apply_g_transpose(&e_diag)?;
        for &i in &self.constrained {
            d[i] = 1.0;
        }
        Ok(d)
    }

    /// Dense matrix of the operator, assembled element by element with a
    /// direct quadrature loop over full 3D basis tables (no sum
    /// factorization). Intended as a test oracle on small problems.
    pub fn reference_assemble(&self) -> Result<DenseMatrix> {
        let n = self.size();
        if n > MAX_DENSE_SIZE {
            return Err(Error::AssemblyTooLarge {
                size: n,
                limit: MAX_DENSE_SIZE,
            });
        }
        let b = &self.basis;
        let (p1, q) = (b.nodes_1d(), b.q);
        let (ne, nq) = (b.elem_size(), b.num_qpts());
        // 3D tables: val[k][a] and grad[d][k][a]
        let mut val = vec![0.0; nq * ne];
        let mut grad = vec![0.0; 3 * nq * ne];
        for k in 0..nq {
            let kq = [k % q, (k / q) % q, k / (q * q)];
            for a in 0..ne {
                let an = [a % p1, (a / p1) % p1, a / (p1 * p1)];
                let bv = |t: usize| b.interp1d[kq[t] * p1 + an[t]];
                let gv = |t: usize| b.grad1d[kq[t] * p1 + an[t]];
                val[k * ne + a] = bv(0) * bv(1) * bv(2);
                grad[k * ne + a] = gv(0) * bv(1) * bv(2);
                grad[(nq + k) * ne + a] = bv(0) * gv(1) * bv(2);
                grad[(2 * nq + k) * ne + a] = bv(0) * bv(1) * gv(2);
            }
        }
        let n_l = self.restriction.n_l;
        let mut mat = DenseMatrix::zeros(n);
        let mut ke = vec![0.0; ne * ne];
        for e in 0..self.num_elements() {
            ke.fill(0.0);
            for k in 0..nq {
                if let Some(mass) = &self.mass {
                    let w = self.beta * mass.data[e * nq + k];
                    let row = &val[k * ne..(k + 1) * ne];
                    for a in 0..ne {
                        for c in 0..ne {
                            ke[a * ne + c] += w * row[a] * row[c];
                        }
                    }
                }
                if let Some(diff) = &self.diffusion {
                    let s = diff.block(e, k);
                    for a in 0..ne {
                        let ga = [0, 1, 2].map(|d| grad[(d * nq + k) * ne + a]);
                        let sga = [0, 1, 2].map(|d| (0..3).map(|t| s[d][t] * ga[t]).sum::<f64>());
                        for c in 0..ne {
                            let gc = [0, 1, 2].map(|d| grad[(d * nq + k) * ne + c]);
                            ke[a * ne + c] += self.alpha * (sga[0] * gc[0] + sga[1] * gc[1] + sga[2] * gc[2]);
                        }
                    }
                }
            }
            let idx = self.restriction.element_indices(e);
            for comp in 0..self.m {
                let off = comp * n_l;
                for a in 0..ne {
                    for c in 0..ne {
                        *mat.at_mut(off + idx[a], off + idx[c]) += ke[a * ne + c];
                    }
                }
            }
        }
        for &i in &self.constrained {
            for j in 0..n {
                *mat.at_mut(i, j) = 0.0;
                *mat.at_mut(j, i) = 0.0;
            }
            *mat.at_mut(i, i) = 1.0;
        }
        Ok(mat)
    }

    /// Sum-factorized basis operations of one operator application, from the
    /// closed-form per-element counts.
    pub fn flops_per_apply(&self) -> u64 {
        let per_elem = 2 * (self.mass.as_ref().map_or(0, |_| kernels::flops_estimate(&self.plan, EvalMode::Interp))
            + self.diffusion.as_ref().map_or(0, |_| kernels::flops_estimate(&self.plan, EvalMode::Grad)));
        per_elem * self.num_elements() as u64
    }
}

impl LinearOperator for MatFreeOperator {
    fn size(&self) -> usize {
        MatFreeOperator::size(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_into(x, y)
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            *m.at_mut(i, i) = v;
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, i)).collect()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl LinearOperator for DenseMatrix {
    fn size(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::ShapeMismatch {
                what: "dense operator",
                expected: self.n,
                got: x.len(),
            });
        }
        y.copy_from_slice(&self.matvec(x));
        Ok(())
    }
}
