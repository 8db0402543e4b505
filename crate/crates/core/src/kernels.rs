//! Sum-factorization kernels.
//!
//! A 3D tensor on an element is stored lexicographically with the first index
//! fastest: entry `(i0, i1, i2)` of a tensor of shape `[n0, n1, n2]` lives at
//! `i0 + n0 * (i1 + n1 * i2)`. A 1D contraction along dimension `d` with an
//! `r x c` matrix `A` maps shape `[.., c, ..]` to `[.., r, ..]`:
//!
//! ```text
//! out[.., a, ..] = sum_{i=0}^{c-1} A[a][i] * in[.., i, ..]
//! ```
//!
//! Applying the three 1D matrices one dimension at a time costs
//! `O(q p^3 + q^2 p^2 + q^3 p)` per element instead of the `O(q^3 p^3)` of the
//! dense tensor-product operator.
//!
//! Loop order of the sum-factorized path, outermost first: tensor in batch,
//! slow dimensions, output row `a`, fast dimensions, contracted index `i`.
//! Every output entry is accumulated over `i` in ascending order into a
//! scalar that starts at zero, so the naive and sum-factorized paths agree
//! bitwise and results do not depend on how elements are batched.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalMode {
    Interp,
    Grad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransposeMode {
    /// Nodes to quadrature points.
    Forward,
    /// Quadrature points back to nodes.
    Transpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelPath {
    /// Dense tensor-product evaluation with explicit index arithmetic.
    Naive,
    SumFactorized,
}

pub const DEFAULT_BLOCK: usize = 8;

/// Counts floating-point operations executed by the sum-factorized kernels.
/// A multiply-add counts as two.
#[derive(Debug, Default)]
pub struct FlopCounter(AtomicU64);

impl FlopCounter {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn add(&self, ops: u64) {
        self.0.fetch_add(ops, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone)]
pub struct KernelPlan {
    /// Polynomial degree; elements carry `(p+1)^3` nodes.
    pub p: usize,
    /// Quadrature points per direction.
    pub q: usize,
    /// Field components.
    pub m: usize,
    /// Interpolation matrix is the identity, so interpolation stages are skipped.
    pub collocated: bool,
    pub path: KernelPath,
    /// Elements per batch.
    pub block: usize,
    pub flop_counter: Option<Arc<FlopCounter>>,
}

impl KernelPlan {
    pub fn new(p: usize, q: usize, m: usize) -> Self {
        Self {
            p,
            q,
            m,
            collocated: false,
            path: KernelPath::SumFactorized,
            block: DEFAULT_BLOCK,
            flop_counter: None,
        }
    }

    pub fn with_path(mut self, path: KernelPath) -> Self {
        self.path = path;
        self
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }

    pub fn with_counter(mut self, counter: Arc<FlopCounter>) -> Self {
        self.flop_counter = Some(counter);
        self
    }

    pub fn nodes_1d(&self) -> usize {
        self.p + 1
    }

    fn count(&self, ops: u64) {
        if let Some(c) = &self.flop_counter {
            c.add(ops);
        }
    }
}

/// Read-only view of a row-major 1D matrix, optionally transposed.
#[derive(Debug, Clone, Copy)]
pub struct Matrix1d<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    transpose: bool,
}

impl<'a> Matrix1d<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix storage does not match shape");
        Self {
            data,
            rows,
            cols,
            transpose: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transpose: !self.transpose,
            ..self
        }
    }

    pub fn transposed_if(self, flag: bool) -> Self {
        if flag {
            self.t()
        } else {
            self
        }
    }

    /// Rows of the effective (possibly transposed) matrix.
    pub fn out_dim(&self) -> usize {
        if self.transpose {
            self.cols
        } else {
            self.rows
        }
    }

    /// Columns of the effective matrix, i.e. the contracted extent.
    pub fn in_dim(&self) -> usize {
        if self.transpose {
            self.rows
        } else {
            self.cols
        }
    }

    #[inline]
    fn strides(&self) -> (usize, usize) {
        if self.transpose {
            (1, self.cols)
        } else {
            (self.cols, 1)
        }
    }

    #[inline]
    pub fn at(&self, a: usize, i: usize) -> f64 {
        let (rs, cs) = self.strides();
        self.data[a * rs + i * cs]
    }
}

/// A run of `count` same-shaped tensors spaced `in_stride` apart in the input
/// and `out_stride` apart in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorBatch {
    pub shape: [usize; 3],
    pub count: usize,
    pub in_stride: usize,
    pub out_stride: usize,
}

impl TensorBatch {
    pub fn strided(shape: [usize; 3], count: usize, in_stride: usize, out_stride: usize) -> Self {
        Self {
            shape,
            count,
            in_stride,
            out_stride,
        }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

fn span(count: usize, stride: usize, len: usize) -> usize {
    if count == 0 {
        0
    } else {
        (count - 1) * stride + len
    }
}

/// Applies `mat` along dimension `dim` of every tensor in the batch and
/// returns the output tensor shape. With `accumulate` the result is added to
/// `output` instead of overwriting it.
pub fn contract_batch(
    plan: &KernelPlan,
    mat: Matrix1d<'_>,
    dim: usize,
    batch: TensorBatch,
    input: &[f64],
    output: &mut [f64],
    accumulate: bool,
) -> Result<[usize; 3]> {
    if dim > 2 {
        return Err(Error::InvalidConfig(format!("tensor dimension {dim} out of range")));
    }
    let c = batch.shape[dim];
    if mat.in_dim() != c {
        return Err(Error::ShapeMismatch {
            what: "contraction extent",
            expected: mat.in_dim(),
            got: c,
        });
    }
    let mut out_shape = batch.shape;
    out_shape[dim] = mat.out_dim();
    let in_len = batch.len();
    let out_len: usize = out_shape.iter().product();
    let need_in = span(batch.count, batch.in_stride, in_len);
    if input.len() < need_in {
        return Err(Error::ShapeMismatch {
            what: "contraction input",
            expected: need_in,
            got: input.len(),
        });
    }
    let need_out = span(batch.count, batch.out_stride, out_len);
    if output.len() < need_out {
        return Err(Error::ShapeMismatch {
            what: "contraction output",
            expected: need_out,
            got: output.len(),
        });
    }
    match plan.path {
        KernelPath::SumFactorized => {
            let ops = contract_sum_factorized(mat, dim, batch, out_shape, input, output, accumulate);
            plan.count(ops);
        }
        KernelPath::Naive => contract_naive(mat, dim, batch, out_shape, input, output, accumulate),
    }
    Ok(out_shape)
}

fn contract_sum_factorized(
    mat: Matrix1d<'_>,
    dim: usize,
    batch: TensorBatch,
    out_shape: [usize; 3],
    input: &[f64],
    output: &mut [f64],
    accumulate: bool,
) -> u64 {
    let shape = batch.shape;
    let pre: usize = shape[..dim].iter().product();
    let post: usize = shape[dim + 1..].iter().product();
    let c = shape[dim];
    let r = out_shape[dim];
    let (rs, cs) = mat.strides();
    let data = mat.data;
    let mut ops = 0u64;
    for t in 0..batch.count {
        let inp = &input[t * batch.in_stride..];
        let out = &mut output[t * batch.out_stride..];
        for k in 0..post {
            let in_base = pre * c * k;
            let out_base = pre * r * k;
            for a in 0..r {
                let row = &data[a * rs..];
                for j in 0..pre {
                    let mut s = 0.0;
                    let src = &inp[in_base + j..];
                    for i in 0..c {
                        s += row[i * cs] * src[pre * i];
                    }
                    let o = out_base + pre * a + j;
                    if accumulate {
                        out[o] += s;
                    } else {
                        out[o] = s;
                    }
                }
                ops += 2 * (c * pre) as u64;
            }
        }
    }
    ops
}

fn contract_naive(
    mat: Matrix1d<'_>,
    dim: usize,
    batch: TensorBatch,
    out_shape: [usize; 3],
    input: &[f64],
    output: &mut [f64],
    accumulate: bool,
) {
    let shape = batch.shape;
    let out_len: usize = out_shape.iter().product();
    for t in 0..batch.count {
        for o in 0..out_len {
            let x = [
                o % out_shape[0],
                (o / out_shape[0]) % out_shape[1],
                o / (out_shape[0] * out_shape[1]),
            ];
            let mut s = 0.0;
            for i in 0..shape[dim] {
                let mut y = x;
                y[dim] = i;
                let idx = y[0] + shape[0] * (y[1] + shape[1] * y[2]);
                s += mat.at(x[dim], i) * input[t * batch.in_stride + idx];
            }
            let dst = &mut output[t * batch.out_stride + o];
            if accumulate {
                *dst += s;
            } else {
                *dst = s;
            }
        }
    }
}

/// Dense tensor-product application
/// `out[a0,a1,a2] = sum_{i2,i1,i0} M2[a2,i2] M1[a1,i1] M0[a0,i0] in[i0,i1,i2]`
/// for every tensor in the batch.
fn tensor_product_naive(
    mats: [Matrix1d<'_>; 3],
    batch: TensorBatch,
    input: &[f64],
    output: &mut [f64],
    accumulate: bool,
) {
    let [n0, n1, n2] = batch.shape;
    let [r0, r1, r2] = [mats[0].out_dim(), mats[1].out_dim(), mats[2].out_dim()];
    for t in 0..batch.count {
        let inp = &input[t * batch.in_stride..];
        for a2 in 0..r2 {
            for a1 in 0..r1 {
                for a0 in 0..r0 {
                    let mut s = 0.0;
                    for i2 in 0..n2 {
                        let w2 = mats[2].at(a2, i2);
                        for i1 in 0..n1 {
                            let w21 = w2 * mats[1].at(a1, i1);
                            for i0 in 0..n0 {
                                s += w21 * mats[0].at(a0, i0) * inp[i0 + n0 * (i1 + n1 * i2)];
                            }
                        }
                    }
                    let dst = &mut output[t * batch.out_stride + a0 + r0 * (a1 + r1 * a2)];
                    if accumulate {
                        *dst += s;
                    } else {
                        *dst = s;
                    }
                }
            }
        }
    }
}

/// Per-worker scratch for [`apply_tensor_batch`]. Reused across calls; grows
/// only if a batch larger than the one it was sized for comes along.
#[derive(Debug, Clone, Default)]
pub struct KernelScratch {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl KernelScratch {
    pub fn new(plan: &KernelPlan) -> Self {
        let n = plan.nodes_1d().max(plan.q);
        let len = plan.block * plan.m * n * n * n;
        Self {
            s1: vec![0.0; len],
            s2: vec![0.0; len],
        }
    }

    fn ensure(&mut self, len: usize) {
        if self.s1.len() < len {
            self.s1.resize(len, 0.0);
            self.s2.resize(len, 0.0);
        }
    }
}

/// Number of values per element and component on each side of a basis
/// application: `(input, output)`.
pub fn element_sizes(plan: &KernelPlan, mode: EvalMode, tmode: TransposeMode) -> (usize, usize) {
    let nodes = plan.nodes_1d().pow(3);
    let qpts = match mode {
        EvalMode::Interp => plan.q.pow(3),
        EvalMode::Grad => 3 * plan.q.pow(3),
    };
    match tmode {
        TransposeMode::Forward => (nodes, qpts),
        TransposeMode::Transpose => (qpts, nodes),
    }
}

/// Applies the 3D interpolation or gradient operator to `nelem` consecutive
/// elements of `m` components each.
///
/// Forward: `u` holds `nelem * m` node tensors of `(p+1)^3` values, `v`
/// receives `nelem * m` blocks of `q^3` values (Interp) or of `3 q^3` values
/// ordered `d/dr0`, `d/dr1`, `d/dr2` (Grad). Transpose reverses the roles;
/// the gradient transpose sums the three directional contributions.
#[allow(clippy::too_many_arguments)]
pub fn apply_tensor_batch(
    plan: &KernelPlan,
    interp: &[f64],
    grad: &[f64],
    mode: EvalMode,
    tmode: TransposeMode,
    nelem: usize,
    u: &[f64],
    v: &mut [f64],
    scratch: &mut KernelScratch,
) -> Result<()> {
    let (p1, q) = (plan.nodes_1d(), plan.q);
    let tensors = nelem * plan.m;
    let (in_size, out_size) = element_sizes(plan, mode, tmode);
    if u.len() != tensors * in_size {
        return Err(Error::ShapeMismatch {
            what: "basis input",
            expected: tensors * in_size,
            got: u.len(),
        });
    }
    if v.len() != tensors * out_size {
        return Err(Error::ShapeMismatch {
            what: "basis output",
            expected: tensors * out_size,
            got: v.len(),
        });
    }
    let b = Matrix1d::new(interp, q, p1);
    let g = Matrix1d::new(grad, q, p1);
    let transpose = tmode == TransposeMode::Transpose;
    let (bt, gt) = (b.transposed_if(transpose), g.transposed_if(transpose));
    let node_shape = [p1, p1, p1];
    let q_shape = [q, q, q];
    let (nodes, qpts) = (p1 * p1 * p1, q * q * q);

    match (mode, plan.path) {
        (EvalMode::Interp, KernelPath::Naive) => {
            let (shape, is, os) = if transpose {
                (q_shape, qpts, nodes)
            } else {
                (node_shape, nodes, qpts)
            };
            tensor_product_naive([bt; 3], TensorBatch::strided(shape, tensors, is, os), u, v, false);
        }
        (EvalMode::Interp, KernelPath::SumFactorized) => {
            if plan.collocated {
                v.copy_from_slice(u);
            } else {
                let (shape, is, os) = if transpose {
                    (q_shape, qpts, nodes)
                } else {
                    (node_shape, nodes, qpts)
                };
                scratch.ensure(tensors * p1.max(q).pow(3));
                three_pass(plan, [bt; 3], shape, tensors, is, os, u, v, false, scratch)?;
            }
        }
        (EvalMode::Grad, path) => {
            for d in 0..3 {
                let mut mats = [bt; 3];
                mats[d] = gt;
                let accumulate = transpose && d > 0;
                // forward writes component d of each gradient block, transpose reads it
                let (input, output, batch) = if transpose {
                    (
                        &u[d * qpts..],
                        &mut v[..],
                        TensorBatch::strided(q_shape, tensors, 3 * qpts, nodes),
                    )
                } else {
                    (
                        u,
                        &mut v[d * qpts..],
                        TensorBatch::strided(node_shape, tensors, nodes, 3 * qpts),
                    )
                };
                match path {
                    KernelPath::Naive => tensor_product_naive(mats, batch, input, output, accumulate),
                    KernelPath::SumFactorized if plan.collocated => {
                        contract_batch(plan, gt, d, batch, input, output, accumulate)?;
                    }
                    KernelPath::SumFactorized => {
                        scratch.ensure(tensors * p1.max(q).pow(3));
                        three_pass(
                            plan,
                            mats,
                            batch.shape,
                            tensors,
                            batch.in_stride,
                            batch.out_stride,
                            input,
                            output,
                            accumulate,
                            scratch,
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Applies a tensor product of three 1D matrices, `mats[d]` acting along
/// dimension `d`, to every tensor in the batch using the plan's path.
pub fn contract_tensor_product(
    plan: &KernelPlan,
    mats: [Matrix1d<'_>; 3],
    batch: TensorBatch,
    input: &[f64],
    output: &mut [f64],
    accumulate: bool,
    scratch: &mut KernelScratch,
) -> Result<()> {
    for (d, m) in mats.iter().enumerate() {
        if m.in_dim() != batch.shape[d] {
            return Err(Error::ShapeMismatch {
                what: "tensor-product extent",
                expected: m.in_dim(),
                got: batch.shape[d],
            });
        }
    }
    let in_len = batch.len();
    let out_len = mats[0].out_dim() * mats[1].out_dim() * mats[2].out_dim();
    let need_in = span(batch.count, batch.in_stride, in_len);
    let need_out = span(batch.count, batch.out_stride, out_len);
    if input.len() < need_in || output.len() < need_out {
        return Err(Error::ShapeMismatch {
            what: "tensor-product batch",
            expected: need_in.max(need_out),
            got: input.len().min(output.len()),
        });
    }
    match plan.path {
        KernelPath::Naive => tensor_product_naive(mats, batch, input, output, accumulate),
        KernelPath::SumFactorized => {
            let widest = mats.iter().map(|m| m.in_dim().max(m.out_dim())).max().unwrap_or(0);
            scratch.ensure(batch.count * widest.pow(3));
            three_pass(
                plan,
                mats,
                batch.shape,
                batch.count,
                batch.in_stride,
                batch.out_stride,
                input,
                output,
                accumulate,
                scratch,
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn three_pass(
    plan: &KernelPlan,
    mats: [Matrix1d<'_>; 3],
    shape: [usize; 3],
    count: usize,
    in_stride: usize,
    out_stride: usize,
    u: &[f64],
    v: &mut [f64],
    accumulate: bool,
    scratch: &mut KernelScratch,
) -> Result<()> {
    let KernelScratch { s1, s2 } = scratch;
    let mut sh = shape;
    sh[0] = mats[0].out_dim();
    let len1: usize = sh.iter().product();
    let sh1 = contract_batch(
        plan,
        mats[0],
        0,
        TensorBatch::strided(shape, count, in_stride, len1),
        u,
        s1,
        false,
    )?;
    let len2 = sh1[0] * mats[1].out_dim() * sh1[2];
    let sh2 = contract_batch(plan, mats[1], 1, TensorBatch::strided(sh1, count, len1, len2), s1, s2, false)?;
    contract_batch(
        plan,
        mats[2],
        2,
        TensorBatch::strided(sh2, count, len2, out_stride),
        s2,
        v,
        accumulate,
    )?;
    Ok(())
}

/// Closed-form operation count of one sum-factorized basis application
/// (forward or transpose, the count is the same) on a single element.
///
/// * Interp: `2 m (q (p+1)^3 + q^2 (p+1)^2 + q^3 (p+1))`, zero when collocated.
/// * Grad: three interpolation-shaped passes, one per reference direction;
///   when collocated only the derivative contraction of each direction is
///   executed, `3 * 2 m q (p+1)^3`.
pub fn flops_estimate(plan: &KernelPlan, mode: EvalMode) -> u64 {
    let (p1, q, m) = (plan.nodes_1d() as u64, plan.q as u64, plan.m as u64);
    let interp = 2 * m * (q * p1.pow(3) + q * q * p1 * p1 + q.pow(3) * p1);
    match (mode, plan.collocated) {
        (EvalMode::Interp, false) => interp,
        (EvalMode::Interp, true) => 0,
        (EvalMode::Grad, false) => 3 * interp,
        (EvalMode::Grad, true) => 3 * 2 * m * q * p1.pow(3),
    }
}
