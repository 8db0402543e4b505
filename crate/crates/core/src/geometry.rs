//! Quadrature-point geometric factors and the pointwise operator `D`.

use crate::basis::{EvalMode, TensorBasis, TransposeMode};
use crate::kernels::KernelScratch;
use crate::mesh::HexMesh;
use crate::restriction::ElemRestriction;
use crate::{Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QDataKind {
    /// `w det J` per point.
    Mass,
    /// Upper triangle `(00, 01, 02, 11, 12, 22)` of `w det J J^{-1} J^{-T}`
    /// per point.
    Diffusion,
}

impl QDataKind {
    pub fn stride(self) -> usize {
        match self {
            QDataKind::Mass => 1,
            QDataKind::Diffusion => 6,
        }
    }

    fn name(self) -> &'static str {
        match self {
            QDataKind::Mass => "mass",
            QDataKind::Diffusion => "diffusion",
        }
    }
}

/// Stored geometric factors, `data[(e * q^3 + k) * stride + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QData {
    pub kind: QDataKind,
    pub num_elem: usize,
    pub num_qpts: usize,
    pub data: Vec<f64>,
}

/// Coordinate Jacobians `dx_c/dr_d` at every quadrature point, stored as
/// `[e][c][d][k]` (the layout of a 3-component gradient evaluation).
pub fn coordinate_jacobians(mesh: &HexMesh, basis: &TensorBasis) -> Result<Vec<f64>> {
    let r = ElemRestriction::new(mesh, 3)?;
    let x_e = r.apply_g(&mesh.coords)?;
    evaluate_elements(basis, 3, EvalMode::Grad, &x_e, r.num_elem)
}

/// Physical coordinates of every quadrature point, `[e][c][k]`.
pub fn qpoint_coordinates(mesh: &HexMesh, basis: &TensorBasis) -> Result<Vec<f64>> {
    let r = ElemRestriction::new(mesh, 3)?;
    let x_e = r.apply_g(&mesh.coords)?;
    evaluate_elements(basis, 3, EvalMode::Interp, &x_e, r.num_elem)
}

/// Forward basis evaluation of an `m`-component E-vector, in parallel over
/// element blocks.
pub(crate) fn evaluate_elements(
    basis: &TensorBasis,
    m: usize,
    mode: EvalMode,
    e_vec: &[f64],
    num_elem: usize,
) -> Result<Vec<f64>> {
    let plan = basis.plan(m);
    let in_size = m * basis.elem_size();
    let out_size = m * basis.num_qpts() * if mode == EvalMode::Grad { 3 } else { 1 };
    let mut out = vec![0.0; num_elem * out_size];
    out.par_chunks_mut(plan.block * out_size)
        .zip(e_vec.par_chunks(plan.block * in_size))
        .try_for_each_init(
            || KernelScratch::new(&plan),
            |scratch, (v, u)| basis.apply_batch(&plan, mode, TransposeMode::Forward, u.len() / in_size, u, v, scratch),
        )?;
    Ok(out)
}

pub fn det3(j: &[[f64; 3]; 3]) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

/// Adjugate, so that `J^{-1} = adj(J) / det J`.
pub fn adjugate3(j: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    [
        [
            j[1][1] * j[2][2] - j[1][2] * j[2][1],
            j[0][2] * j[2][1] - j[0][1] * j[2][2],
            j[0][1] * j[1][2] - j[0][2] * j[1][1],
        ],
        [
            j[1][2] * j[2][0] - j[1][0] * j[2][2],
            j[0][0] * j[2][2] - j[0][2] * j[2][0],
            j[0][2] * j[1][0] - j[0][0] * j[1][2],
        ],
        [
            j[1][0] * j[2][1] - j[1][1] * j[2][0],
            j[0][1] * j[2][0] - j[0][0] * j[2][1],
            j[0][0] * j[1][1] - j[0][1] * j[1][0],
        ],
    ]
}

/// Reads the Jacobian of quadrature point `k` in element `e` from the
/// `[e][c][d][k]` layout.
pub(crate) fn jacobian_at(jac: &[f64], nq: usize, e: usize, k: usize) -> [[f64; 3]; 3] {
    let base = e * 9 * nq;
    let mut j = [[0.0; 3]; 3];
    for (c, row) in j.iter_mut().enumerate() {
        for (d, v) in row.iter_mut().enumerate() {
            *v = jac[base + (c * 3 + d) * nq + k];
        }
    }
    j
}

pub fn compute_qdata(mesh: &HexMesh, basis: &TensorBasis, kind: QDataKind) -> Result<QData> {
    let jac = coordinate_jacobians(mesh, basis)?;
    let num_elem = mesh.num_elements();
    let nq = basis.num_qpts();
    let stride = kind.stride();
    let mut data = vec![0.0; num_elem * nq * stride];
    data.par_chunks_mut(nq * stride)
        .enumerate()
        .try_for_each(|(e, block)| {
            for k in 0..nq {
                let j = jacobian_at(&jac, nq, e, k);
                let det = det3(&j);
                if det <= 0.0 || !det.is_finite() {
                    return Err(Error::NonPositiveJacobian { element: e, qpoint: k, det });
                }
                let w = basis.qweight(k);
                match kind {
                    QDataKind::Mass => block[k] = w * det,
                    QDataKind::Diffusion => {
                        // w det J^{-1} J^{-T} = w adj adj^T / det
                        let a = adjugate3(&j);
                        let dot = |r: usize, s: usize| (0..3).map(|t| a[r][t] * a[s][t]).sum::<f64>();
                        let f = w / det;
                        let out = &mut block[k * 6..k * 6 + 6];
                        out[0] = f * dot(0, 0);
                        out[1] = f * dot(0, 1);
                        out[2] = f * dot(0, 2);
                        out[3] = f * dot(1, 1);
                        out[4] = f * dot(1, 2);
                        out[5] = f * dot(2, 2);
                    }
                }
            }
            Ok(())
        })?;
    Ok(QData {
        kind,
        num_elem,
        num_qpts: nq,
        data,
    })
}

impl QData {
    fn expect(&self, kind: QDataKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }

    /// Symmetric 3x3 block of a diffusion point.
    pub fn block(&self, e: usize, k: usize) -> [[f64; 3]; 3] {
        let s = &self.data[(e * self.num_qpts + k) * 6..][..6];
        [[s[0], s[1], s[2]], [s[1], s[3], s[4]], [s[2], s[4], s[5]]]
    }

    /// `v = scale * qdata * u` on elements `first..first + nelem` of an
    /// `m`-component Q-vector laid out `[e][c][k]`. Slices cover only those
    /// elements.
    pub(crate) fn mass_block(&self, first: usize, m: usize, scale: f64, u: &[f64], v: &mut [f64]) {
        let nq = self.num_qpts;
        for (t, (ub, vb)) in u.chunks(nq).zip(v.chunks_mut(nq)).enumerate() {
            let w = &self.data[(first + t / m) * nq..][..nq];
            for ((v, u), w) in vb.iter_mut().zip(ub).zip(w) {
                *v = scale * w * u;
            }
        }
    }

    /// `grad_v = scale * S grad_u` per point on a `[e][c][d][k]` block.
    pub(crate) fn diffusion_block(&self, first: usize, m: usize, scale: f64, u: &[f64], v: &mut [f64]) {
        let nq = self.num_qpts;
        for (t, (ub, vb)) in u.chunks(3 * nq).zip(v.chunks_mut(3 * nq)).enumerate() {
            let s = &self.data[(first + t / m) * nq * 6..][..nq * 6];
            let (u0, rest) = ub.split_at(nq);
            let (u1, u2) = rest.split_at(nq);
            let (v0, rest) = vb.split_at_mut(nq);
            let (v1, v2) = rest.split_at_mut(nq);
            for k in 0..nq {
                let c = &s[6 * k..6 * k + 6];
                let (a, b, d) = (u0[k], u1[k], u2[k]);
                v0[k] = scale * (c[0] * a + c[1] * b + c[2] * d);
                v1[k] = scale * (c[1] * a + c[3] * b + c[4] * d);
                v2[k] = scale * (c[2] * a + c[4] * b + c[5] * d);
            }
        }
    }

    fn check_len(&self, what: &'static str, per_point: usize, m: usize, len: usize) -> Result<()> {
        let expected = self.num_elem * m * per_point * self.num_qpts;
        if len != expected || m == 0 {
            return Err(Error::ShapeMismatch { what, expected, got: len });
        }
        Ok(())
    }
}

/// Pointwise mass action on an `m`-component Q-vector `[e][c][k]`.
pub fn apply_qf_mass(qdata: &QData, m: usize, u_q: &[f64]) -> Result<Vec<f64>> {
    qdata.expect(QDataKind::Mass)?;
    qdata.check_len("mass Q-vector", 1, m, u_q.len())?;
    let mut v = vec![0.0; u_q.len()];
    qdata.mass_block(0, m, 1.0, u_q, &mut v);
    Ok(v)
}

/// Pointwise diffusion action on reference gradients `[e][c][d][k]`.
pub fn apply_qf_diffusion(qdata: &QData, m: usize, grad_u_q: &[f64]) -> Result<Vec<f64>> {
    qdata.expect(QDataKind::Diffusion)?;
    qdata.check_len("diffusion Q-vector", 3, m, grad_u_q.len())?;
    let mut v = vec![0.0; grad_u_q.len()];
    qdata.diffusion_block(0, m, 1.0, grad_u_q, &mut v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_basis;
    use crate::mesh::{build_mesh, Deformation};
    use crate::quadrature::{QuadratureKind, QuadratureRule};

    fn gl_basis(p: usize, q: usize) -> TensorBasis {
        make_basis(p, QuadratureRule::new(QuadratureKind::GaussLegendre, q).unwrap()).unwrap()
    }

    #[test]
    fn unit_cube_factors() {
        let mesh = build_mesh(1, 1, 1, 2, Deformation::None).unwrap();
        let b = gl_basis(2, 4);
        let mass = compute_qdata(&mesh, &b, QDataKind::Mass).unwrap();
        let diff = compute_qdata(&mesh, &b, QDataKind::Diffusion).unwrap();
        for k in 0..b.num_qpts() {
            let w = b.qweight(k);
            assert!((mass.data[k] - w / 8.0).abs() < 1e-15);
            let s = diff.block(0, k);
            for r in 0..3 {
                for c in 0..3 {
                    let e = if r == c { w / 2.0 } else { 0.0 };
                    assert!((s[r][c] - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn scaled_element_factors() {
        // 4x4x4 mesh: edge h = 1/4, J = h/2 I
        let mesh = build_mesh(4, 4, 4, 1, Deformation::None).unwrap();
        let b = gl_basis(1, 3);
        let h: f64 = 0.25;
        let mass = compute_qdata(&mesh, &b, QDataKind::Mass).unwrap();
        let diff = compute_qdata(&mesh, &b, QDataKind::Diffusion).unwrap();
        for e in [0, 17, 63] {
            for k in 0..b.num_qpts() {
                let w = b.qweight(k);
                assert!((mass.data[e * 27 + k] - w * (h / 2.0).powi(3)).abs() < 1e-16);
                assert!((diff.block(e, k)[1][1] - w * h / 2.0).abs() < 1e-15);
                assert!(diff.block(e, k)[0][2].abs() < 1e-15);
            }
        }
        let gu: Vec<f64> = (0..64 * 3 * 27).map(|i| (i as f64).cos()).collect();
        let gv = apply_qf_diffusion(&diff, 1, &gu).unwrap();
        for e in 0..64 {
            for d in 0..3 {
                for k in 0..27 {
                    let i = (e * 3 + d) * 27 + k;
                    assert!((gv[i] - b.qweight(k) * h / 2.0 * gu[i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn deformed_volume_is_one() {
        let mesh = build_mesh(2, 2, 2, 3, Deformation::Sine).unwrap();
        let b = gl_basis(3, 5);
        let mass = compute_qdata(&mesh, &b, QDataKind::Mass).unwrap();
        let vol: f64 = mass.data.iter().sum();
        assert!((vol - 1.0).abs() < 1e-10, "{vol}");
        // higher-order rule of det J as the oracle
        let fine = gl_basis(3, 12);
        let vol_fine: f64 = compute_qdata(&mesh, &fine, QDataKind::Mass).unwrap().data.iter().sum();
        assert!((vol - vol_fine).abs() < 1e-12);
        assert!(mass.data.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn folded_mesh_is_rejected() {
        let mut mesh = build_mesh(1, 1, 1, 1, Deformation::None).unwrap();
        // swap x of two vertices to invert the element
        let n = mesh.n_l;
        mesh.coords[..n].iter_mut().for_each(|x| *x = 1.0 - *x);
        let err = compute_qdata(&mesh, &gl_basis(1, 2), QDataKind::Mass).unwrap_err();
        assert!(matches!(err, Error::NonPositiveJacobian { element: 0, qpoint: 0, .. }));
    }

    #[test]
    fn mass_action() {
        let mesh = build_mesh(2, 1, 1, 2, Deformation::Sine).unwrap();
        let b = gl_basis(2, 4);
        let q = compute_qdata(&mesh, &b, QDataKind::Mass).unwrap();
        let n = 2 * 2 * 64;
        assert!(apply_qf_mass(&q, 2, &vec![0.0; n]).unwrap().iter().all(|&x| x == 0.0));
        let ones = apply_qf_mass(&q, 1, &vec![1.0; n / 2]).unwrap();
        assert_eq!(ones, q.data);
        assert!(apply_qf_mass(&q, 1, &vec![1.0; n]).is_err());
        assert!(apply_qf_diffusion(&q, 1, &vec![1.0; 3 * n]).is_err());
    }

    #[test]
    fn adjugate_inverts() {
        let j = [[1.0, 0.2, 0.1], [0.3, 2.0, -0.4], [0.0, 0.5, 1.5]];
        let a = adjugate3(&j);
        let d = det3(&j);
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|t| j[r][t] * a[t][c]).sum::<f64>() / d;
                assert!((v - if r == c { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }
}
