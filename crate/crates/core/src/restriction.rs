//! Element restriction `G`: L-vector to E-vector scatter and its transpose.
//!
//! L-vectors are component-major (`l[c * n_l + node]`). E-vectors are
//! element-major with each element block component-major:
//! `e[(elem * m + c) * elem_size + slot]`.

use crate::mesh::HexMesh;
use crate::{Error, Result};
use rayon::prelude::*;

/// Number of parity classes of the structured grid.
pub const NUM_COLORS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ElemRestriction {
    pub num_elem: usize,
    pub elem_size: usize,
    pub n_l: usize,
    pub m: usize,
    /// `num_elem x elem_size` L-node indices.
    pub indices: Vec<usize>,
    /// Elements of each parity class `(i mod 2) + 2 (j mod 2) + 4 (k mod 2)`,
    /// ascending within a class.
    pub colors: Vec<Vec<usize>>,
}

impl ElemRestriction {
    pub fn new(mesh: &HexMesh, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("restriction needs at least one component".into()));
        }
        let num_elem = mesh.num_elements();
        let elem_size = mesh.elem_size();
        let mut indices = Vec::with_capacity(num_elem * elem_size);
        let mut colors = vec![Vec::new(); NUM_COLORS];
        for e in 0..num_elem {
            indices.extend(mesh.element_node_indices(e)?);
            let [i, j, k] = mesh.element_ijk(e);
            colors[(i % 2) + 2 * (j % 2) + 4 * (k % 2)].push(e);
        }
        Ok(Self {
            num_elem,
            elem_size,
            n_l: mesh.n_l,
            m,
            indices,
            colors,
        })
    }

    /// Same element map with a different number of components.
    pub fn with_components(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn l_size(&self) -> usize {
        self.m * self.n_l
    }

    pub fn e_size(&self) -> usize {
        self.m * self.num_elem * self.elem_size
    }

    pub fn element_indices(&self, e: usize) -> &[usize] {
        &self.indices[e * self.elem_size..(e + 1) * self.elem_size]
    }

    fn check(&self, what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::ShapeMismatch { what, expected, got });
        }
        Ok(())
    }

    pub fn apply_g(&self, l_vec: &[f64]) -> Result<Vec<f64>> {
        let mut e_vec = vec![0.0; self.e_size()];
        self.apply_g_into(l_vec, &mut e_vec)?;
        Ok(e_vec)
    }

    /// `e[elem][c][slot] = l[c][indices[elem][slot]]`.
    pub fn apply_g_into(&self, l_vec: &[f64], e_vec: &mut [f64]) -> Result<()> {
        self.check("L-vector", self.l_size(), l_vec.len())?;
        self.check("E-vector", self.e_size(), e_vec.len())?;
        let (m, n_l, size) = (self.m, self.n_l, self.elem_size);
        e_vec
            .par_chunks_mut(m * size)
            .enumerate()
            .for_each(|(e, block)| {
                let idx = self.element_indices(e);
                for c in 0..m {
                    let l = &l_vec[c * n_l..(c + 1) * n_l];
                    for (dst, &i) in block[c * size..(c + 1) * size].iter_mut().zip(idx) {
                        *dst = l[i];
                    }
                }
            });
        Ok(())
    }

    pub fn apply_g_transpose(&self, e_vec: &[f64]) -> Result<Vec<f64>> {
        let mut l_vec = vec![0.0; self.l_size()];
        self.apply_g_transpose_into(e_vec, &mut l_vec)?;
        Ok(l_vec)
    }

    /// Overwrites `l_vec` with the sum of all element slots mapping to each
    /// node. Contributions are added color by color, elements ascending
    /// within a color and slots in order, so the result is bitwise identical
    /// for any number of worker threads.
    pub fn apply_g_transpose_into(&self, e_vec: &[f64], l_vec: &mut [f64]) -> Result<()> {
        self.check("E-vector", self.e_size(), e_vec.len())?;
        self.check("L-vector", self.l_size(), l_vec.len())?;
        l_vec.fill(0.0);
        let (m, n_l, size) = (self.m, self.n_l, self.elem_size);
        let out = SharedSlice::new(l_vec);
        for color in &self.colors {
            color.par_iter().for_each(|&e| {
                let idx = self.element_indices(e);
                let block = &e_vec[e * m * size..(e + 1) * m * size];
                for c in 0..m {
                    for (&v, &i) in block[c * size..(c + 1) * size].iter().zip(idx) {
                        // SAFETY: elements of one color share no nodes, and each
                        // element touches distinct nodes, so no index is written
                        // by two threads at once.
                        unsafe { out.add(c * n_l + i, v) };
                    }
                }
            });
        }
        Ok(())
    }

    /// Number of elements containing each node, as a scalar L-vector.
    pub fn multiplicity(&self) -> Vec<f64> {
        let mut mult = vec![0.0; self.n_l];
        for &i in &self.indices {
            mult[i] += 1.0;
        }
        mult
    }
}

/// Raw view of a mutable slice for disjoint concurrent writes.
struct SharedSlice {
    ptr: *mut f64,
    len: usize,
}

unsafe impl Sync for SharedSlice {}

impl SharedSlice {
    fn new(s: &mut [f64]) -> Self {
        Self {
            ptr: s.as_mut_ptr(),
            len: s.len(),
        }
    }

    /// # Safety
    /// No other thread may access index `i` concurrently.
    unsafe fn add(&self, i: usize, v: f64) {
        assert!(i < self.len);
        *self.ptr.add(i) += v;
    }
}
